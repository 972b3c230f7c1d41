#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctxval {

/// Base class for every error raised by the library. Subclasses carry the
/// numeric evidence that triggered the rejection so callers can report it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class NotHermitian : public Error {
public:
    NotHermitian(const std::string& what, double defect)
        : Error(what + " (hermiticity defect " + std::to_string(defect) + ")"), defect_(defect) {}
    double defect() const noexcept { return defect_; }

private:
    double defect_;
};

class NotPositive : public Error {
public:
    NotPositive(const std::string& what, double min_eigenvalue)
        : Error(what + " (smallest eigenvalue " + std::to_string(min_eigenvalue) + ")"),
          min_eigenvalue_(min_eigenvalue) {}
    double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

/// Syntax error in a g-expression; offset is a byte position into the source.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset)
        : Error(message + " at offset " + std::to_string(offset)), message_(message), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t offset_;
};

/// Evaluation outside the domain of an expression (negative radicand, vanishing divisor).
class DomainError : public Error {
public:
    DomainError(const std::string& subexpression, double g, double offending_value)
        : Error("domain error in '" + subexpression + "' at g=" + std::to_string(g) +
                " (argument " + std::to_string(offending_value) + ")"),
          subexpression_(subexpression), g_(g), value_(offending_value) {}
    const std::string& subexpression() const noexcept { return subexpression_; }
    double g() const noexcept { return g_; }
    double offending_value() const noexcept { return value_; }

private:
    std::string subexpression_;
    double g_;
    double value_;
};

class CompletenessError : public Error {
public:
    CompletenessError(double g, double defect)
        : Error("POVM completeness violated at g=" + std::to_string(g) + " (defect " +
                std::to_string(defect) + ")"),
          g_(g), defect_(defect) {}
    double g() const noexcept { return g_; }
    double defect() const noexcept { return defect_; }

private:
    double g_;
    double defect_;
};

/// An operator fails to commute with the observable. Norms are listed per outcome.
class IncompatibleContext : public Error {
public:
    explicit IncompatibleContext(std::vector<double> commutator_norms)
        : Error(describe(commutator_norms)), norms_(std::move(commutator_norms)) {}
    const std::vector<double>& commutator_norms() const noexcept { return norms_; }

private:
    static std::string describe(const std::vector<double>& norms) {
        std::string s = "context does not commute with the observable; commutator norms:";
        for (double n : norms) s += " " + std::to_string(n);
        return s;
    }
    std::vector<double> norms_;
};

class NullPostSelection : public Error {
public:
    explicit NullPostSelection(double denominator)
        : Error("post-selection probability vanishes (" + std::to_string(denominator) + ")"),
          denominator_(denominator) {}
    double denominator() const noexcept { return denominator_; }

private:
    double denominator_;
};

class ImpossibleOutcome : public Error {
public:
    ImpossibleOutcome(std::size_t outcome, double probability)
        : Error("impossible outcome " + std::to_string(outcome) + " (probability " +
                std::to_string(probability) + ")"),
          probability_(probability) {}
    double probability() const noexcept { return probability_; }

private:
    double probability_;
};

class InconsistentSystem : public Error {
public:
    InconsistentSystem(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Taylor fit failed its held-out check: the function is not analytic at 0,
/// or the requested order is too low for the fitting interval.
class NonAnalytic : public Error {
public:
    explicit NonAnalytic(double residual)
        : Error("non-analytic or insufficient order: held-out residual " + std::to_string(residual)),
          residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class GIndependentContext : public Error {
public:
    GIndependentContext() : Error("g-independent context: no nonzero coefficient beyond order 0") {}
};

}  // namespace ctxval
