#pragma once

// Plain-text context definitions.
//
//   # comment
//   DIM 2
//   GRANGE 0 0.5
//   OUTCOME up
//   1/2 + g, 0
//   0, 1/2 - g
//   OUTCOME ...
//   OBSERVABLE            (numeric; optional OBSERVABLE.IM for imaginary parts)
//   1, 0
//   0, -1
//   STATE / STATE.IM      (optional)
//   POST / POST.IM        (optional)
//
// Every matrix section is followed by DIM rows of comma-separated entries in
// the g-expression grammar. Outcome entries may depend on g; the observable,
// state and post-selection may not.

#include "ctxval/errors.hpp"
#include "ctxval/gexpr.hpp"
#include "ctxval/measurement.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxval {

class ContextFileError : public Error {
public:
    ContextFileError(std::size_t line, std::size_t column, const std::string& message)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
          line_(line), column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Square matrix of expressions; `im` is empty for real matrices.
struct ExprMatrix {
    std::vector<GExpr> re;  // row-major
    std::vector<GExpr> im;

    bool has_imag() const { return !im.empty(); }
    bool depends_on_g() const;
    /// Evaluates the constant entries (at g = 0).
    CMatrix eval(int dim) const;
    /// Shortest round-trip decimal entries.
    static ExprMatrix from(const CMatrix& m);
};

struct ContextFile {
    struct Outcome {
        std::string label;
        std::vector<GExpr> entries;  // row-major
    };

    int dim = 0;
    Validity validity;
    std::vector<Outcome> outcomes;
    ExprMatrix observable;
    std::optional<ExprMatrix> state;
    std::optional<ExprMatrix> post;

    /// Builds and validates the measurement context (completeness on the
    /// 16-point validity sample).
    MeasurementContext context() const;
    Observable make_observable() const;
    std::optional<State> make_state() const;
    std::optional<PostSelection> make_post() const;
};

/// Syntax-level parse; raises ContextFileError with the line and column.
ContextFile parse_context(std::string_view text);

/// Canonical text: parse_context(write_context(f)) writes back byte-identically.
std::string write_context(const ContextFile& file);

}  // namespace ctxval
