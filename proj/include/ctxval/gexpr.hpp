#pragma once

// Scalar expressions in the coupling g and matrix-valued functions built from them.
//
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ('-')? power
//   power  := atom ('^' integer)?
//   atom   := number | 'g' | 'sqrt' '(' expr ')' | '(' expr ')'
//
// Integer exponents may carry a leading '-'.

#include "ctxval/matcore.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxval {

class GExpr {
public:
    enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Sqrt };

    struct Node;

    static GExpr parse(std::string_view src);
    static GExpr number(double v);
    static GExpr var();

    /// IEEE evaluation. Throws DomainError on a negative radicand or a
    /// divisor (or negative-power base) that is exactly zero.
    double eval(double g) const;

    /// Canonical text with the fewest parentheses the grammar needs.
    std::string to_string() const;

    bool depends_on_g() const;
    /// True when the value is a polynomial in g: g never appears under a
    /// sqrt, in a denominator or with a negative exponent.
    bool is_polynomial() const;
    /// Exact coefficients (index m multiplies g^m) when is_polynomial().
    std::optional<std::vector<double>> polynomial_coeffs() const;

    Kind kind() const;
    friend bool operator==(const GExpr& a, const GExpr& b);

private:
    explicit GExpr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
    std::shared_ptr<const Node> root_;
};

struct GExpr::Node {
    Kind kind;
    double value = 0.0;   // Number
    int exponent = 0;     // Pow
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
};

/// Closed interval of admissible couplings.
struct Validity {
    double lo = 0.0;
    double hi = 1e-2;

    bool contains(double g) const { return g >= lo && g <= hi; }
    /// `count` evenly spaced points covering [lo, hi].
    std::vector<double> sample(int count = 16) const;
};

class GMatrixFn {
public:
    GMatrixFn(int dim, std::vector<GExpr> entries, Validity validity = {});

    /// Constant (g-independent) function.
    static GMatrixFn constant(const RMatrix& m, Validity validity = {});

    int dim() const { return dim_; }
    const GExpr& entry(int row, int col) const { return entries_[static_cast<std::size_t>(row * dim_ + col)]; }
    const Validity& validity() const { return validity_; }

    CMatrix operator()(double g) const;

    bool depends_on_g() const;
    bool is_polynomial() const;

private:
    int dim_;
    std::vector<GExpr> entries_;  // row-major
    Validity validity_;
};

using MatrixFunction = std::function<CMatrix(double)>;

struct TaylorOptions {
    double g0 = 1e-2;          // outermost fit point
    int extra_points = 0;      // grid has 2*order+1+extra_points geometric points
    double held_out_rel_tol = 1e-7;
};

/// Coefficient matrices C_0..C_order of a least-squares polynomial fit over
/// the geometric grid g0, g0/2, ..., g0/2^K (K >= 2*order). The fit is
/// checked at held-out midpoints; a residual above tolerance raises NonAnalytic.
std::vector<CMatrix> taylor_coeffs(const MatrixFunction& f, int dim, int order, const TaylorOptions& opts = {});
std::vector<CMatrix> taylor_coeffs(const GMatrixFn& f, int order, const TaylorOptions& opts = {});

struct TaylorFit {
    std::vector<CMatrix> coeffs;  // C_0..C_order
    int order = 0;
    double held_out_residual = 0.0;
};

/// Lowest fit order in [1, max_order] whose held-out residual is at rounding
/// level; otherwise the best order that passes the held-out tolerance.
TaylorFit adaptive_taylor_coeffs(const MatrixFunction& f, int dim, int max_order, const TaylorOptions& opts = {});

}  // namespace ctxval
