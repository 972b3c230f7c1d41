#include "ctxval/gexpr.hpp"

#include "ctxval/errors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

namespace ctxval {

namespace {

using NodePtr = std::shared_ptr<const GExpr::Node>;
using Kind = GExpr::Kind;

NodePtr make(Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto n = std::make_shared<GExpr::Node>();
    n->kind = kind;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

NodePtr make_number(double v) {
    auto n = std::make_shared<GExpr::Node>();
    n->kind = Kind::Number;
    n->value = v;
    return n;
}

NodePtr make_pow(NodePtr base, int exponent) {
    auto n = std::make_shared<GExpr::Node>();
    n->kind = Kind::Pow;
    n->exponent = exponent;
    n->lhs = std::move(base);
    return n;
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    NodePtr parse_all() {
        skip_ws();
        if (pos_ == src_.size()) throw ParseError("empty expression", pos_);
        NodePtr e = expr();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void unexpected() {
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make(Kind::Add, lhs, term());
            } else if (accept('-')) {
                lhs = make(Kind::Sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = make(Kind::Mul, lhs, factor());
            } else if (accept('/')) {
                lhs = make(Kind::Div, lhs, factor());
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        if (accept('-')) return make(Kind::Neg, power());
        return power();
    }

    NodePtr power() {
        NodePtr base = atom();
        if (!accept('^')) return base;
        skip_ws();
        const std::size_t start = pos_;
        std::size_t p = pos_;
        if (p < src_.size() && src_[p] == '-') ++p;
        const std::size_t digits_start = p;
        while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) ++p;
        if (p == digits_start) {
            if (p < src_.size() && (src_[p] == '.' || src_[p] == 'g' || src_[p] == '(' || src_[p] == 's')) {
                throw ParseError("non-integer exponent", start);
            }
            pos_ = p;
            unexpected();
        }
        if (p < src_.size() && (src_[p] == '.' || src_[p] == 'e' || src_[p] == 'E')) {
            throw ParseError("non-integer exponent", start);
        }
        int exponent = 0;
        const auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + p, exponent);
        if (ec != std::errc() || ptr != src_.data() + p) throw ParseError("exponent out of range", start);
        pos_ = p;
        return make_pow(base, exponent);
    }

    NodePtr atom() {
        skip_ws();
        if (pos_ >= src_.size()) unexpected();
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                ++pos_;
            }
            const std::string_view ident = src_.substr(start, pos_ - start);
            if (ident == "g") return make(Kind::Var);
            if (ident == "sqrt") {
                if (!accept('(')) unexpected();
                NodePtr inner = expr();
                if (!accept(')')) unexpected();
                return make(Kind::Sqrt, inner);
            }
            throw ParseError("unknown identifier '" + std::string(ident) + "'", start);
        }
        if (c == '(') {
            ++pos_;
            NodePtr inner = expr();
            if (!accept(')')) unexpected();
            return inner;
        }
        unexpected();
    }

    NodePtr number() {
        const std::size_t start = pos_;
        std::size_t p = pos_;
        auto digits = [&] {
            const std::size_t s = p;
            while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) ++p;
            return p - s;
        };
        std::size_t count = digits();
        if (p < src_.size() && src_[p] == '.') {
            ++p;
            count += digits();
        }
        if (count == 0) throw ParseError("malformed number", start);
        if (p < src_.size() && (src_[p] == 'e' || src_[p] == 'E')) {
            std::size_t q = p + 1;
            if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
            const std::size_t exp_digits = q;
            while (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) ++q;
            if (q == exp_digits) throw ParseError("malformed number exponent", p);
            p = q;
        }
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + p, value);
        if (ec != std::errc() || ptr != src_.data() + p || !std::isfinite(value)) {
            throw ParseError("number out of range", start);
        }
        pos_ = p;
        return make_number(value);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

int precedence(Kind k) {
    switch (k) {
        case Kind::Add:
        case Kind::Sub: return 1;
        case Kind::Mul:
        case Kind::Div: return 2;
        case Kind::Neg: return 3;
        case Kind::Pow: return 4;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string print(const GExpr::Node& n);

std::string print_min(const GExpr::Node& n, int min_prec) {
    std::string s = print(n);
    return precedence(n.kind) < min_prec ? "(" + s + ")" : s;
}

std::string print(const GExpr::Node& n) {
    switch (n.kind) {
        case Kind::Number: return format_number(n.value);
        case Kind::Var: return "g";
        case Kind::Sqrt: return "sqrt(" + print(*n.lhs) + ")";
        case Kind::Pow: return print_min(*n.lhs, 5) + "^" + std::to_string(n.exponent);
        case Kind::Neg: return "-" + print_min(*n.lhs, 4);
        case Kind::Add: return print_min(*n.lhs, 1) + " + " + print_min(*n.rhs, 2);
        case Kind::Sub: return print_min(*n.lhs, 1) + " - " + print_min(*n.rhs, 2);
        case Kind::Mul: return print_min(*n.lhs, 2) + "*" + print_min(*n.rhs, 3);
        case Kind::Div: return print_min(*n.lhs, 2) + "/" + print_min(*n.rhs, 3);
    }
    return {};
}

double eval_node(const GExpr::Node& n, double g) {
    switch (n.kind) {
        case Kind::Number: return n.value;
        case Kind::Var: return g;
        case Kind::Neg: return -eval_node(*n.lhs, g);
        case Kind::Add: return eval_node(*n.lhs, g) + eval_node(*n.rhs, g);
        case Kind::Sub: return eval_node(*n.lhs, g) - eval_node(*n.rhs, g);
        case Kind::Mul: return eval_node(*n.lhs, g) * eval_node(*n.rhs, g);
        case Kind::Div: {
            const double den = eval_node(*n.rhs, g);
            if (den == 0.0) throw DomainError(print(*n.rhs), g, den);
            return eval_node(*n.lhs, g) / den;
        }
        case Kind::Pow: {
            const double base = eval_node(*n.lhs, g);
            if (n.exponent < 0 && base == 0.0) throw DomainError(print(*n.lhs), g, base);
            return std::pow(base, n.exponent);
        }
        case Kind::Sqrt: {
            const double arg = eval_node(*n.lhs, g);
            if (arg < 0.0) throw DomainError(print(*n.lhs), g, arg);
            return std::sqrt(arg);
        }
    }
    return 0.0;
}

bool equal_nodes(const GExpr::Node& a, const GExpr::Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Kind::Number: return a.value == b.value && std::signbit(a.value) == std::signbit(b.value);
        case Kind::Var: return true;
        case Kind::Pow: return a.exponent == b.exponent && equal_nodes(*a.lhs, *b.lhs);
        case Kind::Neg:
        case Kind::Sqrt: return equal_nodes(*a.lhs, *b.lhs);
        default: return equal_nodes(*a.lhs, *b.lhs) && equal_nodes(*a.rhs, *b.rhs);
    }
}

bool any_node(const GExpr::Node& n, Kind k) {
    if (n.kind == k) return true;
    if (n.lhs && any_node(*n.lhs, k)) return true;
    return n.rhs && any_node(*n.rhs, k);
}

using Poly = std::vector<double>;  // p[m] multiplies g^m

Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

// Exact coefficient expansion; nullopt once g appears under a sqrt, in a
// denominator or with a negative exponent. g-free subtrees are evaluated as is.
std::optional<Poly> expand(const GExpr::Node& n) {
    if (!any_node(n, Kind::Var)) return Poly{eval_node(n, 0.0)};
    switch (n.kind) {
        case Kind::Var: return Poly{0.0, 1.0};
        case Kind::Neg: {
            auto a = expand(*n.lhs);
            if (a) for (double& c : *a) c = -c;
            return a;
        }
        case Kind::Add:
        case Kind::Sub: {
            auto a = expand(*n.lhs);
            auto b = expand(*n.rhs);
            if (!a || !b) return std::nullopt;
            a->resize(std::max(a->size(), b->size()), 0.0);
            const double sign = n.kind == Kind::Add ? 1.0 : -1.0;
            for (std::size_t i = 0; i < b->size(); ++i) (*a)[i] += sign * (*b)[i];
            return a;
        }
        case Kind::Mul: {
            auto a = expand(*n.lhs);
            auto b = expand(*n.rhs);
            if (!a || !b) return std::nullopt;
            return poly_mul(*a, *b);
        }
        case Kind::Div: {
            if (any_node(*n.rhs, Kind::Var)) return std::nullopt;
            const double den = eval_node(*n.rhs, 0.0);
            auto a = expand(*n.lhs);
            if (a) for (double& c : *a) c /= den;
            return a;
        }
        case Kind::Pow: {
            if (n.exponent < 0) return std::nullopt;
            auto a = expand(*n.lhs);
            if (!a) return std::nullopt;
            Poly r{1.0};
            for (int k = 0; k < n.exponent; ++k) r = poly_mul(r, *a);
            return r;
        }
        default: return std::nullopt;
    }
}

}  // namespace

GExpr GExpr::parse(std::string_view src) { return GExpr(Parser(src).parse_all()); }

GExpr GExpr::number(double v) {
    if (!std::isfinite(v)) throw NonFiniteInput("GExpr::number: non-finite literal");
    if (std::signbit(v)) return GExpr(make(Kind::Neg, make_number(-v)));
    return GExpr(make_number(v));
}

GExpr GExpr::var() { return GExpr(make(Kind::Var)); }

double GExpr::eval(double g) const { return eval_node(*root_, g); }

std::string GExpr::to_string() const { return print(*root_); }

bool GExpr::depends_on_g() const { return any_node(*root_, Kind::Var); }

bool GExpr::is_polynomial() const {
    try {
        return expand(*root_).has_value();
    } catch (const DomainError&) {
        return false;
    }
}

std::optional<std::vector<double>> GExpr::polynomial_coeffs() const { return expand(*root_); }

GExpr::Kind GExpr::kind() const { return root_->kind; }

bool operator==(const GExpr& a, const GExpr& b) { return equal_nodes(*a.root_, *b.root_); }

std::vector<double> Validity::sample(int count) const {
    std::vector<double> pts;
    if (count <= 1 || hi == lo) {
        pts.push_back(hi);
        return pts;
    }
    for (int i = 0; i < count; ++i) pts.push_back(lo + (hi - lo) * double(i) / double(count - 1));
    return pts;
}

GMatrixFn::GMatrixFn(int dim, std::vector<GExpr> entries, Validity validity)
    : dim_(dim), entries_(std::move(entries)), validity_(validity) {
    if (dim < 1) throw DimensionMismatch("GMatrixFn: dimension must be positive");
    if (entries_.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim)) {
        throw DimensionMismatch("GMatrixFn: expected " + std::to_string(dim * dim) + " entries, got " +
                                std::to_string(entries_.size()));
    }
    if (!(validity_.lo <= validity_.hi)) throw Error("GMatrixFn: empty validity interval");
}

GMatrixFn GMatrixFn::constant(const RMatrix& m, Validity validity) {
    if (m.rows() != m.cols()) throw DimensionMismatch("GMatrixFn::constant: matrix must be square");
    std::vector<GExpr> entries;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) entries.push_back(GExpr::number(m(i, j)));
    return GMatrixFn(static_cast<int>(m.rows()), std::move(entries), validity);
}

CMatrix GMatrixFn::operator()(double g) const {
    CMatrix m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) m(i, j) = entry(i, j).eval(g);
    return m;
}

bool GMatrixFn::depends_on_g() const {
    return std::any_of(entries_.begin(), entries_.end(), [](const GExpr& e) { return e.depends_on_g(); });
}

bool GMatrixFn::is_polynomial() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const GExpr& e) { return e.is_polynomial(); });
}

namespace {

struct Fit {
    std::vector<CMatrix> coeffs;
    double held_out_residual;
};

Fit fit_polynomial(const MatrixFunction& f, int dim, int order, const TaylorOptions& opts) {
    if (order < 0 || order > 6) throw Error("taylor_coeffs: order must lie in [0, 6]");
    if (!(opts.g0 > 0.0)) throw Error("taylor_coeffs: g0 must be positive");
    const int K = std::max(2 * order, 2) + std::max(opts.extra_points, 0);
    const Eigen::Index n_entries = Eigen::Index(dim) * dim;

    RMatrix design(K + 1, order + 1);
    RMatrix rhs(K + 1, 2 * n_entries);
    for (int k = 0; k <= K; ++k) {
        const double t = std::ldexp(1.0, -k);
        for (int m = 0; m <= order; ++m) design(k, m) = std::pow(t, m);
        const CMatrix v = f(opts.g0 * t);
        if (v.rows() != dim || v.cols() != dim) throw DimensionMismatch("taylor_coeffs: function dimension");
        for (Eigen::Index e = 0; e < n_entries; ++e) {
            rhs(k, e) = v.data()[e].real();
            rhs(k, n_entries + e) = v.data()[e].imag();
        }
    }
    const RMatrix c = design.colPivHouseholderQr().solve(rhs);

    Fit fit;
    for (int m = 0; m <= order; ++m) {
        CMatrix cm(dim, dim);
        const double scale = std::pow(opts.g0, -m);
        for (Eigen::Index e = 0; e < n_entries; ++e) {
            cm.data()[e] = Complex(c(m, e), c(m, n_entries + e)) * scale;
        }
        fit.coeffs.push_back(std::move(cm));
    }

    fit.held_out_residual = 0.0;
    for (int k = 0; k < K; ++k) {
        const double h = opts.g0 * 0.75 * std::ldexp(1.0, -k);
        const CMatrix v = f(h);
        CMatrix approx = CMatrix::Zero(dim, dim);
        double hp = 1.0;
        for (int m = 0; m <= order; ++m, hp *= h) approx += fit.coeffs[static_cast<std::size_t>(m)] * hp;
        fit.held_out_residual = std::max(fit.held_out_residual, (v - approx).norm() / (1.0 + v.norm()));
    }
    return fit;
}

}  // namespace

std::vector<CMatrix> taylor_coeffs(const MatrixFunction& f, int dim, int order, const TaylorOptions& opts) {
    Fit fit = fit_polynomial(f, dim, order, opts);
    if (fit.held_out_residual > opts.held_out_rel_tol) throw NonAnalytic(fit.held_out_residual);
    return std::move(fit.coeffs);
}

std::vector<CMatrix> taylor_coeffs(const GMatrixFn& f, int order, const TaylorOptions& opts) {
    if (order < 0 || order > 6) throw Error("taylor_coeffs: order must lie in [0, 6]");
    // Polynomial entries: exact coefficients (a fit loses ~eps/g0^m in C_m).
    if (f.is_polynomial()) {
        const int d = f.dim();
        std::vector<CMatrix> coeffs(static_cast<std::size_t>(order) + 1, CMatrix::Zero(d, d));
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) {
                const auto p = *f.entry(r, c).polynomial_coeffs();
                for (std::size_t m = 0; m < p.size() && m <= static_cast<std::size_t>(order); ++m) {
                    coeffs[m](r, c) = p[m];
                }
            }
        }
        return coeffs;
    }
    return taylor_coeffs([&f](double g) { return f(g); }, f.dim(), order, opts);
}

TaylorFit adaptive_taylor_coeffs(const MatrixFunction& f, int dim, int max_order, const TaylorOptions& opts) {
    constexpr double kExactTol = 1e-11;
    std::optional<TaylorFit> best;
    for (int p = 1; p <= max_order; ++p) {
        Fit fit = fit_polynomial(f, dim, p, opts);
        if (fit.held_out_residual <= kExactTol) return {std::move(fit.coeffs), p, fit.held_out_residual};
        if (!best || fit.held_out_residual < best->held_out_residual) {
            best = TaylorFit{std::move(fit.coeffs), p, fit.held_out_residual};
        }
    }
    if (!best || best->held_out_residual > opts.held_out_rel_tol) {
        throw NonAnalytic(best ? best->held_out_residual : std::numeric_limits<double>::infinity());
    }
    return std::move(*best);
}

}  // namespace ctxval
