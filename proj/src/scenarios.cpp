#include "ctxval/scenarios.hpp"

#include "ctxval/errors.hpp"
#include "ctxval/matcore.hpp"

#include <Eigen/Eigenvalues>

namespace ctxval {

namespace {

std::vector<GExpr> diag_exprs(const std::vector<std::string>& diag) {
    const auto d = diag.size();
    std::vector<GExpr> out;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) out.push_back(GExpr::parse(r == c ? diag[r] : "0"));
    return out;
}

ExprMatrix parse_matrix(const std::vector<std::string>& entries) {
    ExprMatrix m;
    for (const auto& e : entries) m.re.push_back(GExpr::parse(e));
    return m;
}

CMatrix diagonal(const std::vector<double>& v) {
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = v[i];
    return m;
}

std::vector<double> observable_diag(const ScenarioParams& p, std::vector<double> fallback) {
    if (!p.obs_diag) return fallback;
    if (p.obs_diag->size() != fallback.size()) {
        throw DimensionMismatch("observable override needs " + std::to_string(fallback.size()) + " entries");
    }
    return *p.obs_diag;
}

ContextFile ce1(const ScenarioParams& p) {
    ContextFile f;
    f.dim = 2;
    f.validity = {0.0, 0.5};
    f.outcomes.push_back({"1", diag_exprs({"1/2 + g", "1/2 - g"})});
    f.outcomes.push_back({"2", diag_exprs({"1/2 - g", "1/2 + g"})});
    f.outcomes.push_back({"3", diag_exprs({"sqrt(1/2 - 2*g^2)", "sqrt(1/2 - 2*g^2)"})});
    f.observable = ExprMatrix::from(diagonal(observable_diag(p, {1.0, -1.0})));
    // |+><+| and the projector onto cos(t)|0> + sin(t)|1> with tan(t) = 1/2
    f.state = parse_matrix({"1/2", "1/2", "1/2", "1/2"});
    f.post = parse_matrix({"4/5", "2/5", "2/5", "1/5"});
    return f;
}

ContextFile ce2(const ScenarioParams& p, bool typo) {
    ContextFile f;
    f.dim = 3;
    f.validity = {0.0, 0.14};
    f.outcomes.push_back({"1", diag_exprs({"sqrt(1/2 + g)", "sqrt(1/2)", "sqrt(1/2 + g)"})});
    f.outcomes.push_back({"2", diag_exprs({"sqrt(1/3 + g^2)", "sqrt(1/3 + g)", typo ? "1/3" : "sqrt(1/3)"})});
    f.outcomes.push_back({"3", diag_exprs({"sqrt(1/6 - g - g^2)", "sqrt(1/6 - g)", "sqrt(1/6 - g)"})});
    f.observable = ExprMatrix::from(diagonal(observable_diag(p, {1.0, 0.0, 0.0})));
    // uniform superposition, post-selected on (1, -1, 1)/sqrt(3)
    f.state = parse_matrix({"1/3", "1/3", "1/3", "1/3", "1/3", "1/3", "1/3", "1/3", "1/3"});
    f.post = parse_matrix({"1/3", "-1/3", "1/3", "-1/3", "1/3", "-1/3", "1/3", "-1/3", "1/3"});
    return f;
}

ContextFile projective(const ScenarioParams& p) {
    RMatrix a;
    if (p.obs_matrix) {
        a = *p.obs_matrix;
    } else if (p.obs_diag) {
        a = diagonal(*p.obs_diag).real();
    } else {
        a = diagonal({1.0, 0.0, -1.0}).real();
    }
    if (a.rows() != a.cols() || a.rows() == 0) throw DimensionMismatch("projective: observable must be square");
    const CMatrix ca = a.cast<Complex>();
    matcore::require_finite(ca, "projective observable");
    matcore::require_hermitian(ca, "projective observable");
    const int d = static_cast<int>(a.rows());
    ContextFile f;
    f.dim = d;
    f.validity = {0.0, 1e-2};
    int k = 0;
    for (const matcore::Eigenspace& es : matcore::spectral_decompose(ca)) {
        const RMatrix proj = es.projector.real();
        std::vector<GExpr> entries;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) entries.push_back(GExpr::number(proj(r, c)));
        f.outcomes.push_back({std::to_string(++k), std::move(entries)});
    }
    f.observable = ExprMatrix::from(0.5 * (ca + ca.adjoint()));
    f.state = ExprMatrix::from(CMatrix::Identity(d, d) / double(d));
    f.post = ExprMatrix::from(CMatrix::Identity(d, d));
    return f;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"ce1", "ce2", "ce2-typo", "projective"};
    return names;
}

ContextFile scenario(const std::string& name, const ScenarioParams& params) {
    if (name == "ce1") return ce1(params);
    if (name == "ce2") return ce2(params, false);
    if (name == "ce2-typo") return ce2(params, true);
    if (name == "projective") return projective(params);
    std::string list;
    for (const auto& n : scenario_names()) list += (list.empty() ? "" : ", ") + n;
    throw Error("unknown scenario '" + name + "' (available: " + list + ")");
}

}  // namespace ctxval
