#include "ctxval/measurement.hpp"

#include "ctxval/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ctxval {

std::string_view to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::Pseudoinverse: return "pseudoinverse";
        case SolveMethod::FixedComponent: return "fixed_component";
        case SolveMethod::ExactInverse: return "exact_inverse";
    }
    return "unknown";
}

Observable::Observable(CMatrix matrix) : matrix_(std::move(matrix)) {
    matcore::require_hermitian(matrix_, "observable");
    matrix_ = 0.5 * (matrix_ + matrix_.adjoint());
    spectrum_ = matcore::spectral_decompose(matrix_);
}

Observable Observable::diagonal(std::span<const double> values) {
    RVector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
    return Observable(v.cast<Complex>().asDiagonal());
}

State::State(CMatrix rho) : rho_(std::move(rho)) {
    matcore::require_hermitian(rho_, "density matrix");
    rho_ = 0.5 * (rho_ + rho_.adjoint());
    const double trace = rho_.trace().real();
    if (std::abs(trace - 1.0) > kStateTraceTol) {
        throw Error("density matrix trace is " + std::to_string(trace) + ", expected 1");
    }
    const double lo = matcore::min_eigenvalue(rho_);
    if (lo < -kStateTraceTol) throw NotPositive("density matrix is not positive semidefinite", lo);
}

State State::pure(const CVector& psi) {
    const double n = psi.norm();
    if (!(n > 0.0)) throw Error("pure state vector has zero norm");
    const CVector u = psi / n;
    return State(u * u.adjoint());
}

State State::maximally_mixed(int dim) {
    return State(CMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

PostSelection::PostSelection(CMatrix effect) : effect_(std::move(effect)) {
    matcore::require_hermitian(effect_, "post-selection effect");
    effect_ = 0.5 * (effect_ + effect_.adjoint());
    const double lo = matcore::min_eigenvalue(effect_);
    if (lo < -1e-10) throw NotPositive("post-selection effect is not positive semidefinite", lo);
    const double hi = matcore::max_eigenvalue(effect_);
    if (hi > 1.0 + 1e-10) throw Error("post-selection effect has eigenvalue " + std::to_string(hi) + " > 1");
}

PostSelection PostSelection::projector(const CVector& psi) {
    const double n = psi.norm();
    if (!(n > 0.0)) throw Error("post-selection vector has zero norm");
    const CVector u = psi / n;
    return PostSelection(u * u.adjoint());
}

PostSelection PostSelection::identity(int dim) { return PostSelection(CMatrix::Identity(dim, dim)); }

double completeness_defect(std::span<const CMatrix> operators) {
    if (operators.empty()) return std::numeric_limits<double>::infinity();
    const auto d = operators.front().rows();
    CMatrix sum = -CMatrix::Identity(d, d);
    for (const CMatrix& m : operators) sum += m.adjoint() * m;
    return sum.norm();
}

std::vector<CMatrix> povm_from_operators(std::span<const CMatrix> operators) {
    std::vector<CMatrix> effects;
    effects.reserve(operators.size());
    for (const CMatrix& m : operators) {
        CMatrix e = m.adjoint() * m;
        effects.push_back(0.5 * (e + e.adjoint()));
    }
    return effects;
}

MeasurementContext::MeasurementContext(std::vector<GMatrixFn> operators, std::vector<std::string> labels)
    : operators_(std::move(operators)), labels_(std::move(labels)) {
    if (operators_.empty()) throw Error("measurement context needs at least one operator");
    const int d = operators_.front().dim();
    validity_ = operators_.front().validity();
    for (const GMatrixFn& m : operators_) {
        if (m.dim() != d) throw DimensionMismatch("measurement operators have differing dimensions");
        validity_.lo = std::max(validity_.lo, m.validity().lo);
        validity_.hi = std::min(validity_.hi, m.validity().hi);
    }
    if (validity_.lo > validity_.hi) throw Error("measurement operators have disjoint validity intervals");
    if (labels_.empty()) {
        for (std::size_t j = 0; j < operators_.size(); ++j) labels_.push_back(std::to_string(j + 1));
    }
    if (labels_.size() != operators_.size()) throw DimensionMismatch("one label per outcome required");

    for (double g : validity_.sample(16)) {
        const auto ops = operators_at(g);
        for (const CMatrix& m : ops) matcore::require_finite(m, "measurement operator");
        const double defect = completeness_defect(ops);
        if (!(defect <= kCompletenessTol)) throw CompletenessError(g, defect);
    }
}

bool MeasurementContext::depends_on_g() const {
    return std::any_of(operators_.begin(), operators_.end(), [](const GMatrixFn& m) { return m.depends_on_g(); });
}

std::vector<CMatrix> MeasurementContext::operators_at(double g) const {
    if (!validity_.contains(g)) {
        throw Error("g=" + std::to_string(g) + " outside validity interval [" + std::to_string(validity_.lo) +
                    ", " + std::to_string(validity_.hi) + "]");
    }
    std::vector<CMatrix> ops;
    ops.reserve(operators_.size());
    for (const GMatrixFn& m : operators_) ops.push_back(m(g));
    return ops;
}

std::vector<CMatrix> povm_at(const MeasurementContext& ctx, double g) {
    const auto ops = ctx.operators_at(g);
    const double defect = completeness_defect(ops);
    if (!(defect <= kCompletenessTol)) throw CompletenessError(g, defect);
    return povm_from_operators(ops);
}

namespace {

void require_dim(int expected, int actual, const char* what) {
    if (expected != actual) {
        throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(actual) + ", expected " +
                                std::to_string(expected));
    }
}

double trace_product(const CMatrix& a, const CMatrix& b) {
    // tr(AB) without forming the product
    return (a.transpose().cwiseProduct(b)).sum().real();
}

}  // namespace

std::vector<double> outcome_probs(const MeasurementContext& ctx, double g, const State& state) {
    require_dim(ctx.dim(), state.dim(), "outcome_probs");
    std::vector<double> probs;
    for (const CMatrix& e : povm_at(ctx, g)) probs.push_back(trace_product(state.rho(), e));
    return probs;
}

State state_update(const MeasurementContext& ctx, double g, const State& state, int outcome) {
    require_dim(ctx.dim(), state.dim(), "state_update");
    if (outcome < 0 || outcome >= ctx.outcomes()) throw Error("outcome index out of range");
    const auto ops = ctx.operators_at(g);
    const CMatrix& m = ops[static_cast<std::size_t>(outcome)];
    const CMatrix unnormalized = m * state.rho() * m.adjoint();
    const double p = unnormalized.trace().real();
    if (p <= kPostSelectionTol) throw ImpossibleOutcome(static_cast<std::size_t>(outcome), p);
    return State(unnormalized / p);
}

double expectation(const Observable& obs, const State& state) {
    require_dim(obs.dim(), state.dim(), "expectation");
    return trace_product(state.rho(), obs.matrix());
}

std::vector<double> commutator_norms(const CMatrix& a, std::span<const CMatrix> ops) {
    std::vector<double> norms;
    norms.reserve(ops.size());
    for (const CMatrix& m : ops) norms.push_back(matcore::commutator(a, m).norm());
    return norms;
}

bool compatible(const CMatrix& a, std::span<const CMatrix> ops, double rel_tol) {
    const auto norms = commutator_norms(a, ops);
    for (std::size_t j = 0; j < ops.size(); ++j) {
        if (norms[j] > rel_tol * a.norm() * ops[j].norm()) return false;
    }
    return true;
}

double cv_moment(const MeasurementContext& ctx, double g, const ContextualValues& cv, const Observable& obs,
                 const State& state, int n) {
    require_dim(ctx.dim(), state.dim(), "cv_moment");
    require_dim(ctx.dim(), obs.dim(), "cv_moment");
    if (n < 1 || n > kMaxMomentOrder) throw Error("cv_moment: order must lie in [1, 4]");
    const int outcomes = ctx.outcomes();
    if (outcomes > kMaxMomentOutcomes) throw Error("cv_moment: at most 8 outcomes supported");
    if (cv.size() != outcomes) throw DimensionMismatch("cv_moment: one contextual value per outcome required");

    const auto ops = ctx.operators_at(g);
    if (!compatible(obs.matrix(), ops)) throw IncompatibleContext(commutator_norms(obs.matrix(), ops));
    const auto effects = povm_from_operators(ops);

    // Odometer over all outcome sequences (j1, ..., jn).
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    double total = 0.0;
    for (;;) {
        CMatrix prod = state.rho();
        double weight = 1.0;
        for (int j : idx) {
            prod = prod * effects[static_cast<std::size_t>(j)];
            weight *= cv.alphas(j);
        }
        total += weight * prod.trace().real();

        int pos = n - 1;
        while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == outcomes) {
            idx[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return total;
}

ConditionedAverageResult conditioned_average(std::span<const CMatrix> operators, const RVector& alphas,
                                             const State& state, const PostSelection& post, double g) {
    if (alphas.size() != static_cast<Eigen::Index>(operators.size())) {
        throw DimensionMismatch("conditioned_average: one contextual value per outcome required");
    }
    ConditionedAverageResult r;
    r.g = g;
    r.joint_unnormalized.reserve(operators.size());
    for (const CMatrix& m : operators) {
        require_dim(static_cast<int>(m.rows()), state.dim(), "conditioned_average");
        double joint = trace_product(post.effect(), m * state.rho() * m.adjoint());
        // PSD product: anything below zero is rounding
        if (joint < 0.0 && joint > -1e-15) joint = 0.0;
        r.joint_unnormalized.push_back(joint);
        r.post_prob += joint;
    }
    if (!(r.post_prob > kPostSelectionTol)) throw NullPostSelection(r.post_prob);
    r.cond_probs.reserve(operators.size());
    for (std::size_t j = 0; j < operators.size(); ++j) {
        const double p = r.joint_unnormalized[j] / r.post_prob;
        r.cond_probs.push_back(p);
        r.value += alphas(static_cast<Eigen::Index>(j)) * p;
    }
    return r;
}

ConditionedAverageResult conditioned_average(const MeasurementContext& ctx, double g, const ContextualValues& cv,
                                             const State& state, const PostSelection& post) {
    const auto ops = ctx.operators_at(g);
    return conditioned_average(ops, cv.alphas, state, post, g);
}

}  // namespace ctxval
