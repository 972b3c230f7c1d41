#include "ctxval/cvsolve.hpp"

#include "ctxval/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace ctxval {

CMatrix joint_eigenbasis(const CMatrix& a, std::span<const CMatrix> effects) {
    if (!compatible(a, effects)) throw IncompatibleContext(commutator_norms(a, effects));
    const auto d = a.rows();
    bool diagonal = matcore::is_diagonal(a);
    for (const CMatrix& e : effects) diagonal = diagonal && matcore::is_diagonal(e);
    if (diagonal) return CMatrix::Identity(d, d);

    // A generic combination of commuting Hermitian operators has the joint
    // eigenvectors as its own; the weights only need to avoid accidental ties.
    CMatrix h = a / std::max(a.norm(), 1e-300);
    for (std::size_t j = 0; j < effects.size(); ++j) {
        const double w = 0.1 + std::fmod(0.6180339887498949 * double(j + 1), 1.0);
        h += w * effects[j] / std::max(effects[j].norm(), 1e-300);
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (h + h.adjoint()));
    return es.eigenvectors();
}

CalibrationMatrix build_F(const Observable& obs, std::span<const CMatrix> effects, double g) {
    const auto d = obs.matrix().rows();
    for (const CMatrix& e : effects) {
        if (e.rows() != d || e.cols() != d) throw DimensionMismatch("build_F: effect dimension mismatch");
    }
    CalibrationMatrix cal;
    cal.g = g;
    cal.basis = joint_eigenbasis(obs.matrix(), effects);
    const auto M = static_cast<Eigen::Index>(effects.size());
    cal.F.resize(d, M);
    cal.targets.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto v = cal.basis.col(k);
        cal.targets(k) = (v.adjoint() * obs.matrix() * v)(0, 0).real();
        for (Eigen::Index j = 0; j < M; ++j) {
            cal.F(k, j) = (v.adjoint() * effects[static_cast<std::size_t>(j)] * v)(0, 0).real();
        }
    }
    return cal;
}

CalibrationMatrix build_F(const Observable& obs, const MeasurementContext& ctx, double g) {
    if (obs.dim() != ctx.dim()) throw DimensionMismatch("build_F: observable and context dimensions differ");
    const auto effects = povm_at(ctx, g);
    return build_F(obs, effects, g);
}

bool satisfies_identity(double residual, const RVector& targets) {
    return residual <= kResidualTol * (1.0 + targets.norm());
}

bool satisfies_identity(const CalibrationMatrix& cal, const RVector& alphas, double residual) {
    return residual <= kResidualTol * (1.0 + cal.targets.norm()) + kRoundingSlack * cal.F.norm() * alphas.norm();
}

namespace {

ContextualValues finish(const CalibrationMatrix& cal, RVector alphas, SolveMethod method) {
    ContextualValues cv;
    cv.residual = (cal.F * alphas - cal.targets).norm();
    cv.alphas = std::move(alphas);
    cv.method = method;
    cv.g = cal.g;
    return cv;
}

// x = A^+ b followed by one refinement step; the explicit pseudoinverse alone
// loses accuracy in the residual once A is ill conditioned and |b| is large.
RVector pinv_solve(const RMatrix& a, const RVector& b, const matcore::RankCutoff& cutoff) {
    const RMatrix pinv = matcore::pseudoinverse(a, cutoff);
    RVector x = pinv * b;
    x += pinv * (b - a * x);
    return x;
}

}  // namespace

ContextualValues solve_pinv(const CalibrationMatrix& cal, const matcore::RankCutoff& cutoff) {
    return finish(cal, pinv_solve(cal.F, cal.targets, cutoff), SolveMethod::Pseudoinverse);
}

RMatrix null_space(const RMatrix& F, const matcore::RankCutoff& cutoff) {
    const auto [U, sigma, V] = matcore::svd(F);
    const int rank = matcore::numerical_rank(sigma, F.rows(), F.cols(), cutoff);
    return V.rightCols(F.cols() - rank);
}

ContextualValues solve_fixed(const CalibrationMatrix& cal, std::span<const FixedComponent> pins,
                             const matcore::RankCutoff& cutoff) {
    const auto M = cal.F.cols();
    std::set<int> pinned;
    RVector alphas = RVector::Zero(M);
    RVector rhs = cal.targets;
    for (const FixedComponent& pin : pins) {
        if (pin.index < 0 || pin.index >= M) throw Error("pin index " + std::to_string(pin.index + 1) + " out of range");
        if (!pinned.insert(pin.index).second) throw Error("component " + std::to_string(pin.index + 1) + " pinned twice");
        if (!std::isfinite(pin.value)) throw NonFiniteInput("pinned value is not finite");
        alphas(pin.index) = pin.value;
        rhs -= cal.F.col(pin.index) * pin.value;
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < M; ++j)
        if (!pinned.count(static_cast<int>(j))) free.push_back(j);
    if (!free.empty()) {
        RMatrix reduced(cal.F.rows(), static_cast<Eigen::Index>(free.size()));
        for (std::size_t c = 0; c < free.size(); ++c) reduced.col(static_cast<Eigen::Index>(c)) = cal.F.col(free[c]);
        const RVector x = pinv_solve(reduced, rhs, cutoff);
        for (std::size_t c = 0; c < free.size(); ++c) alphas(free[c]) = x(static_cast<Eigen::Index>(c));
    }
    ContextualValues cv = finish(cal, std::move(alphas), SolveMethod::FixedComponent);
    if (!satisfies_identity(cal, cv.alphas, cv.residual)) {
        throw InconsistentSystem("pinned contextual values leave no exact solution", cv.residual);
    }
    return cv;
}

ContextualValues solve_exact(const CalibrationMatrix& cal) {
    if (cal.F.rows() != cal.F.cols()) {
        throw InconsistentSystem("exact inverse needs a square calibration matrix (" + std::to_string(cal.F.rows()) +
                                     "x" + std::to_string(cal.F.cols()) + ")",
                                 std::numeric_limits<double>::quiet_NaN());
    }
    Eigen::FullPivLU<RMatrix> lu(cal.F);
    if (!lu.isInvertible()) {
        throw InconsistentSystem("calibration matrix is singular", std::abs(cal.F.determinant()));
    }
    return finish(cal, lu.solve(cal.targets), SolveMethod::ExactInverse);
}

ContextualValues solve(const CalibrationMatrix& cal, const Prescription& prescription) {
    switch (prescription.method) {
        case SolveMethod::Pseudoinverse: return solve_pinv(cal, prescription.cutoff);
        case SolveMethod::ExactInverse: return solve_exact(cal);
        case SolveMethod::FixedComponent: {
            std::vector<FixedComponent> pins;
            for (const PinExpr& p : prescription.pins) pins.push_back({p.index, p.value.eval(cal.g)});
            return solve_fixed(cal, pins, prescription.cutoff);
        }
    }
    throw Error("unknown solve method");
}

double reconstruction_error(const Observable& obs, std::span<const CMatrix> effects, const RVector& alphas) {
    if (alphas.size() != static_cast<Eigen::Index>(effects.size())) {
        throw DimensionMismatch("reconstruction_error: one contextual value per effect required");
    }
    CMatrix sum = -obs.matrix();
    for (std::size_t j = 0; j < effects.size(); ++j) sum += alphas(static_cast<Eigen::Index>(j)) * effects[j];
    return sum.norm();
}

VarianceBound variance_bound(const ContextualValues& cv) { return {cv.norm_sq(), {}}; }

namespace {

std::vector<double> geometric_grid(const LaurentGrid& grid) {
    if (!(grid.g_lo > 0.0 && grid.g_hi > grid.g_lo) || grid.points < 2) {
        throw Error("grid must satisfy 0 < g_lo < g_hi with at least two points");
    }
    std::vector<double> gs;
    const double ratio = std::log(grid.g_lo / grid.g_hi);
    for (int i = 0; i < grid.points; ++i) gs.push_back(grid.g_hi * std::exp(ratio * double(i) / (grid.points - 1)));
    return gs;
}

}  // namespace

std::vector<double> laurent_fit(const std::function<double(double)>& f, const LaurentGrid& grid, int min_power,
                                int max_power) {
    if (max_power < min_power) throw Error("laurent_fit: empty basis");
    const auto gs = geometric_grid(grid);
    const int terms = max_power - min_power + 1;
    if (static_cast<int>(gs.size()) < terms) throw Error("laurent_fit: fewer samples than basis terms");
    RMatrix design(static_cast<Eigen::Index>(gs.size()), terms);
    RVector rhs(static_cast<Eigen::Index>(gs.size()));
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const double t = gs[i] / grid.g_hi;
        for (int p = 0; p < terms; ++p) design(static_cast<Eigen::Index>(i), p) = std::pow(t, min_power + p);
        rhs(static_cast<Eigen::Index>(i)) = f(gs[i]);
    }
    const RVector c = design.colPivHouseholderQr().solve(rhs);
    std::vector<double> coeffs;
    for (int p = 0; p < terms; ++p) coeffs.push_back(c(p) * std::pow(grid.g_hi, -(min_power + p)));
    return coeffs;
}

PoleOrder pole_order(const std::function<double(double)>& f, const LaurentGrid& grid, double zero_floor) {
    const auto gs = geometric_grid(grid);
    std::vector<double> xs;
    std::vector<double> ys;
    for (double g : gs) {
        const double v = std::abs(f(g));
        if (v <= zero_floor) return {};
        xs.push_back(std::log(g));
        ys.push_back(std::log(v));
    }
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    PoleOrder po;
    po.raw_slope = sxy / sxx;
    po.order = std::max(0, static_cast<int>(std::lround(-po.raw_slope)));
    return po;
}

VarianceBound variance_series(const std::function<ContextualValues(double)>& solver, const LaurentGrid& grid,
                              int extra_positive_powers) {
    auto norm_sq = [&solver](double g) { return solver(g).norm_sq(); };
    const PoleOrder po = pole_order(norm_sq, grid);
    const int min_power = -po.order;
    const auto coeffs = laurent_fit(norm_sq, grid, min_power, std::max(0, extra_positive_powers));
    VarianceBound vb;
    vb.norm_sq = norm_sq(grid.g_lo);
    for (int p = min_power; p <= 0; ++p) vb.leading_series.push_back({p, coeffs[static_cast<std::size_t>(p - min_power)]});
    return vb;
}

OrderAnalysis order_analysis(const Observable& obs, const MeasurementContext& ctx, const OrderOptions& opts) {
    if (obs.dim() != ctx.dim()) throw DimensionMismatch("order_analysis: observable and context dimensions differ");
    if (!ctx.depends_on_g()) throw GIndependentContext();

    TaylorOptions topts = opts.taylor;
    topts.g0 = std::min(topts.g0, ctx.validity().hi);
    if (!(topts.g0 > 0.0) || ctx.validity().lo > 0.0) {
        throw Error("order_analysis: validity interval must contain (0, g0]");
    }

    const int d = ctx.dim();
    const int M = ctx.outcomes();
    std::vector<std::vector<CMatrix>> coeffs;  // coeffs[j][m]
    for (int j = 0; j < M; ++j) {
        const GMatrixFn& op = ctx.operators()[static_cast<std::size_t>(j)];
        auto effect = [&op](double g) {
            const CMatrix m = op(g);
            return CMatrix(m.adjoint() * m);
        };
        auto c = adaptive_taylor_coeffs(effect, d, opts.max_order, topts).coeffs;
        c.resize(static_cast<std::size_t>(opts.max_order + 1), CMatrix::Zero(d, d));
        coeffs.push_back(std::move(c));
    }

    OrderAnalysis oa;
    oa.p.resize(M);
    const CMatrix id = CMatrix::Identity(d, d);
    double scale = 1.0;
    for (int j = 0; j < M; ++j) {
        const CMatrix& c0 = coeffs[static_cast<std::size_t>(j)][0];
        oa.p(j) = c0.trace().real() / d;
        oa.order0_defect = std::max(oa.order0_defect, (c0 - oa.p(j) * id).norm());
        scale = std::max(scale, c0.norm());
    }
    oa.p_sum_defect = std::abs(oa.p.sum() - 1.0);

    oa.n = 0;
    for (int m = 1; m <= opts.max_order && oa.n == 0; ++m) {
        for (int j = 0; j < M; ++j) {
            if (coeffs[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)].norm() > opts.nonzero_tol * scale) {
                oa.n = m;
                break;
            }
        }
    }
    if (oa.n == 0) throw GIndependentContext();

    CMatrix coeff_sum = CMatrix::Zero(d, d);
    for (int j = 0; j < M; ++j) {
        oa.effect_coeffs.push_back(coeffs[static_cast<std::size_t>(j)][static_cast<std::size_t>(oa.n)]);
        coeff_sum += oa.effect_coeffs.back();
    }
    oa.coeff_sum_defect = coeff_sum.norm();

    auto truncated = [&](double g) {
        std::vector<CMatrix> effects;
        const double gn = std::pow(g, oa.n);
        for (int j = 0; j < M; ++j) {
            CMatrix e = coeffs[static_cast<std::size_t>(j)][0] + gn * oa.effect_coeffs[static_cast<std::size_t>(j)];
            effects.push_back(0.5 * (e + e.adjoint()));
        }
        return effects;
    };

    oa.g_ref = topts.g0;
    const auto effects_ref = truncated(oa.g_ref);
    const CalibrationMatrix cal = build_F(obs, effects_ref, oa.g_ref);
    oa.F_truncated = cal.F;
    oa.targets = cal.targets;

    oa.Fn.resize(d, M);
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto v = cal.basis.col(k);
        for (int j = 0; j < M; ++j) {
            oa.Fn(k, j) = (v.adjoint() * oa.effect_coeffs[static_cast<std::size_t>(j)] * v)(0, 0).real();
        }
    }

    oa.reconstructed = cal.F * (matcore::pseudoinverse(cal.F, opts.cutoff) * cal.targets);
    oa.residual_at_order_n = (oa.reconstructed - cal.targets).norm();

    // Relevant singular values: those paired with nonzero components of U^T a.
    const auto [U, sigma, V] = matcore::svd(cal.F);
    const CalibrationMatrix cal_half = build_F(obs, truncated(0.5 * oa.g_ref), 0.5 * oa.g_ref);
    const RVector sigma_half = matcore::svd(cal_half.F).sigma;
    const double threshold = opts.cutoff.absolute_for(sigma.size() ? sigma(0) : 0.0, cal.F.rows(), cal.F.cols());
    const RVector projected = U.transpose() * cal.targets;
    bool orders_ok = true;
    for (Eigen::Index k = 0; k < projected.size(); ++k) {
        if (std::abs(projected(k)) <= kRelevantTol * cal.targets.norm()) continue;
        const double s = k < sigma.size() ? sigma(k) : 0.0;
        oa.relevant_singular_values.push_back(s);
        if (s <= threshold) {
            oa.relevant_singular_orders.push_back(-1);
            orders_ok = false;
            continue;
        }
        const double s_half = sigma_half(k);
        const int order = s_half > 0.0 ? static_cast<int>(std::lround(std::log2(s / s_half))) : -1;
        oa.relevant_singular_orders.push_back(order);
        if (order < 0 || order > oa.n) orders_ok = false;
    }
    oa.solvable_at_order_n = satisfies_identity(oa.residual_at_order_n, cal.targets) && orders_ok;
    return oa;
}

}  // namespace ctxval
