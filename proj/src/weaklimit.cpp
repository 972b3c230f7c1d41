#include "ctxval/weaklimit.hpp"

#include "ctxval/errors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctxval {

namespace {

constexpr double kOverlapTol = 1e-12;

double trace_product(const CMatrix& a, const CMatrix& b) { return (a.transpose().cwiseProduct(b)).sum().real(); }

CVector normalized(const CVector& v, const char* what) {
    const double n = v.norm();
    if (!(n > 0.0)) throw Error(std::string(what) + " has zero norm");
    return v / n;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

WeakValueResult generalized_weak_value(const Observable& obs, const State& state, const PostSelection& post) {
    if (obs.dim() != state.dim() || post.effect().rows() != state.dim()) {
        throw DimensionMismatch("generalized_weak_value: dimension mismatch");
    }
    WeakValueResult r;
    const CMatrix sym = obs.matrix() * state.rho() + state.rho() * obs.matrix();
    r.numerator = 0.5 * trace_product(post.effect(), sym);
    r.denominator = trace_product(post.effect(), state.rho());
    if (!(r.denominator > kPostSelectionTol)) throw NullPostSelection(r.denominator);
    r.value = r.numerator / r.denominator;
    return r;
}

WeakValueResult generalized_weak_value(const Observable& obs, const CVector& psi_i, const CVector& psi_f) {
    WeakValueResult r =
        generalized_weak_value(obs, State::pure(psi_i), PostSelection::projector(psi_f));
    r.aav_complex = aav_weak_value(obs, psi_i, psi_f);
    return r;
}

Complex aav_weak_value(const Observable& obs, const CVector& psi_i, const CVector& psi_f) {
    if (psi_i.size() != obs.dim() || psi_f.size() != obs.dim()) {
        throw DimensionMismatch("aav_weak_value: dimension mismatch");
    }
    const CVector i = normalized(psi_i, "pre-selected state");
    const CVector f = normalized(psi_f, "post-selected state");
    const Complex overlap = f.dot(i);  // conjugates f
    if (std::abs(overlap) <= kOverlapTol) throw NullPostSelection(std::abs(overlap));
    return f.dot(obs.matrix() * i) / overlap;
}

std::vector<double> GridSpec::grid() const {
    if (!(g_min > 0.0 && g_max > g_min) || points < 2) {
        throw Error("grid must satisfy 0 < gmin < gmax with at least two points");
    }
    std::vector<double> gs;
    const double span = std::log(g_min / g_max);
    for (int i = 0; i < points; ++i) gs.push_back(g_max * std::exp(span * double(i) / (points - 1)));
    gs.back() = g_min;
    return gs;
}

namespace {

struct Fit {
    RVector c;  // in scaled variable t = g / g_scale
    double residual;
};

// Least-squares fit of values to sum_{p=lo}^{hi} c_p t^p.
Fit fit_powers(const std::vector<double>& ts, const std::vector<double>& values, int lo, int hi) {
    const int terms = hi - lo + 1;
    RMatrix design(static_cast<Eigen::Index>(ts.size()), terms);
    RVector rhs(static_cast<Eigen::Index>(ts.size()));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (int p = 0; p < terms; ++p) design(static_cast<Eigen::Index>(i), p) = std::pow(ts[i], lo + p);
        rhs(static_cast<Eigen::Index>(i)) = values[i];
    }
    Fit f;
    f.c = design.colPivHouseholderQr().solve(rhs);
    f.residual = (design * f.c - rhs).norm();
    return f;
}

}  // namespace

LimitEstimate extrapolate(const std::vector<double>& gs, const std::vector<double>& values, int poly_order) {
    if (gs.size() != values.size()) throw DimensionMismatch("extrapolate: one value per grid point required");
    if (poly_order < 0) throw Error("extrapolate: negative polynomial order");
    if (static_cast<int>(gs.size()) < poly_order + 4) throw Error("extrapolate: too few grid points for the fit");
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteInput("extrapolate: non-finite sample");
    }

    LimitEstimate est;
    est.g_grid = gs;
    est.samples = values;

    const double g_scale = *std::max_element(gs.begin(), gs.end());
    const double g_small = *std::min_element(gs.begin(), gs.end());
    std::vector<double> ts;
    for (double g : gs) ts.push_back(g / g_scale);

    const Fit full = fit_powers(ts, values, 0, poly_order);
    for (int p = 0; p <= poly_order; ++p) est.fitted_coeffs.push_back(full.c(p) * std::pow(g_scale, -p));
    est.extrapolated_value = full.c(0);

    // Successive extrapolant: the same fit restricted to the smaller-g two thirds.
    std::vector<std::size_t> order(gs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&gs](std::size_t a, std::size_t b) { return gs[a] < gs[b]; });
    const std::size_t inner_n = std::max<std::size_t>(static_cast<std::size_t>(poly_order) + 2, 2 * gs.size() / 3);
    std::vector<double> inner_t;
    std::vector<double> inner_v;
    for (std::size_t k = 0; k < inner_n; ++k) {
        inner_t.push_back(ts[order[k]]);
        inner_v.push_back(values[order[k]]);
    }
    const Fit inner = fit_powers(inner_t, inner_v, 0, poly_order);
    const double scale = 1.0 + std::abs(full.c(0));
    const bool agree = std::abs(inner.c(0) - full.c(0)) <= kExtrapolationAgreementTol * scale;

    // Divergence refit with g^-1 and g^-2 terms. A pole is reported when its
    // contribution at the smallest g is not negligible against the constant term.
    const Fit laurent = fit_powers(ts, values, -2, poly_order);
    const double t_small = g_small / g_scale;
    const double c_m2 = std::abs(laurent.c(0)) / (t_small * t_small);
    const double c_m1 = std::abs(laurent.c(1)) / t_small;
    const double pole_scale = 1e-3 * (1.0 + std::abs(laurent.c(2)));
    if (c_m2 > pole_scale) {
        est.pole_order = 2;
    } else if (c_m1 > pole_scale) {
        est.pole_order = 1;
    }
    est.convergence_flag = agree && est.pole_order == 0;
    return est;
}

LimitEstimate weak_limit(const MeasurementContext& ctx, const Observable& obs, const Prescription& prescription,
                         const State& state, const PostSelection& post, const GridSpec& grid) {
    const auto gs = grid.grid();
    for (double g : gs) {
        if (!ctx.validity().contains(g)) throw Error("weak_limit: grid point g=" + fmt(g) + " outside validity");
    }
    std::vector<double> values;
    std::vector<double> denominators;
    for (double g : gs) {
        const auto ops = ctx.operators_at(g);
        const auto effects = povm_from_operators(ops);
        const ContextualValues cv = solve(build_F(obs, effects, g), prescription);
        const ConditionedAverageResult r = conditioned_average(ops, cv.alphas, state, post, g);
        values.push_back(r.value);
        denominators.push_back(r.post_prob);
    }
    LimitEstimate est = extrapolate(gs, values, grid.poly_order);
    est.denominator_limit = extrapolate(gs, denominators, grid.poly_order).extrapolated_value;
    est.weak_value = generalized_weak_value(obs, state, post).value;
    est.discrepancy_vs_weak_value = std::abs(est.extrapolated_value - est.weak_value);
    return est;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Borderline: return "borderline";
        case Verdict::Fail: return "fail";
    }
    return "unknown";
}

namespace {

ConditionVerdict verdict(bool ok, std::string evidence) {
    return {ok ? Verdict::Pass : Verdict::Fail, std::move(evidence)};
}

std::string vec_str(const RVector& v) {
    std::string s = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i));
    return s + ")";
}

// Condition (i): every M_j and E_j has a Taylor expansion at 0 and M_j(0) is
// proportional to the identity with nonzero weight.
ConditionVerdict check_analytic(const MeasurementContext& ctx, const OrderOptions& opts, AuditReport& report) {
    const int d = ctx.dim();
    TaylorOptions topts = opts.taylor;
    topts.g0 = std::min(topts.g0, ctx.validity().hi);
    if (ctx.validity().lo > 0.0 || !(topts.g0 > 0.0)) {
        return verdict(false, "validity interval does not reach g = 0");
    }
    const CMatrix id = CMatrix::Identity(d, d);
    double worst_identity = 0.0;
    double min_weight = std::numeric_limits<double>::infinity();
    for (const GMatrixFn& op : ctx.operators()) {
        double residual = 0.0;
        try {
            auto effect = [&op](double g) {
                const CMatrix m = op(g);
                return CMatrix(m.adjoint() * m);
            };
            const TaylorFit fm = adaptive_taylor_coeffs([&op](double g) { return op(g); }, d, opts.max_order, topts);
            const TaylorFit fe = adaptive_taylor_coeffs(effect, d, opts.max_order, topts);
            residual = std::max(fm.held_out_residual, fe.held_out_residual);
            const CMatrix& c0 = fm.coeffs[0];
            const Complex w = c0.trace() / double(d);
            worst_identity = std::max(worst_identity, (c0 - w * id).norm() / std::max(1.0, c0.norm()));
            min_weight = std::min(min_weight, fe.coeffs[0].trace().real() / d);
        } catch (const NonAnalytic& e) {
            report.taylor_residual_by_outcome.push_back(e.residual());
            return verdict(false, "outcome " + std::to_string(report.taylor_residual_by_outcome.size()) +
                                      ": Taylor fit fails (held-out residual " + fmt(e.residual()) + ")");
        } catch (const DomainError& e) {
            report.taylor_residual_by_outcome.push_back(std::numeric_limits<double>::infinity());
            return verdict(false, std::string("operator undefined near g = 0: ") + e.what());
        }
        report.taylor_residual_by_outcome.push_back(residual);
        if (!op.is_polynomial()) ++report.non_polynomial_entries;
    }
    const double max_res = *std::max_element(report.taylor_residual_by_outcome.begin(),
                                             report.taylor_residual_by_outcome.end());
    std::string ev = "max Taylor residual " + fmt(max_res) + "; M_j(0) identity defect " + fmt(worst_identity) +
                     "; min p_j " + fmt(min_weight);
    if (report.non_polynomial_entries > 0) {
        ev += "; " + std::to_string(report.non_polynomial_entries) + " outcome(s) with sqrt entries";
    }
    if (report.g_independent) {
        return {Verdict::Pass, "g-independent context (analytic trivially); " + ev};
    }
    return verdict(worst_identity <= 1e-8 && min_weight > 1e-12, ev);
}

// Largest ||[G_j, rho]|| with G_j = log(U_j) / (i g) from the polar factor of M_j(g).
double generator_commutator(const CMatrix& m, double g, const CMatrix& rho, double* generator_norm) {
    const matcore::PolarFactors pf = matcore::polar_decompose(m);
    const CMatrix gen = matcore::unitary_log(pf.unitary) / Complex(0.0, g);
    if (generator_norm) *generator_norm = gen.norm();
    return matcore::commutator(gen, rho).norm();
}

ConditionVerdict check_min_disturbance(const MeasurementContext& ctx, const State& state, const AuditOptions& opts,
                                       AuditReport& report) {
    const double g_small = opts.grid.g_min;
    const double g_ref = std::min(opts.grid.g_max, ctx.validity().hi);
    if (!ctx.validity().contains(g_small)) return verdict(false, "smallest grid g outside validity");
    const auto ops_small = ctx.operators_at(g_small);
    const auto ops_ref = ctx.operators_at(g_ref);
    double worst_small = 0.0;
    double worst_ref = 0.0;
    for (std::size_t j = 0; j < ops_small.size(); ++j) {
        double norm = 0.0;
        const double c_small = generator_commutator(ops_small[j], g_small, state.rho(), &norm);
        const double c_ref = generator_commutator(ops_ref[j], g_ref, state.rho(), nullptr);
        report.generator_commutators.push_back(c_small);
        report.generator_norms.push_back(norm);
        const double tol = opts.generator_tol * std::max(1.0, norm);
        worst_small = std::max(worst_small, c_small / tol);
        worst_ref = std::max(worst_ref, c_ref / tol);
    }
    const double max_c = *std::max_element(report.generator_commutators.begin(), report.generator_commutators.end());
    std::string ev = "max ||[G_j, rho]|| = " + fmt(max_c) + " at g=" + fmt(g_small);
    if (worst_small <= 1.0 && worst_ref <= 1.0) return {Verdict::Pass, ev};
    if (worst_small <= 1.0) return {Verdict::Borderline, ev + " (commutation fails at g=" + fmt(g_ref) + ")"};
    return {Verdict::Fail, ev};
}

ConditionVerdict check_identity(const MeasurementContext& ctx, const Observable& obs, const AuditOptions& opts,
                                AuditReport& report) {
    bool ok = true;
    for (double g : opts.grid.grid()) {
        if (!ctx.validity().contains(g)) return verdict(false, "grid point g=" + fmt(g) + " outside validity");
        const CalibrationMatrix cal = build_F(obs, ctx, g);
        const ContextualValues cv = solve_pinv(cal);
        const double rel = cv.residual / (1.0 + cal.targets.norm());
        report.max_identity_residual = std::max(report.max_identity_residual, rel);
        ok = ok && satisfies_identity(cal, cv.alphas, cv.residual);
    }
    return verdict(ok, "max pseudoinverse residual " + fmt(report.max_identity_residual) + " (relative)");
}

ConditionVerdict check_order(const MeasurementContext& ctx, const Observable& obs, const AuditOptions& opts,
                             AuditReport& report) {
    if (report.g_independent) return {Verdict::Pass, "g-independent context: n undefined"};
    try {
        report.order = order_analysis(obs, ctx, opts.order);
    } catch (const GIndependentContext&) {
        report.g_independent = true;
        return {Verdict::Pass, "g-independent context: n undefined"};
    } catch (const NonAnalytic& e) {
        return verdict(false, std::string("order analysis impossible: ") + e.what());
    }
    const OrderAnalysis& oa = *report.order;
    return verdict(oa.solvable_at_order_n, "n=" + std::to_string(oa.n) + "; F'(F'^+ a) = " +
                                               vec_str(oa.reconstructed) + " vs a = " + vec_str(oa.targets) +
                                               "; residual " + fmt(oa.residual_at_order_n));
}

ConditionVerdict check_compat(const MeasurementContext& ctx, const Observable& obs, AuditReport& report) {
    report.observable_commutators.assign(static_cast<std::size_t>(ctx.outcomes()), 0.0);
    bool ok = true;
    for (double g : ctx.validity().sample(16)) {
        const auto effects = povm_at(ctx, g);
        const auto norms = commutator_norms(obs.matrix(), effects);
        for (std::size_t j = 0; j < norms.size(); ++j) {
            report.observable_commutators[j] = std::max(report.observable_commutators[j], norms[j]);
        }
        ok = ok && compatible(obs.matrix(), effects);
    }
    const double worst =
        *std::max_element(report.observable_commutators.begin(), report.observable_commutators.end());
    return verdict(ok, "max ||[A, E_j]|| = " + fmt(worst));
}

}  // namespace

AuditReport audit(const MeasurementContext& ctx, const Observable& obs, const State& state,
                  const AuditOptions& opts) {
    if (obs.dim() != ctx.dim() || state.dim() != ctx.dim()) throw DimensionMismatch("audit: dimension mismatch");
    AuditReport report;
    report.g_independent = !ctx.depends_on_g();

    auto guarded = [](auto&& check) -> ConditionVerdict {
        try {
            return check();
        } catch (const Error& e) {
            return verdict(false, e.what());
        }
    };
    report.cond_i_analytic = guarded([&] { return check_analytic(ctx, opts.order, report); });
    report.cond_ii_min_disturbance = guarded([&] { return check_min_disturbance(ctx, state, opts, report); });
    report.cond_iii_identity = guarded([&] { return check_identity(ctx, obs, opts, report); });
    report.cond_iv_order = guarded([&] { return check_order(ctx, obs, opts, report); });
    report.cond_v_compat = guarded([&] { return check_compat(ctx, obs, report); });

    report.overall = true;
    for (const ConditionVerdict* c : {&report.cond_i_analytic, &report.cond_ii_min_disturbance,
                                      &report.cond_iii_identity, &report.cond_iv_order, &report.cond_v_compat}) {
        report.overall = report.overall && c->verdict == Verdict::Pass;
    }
    return report;
}

}  // namespace ctxval
