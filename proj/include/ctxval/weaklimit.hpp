#pragma once

// Weak values in closed form, numerical g -> 0 extrapolation of conditioned
// averages, and the audit of the sufficient conditions for a unique limit.

#include "ctxval/cvsolve.hpp"
#include "ctxval/measurement.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctxval {

struct WeakValueResult {
    double value = 0.0;
    double numerator = 0.0;    // tr(E_f (A rho + rho A)) / 2
    double denominator = 0.0;  // tr(E_f rho)
    std::optional<Complex> aav_complex;
};

/// Symmetrized weak value for a mixed pre-selection and an unsharp post-selection.
WeakValueResult generalized_weak_value(const Observable& obs, const State& state, const PostSelection& post);

/// Pure-state form: also fills aav_complex.
WeakValueResult generalized_weak_value(const Observable& obs, const CVector& psi_i, const CVector& psi_f);

/// <psi_f|A|psi_i> / <psi_f|psi_i> for normalized inputs.
Complex aav_weak_value(const Observable& obs, const CVector& psi_i, const CVector& psi_f);

struct GridSpec {
    double g_max = 1e-2;
    double g_min = 1e-4;
    int points = 21;
    int poly_order = 3;

    std::vector<double> grid() const;  // geometric, descending from g_max
};

struct LimitEstimate {
    double extrapolated_value = 0.0;
    std::vector<double> g_grid;
    std::vector<double> samples;         // conditioned averages on the grid
    std::vector<double> fitted_coeffs;   // c_0..c_p of the polynomial fit in g
    bool convergence_flag = false;
    int pole_order = 0;                  // 1 or 2 when divergent terms are detected
    double weak_value = 0.0;
    double discrepancy_vs_weak_value = 0.0;     // |extrapolated_value - weak_value|
    double denominator_limit = 0.0;      // fitted constant term of the post-selection probability
};

/// Tolerance at which two extrapolants (full grid vs. inner grid) must agree.
inline constexpr double kExtrapolationAgreementTol = 1e-6;
/// A weak limit matches the weak value when the discrepancy stays below this.
inline constexpr double kWeakValueMatchTol = 1e-6;

LimitEstimate weak_limit(const MeasurementContext& ctx, const Observable& obs, const Prescription& prescription,
                         const State& state, const PostSelection& post, const GridSpec& grid = {});

/// Polynomial extrapolation of arbitrary samples: fits c_0 + ... + c_p g^p
/// (and the divergence refit with g^-1, g^-2) and fills the fit fields.
LimitEstimate extrapolate(const std::vector<double>& gs, const std::vector<double>& values, int poly_order);

enum class Verdict { Pass, Borderline, Fail };
std::string_view to_string(Verdict v);

struct ConditionVerdict {
    Verdict verdict = Verdict::Fail;
    std::string evidence;
};

struct AuditReport {
    ConditionVerdict cond_i_analytic;
    ConditionVerdict cond_ii_min_disturbance;
    ConditionVerdict cond_iii_identity;
    ConditionVerdict cond_iv_order;
    ConditionVerdict cond_v_compat;
    bool overall = false;
    bool g_independent = false;

    std::optional<OrderAnalysis> order;  // absent for g-independent contexts
    std::vector<double> taylor_residual_by_outcome;
    std::vector<double> generator_commutators;  // ||[G_j, rho]|| at the smallest grid g
    std::vector<double> generator_norms;        // ||G_j||
    std::vector<double> observable_commutators; // max over sampled g of ||[A, E_j]||
    double max_identity_residual = 0.0;         // over the weak-limit grid, pseudoinverse CVs
    int non_polynomial_entries = 0;
};

struct AuditOptions {
    GridSpec grid;
    OrderOptions order;
    double generator_tol = 1e-8;
};

AuditReport audit(const MeasurementContext& ctx, const Observable& obs, const State& state,
                  const AuditOptions& opts = {});

}  // namespace ctxval
