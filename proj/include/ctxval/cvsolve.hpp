#pragma once

// Calibration of detector outcomes against an observable: the matrix F,
// contextual-value solutions, variance bounds, and the minimal-order analysis
// that decides whether the observable is reachable at the lowest order in g.

#include "ctxval/contextual_values.hpp"
#include "ctxval/gexpr.hpp"
#include "ctxval/matcore.hpp"
#include "ctxval/measurement.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ctxval {

/// ||F alpha - a|| <= kResidualTol * (1 + ||a||) counts as an exact solution.
inline constexpr double kResidualTol = 1e-9;
/// A component of U^T a is relevant when it exceeds kRelevantTol * ||a||.
inline constexpr double kRelevantTol = 1e-10;
inline constexpr double kRoundingSlack = 16 * 2.220446049250313e-16;

/// F_kj = <k|E_j|k> over an orthonormal basis {|k>} that diagonalizes the
/// observable and every effect at once; targets_k = <k|A|k>. With this basis
/// F alpha = a is equivalent to sum_j alpha_j E_j = A.
struct CalibrationMatrix {
    RMatrix F;
    RVector targets;
    CMatrix basis;  // columns are the joint eigenvectors
    double g = 0.0;
};

/// Basis that simultaneously diagonalizes `a` and `effects`. The computational
/// basis is used when every operator is already diagonal. Throws
/// IncompatibleContext when some effect does not commute with `a`.
CMatrix joint_eigenbasis(const CMatrix& a, std::span<const CMatrix> effects);

CalibrationMatrix build_F(const Observable& obs, std::span<const CMatrix> effects, double g);
CalibrationMatrix build_F(const Observable& obs, const MeasurementContext& ctx, double g);

bool satisfies_identity(double residual, const RVector& targets);
/// Backward-error form used for solved systems: additionally admits the
/// rounding floor kRoundingSlack * ||F|| * ||alpha|| of evaluating F alpha,
/// which dominates once contextual values grow like inverse powers of g.
bool satisfies_identity(const CalibrationMatrix& cal, const RVector& alphas, double residual);

ContextualValues solve_pinv(const CalibrationMatrix& cal, const matcore::RankCutoff& cutoff = {});

/// Orthonormal basis of null(F), one vector per column (possibly zero columns).
RMatrix null_space(const RMatrix& F, const matcore::RankCutoff& cutoff = {});

struct FixedComponent {
    int index;  // zero-based outcome index
    double value;
};

/// Pins the listed components and solves for the rest (minimum norm among
/// the free components). Throws InconsistentSystem when no exact solution remains.
ContextualValues solve_fixed(const CalibrationMatrix& cal, std::span<const FixedComponent> pins,
                             const matcore::RankCutoff& cutoff = {});

/// Square invertible F only; throws InconsistentSystem otherwise.
ContextualValues solve_exact(const CalibrationMatrix& cal);

/// A pin whose value is an expression in g, e.g. alpha_1 = 1/g^2.
struct PinExpr {
    int index;
    GExpr value;
};

struct Prescription {
    SolveMethod method = SolveMethod::Pseudoinverse;
    std::vector<PinExpr> pins;
    matcore::RankCutoff cutoff;
};

ContextualValues solve(const CalibrationMatrix& cal, const Prescription& prescription);

/// Operator-level check of sum_j alpha_j E_j = A (Frobenius error).
double reconstruction_error(const Observable& obs, std::span<const CMatrix> effects, const RVector& alphas);

struct SeriesTerm {
    int power;  // exponent of g; negative for poles
    double coeff;
};

struct VarianceBound {
    double norm_sq = 0.0;
    std::vector<SeriesTerm> leading_series;  // most singular term first
};

VarianceBound variance_bound(const ContextualValues& cv);

struct LaurentGrid {
    double g_lo = 1e-3;
    double g_hi = 1e-2;
    int points = 31;
};

/// Least-squares fit of f(g) = sum_{p=min_power}^{max_power} c_p g^p over a
/// geometric grid. Entry i of the result is c_{min_power + i}.
std::vector<double> laurent_fit(const std::function<double(double)>& f, const LaurentGrid& grid, int min_power,
                                int max_power);

struct PoleOrder {
    double raw_slope = 0.0;  // d log|f| / d log g
    int order = 0;           // rounded -slope, clamped at 0
};

/// Fit of log|f| against log g over the grid. Samples with |f| <= zero_floor
/// count as identically zero and report order 0.
PoleOrder pole_order(const std::function<double(double)>& f, const LaurentGrid& grid, double zero_floor = 0.0);

/// ||alpha(g)||^2 sampled over the grid, its pole order detected, then fitted
/// by a Laurent polynomial down to that order. Leading terms are the fitted
/// coefficients with nonpositive powers.
VarianceBound variance_series(const std::function<ContextualValues(double)>& solver, const LaurentGrid& grid,
                              int extra_positive_powers = 3);

struct OrderOptions {
    int max_order = 6;
    TaylorOptions taylor;
    double nonzero_tol = 1e-6;
    matcore::RankCutoff cutoff{1e-10};
};

struct OrderAnalysis {
    int n = 0;
    RVector p;                       // g^0 weights p_j
    RMatrix Fn;                      // order-n coefficient matrix in the joint basis
    std::vector<CMatrix> effect_coeffs;  // E_j^(n)
    double order0_defect = 0.0;      // max_j ||E_j^(0) - p_j 1||
    double p_sum_defect = 0.0;       // |sum_j p_j - 1|
    double coeff_sum_defect = 0.0;   // ||sum_j E_j^(n)||

    double g_ref = 0.0;
    RMatrix F_truncated;             // F of p_j 1 + g_ref^n E_j^(n)
    RVector targets;
    RVector reconstructed;           // F'(F'^+ a)
    double residual_at_order_n = 0.0;
    std::vector<double> relevant_singular_values;
    std::vector<int> relevant_singular_orders;
    bool solvable_at_order_n = false;
};

/// Throws GIndependentContext when no coefficient beyond order 0 is nonzero.
OrderAnalysis order_analysis(const Observable& obs, const MeasurementContext& ctx, const OrderOptions& opts = {});

}  // namespace ctxval
