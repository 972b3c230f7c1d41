#pragma once

// Generalized measurement model: contexts {M_j(g)}, their POVMs, outcome
// statistics, state update, moments, and post-selected conditioned averages.

#include "ctxval/contextual_values.hpp"
#include "ctxval/gexpr.hpp"
#include "ctxval/matcore.hpp"

#include <span>
#include <string>
#include <vector>

namespace ctxval {

inline constexpr double kCompletenessTol = 1e-9;
inline constexpr double kStateTraceTol = 1e-10;
inline constexpr double kPostSelectionTol = 1e-14;
inline constexpr double kCompatibilityTol = 1e-10;
inline constexpr int kMaxMomentOrder = 4;
inline constexpr int kMaxMomentOutcomes = 8;

class Observable {
public:
    explicit Observable(CMatrix matrix);
    static Observable diagonal(std::span<const double> values);

    const CMatrix& matrix() const { return matrix_; }
    const std::vector<matcore::Eigenspace>& spectrum() const { return spectrum_; }
    int dim() const { return static_cast<int>(matrix_.rows()); }

private:
    CMatrix matrix_;
    std::vector<matcore::Eigenspace> spectrum_;
};

/// Density matrix: Hermitian, PSD, unit trace.
class State {
public:
    explicit State(CMatrix rho);
    static State pure(const CVector& psi);
    static State maximally_mixed(int dim);

    const CMatrix& rho() const { return rho_; }
    int dim() const { return static_cast<int>(rho_.rows()); }

private:
    CMatrix rho_;
};

/// Effect E_f of the post-selecting measurement: Hermitian, 0 <= E_f <= 1.
class PostSelection {
public:
    explicit PostSelection(CMatrix effect);
    static PostSelection projector(const CVector& psi);
    static PostSelection identity(int dim);

    const CMatrix& effect() const { return effect_; }

private:
    CMatrix effect_;
};

/// Measurement operators M_j(g) sharing one validity interval (the
/// intersection of the operators' own intervals).
class MeasurementContext {
public:
    /// Validates dimensions and POVM completeness on a 16-point sample of
    /// the validity interval; throws CompletenessError or DomainError.
    MeasurementContext(std::vector<GMatrixFn> operators, std::vector<std::string> labels = {});

    const std::vector<GMatrixFn>& operators() const { return operators_; }
    const std::vector<std::string>& labels() const { return labels_; }
    int dim() const { return operators_.front().dim(); }
    int outcomes() const { return static_cast<int>(operators_.size()); }
    const Validity& validity() const { return validity_; }
    bool depends_on_g() const;

    /// Throws when g lies outside the validity interval.
    std::vector<CMatrix> operators_at(double g) const;

private:
    std::vector<GMatrixFn> operators_;
    std::vector<std::string> labels_;
    Validity validity_;
};

struct ConditionedAverageResult {
    double g = 0.0;
    double value = 0.0;
    std::vector<double> cond_probs;
    std::vector<double> joint_unnormalized;
    double post_prob = 0.0;
};

/// Frobenius defect ||sum_j M_j^dagger M_j - 1||.
double completeness_defect(std::span<const CMatrix> operators);

std::vector<CMatrix> povm_from_operators(std::span<const CMatrix> operators);

std::vector<CMatrix> povm_at(const MeasurementContext& ctx, double g);
std::vector<double> outcome_probs(const MeasurementContext& ctx, double g, const State& state);
State state_update(const MeasurementContext& ctx, double g, const State& state, int outcome);
double expectation(const Observable& obs, const State& state);

/// Largest ||[A, X_j]||_F / (||A|| ||X_j||) over the given operators.
std::vector<double> commutator_norms(const CMatrix& a, std::span<const CMatrix> ops);
bool compatible(const CMatrix& a, std::span<const CMatrix> ops, double rel_tol = kCompatibilityTol);

/// n-th moment from correlated measurement sequences:
/// sum over (j1..jn) of alpha_j1...alpha_jn tr(rho E_j1...E_jn).
double cv_moment(const MeasurementContext& ctx, double g, const ContextualValues& cv, const Observable& obs,
                 const State& state, int n);

ConditionedAverageResult conditioned_average(std::span<const CMatrix> operators, const RVector& alphas,
                                             const State& state, const PostSelection& post, double g);
ConditionedAverageResult conditioned_average(const MeasurementContext& ctx, double g, const ContextualValues& cv,
                                             const State& state, const PostSelection& post);

}  // namespace ctxval
