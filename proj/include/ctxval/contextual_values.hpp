#pragma once

#include "ctxval/matcore.hpp"

#include <string>
#include <string_view>

namespace ctxval {

enum class SolveMethod { Pseudoinverse, FixedComponent, ExactInverse };

std::string_view to_string(SolveMethod m);

/// Detector-outcome weights alpha_j with sum_j alpha_j E_j = A (when residual ~ 0).
struct ContextualValues {
    RVector alphas;
    SolveMethod method = SolveMethod::Pseudoinverse;
    double residual = 0.0;  // ||F alpha - a||
    double g = 0.0;

    Eigen::Index size() const { return alphas.size(); }
    double norm_sq() const { return alphas.squaredNorm(); }
};

}  // namespace ctxval
