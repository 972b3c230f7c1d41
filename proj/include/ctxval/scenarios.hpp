#pragma once

// Built-in contexts:
//   ce1        two-outcome qubit detector with a third "no information" outcome
//   ce2        three-outcome qutrit detector whose order-1 calibration is singular
//   ce2-typo   ce2 with a missing square root (fails completeness on purpose)
//   projective spectral projectors of a real symmetric observable

#include "ctxval/context_file.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctxval {

struct ScenarioParams {
    /// Diagonal observable override (ce1 default (1, -1); ce2 default (1, 0, 0)).
    std::optional<std::vector<double>> obs_diag;
    /// Observable for the projective scenario (default diag(1, 0, -1)).
    std::optional<RMatrix> obs_matrix;
};

const std::vector<std::string>& scenario_names();

/// Throws Error listing the available names when `name` is unknown.
ContextFile scenario(const std::string& name, const ScenarioParams& params = {});

}  // namespace ctxval
