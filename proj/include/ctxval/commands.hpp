#pragma once

// Command implementations behind the ctxval executable. Each writes its
// report to `out`, diagnostics to `err`, and returns the process exit code.

#include "ctxval/errors.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ctxval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or consistency failure
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

struct InputOptions {
    /// Path of a context file, or "@name" for a built-in scenario.
    std::string input;
    /// Diagonal observable override.
    std::optional<std::vector<double>> obs;
};

struct SolveOptions {
    InputOptions in;
    double g = 0.1;
    std::string method = "pinv";    // pinv | fixed | exact
    std::vector<std::string> pins;  // "idx=EXPR", 1-based
};

struct SweepOptions {
    InputOptions in;
    double g_min = 1e-4;
    double g_max = 1e-2;
    int points = 21;
    std::string method = "pinv";
    std::vector<std::string> pins;
    int poly_order = 3;
};

struct ScenarioOptions {
    std::string name;
    std::optional<std::vector<double>> obs;
    /// Rows separated by ';', entries by ',' (projective scenario only).
    std::optional<std::string> obs_matrix;
};

int cmd_validate(const InputOptions& opts, std::ostream& out, std::ostream& err);
int cmd_solve(const SolveOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err);
int cmd_audit(const InputOptions& opts, std::ostream& out, std::ostream& err);
int cmd_scenario(const ScenarioOptions& opts, std::ostream& out, std::ostream& err);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace ctxval::cli
