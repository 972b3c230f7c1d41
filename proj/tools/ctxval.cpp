// ctxval: calibrate detectors with contextual values and study weak limits.

#include "ctxval/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace ctxval::cli;

// Runs `cmd` with its report going to --out when given.
template <typename Cmd>
int with_output(const std::string& out_path, Cmd&& cmd) {
    if (out_path.empty()) return cmd(std::cout);
    std::ofstream os(out_path, std::ios::binary);
    if (!os) {
        std::cerr << "usage error: cannot write '" << out_path << "'\n";
        return kExitUsage;
    }
    const int rc = cmd(os);
    os.flush();
    if (!os) {
        std::cerr << "error: failed writing '" << out_path << "'\n";
        return kExitFailure;
    }
    return rc;
}

void add_obs(CLI::App* sub, std::vector<double>& obs) {
    sub->add_option("--obs", obs, "diagonal observable override a,b,...")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contextual-value calibration and weak-limit analysis"};
    app.require_subcommand(1);

    std::string out_path;
    app.add_option("--out", out_path, "write the report to PATH instead of stdout");

    InputOptions validate_opts;
    std::vector<double> validate_obs;
    auto* validate = app.add_subcommand("validate", "check a context file (FILE or @scenario)");
    validate->add_option("file", validate_opts.input)->required();
    add_obs(validate, validate_obs);

    SolveOptions solve_opts;
    std::vector<double> solve_obs;
    auto* solve = app.add_subcommand("solve", "contextual values at one coupling g");
    solve->add_option("file", solve_opts.in.input)->required();
    solve->add_option("--g", solve_opts.g, "coupling strength")->capture_default_str();
    solve->add_option("--method", solve_opts.method, "pinv | fixed | exact")
        ->check(CLI::IsMember({"pinv", "fixed", "exact"}))
        ->capture_default_str();
    solve->add_option("--pin", solve_opts.pins, "idx=EXPR, 1-based (repeatable)")->take_all();
    add_obs(solve, solve_obs);

    SweepOptions sweep_opts;
    std::vector<double> sweep_obs;
    auto* sweep = app.add_subcommand("sweep", "conditioned averages over a geometric g grid (CSV)");
    sweep->add_option("file", sweep_opts.in.input)->required();
    sweep->add_option("--gmin", sweep_opts.g_min)->capture_default_str();
    sweep->add_option("--gmax", sweep_opts.g_max)->capture_default_str();
    sweep->add_option("--points", sweep_opts.points)->capture_default_str();
    sweep->add_option("--order", sweep_opts.poly_order, "polynomial order of the limit fit")->capture_default_str();
    sweep->add_option("--method", sweep_opts.method, "pinv | fixed | exact")
        ->check(CLI::IsMember({"pinv", "fixed", "exact"}))
        ->capture_default_str();
    sweep->add_option("--pin", sweep_opts.pins, "idx=EXPR, 1-based (repeatable)")->take_all();
    add_obs(sweep, sweep_obs);

    InputOptions audit_opts;
    std::vector<double> audit_obs;
    auto* audit = app.add_subcommand("audit", "check the sufficient conditions for a unique weak limit");
    audit->add_option("file", audit_opts.input)->required();
    add_obs(audit, audit_obs);

    ScenarioOptions scenario_opts;
    std::vector<double> scenario_obs;
    std::string scenario_matrix;
    auto* scen = app.add_subcommand("scenario", "print a built-in context file");
    scen->add_option("name", scenario_opts.name)->required();
    scen->add_option("--obs-matrix", scenario_matrix, "projective observable, rows ';' entries ','");
    add_obs(scen, scenario_obs);

    // --out is accepted after the subcommand as well
    for (auto* sub : {validate, solve, sweep, audit, scen}) sub->add_option("--out", out_path, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    auto obs_of = [](const std::vector<double>& v) {
        return v.empty() ? std::nullopt : std::optional<std::vector<double>>(v);
    };

    if (*validate) {
        validate_opts.obs = obs_of(validate_obs);
        return with_output(out_path, [&](std::ostream& os) { return cmd_validate(validate_opts, os, std::cerr); });
    }
    if (*solve) {
        solve_opts.in.obs = obs_of(solve_obs);
        return with_output(out_path, [&](std::ostream& os) { return cmd_solve(solve_opts, os, std::cerr); });
    }
    if (*sweep) {
        sweep_opts.in.obs = obs_of(sweep_obs);
        return with_output(out_path, [&](std::ostream& os) { return cmd_sweep(sweep_opts, os, std::cerr); });
    }
    if (*audit) {
        audit_opts.obs = obs_of(audit_obs);
        return with_output(out_path, [&](std::ostream& os) { return cmd_audit(audit_opts, os, std::cerr); });
    }
    scenario_opts.obs = obs_of(scenario_obs);
    if (!scenario_matrix.empty()) scenario_opts.obs_matrix = scenario_matrix;
    return with_output(out_path, [&](std::ostream& os) { return cmd_scenario(scenario_opts, os, std::cerr); });
}
