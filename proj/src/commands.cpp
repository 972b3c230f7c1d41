#include "ctxval/commands.hpp"

#include "ctxval/context_file.hpp"
#include "ctxval/cvsolve.hpp"
#include "ctxval/scenarios.hpp"
#include "ctxval/weaklimit.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace ctxval::cli {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace {

ContextFile load(const InputOptions& in) {
    ContextFile file;
    if (!in.input.empty() && in.input.front() == '@') {
        try {
            file = scenario(in.input.substr(1));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    } else {
        std::ifstream is(in.input, std::ios::binary);
        if (!is) throw UsageError("cannot read '" + in.input + "'");
        std::ostringstream text;
        text << is.rdbuf();
        file = parse_context(text.str());
    }
    if (in.obs) {
        if (static_cast<int>(in.obs->size()) != file.dim) {
            throw UsageError("--obs needs " + std::to_string(file.dim) + " values");
        }
        CMatrix a = CMatrix::Zero(file.dim, file.dim);
        for (int i = 0; i < file.dim; ++i) a(i, i) = (*in.obs)[static_cast<std::size_t>(i)];
        file.observable = ExprMatrix::from(a);
    }
    return file;
}

Prescription prescription(const std::string& method, const std::vector<std::string>& pins, int outcomes) {
    Prescription p;
    if (method == "pinv") {
        p.method = SolveMethod::Pseudoinverse;
    } else if (method == "fixed") {
        p.method = SolveMethod::FixedComponent;
    } else if (method == "exact") {
        p.method = SolveMethod::ExactInverse;
    } else {
        throw UsageError("unknown method '" + method + "' (pinv, fixed, exact)");
    }
    if (!pins.empty() && p.method != SolveMethod::FixedComponent) throw UsageError("--pin requires --method fixed");
    if (p.method == SolveMethod::FixedComponent && pins.empty()) throw UsageError("--method fixed needs --pin");
    for (const std::string& spec : pins) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw UsageError("pin '" + spec + "' is not idx=EXPR");
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + eq, idx);
        if (ec != std::errc() || ptr != spec.data() + eq || idx < 1 || idx > outcomes) {
            throw UsageError("pin index in '" + spec + "' must lie in 1.." + std::to_string(outcomes));
        }
        try {
            p.pins.push_back({idx - 1, GExpr::parse(std::string_view(spec).substr(eq + 1))});
        } catch (const ParseError& e) {
            throw UsageError("pin '" + spec + "': " + e.what());
        }
    }
    return p;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContextFileError& e) {
        err << "parse error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

std::string check_line(bool ok, const std::string& what, const std::string& detail) {
    return std::string(ok ? "ok    " : "FAIL  ") + what + (detail.empty() ? "" : ": " + detail);
}

}  // namespace

int cmd_validate(const InputOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ContextFile file = load(opts);
        bool ok = true;
        out << "dimension " << file.dim << ", outcomes " << file.outcomes.size() << ", g in ["
            << format_double(file.validity.lo) << ", " << format_double(file.validity.hi) << "]\n";

        // Completeness on the validity sample, reporting the first bad point.
        double worst = 0.0;
        std::string failure;
        for (double g : file.validity.sample(16)) {
            try {
                std::vector<CMatrix> ops;
                for (const auto& o : file.outcomes) ops.push_back(GMatrixFn(file.dim, o.entries, file.validity)(g));
                const double defect = completeness_defect(ops);
                worst = std::max(worst, defect);
                if (!(defect <= kCompletenessTol) && failure.empty()) {
                    failure = "defect " + format_double(defect) + " at g=" + format_double(g);
                }
            } catch (const Error& e) {
                if (failure.empty()) failure = e.what();
            }
        }
        ok = ok && failure.empty();
        out << check_line(failure.empty(), "completeness over 16 sampled g",
                          failure.empty() ? "max defect " + format_double(worst) : failure)
            << '\n';

        auto check = [&](const std::string& what, auto&& build) {
            try {
                build();
                out << check_line(true, what, "") << '\n';
            } catch (const Error& e) {
                ok = false;
                out << check_line(false, what, e.what()) << '\n';
            }
        };
        check("observable Hermitian", [&] { (void)file.make_observable(); });
        if (file.state) check("state Hermitian, positive, unit trace", [&] { (void)file.make_state(); });
        if (file.post) check("post-selection effect within [0, 1]", [&] { (void)file.make_post(); });
        out << "result: " << (ok ? "valid" : "invalid") << '\n';
        return ok ? kExitOk : kExitFailure;
    });
}

int cmd_solve(const SolveOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ContextFile file = load(opts.in);
        const Prescription presc = prescription(opts.method, opts.pins, static_cast<int>(file.outcomes.size()));
        const MeasurementContext ctx = file.context();
        const Observable obs = file.make_observable();
        const CalibrationMatrix cal = build_F(obs, ctx, opts.g);
        const ContextualValues cv = solve(cal, presc);
        out << "method: " << to_string(cv.method) << '\n';
        out << "g: " << format_double(opts.g) << '\n';
        for (int j = 0; j < cv.size(); ++j) {
            out << "alpha_" << ctx.labels()[static_cast<std::size_t>(j)] << ": " << format_double(cv.alphas(j))
                << '\n';
        }
        out << "residual: " << format_double(cv.residual) << '\n';
        out << "norm_sq: " << format_double(cv.norm_sq()) << '\n';
        const bool exact = satisfies_identity(cal, cv.alphas, cv.residual);
        if (!exact) out << "note: no exact solution; least-squares values shown\n";
        return exact ? kExitOk : kExitFailure;
    });
}

namespace {

struct SweepPoint {
    double g = 0.0;
    RVector alphas;
    ConditionedAverageResult avg;
    std::string status = "ok";
};

SweepPoint sweep_point(const MeasurementContext& ctx, const Observable& obs, const Prescription& presc,
                       const State& state, const PostSelection& post, double g) {
    SweepPoint p;
    p.g = g;
    try {
        const auto ops = ctx.operators_at(g);
        const ContextualValues cv = solve(build_F(obs, povm_from_operators(ops), g), presc);
        p.alphas = cv.alphas;
        p.avg = conditioned_average(ops, cv.alphas, state, post, g);
    } catch (const Error& e) {
        p.status = std::string("error: ") + e.what();
        for (char& c : p.status)
            if (c == ',') c = ';';
    }
    return p;
}

}  // namespace

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ContextFile file = load(opts.in);
        const int M = static_cast<int>(file.outcomes.size());
        const Prescription presc = prescription(opts.method, opts.pins, M);
        if (opts.points < 2 || !(opts.g_min > 0.0 && opts.g_max > opts.g_min)) {
            throw UsageError("sweep grid needs 0 < gmin < gmax and at least 2 points");
        }
        if (!file.state || !file.post) throw Error("sweep needs STATE and POST sections");
        const MeasurementContext ctx = file.context();
        const Observable obs = file.make_observable();
        const State state = *file.make_state();
        const PostSelection post = *file.make_post();
        const double weak = generalized_weak_value(obs, state, post).value;

        GridSpec spec{opts.g_max, opts.g_min, opts.points, opts.poly_order};
        std::vector<double> gs = spec.grid();
        std::reverse(gs.begin(), gs.end());  // ascending

        std::vector<std::future<SweepPoint>> futures;
        for (double g : gs) {
            futures.push_back(std::async(std::launch::async, sweep_point, std::cref(ctx), std::cref(obs),
                                         std::cref(presc), std::cref(state), std::cref(post), g));
        }

        out << "g";
        for (const auto& l : ctx.labels()) out << ",alpha_" << l;
        out << ",cond_avg";
        for (const auto& l : ctx.labels()) out << ",p_" << l << "_given_f";
        out << ",post_prob,weak_value,status\n";

        std::vector<double> ok_g;
        std::vector<double> ok_v;
        std::vector<double> ok_den;
        int failures = 0;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (auto& f : futures) {
            const SweepPoint p = f.get();
            const bool ok = p.status == "ok";
            out << format_double(p.g);
            for (int j = 0; j < M; ++j) out << ',' << format_double(ok ? p.alphas(j) : nan);
            out << ',' << format_double(ok ? p.avg.value : nan);
            for (int j = 0; j < M; ++j) {
                out << ',' << format_double(ok ? p.avg.cond_probs[static_cast<std::size_t>(j)] : nan);
            }
            out << ',' << format_double(ok ? p.avg.post_prob : nan) << ',' << format_double(weak) << ','
                << p.status << '\n';
            if (ok) {
                ok_g.push_back(p.g);
                ok_v.push_back(p.avg.value);
                ok_den.push_back(p.avg.post_prob);
            } else {
                ++failures;
            }
        }

        if (static_cast<int>(ok_g.size()) < opts.poly_order + 4) {
            out << "# summary: too few successful points (" << ok_g.size() << ") to extrapolate\n";
            return kExitFailure;
        }
        const LimitEstimate est = extrapolate(ok_g, ok_v, opts.poly_order);
        const double den = extrapolate(ok_g, ok_den, opts.poly_order).extrapolated_value;
        const double discrepancy = std::abs(est.extrapolated_value - weak);
        std::string verdict;
        if (!est.convergence_flag) {
            verdict = "divergent";
        } else if (discrepancy <= kWeakValueMatchTol) {
            verdict = "matches-weak-value";
        } else {
            verdict = "context-dependent";
        }
        out << "# summary: limit=" << format_double(est.extrapolated_value) << " weak_value=" << format_double(weak)
            << " discrepancy=" << format_double(discrepancy) << " converged=" << (est.convergence_flag ? "true" : "false")
            << " pole_order=" << est.pole_order << " denominator_limit=" << format_double(den)
            << " failed_points=" << failures << " verdict=" << verdict << '\n';
        return failures == 0 ? kExitOk : kExitFailure;
    });
}

int cmd_audit(const InputOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ContextFile file = load(opts);
        const MeasurementContext ctx = file.context();
        const Observable obs = file.make_observable();
        const State state = file.state ? *file.make_state() : State::maximally_mixed(file.dim);
        if (!file.state) out << "note: no STATE section; auditing against the maximally mixed state\n";
        const AuditReport r = audit(ctx, obs, state);

        auto row = [&](const char* name, const ConditionVerdict& c) {
            out << std::left << std::setw(30) << name << std::setw(11) << to_string(c.verdict) << c.evidence << '\n';
        };
        row("(i) analytic", r.cond_i_analytic);
        row("(ii) minimal disturbance", r.cond_ii_min_disturbance);
        row("(iii) pseudoinverse identity", r.cond_iii_identity);
        row("(iv) minimal order", r.cond_iv_order);
        row("(v) compatibility", r.cond_v_compat);
        if (r.order) {
            out << "minimal order n: " << r.order->n << '\n';
            out << "solvability residual: " << format_double(r.order->residual_at_order_n) << '\n';
        } else if (r.g_independent) {
            out << "minimal order n: undefined (g-independent context)\n";
        } else {
            out << "minimal order n: unavailable\n";
        }
        out << "overall: " << (r.overall ? "pass" : "fail") << '\n';
        return r.overall ? kExitOk : kExitFailure;
    });
}

namespace {

RMatrix parse_obs_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::stringstream rs(text);
    std::string row;
    while (std::getline(rs, row, ';')) {
        std::vector<double> values;
        std::stringstream es(row);
        std::string entry;
        while (std::getline(es, entry, ',')) {
            try {
                const GExpr e = GExpr::parse(entry);
                if (e.depends_on_g()) throw UsageError("--obs-matrix entries must be constants");
                values.push_back(e.eval(0.0));
            } catch (const ParseError& pe) {
                throw UsageError(std::string("--obs-matrix: ") + pe.what());
            }
        }
        rows.push_back(std::move(values));
    }
    const auto n = rows.size();
    RMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r].size() != n) throw UsageError("--obs-matrix must be square");
        for (std::size_t c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

}  // namespace

int cmd_scenario(const ScenarioOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto& names = scenario_names();
        if (std::find(names.begin(), names.end(), opts.name) == names.end()) {
            std::string list;
            for (const auto& n : names) list += "\n  " + n;
            throw UsageError("unknown scenario '" + opts.name + "'; available:" + list);
        }
        ScenarioParams params;
        params.obs_diag = opts.obs;
        if (opts.obs_matrix) {
            if (opts.name != "projective") throw UsageError("--obs-matrix applies to the projective scenario only");
            params.obs_matrix = parse_obs_matrix(*opts.obs_matrix);
        }
        ContextFile file;
        try {
            file = scenario(opts.name, params);
        } catch (const DimensionMismatch& e) {
            throw UsageError(e.what());
        }
        out << write_context(file);
        return kExitOk;
    });
}

}  // namespace ctxval::cli
