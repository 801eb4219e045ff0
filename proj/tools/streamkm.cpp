// streamkm: batch front door for streaming k-means runs and lemma-level
// diagnostics. Subcommands: run, check-gradient, check-bounds, concentration,
// sweep, plot. Exit codes: 0 pass, 1 usage/config, 2 contract violation,
// 3 internal error.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "streamkmeans/analysis.hpp"
#include "streamkmeans/checks.hpp"
#include "streamkmeans/config.hpp"
#include "streamkmeans/engine.hpp"
#include "streamkmeans/plot.hpp"

namespace fs = std::filesystem;
using streamkm::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> stride;
    unsigned jobs = 0;
    bool force = false;
    int verbosity = 0;
};

// precedence: --seed flag > STREAMKMEANS_SEED env > config file
std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("STREAMKMEANS_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (...) {
        throw streamkm::config_error("STREAMKMEANS_SEED is not a valid u64");
    }
}

void apply_overrides(streamkm::RunConfig& cfg, const CommonOpts& opt) {
    if (opt.seed)
        cfg.seed = *opt.seed;
    else if (auto es = env_seed())
        cfg.seed = *es;
    if (opt.stride) cfg.stride = *opt.stride;
}

void prepare_out_dir(const std::string& dir, bool force,
                     const std::vector<std::string>& products) {
    fs::create_directories(dir);
    if (force) return;
    for (const auto& p : products)
        if (fs::exists(fs::path(dir) / p))
            throw streamkm::config_error("output '" + p + "' already exists in " + dir +
                                         "; pass --force to overwrite");
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw streamkm::config_error("cannot write " + p.string());
    out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

int run_outcome(const streamkm::Trace& trace) {
    if (trace.error) {
        std::cerr << "contract violation: " << *trace.error << "\n";
        return 2;
    }
    return 0;
}

// ---- run ---------------------------------------------------------------------

int cmd_run(const CommonOpts& opt) {
    auto cfg = streamkm::load_run_config(opt.config_path);
    apply_overrides(cfg, opt);
    prepare_out_dir(opt.out_dir, opt.force, {"trace.csv", "summary.json"});
    auto trace = streamkm::run(cfg);
    std::ostringstream csv;
    streamkm::write_trace_csv(trace, csv);
    write_text(fs::path(opt.out_dir) / "trace.csv", csv.str());
    write_json(fs::path(opt.out_dir) / "summary.json", streamkm::summary_json(cfg, trace));
    if (opt.verbosity > 0) {
        std::cout << "steps=" << trace.n_steps
                  << " final_cost=" << trace.rows.back().f << "\n";
    }
    return run_outcome(trace);
}

// ---- check-gradient ------------------------------------------------------------

int cmd_check_gradient(const CommonOpts& opt, int probes, double h, double tol) {
    prepare_out_dir(opt.out_dir, opt.force, {"report.json", "gradient_check.csv"});
    const std::uint64_t seed = opt.seed.value_or(env_seed().value_or(20240801));
    const auto rep = streamkm::gradient_check_suite(probes, h, tol, seed);
    json j;
    j["schema_version"] = 1;
    j["check"] = "gradient";
    j["probes"] = rep.probes;
    j["h"] = rep.h;
    j["tolerance"] = rep.tolerance;
    j["max_error"] = rep.max_error;
    j["failures"] = rep.failures;
    j["worst"] = rep.worst;
    j["pass"] = rep.failures == 0;
    write_json(fs::path(opt.out_dir) / "report.json", j);
    std::ostringstream csv;
    csv << "check,probes,max_error,failures\n";
    csv << "gradient," << rep.probes << ',' << streamkm::format_double(rep.max_error)
        << ',' << rep.failures << "\n";
    write_text(fs::path(opt.out_dir) / "gradient_check.csv", csv.str());
    std::cout << (rep.failures == 0 ? "PASS" : "FAIL") << " gradient check: max error "
              << rep.max_error << " over " << rep.probes << " probes\n";
    return rep.failures == 0 ? 0 : 2;
}

// ---- check-bounds ---------------------------------------------------------------

int cmd_check_bounds(const CommonOpts& opt) {
    prepare_out_dir(opt.out_dir, opt.force, {"report.json", "bounds_check.csv"});
    const std::uint64_t seed = opt.seed.value_or(env_seed().value_or(20240801));
    json j;
    j["schema_version"] = 1;
    j["check"] = "bounds";
    std::ostringstream csv;
    csv << "table,r,checked,violations,note\n";
    bool all_pass = true;

    // horizon-function bounds, strict form and integer-corrected form
    json horizons = json::array();
    for (const double r : {0.1, std::log(2.0)}) {
        const auto sweep = streamkm::horizon_bounds_sweep(r, 2, 10000);
        json h;
        h["r"] = r;
        h["checked"] = sweep.checked;
        h["lower_violations_strict"] = sweep.lower_violations;
        h["upper_violations"] = sweep.upper_violations;
        h["lower_violations_corrected"] = sweep.corrected_violations;
        if (!sweep.first_lower_violation.empty())
            h["first_lower_violation"] = sweep.first_lower_violation;
        horizons.push_back(h);
        csv << "horizon_strict," << r << ',' << sweep.checked << ','
            << sweep.lower_violations + sweep.upper_violations << ",strict lower bound\n";
        csv << "horizon_corrected," << r << ',' << sweep.checked << ','
            << sweep.corrected_violations + sweep.upper_violations << ",alpha(m-1)-1 < T-m\n";
        all_pass = all_pass && sweep.lower_violations == 0 && sweep.upper_violations == 0;
    }
    j["horizon"] = horizons;

    const auto harm = streamkm::harmonic_sweep(2, 1000);
    j["harmonic"] = {{"checked", harm.checked}, {"violations", harm.violations}};
    csv << "harmonic,," << harm.checked << ',' << harm.violations << ",\n";
    all_pass = all_pass && harm.violations == 0;

    // displacement + accumulated-rate checks on a fresh generalized run
    streamkm::RunConfig cfg(streamkm::uniform01());
    cfg.k = 2;
    cfg.schedule = streamkm::generalized_schedule();
    cfg.n_max = 100000;
    cfg.seed = seed;
    cfg.stride = 100;
    cfg.keep_kinematics = true;
    const auto trace = streamkm::run(cfg);
    streamkm::Rng pair_rng(seed, 77);
    const auto disp = streamkm::displacement_check(trace, 100, pair_rng);
    j["displacement"] = {{"pairs", disp.pairs},
                         {"violations", disp.violations},
                         {"worst_margin", disp.worst_margin}};
    csv << "displacement,," << disp.pairs << ',' << disp.violations << ",\n";
    all_pass = all_pass && disp.violations == 0;

    json rate_checks = json::array();
    std::uint64_t rate_violations = 0, rate_checked = 0;
    for (std::uint64_t n = 1000; n <= cfg.n_max; n = n * 3 / 2) {
        const auto chk = streamkm::accumulated_rate_bound_check(trace, cfg.schedule, n);
        json c;
        c["n"] = chk.n;
        c["qualifying"] = chk.qualifying;
        if (!chk.qualifying) c["skip_reason"] = chk.skip_reason;
        c["observed"] = chk.observed;
        c["bound"] = chk.bound;
        c["margin"] = chk.margin;
        rate_checks.push_back(c);
        if (chk.qualifying) {
            ++rate_checked;
            if (chk.margin < -1e-12) ++rate_violations;
        }
    }
    j["accumulated_rate"] = rate_checks;
    csv << "accumulated_rate,," << rate_checked << ',' << rate_violations << ",\n";
    all_pass = all_pass && rate_violations == 0;

    j["pass"] = all_pass;
    write_json(fs::path(opt.out_dir) / "report.json", j);
    write_text(fs::path(opt.out_dir) / "bounds_check.csv", csv.str());
    std::cout << (all_pass ? "PASS" : "FAIL")
              << " bounds checks (see report.json; the strict horizon lower bound "
                 "fails at integer granularity for small r)\n";
    return all_pass ? 0 : 2;
}

// ---- concentration ---------------------------------------------------------------

int cmd_concentration(const CommonOpts& opt, int runs) {
    prepare_out_dir(opt.out_dir, opt.force, {"report.json", "concentration.csv"});
    const std::uint64_t seed = opt.seed.value_or(env_seed().value_or(20240801));

    streamkm::RunConfig base = opt.config_path.empty()
                                   ? [] {
                                         streamkm::RunConfig c(streamkm::uniform01());
                                         c.k = 2;
                                         c.schedule = streamkm::generalized_schedule();
                                         c.n_max = 100000;
                                         return c;
                                     }()
                                   : streamkm::load_run_config(opt.config_path);

    // log-spaced checkpoints in [1e3, n_max]
    std::vector<std::uint64_t> cps;
    for (double x = 1000; x < double(base.n_max); x *= 3.1622776601683795)
        cps.push_back(std::uint64_t(x));
    cps.push_back(base.n_max);

    streamkm::AnalysisConfig acfg;
    acfg.k = base.k;
    acfg.R = base.distribution.support_radius();
    acfg.concentration_runs = runs;

    // a short pilot run backs the derived defaults: L is estimated by
    // probing at a sample of its trace states, and epsilon0 defaults to 10x
    // its final gradient norm
    {
        streamkm::RunConfig pilot = base;
        pilot.n_max = std::min<std::uint64_t>(base.n_max, 20000);
        pilot.seed = seed;
        pilot.stride = std::max<std::uint64_t>(pilot.n_max / 20, 1);
        const auto ptrace = streamkm::run(pilot);
        streamkm::Rng lrng(seed, 5);
        acfg.L = std::max(
            streamkm::estimate_lipschitz_from_trace(base.distribution, ptrace, lrng),
            0.5);
        double g2 = 0.0;
        for (const double gn : ptrace.rows.back().gradnorm) g2 += gn * gn;
        acfg.epsilon0 = std::max(10.0 * std::sqrt(g2), 10.0 * acfg.epsilon);
    }

    const auto rep = streamkm::concentration_experiment(base, cps, acfg, seed, opt.jobs);

    json j;
    j["schema_version"] = 1;
    j["check"] = "concentration";
    j["runs"] = runs;
    j["L_estimate"] = rep.L_estimate;
    j["c"] = rep.c;
    j["epsilon"] = acfg.epsilon;
    j["epsilon0"] = acfg.epsilon0;
    if (rep.first_qualifying_n)
        j["first_qualifying_n"] = *rep.first_qualifying_n;
    json arr = json::array();
    std::ostringstream csv;
    csv << "n,s_n,t_n0,a_n,qualifying,failures,runs,failure_rate,allowed,max_deviation,pass\n";
    for (const auto& cp : rep.checkpoints) {
        json c;
        c["n"] = cp.n;
        c["s_n"] = cp.s_n;
        c["t_n0"] = cp.t_n0;
        c["a_n"] = cp.a_n;
        c["qualifying"] = cp.qualifying;
        c["failures"] = cp.failures;
        c["failure_rate"] = cp.failure_rate;
        c["allowed"] = cp.allowed;
        c["max_deviation"] = cp.max_deviation;
        c["pass"] = cp.pass;
        arr.push_back(c);
        csv << cp.n << ',' << cp.s_n << ',' << cp.t_n0 << ','
            << streamkm::format_double(cp.a_n) << ',' << (cp.qualifying ? 1 : 0) << ','
            << cp.failures << ',' << cp.runs << ','
            << streamkm::format_double(cp.failure_rate) << ','
            << streamkm::format_double(cp.allowed) << ','
            << streamkm::format_double(cp.max_deviation) << ',' << (cp.pass ? 1 : 0)
            << "\n";
    }
    j["checkpoints"] = arr;
    j["pass"] = rep.all_pass;
    write_json(fs::path(opt.out_dir) / "report.json", j);
    write_text(fs::path(opt.out_dir) / "concentration.csv", csv.str());
    std::cout << (rep.all_pass ? "PASS" : "FAIL") << " concentration experiment over "
              << runs << " runs\n";
    if (rep.first_qualifying_n)
        std::cout << "note: no checkpoint satisfies condition (a); first qualifying n ~ "
                  << *rep.first_qualifying_n << "\n";
    return rep.all_pass ? 0 : 2;
}

// ---- sweep -----------------------------------------------------------------------

int cmd_sweep(const CommonOpts& opt) {
    std::ifstream in(opt.config_path);
    if (!in) throw streamkm::config_error("cannot open sweep config " + opt.config_path);
    json sj;
    try {
        in >> sj;
    } catch (const json::exception& e) {
        throw streamkm::config_error(std::string("sweep config parse error: ") + e.what());
    }
    if (!sj.contains("schema_version") || sj["schema_version"].get<int>() != 1)
        throw streamkm::config_error("sweep config: schema_version 1 required");

    std::vector<json> run_specs;
    if (sj.contains("configs")) {
        for (const auto& c : sj["configs"]) run_specs.push_back(c);
    } else if (sj.contains("base") && sj.contains("seeds")) {
        for (const auto& s : sj["seeds"]) {
            json c = sj["base"];
            c["seed"] = s.get<std::uint64_t>();
            run_specs.push_back(c);
        }
    } else {
        throw streamkm::config_error("sweep config: need 'configs' or 'base'+'seeds'");
    }
    prepare_out_dir(opt.out_dir, opt.force, {"report.json"});

    const unsigned jobs = opt.jobs
                              ? opt.jobs
                              : std::max(1u, std::thread::hardware_concurrency());
    std::vector<json> summaries(run_specs.size());
    std::vector<int> codes(run_specs.size(), 0);
    std::atomic<std::size_t> cursor{0};
    std::mutex io_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = cursor.fetch_add(1)) < run_specs.size();) {
            try {
                auto cfg = streamkm::parse_run_config(run_specs[i]);
                if (opt.seed) cfg.seed = *opt.seed + i;
                if (opt.stride) cfg.stride = *opt.stride;
                const fs::path dir = fs::path(opt.out_dir) / ("run_" + std::to_string(i));
                {
                    std::lock_guard<std::mutex> lk(io_mutex);
                    fs::create_directories(dir);
                }
                auto trace = streamkm::run(cfg);
                std::ostringstream csv;
                streamkm::write_trace_csv(trace, csv);
                write_text(dir / "trace.csv", csv.str());
                const json summary = streamkm::summary_json(cfg, trace);
                write_json(dir / "summary.json", summary);
                summaries[i] = summary;
                codes[i] = trace.error ? 2 : 0;
            } catch (const streamkm::config_error& e) {
                summaries[i] = {{"error", e.what()}};
                codes[i] = 1;
            } catch (const std::exception& e) {
                summaries[i] = {{"error", e.what()}};
                codes[i] = 3;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, run_specs.size()); ++t)
        pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    json rep;
    rep["schema_version"] = 1;
    rep["runs"] = json::array();
    int exit_code = 0;
    for (std::size_t i = 0; i < run_specs.size(); ++i) { // aggregation in config order
        json r;
        r["index"] = i;
        r["exit_code"] = codes[i];
        r["summary"] = summaries[i];
        rep["runs"].push_back(r);
        exit_code = std::max(exit_code, codes[i]);
    }
    write_json(fs::path(opt.out_dir) / "report.json", rep);
    std::cout << "sweep: " << run_specs.size() << " runs, worst exit code " << exit_code
              << "\n";
    return exit_code;
}

// ---- plot ------------------------------------------------------------------------

struct ParsedTrace {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return int(i);
        return -1;
    }
};

ParsedTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw streamkm::config_error("cannot open trace " + path);
    ParsedTrace t;
    std::string line;
    if (!std::getline(in, line)) throw streamkm::input_error("plot: no rows");
    std::stringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) t.header.push_back(tok);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, tok, ',')) row.push_back(std::strtod(tok.c_str(), nullptr));
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) throw streamkm::input_error("plot: no rows");
    return t;
}

int cmd_plot(const CommonOpts& opt, const std::string& trace_path, double alpha) {
    prepare_out_dir(opt.out_dir, opt.force, {"trajectories.svg", "estimator.svg"});
    const auto t = read_trace_csv(trace_path);
    const int n_col = t.col("n"), f_col = t.col("f");
    if (n_col < 0 || f_col < 0) throw streamkm::input_error("plot: not a trace CSV");
    int k = 0;
    while (t.col("gradnorm_" + std::to_string(k)) >= 0) ++k;

    // provenance: summary.json next to the trace, when present
    std::string meta = "trace=" + fs::path(trace_path).filename().string();
    const fs::path sj = fs::path(trace_path).parent_path() / "summary.json";
    if (fs::exists(sj)) {
        std::ifstream sin(sj);
        std::stringstream buf;
        buf << sin.rdbuf();
        meta += " config_hash=" + std::to_string(streamkm::fnv1a64(buf.str()));
        try {
            json parsed = json::parse(buf.str());
            meta += " seed=" + std::to_string(parsed.value("seed", std::uint64_t(0)));
        } catch (...) {
        }
    }

    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b"};
    {
        streamkm::SvgPlot plot("cost and gradient norms", true, true);
        plot.set_metadata(meta);
        streamkm::PlotSeries cost{"f", "#000000", {}, {}};
        for (const auto& row : t.rows) {
            if (row[n_col] < 1) continue;
            cost.x.push_back(row[n_col]);
            cost.y.push_back(row[f_col]);
        }
        plot.add_series(std::move(cost));
        for (int i = 0; i < k; ++i) {
            const int c = t.col("gradnorm_" + std::to_string(i));
            streamkm::PlotSeries s{"||grad_" + std::to_string(i) + "||",
                                   palette[i % 6], {}, {}};
            for (const auto& row : t.rows) {
                if (row[n_col] < 1) continue;
                s.x.push_back(row[n_col]);
                s.y.push_back(std::max(row[c], 1e-12));
            }
            plot.add_series(std::move(s));
        }
        std::ostringstream svg;
        plot.render(svg);
        write_text(fs::path(opt.out_dir) / "trajectories.svg", svg.str());
    }
    {
        streamkm::SvgPlot plot("windowed mass estimator", true, false);
        plot.set_metadata(meta);
        for (int i = 0; i < k; ++i) {
            const int c = t.col("Phat_" + std::to_string(i));
            if (c < 0) continue;
            streamkm::PlotSeries s{"Phat_" + std::to_string(i), palette[i % 6], {}, {}};
            streamkm::PlotBand b{"", palette[i % 6], {}, {}, {}};
            for (const auto& row : t.rows) {
                const double n = row[n_col];
                if (n < 1) continue;
                const double p = row[c];
                const double s_n =
                    std::min(n, std::ceil(std::pow(n, alpha))); // band width via window length
                const double se = std::sqrt(std::max(p * (1 - p), 0.0) / std::max(s_n, 1.0));
                s.x.push_back(n);
                s.y.push_back(p);
                b.x.push_back(n);
                b.lo.push_back(std::max(0.0, p - se));
                b.hi.push_back(std::min(1.0, p + se));
            }
            plot.add_band(std::move(b));
            plot.add_series(std::move(s));
        }
        std::ostringstream svg;
        plot.render(svg);
        write_text(fs::path(opt.out_dir) / "estimator.svg", svg.str());
    }
    std::cout << "wrote trajectories.svg and estimator.svg\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming k-means laboratory"};
    app.require_subcommand(1);

    CommonOpts opt;
    int probes = 200;
    double fd_h = 1e-5, fd_tol = 1e-5;
    int conc_runs = 200;
    std::string trace_path;
    double plot_alpha = 0.7;

    auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_out) {
        auto* c = sub->add_option("--config", opt.config_path, "config file (JSON)");
        if (needs_config) c->required();
        auto* o = sub->add_option("--out", opt.out_dir, "output directory");
        if (needs_out) o->required();
        sub->add_option("--seed", opt.seed, "seed override (flag > env > config)");
        sub->add_option("--stride", opt.stride, "trace stride override");
        sub->add_option("--jobs", opt.jobs, "max concurrent runs");
        sub->add_flag("--force", opt.force, "overwrite existing outputs");
        sub->add_flag("-v,--verbose", opt.verbosity, "verbose output");
    };

    auto* run_cmd = app.add_subcommand("run", "execute one streaming run");
    add_common(run_cmd, true, true);
    auto* cg = app.add_subcommand("check-gradient", "gradient vs finite differences");
    add_common(cg, false, true);
    cg->add_option("--probes", probes, "number of random probes");
    cg->add_option("--fd-step", fd_h, "finite-difference step");
    cg->add_option("--tol", fd_tol, "max coordinate error");
    auto* cb = app.add_subcommand("check-bounds",
                                  "horizon, harmonic, displacement and rate bounds");
    add_common(cb, false, true);
    auto* cc = app.add_subcommand("concentration", "estimator concentration experiment");
    add_common(cc, false, true);
    cc->add_option("--runs", conc_runs, "number of seeded runs");
    auto* sw = app.add_subcommand("sweep", "run a batch of configurations");
    add_common(sw, true, true);
    auto* pl = app.add_subcommand("plot", "render SVG plots from a trace");
    add_common(pl, false, true);
    pl->add_option("--trace", trace_path, "trace.csv path")->required();
    pl->add_option("--alpha", plot_alpha, "window exponent for estimator bands");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1; // usage errors map to 1, --help to 0
    }

    try {
        if (run_cmd->parsed()) return cmd_run(opt);
        if (cg->parsed()) return cmd_check_gradient(opt, probes, fd_h, fd_tol);
        if (cb->parsed()) return cmd_check_bounds(opt);
        if (cc->parsed()) return cmd_concentration(opt, conc_runs);
        if (sw->parsed()) return cmd_sweep(opt);
        if (pl->parsed()) return cmd_plot(opt, trace_path, plot_alpha);
    } catch (const streamkm::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const streamkm::input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const streamkm::contract_error& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
