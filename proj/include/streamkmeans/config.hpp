#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "streamkmeans/analysis.hpp"
#include "streamkmeans/engine.hpp"

namespace streamkm {

using json = nlohmann::json;

inline Distribution parse_distribution(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "piecewise1d") {
        return Distribution(PiecewiseConstant1D(
            j.at("breakpoints").get<std::vector<double>>(),
            j.at("densities").get<std::vector<double>>()));
    }
    if (type == "gauss_mix") {
        return Distribution(TruncatedGaussianMixtureD(
            j.at("weights").get<std::vector<double>>(),
            j.at("means").get<std::vector<std::vector<double>>>(),
            j.at("sigmas").get<std::vector<double>>(),
            j.at("radius").get<double>()));
    }
    throw config_error("unknown distribution type '" + type + "'");
}

inline json distribution_to_json(const Distribution& dist) {
    json j;
    if (const auto* p = dist.exact1d()) {
        j["type"] = "piecewise1d";
        j["breakpoints"] = p->breakpoints();
        j["densities"] = p->densities();
    } else {
        j["type"] = "gauss_mix";
        j["radius"] = dist.support_radius();
        j["dimension"] = dist.dimension();
    }
    return j;
}

inline RateSchedule parse_schedule(const json& j) {
    RateSchedule s;
    s.policy = policy_from_name(j.at("policy").get<std::string>());
    if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) s.beta = j.at("beta").get<double>();
    if (j.contains("uniform_c")) s.uniform_c = j.at("uniform_c").get<double>();
    s.validate();
    return s;
}

inline RunConfig parse_run_config(const json& j) {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
        throw config_error("config: schema_version 1 required");
    RunConfig cfg(parse_distribution(j.at("distribution")));
    cfg.k = j.at("k").get<int>();
    if (cfg.k < 1) throw config_error("config: k must be >= 1");
    if (j.contains("init")) {
        const auto& init = j.at("init");
        const std::string mode = init.value("mode", "iid");
        if (mode == "explicit") {
            Centers w;
            if (init.contains("row")) {
                w = parse_centers_row(init.at("row").get<std::string>());
            } else {
                const auto pts = init.at("centers").get<std::vector<std::vector<double>>>();
                if (pts.empty()) throw config_error("config: empty explicit centers");
                w = Centers(int(pts.size()), int(pts[0].size()));
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    if (int(pts[i].size()) != w.d)
                        throw config_error("config: ragged explicit centers");
                    std::copy(pts[i].begin(), pts[i].end(), w.point(int(i)).begin());
                }
            }
            cfg.explicit_init = std::move(w);
        } else if (mode != "iid") {
            throw config_error("config: init.mode must be 'iid' or 'explicit'");
        }
    }
    cfg.schedule = parse_schedule(j.at("schedule"));
    cfg.n_max = j.at("n_max").get<std::uint64_t>();
    cfg.seed = j.value("seed", std::uint64_t(0));
    cfg.stride = j.value("stride", std::uint64_t(100));
    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        const std::string m = o.at("method").get<std::string>();
        if (m == "exact") {
            cfg.oracle.method = MomentOracle::Method::exact;
        } else if (m == "monte_carlo") {
            cfg.oracle.method = MomentOracle::Method::monte_carlo;
            cfg.oracle.samples = o.value("samples", std::uint64_t(200000));
        } else {
            throw config_error("config: oracle.method must be 'exact' or 'monte_carlo'");
        }
    } else if (!cfg.distribution.exact_capable()) {
        cfg.oracle.method = MomentOracle::Method::monte_carlo;
    }
    const std::string mode = j.value("mode", "single_center");
    if (mode == "single_center") cfg.mode = Mode::single_center;
    else if (mode == "all_cells") cfg.mode = Mode::all_cells;
    else throw config_error("config: mode must be 'single_center' or 'all_cells'");
    cfg.batch = j.value("batch", 1);
    return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["distribution"] = distribution_to_json(cfg.distribution);
    j["k"] = cfg.k;
    if (cfg.explicit_init)
        j["init"] = {{"mode", "explicit"}, {"row", format_centers_row(*cfg.explicit_init)}};
    else
        j["init"] = {{"mode", "iid"}};
    json s;
    s["policy"] = policy_name(cfg.schedule.policy);
    s["alpha"] = cfg.schedule.alpha;
    s["beta"] = cfg.schedule.beta;
    s["uniform_c"] = cfg.schedule.uniform_c;
    j["schedule"] = s;
    j["n_max"] = cfg.n_max;
    j["seed"] = cfg.seed;
    j["stride"] = cfg.stride;
    j["oracle"] =
        cfg.oracle.method == MomentOracle::Method::exact
            ? json{{"method", "exact"}}
            : json{{"method", "monte_carlo"}, {"samples", cfg.oracle.samples}};
    j["mode"] = cfg.mode == Mode::single_center ? "single_center" : "all_cells";
    j["batch"] = cfg.batch;
    return j;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config parse error in '" + path + "': " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const json::exception& e) {
        throw config_error("config schema error in '" + path + "': " + e.what());
    }
}

inline json summary_json(const RunConfig& cfg, const Trace& trace) {
    json j;
    j["schema_version"] = 1;
    j["config"] = run_config_to_json(cfg);
    j["seed"] = cfg.seed;
    j["n_steps"] = trace.n_steps;
    const auto& last = trace.rows.back();
    json fin;
    fin["cost"] = last.f;
    fin["gradnorm"] = last.gradnorm;
    fin["centers_row"] = format_centers_row(trace.final_centers);
    if (trace.k >= 2) fin["min_separation"] = min_separation(trace.final_centers).value;
    fin["sumH"] = last.sumH;
    fin["sumH2"] = last.sumH2;
    j["final"] = fin;
    json counters;
    counters["clamp_violations"] = trace.counters.clamp_violations;
    counters["degeneracy_redraws"] = trace.counters.degeneracy_redraws;
    counters["boundary_ties"] = trace.counters.boundary_ties;
    counters["zero_mass_cells"] = trace.counters.zero_mass_cells;
    j["counters"] = counters;
    if (trace.error) j["error"] = *trace.error;
    j["completed"] = !trace.error.has_value();
    return j;
}

} // namespace streamkm
