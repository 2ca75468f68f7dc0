#include "scfde/experiment.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scfde {
namespace {

using nlohmann::json;

// Fixed-precision decimal text keeps the CSV byte-reproducible across runs.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void check_unknown_keys(const json& j, std::initializer_list<const char*> known,
                        const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw std::invalid_argument("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("field \"") + key + "\": " + e.what());
    }
}

}  // namespace

void ExperimentSpec::validate() const {
    system.validate();
    pdp.validate();
    solver.validate();
    if (pdp.length != system.cir_len)
        throw std::invalid_argument("ExperimentSpec: pdp.length must equal system.cir_len");
    if (criteria.empty()) throw std::invalid_argument("ExperimentSpec: criteria list is empty");
    if (snrs_db.empty()) throw std::invalid_argument("ExperimentSpec: snrs_db list is empty");
    if (n_channels < 1) throw std::invalid_argument("ExperimentSpec: n_channels must be >= 1");
    if (blocks_per_channel < 1)
        throw std::invalid_argument("ExperimentSpec: blocks_per_channel must be >= 1");
    if (n_threads < 0) throw std::invalid_argument("ExperimentSpec: n_threads must be >= 0");
    if (trace_channels < 0)
        throw std::invalid_argument("ExperimentSpec: trace_channels must be >= 0");
    if (!(aber_alpha > 0.0) || !(aber_beta > 0.0))
        throw std::invalid_argument("ExperimentSpec: aber_alpha/aber_beta must be > 0");
    for (const std::string& name : criteria)
        if (name != "EPA") Criterion::parse(name);  // throws on unknown names
}

std::vector<Scheme> ExperimentSpec::schemes() const {
    std::vector<Scheme> out;
    out.reserve(criteria.size());
    for (const std::string& name : criteria) {
        if (name == "EPA")
            out.push_back(Scheme::epa());
        else
            out.push_back(Scheme::for_criterion(Criterion::parse(name, aber_alpha, aber_beta)));
    }
    return out;
}

ExperimentSpec default_spec() {
    ExperimentSpec s;
    s.system = SystemConfig{};  // N_c = 64, L = K = 16, 2x2, two streams
    s.system.power_budget = static_cast<double>(s.system.n_streams) * s.system.block_len;
    s.pdp = PowerDelayProfile{};
    s.criteria = {"EPA", "AMSE", "GMSE", "maxMSE", "ASINR", "GSINR", "HSINR", "ABER"};
    s.snrs_db = {0, 2, 4, 6, 8, 10, 12};
    return s;
}

ExperimentSpec parse_spec_text(const std::string& text) {
    ExperimentSpec spec = default_spec();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        spec.validate();
        return spec;
    }

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("spec parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("spec must be a JSON object");
    check_unknown_keys(j,
                       {"system", "pdp", "solver", "criteria", "aber_alpha", "aber_beta",
                        "snrs_db", "n_channels", "blocks_per_channel", "threads",
                        "trace_channels", "seed", "output_dir"},
                       "spec");

    bool power_budget_given = false;
    if (j.contains("system")) {
        const json& js = j.at("system");
        check_unknown_keys(js,
                           {"n_tx", "n_rx", "n_streams", "block_len", "cir_len", "cp_len",
                            "sigma_s2", "power_budget"},
                           "system");
        read_field(js, "n_tx", spec.system.n_tx);
        read_field(js, "n_rx", spec.system.n_rx);
        read_field(js, "n_streams", spec.system.n_streams);
        read_field(js, "block_len", spec.system.block_len);
        read_field(js, "cir_len", spec.system.cir_len);
        read_field(js, "cp_len", spec.system.cp_len);
        read_field(js, "sigma_s2", spec.system.sigma_s2);
        if (js.contains("power_budget")) {
            read_field(js, "power_budget", spec.system.power_budget);
            power_budget_given = true;
        }
        // Keep the dependent defaults in sync with overridden dimensions.
        if (!power_budget_given)
            spec.system.power_budget =
                static_cast<double>(spec.system.n_streams) * spec.system.block_len;
        if (!js.contains("cir_len") && js.contains("block_len"))
            spec.system.cir_len = std::min(spec.system.cir_len, spec.system.block_len);
        if (!js.contains("cp_len")) spec.system.cp_len = spec.system.cir_len;
        spec.pdp.length = spec.system.cir_len;
    }
    if (j.contains("pdp")) {
        const json& jp = j.at("pdp");
        check_unknown_keys(jp, {"decay", "length"}, "pdp");
        read_field(jp, "decay", spec.pdp.decay);
        spec.pdp.length = spec.system.cir_len;
        read_field(jp, "length", spec.pdp.length);
    }
    if (j.contains("solver")) {
        const json& jv = j.at("solver");
        check_unknown_keys(jv,
                           {"step0", "max_outer_iters", "max_inner_iters", "power_tol",
                            "fixedpoint_tol", "refine_iters"},
                           "solver");
        read_field(jv, "step0", spec.solver.step0);
        read_field(jv, "max_outer_iters", spec.solver.max_outer_iters);
        read_field(jv, "max_inner_iters", spec.solver.max_inner_iters);
        read_field(jv, "power_tol", spec.solver.power_tol);
        read_field(jv, "fixedpoint_tol", spec.solver.fixedpoint_tol);
        read_field(jv, "refine_iters", spec.solver.refine_iters);
    }
    read_field(j, "criteria", spec.criteria);
    read_field(j, "aber_alpha", spec.aber_alpha);
    read_field(j, "aber_beta", spec.aber_beta);
    read_field(j, "snrs_db", spec.snrs_db);
    read_field(j, "n_channels", spec.n_channels);
    read_field(j, "blocks_per_channel", spec.blocks_per_channel);
    read_field(j, "threads", spec.n_threads);
    read_field(j, "trace_channels", spec.trace_channels);
    read_field(j, "seed", spec.seed);
    read_field(j, "output_dir", spec.output_dir);

    spec.validate();
    return spec;
}

ExperimentSpec parse_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open spec file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec_text(buf.str());
}

std::string serialize_spec(const ExperimentSpec& spec) {
    json j;
    j["system"] = {{"n_tx", spec.system.n_tx},
                   {"n_rx", spec.system.n_rx},
                   {"n_streams", spec.system.n_streams},
                   {"block_len", spec.system.block_len},
                   {"cir_len", spec.system.cir_len},
                   {"cp_len", spec.system.cp_len},
                   {"sigma_s2", spec.system.sigma_s2},
                   {"power_budget", spec.system.power_budget}};
    j["pdp"] = {{"decay", spec.pdp.decay}, {"length", spec.pdp.length}};
    j["solver"] = {{"step0", spec.solver.step0},
                   {"max_outer_iters", spec.solver.max_outer_iters},
                   {"max_inner_iters", spec.solver.max_inner_iters},
                   {"power_tol", spec.solver.power_tol},
                   {"fixedpoint_tol", spec.solver.fixedpoint_tol},
                   {"refine_iters", spec.solver.refine_iters}};
    j["criteria"] = spec.criteria;
    j["aber_alpha"] = spec.aber_alpha;
    j["aber_beta"] = spec.aber_beta;
    j["snrs_db"] = spec.snrs_db;
    j["n_channels"] = spec.n_channels;
    j["blocks_per_channel"] = spec.blocks_per_channel;
    j["threads"] = spec.n_threads;
    j["trace_channels"] = spec.trace_channels;
    j["seed"] = spec.seed;
    j["output_dir"] = spec.output_dir;
    return j.dump(2) + "\n";
}

int run_experiment(const ExperimentSpec& spec, std::string* error_out,
                   double max_excluded_fraction) {
    auto report_error = [&](const std::string& type, const std::string& message) {
        json err;
        err["error"] = {{"type", type}, {"message", message}};
        if (error_out) *error_out = err.dump(2) + "\n";
        return 1;
    };

    MonteCarloReport report;
    try {
        spec.validate();
        std::filesystem::create_directories(spec.output_dir);

        SweepOptions opts;
        opts.n_channels = spec.n_channels;
        opts.blocks_per_channel = spec.blocks_per_channel;
        opts.n_threads = spec.n_threads;
        opts.trace_channels = spec.trace_channels;
        report = monte_carlo_sweep(spec.system, spec.pdp, spec.solver, spec.schemes(),
                                   spec.snrs_db, opts, spec.seed);
    } catch (const std::exception& e) {
        return report_error("run_failed", e.what());
    }

    const double excluded_fraction =
        static_cast<double>(report.excluded_channels.size()) / spec.n_channels;
    if (excluded_fraction > max_excluded_fraction)
        return report_error("excluded_budget",
                            std::to_string(report.excluded_channels.size()) +
                                " of " + std::to_string(spec.n_channels) +
                                " channels excluded for solver failures");

    try {
        const std::filesystem::path dir(spec.output_dir);
        {
            std::ofstream ber(dir / "ber.csv", std::ios::binary);
            ber << "snr_db,criterion,ber,ber_stderr,bits\n";
            for (const SweepPoint& p : report.points)
                ber << fmt(p.snr_db) << ',' << p.scheme << ',' << fmt(p.ber) << ','
                    << fmt(p.ber_stderr) << ',' << p.bits_counted << '\n';
        }
        {
            std::ofstream abr(dir / "abr.csv", std::ios::binary);
            abr << "snr_db,criterion,abr_bits_per_symbol\n";
            for (const SweepPoint& p : report.points)
                abr << fmt(p.snr_db) << ',' << p.scheme << ','
                    << fmt(p.abr_bits_per_symbol) << '\n';
        }
        {
            json traces = json::array();
            for (const SolverTraceRecord& t : report.traces) {
                json iterates = json::array();
                for (const DualIterate& it : t.iterates)
                    iterates.push_back({{"lambda", it.lambda},
                                        {"gap", it.gap},
                                        {"objective", it.objective}});
                traces.push_back({{"channel", t.channel},
                                  {"snr_db", t.snr_db},
                                  {"criterion", t.scheme},
                                  {"converged", t.converged},
                                  {"iterates", iterates}});
            }
            json root;
            root["traces"] = traces;
            root["excluded_channels"] = report.excluded_channels;
            std::ofstream out(dir / "solver_trace.json", std::ios::binary);
            out << root.dump(2) << '\n';
        }
        {
            json manifest;
            manifest["version"] = kVersion;
            manifest["seed"] = spec.seed;
            manifest["cp_overhead"] = report.cp_overhead;
            manifest["excluded_channels"] = report.excluded_channels;
            manifest["spec"] = json::parse(serialize_spec(spec));
            std::ofstream out(dir / "manifest.json", std::ios::binary);
            out << manifest.dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        return report_error("io_failed", e.what());
    }
    return 0;
}

}  // namespace scfde
