#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scfde/config.hpp"
#include "scfde/simulator.hpp"

namespace scfde {

inline constexpr const char* kVersion = "0.1.0";

// A complete, reproducible experiment description. Omitted fields take the
// reference defaults: N_c = 64, L = K = 16, M = N_t = N_r = 2, decay 2,
// sigma_s2 = 1, P_T = M * N_c, and all seven criteria plus the EPA baseline.
struct ExperimentSpec {
    SystemConfig system;
    PowerDelayProfile pdp;
    SolverConfig solver;
    std::vector<std::string> criteria;  // scheme names; "EPA" selects the baseline
    double aber_alpha = 1.0;
    double aber_beta = 1.0;
    std::vector<double> snrs_db;
    int n_channels = 200;
    int blocks_per_channel = 50;
    int n_threads = 0;
    int trace_channels = 1;
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    void validate() const;
    std::vector<Scheme> schemes() const;
};

ExperimentSpec default_spec();

// Reads a JSON experiment file; an empty file or empty object yields the
// default spec. Throws std::invalid_argument with field-level diagnostics.
ExperimentSpec parse_spec(const std::string& path);
ExperimentSpec parse_spec_text(const std::string& text);

// Canonical JSON form; parse(serialize(s)) == s.
std::string serialize_spec(const ExperimentSpec& spec);

// Runs the sweep and writes ber.csv, abr.csv, solver_trace.json and
// manifest.json under spec.output_dir. Returns 0 on success; on failure a
// machine-readable JSON error report goes to `error_out` and the exit status
// is nonzero. Channels dropped for solver failures beyond
// max_excluded_fraction make the run fail.
int run_experiment(const ExperimentSpec& spec, std::string* error_out = nullptr,
                   double max_excluded_fraction = 0.01);

}  // namespace scfde
