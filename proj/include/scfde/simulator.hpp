#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "scfde/channel.hpp"
#include "scfde/config.hpp"
#include "scfde/equalizer.hpp"
#include "scfde/optimizer.hpp"
#include "scfde/rng.hpp"

namespace scfde {

// One fully configured link: channel realization plus the transmit and
// receive processing designed for it at the given operating point.
struct LinkRealization {
    TimeDomainChannel channel;
    BeamformerSet beamformer;
    EqualizerSet equalizer;
    double snr_db = 0.0;
};

// Per-block simulation output. Bits are stream-major within each symbol
// period: (n, stream, I-rail then Q-rail).
struct BlockResult {
    std::vector<std::uint8_t> tx_bits;
    std::vector<std::uint8_t> rx_bits;
    Eigen::MatrixXcd tx_symbols;          // M x N_c, before precoding
    Eigen::MatrixXcd equalized;           // M x N_c, after the receive chain
    Eigen::VectorXd stream_error_energy;  // sum_n |yhat - s|^2 per stream
    int n_symbols = 0;                    // time symbols per stream
};

// Uniform P_T / (N_c M) allocation, the unoptimized baseline.
PowerAllocation epa_allocation(const SystemConfig& cfg);

// Transmit scheme to simulate: an optimized criterion or the EPA baseline.
struct Scheme {
    bool optimized = true;
    Criterion criterion;

    std::string label() const { return optimized ? criterion.name() : "EPA"; }
    static Scheme epa() { return Scheme{false, Criterion{}}; }
    static Scheme for_criterion(const Criterion& c) { return Scheme{true, c}; }
};

// Full waveform chain for one data block: Gray-QPSK symbols -> per-stream FFT
// -> per-subcarrier precoding -> per-antenna IFFT -> cyclic prefix -> tap
// convolution -> AWGN -> CP removal -> FFT -> MMSE FDE -> IFFT -> decisions.
// sigma_n2 is derived from snr_db via SNR = sigma_s2 P_T / (M N_c sigma_n2).
BlockResult run_block(const LinkRealization& link, const SystemConfig& cfg, Philox& rng);

// Ideal continuous-rate loading: sum_m log2(1 / e_m) bits per symbol period.
double achievable_bit_rate(const StreamMse& mse, const SystemConfig& cfg);

// Mean predicted bit error rate (1/M) sum_m alpha Q(sqrt(beta SINR_m)).
double theoretical_aber(const StreamMse& mse, const Criterion& c);

struct SweepPoint {
    double snr_db = 0.0;
    std::string scheme;
    double ber = 0.0;
    double ber_stderr = 0.0;
    double abr_bits_per_symbol = 0.0;
    long long trials = 0;       // simulated blocks
    long long bits_counted = 0;
    long long bit_errors = 0;
};

struct SolverTraceRecord {
    int channel = 0;
    double snr_db = 0.0;
    std::string scheme;
    std::vector<DualIterate> iterates;
    bool converged = false;
};

struct MonteCarloReport {
    std::vector<SweepPoint> points;        // snr-major, scheme order preserved
    std::vector<SolverTraceRecord> traces;
    std::vector<int> excluded_channels;    // solver failures, skipped entirely
    double cp_overhead = 0.0;              // K / N_c, reported, not charged
};

struct SweepOptions {
    int n_channels = 200;
    int blocks_per_channel = 50;
    int n_threads = 0;     // 0 = hardware concurrency
    int trace_channels = 1;
};

// Monte Carlo sweep over channels x SNR points x schemes. Channel draws,
// payload bits and noise come from substreams keyed by (seed, channel, block),
// so the report is bit-identical for a given seed regardless of threading,
// and all schemes see the same channels and noise (paired comparison).
MonteCarloReport monte_carlo_sweep(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                   const SolverConfig& sc, const std::vector<Scheme>& schemes,
                                   const std::vector<double>& snrs_db, const SweepOptions& opts,
                                   std::uint64_t seed);

}  // namespace scfde
