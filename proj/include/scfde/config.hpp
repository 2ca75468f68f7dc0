#pragma once

#include <vector>

namespace scfde {

// Link dimensions and physical constants shared by all modules.
//
//   n_streams <= min(n_tx, n_rx); cp_len >= cir_len; block_len >= cir_len.
struct SystemConfig {
    int n_tx = 2;
    int n_rx = 2;
    int n_streams = 2;
    int block_len = 64;  // symbols per block (FFT size)
    int cir_len = 16;    // channel impulse response taps
    int cp_len = 16;     // cyclic prefix length, in vector symbols
    double sigma_s2 = 1.0;
    double sigma_n2 = 1.0;
    double power_budget = 128.0;

    // Throws std::invalid_argument listing every violated constraint.
    void validate() const;

    double snr_linear() const {
        return sigma_s2 * power_budget / (n_streams * block_len * sigma_n2);
    }

    // Same link with sigma_n2 chosen so that
    // snr = sigma_s2 * power_budget / (n_streams * block_len * sigma_n2).
    SystemConfig at_snr_db(double snr_db) const;
};

// Exponentially decaying tap powers, normalized to unit total energy.
struct PowerDelayProfile {
    double decay = 2.0;  // time constant, in taps
    int length = 16;

    void validate() const;

    // p[l] proportional to exp(-l / decay), sum p[l] = 1.
    std::vector<double> weights() const;
};

// Numerical knobs for the power-allocation solver.
struct SolverConfig {
    double step0 = 0.1;  // subgradient step scale, relative to the initial multiplier
    int max_outer_iters = 600;
    int max_inner_iters = 200;
    double power_tol = 1e-9;       // |sum P - P_T| / P_T at termination
    double fixedpoint_tol = 1e-13; // inner stream-MSE bisection width, relative to sigma_s2
    int refine_iters = 200;        // primal polish budget after dual ascent

    void validate() const;
};

}  // namespace scfde
