#pragma once

#include <Eigen/Dense>
#include <vector>

#include "scfde/allocation.hpp"
#include "scfde/channel.hpp"
#include "scfde/config.hpp"

namespace scfde {

// Per-subcarrier precoders P_k (n_tx x M). Beamformers produced by the
// optimizer carry the SVD structure P_k = Vbar_k diag(sqrt(P_km)) V0; for
// those, `structured` is set and `gains` holds the retained channel gains so
// the stream MSEs can be evaluated on the diagonalized form.
struct BeamformerSet {
    std::vector<Eigen::MatrixXcd> precoders;
    Eigen::MatrixXcd rotation;  // V0, M x M unitary
    PowerAllocation allocation;
    Eigen::MatrixXd gains;  // N_c x M, only meaningful when structured
    bool structured = false;

    int n_subcarriers() const { return static_cast<int>(precoders.size()); }
    int n_streams() const {
        return precoders.empty() ? 0 : static_cast<int>(precoders.front().cols());
    }
    double total_power() const;
};

// Per-subcarrier MMSE filters W_k (M x n_rx).
struct EqualizerSet {
    std::vector<Eigen::MatrixXcd> filters;

    int n_subcarriers() const { return static_cast<int>(filters.size()); }
};

// Time-domain per-stream mean square errors, each in (0, sigma_s2].
struct StreamMse {
    Eigen::VectorXd values;
    double sigma_s2 = 1.0;

    Eigen::VectorXd normalized() const { return values / sigma_s2; }
};

// Psi_k = (sigma_s2/sigma_n2) P_k^H H_k^H H_k P_k + I, Hermitian with
// eigenvalues >= 1, hence always Cholesky-invertible.
Eigen::MatrixXcd psi_k(const Eigen::MatrixXcd& h_fk, const Eigen::MatrixXcd& p_k,
                       const SystemConfig& cfg);

// W_k = (sigma_s2/sigma_n2) Psi_k^{-1} P_k^H H_k^H, the linear filter
// minimizing the summed stream MSEs for the given beamformer.
EqualizerSet mmse_filter(const FrequencyDomainChannel& fd, const BeamformerSet& bf,
                         const SystemConfig& cfg);

// Diagonal of E_hat = (sigma_s2 / N_c) sum_k Psi_k^{-1}. Structured
// beamformers use the scalar form Psi_km = (sigma_s2/sigma_n2) P_km H_km + 1
// rotated by V0; the general matrix path handles arbitrary precoders.
StreamMse stream_mse(const FrequencyDomainChannel& fd, const BeamformerSet& bf,
                     const SystemConfig& cfg);

// MSE matrix of an arbitrary (not necessarily MMSE) per-subcarrier filter:
// (1/N_c) sum_k [ sigma_s2 (W_k H_k P_k - I)(..)^H + sigma_n2 W_k W_k^H ].
Eigen::MatrixXcd mse_matrix_for_filter(const FrequencyDomainChannel& fd,
                                       const BeamformerSet& bf, const EqualizerSet& eq,
                                       const SystemConfig& cfg);

// Full time-domain MSE matrix built from the dense block matrices (block DFTs,
// block-circulant channel, block-diagonal precoder/filter). Dense test oracle;
// limited to block_len <= kDenseMseLimit.
inline constexpr int kDenseMseLimit = 32;
Eigen::MatrixXcd dense_mse_matrix(const TimeDomainChannel& ch, const BeamformerSet& bf,
                                  const EqualizerSet& eq, const SystemConfig& cfg);

}  // namespace scfde
