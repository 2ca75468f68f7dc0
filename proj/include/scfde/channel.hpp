#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "scfde/config.hpp"
#include "scfde/rng.hpp"

namespace scfde {

// L spatial tap matrices H_{t,l}, each n_rx x n_tx.
struct TimeDomainChannel {
    std::vector<Eigen::MatrixXcd> taps;

    int n_rx() const { return taps.empty() ? 0 : static_cast<int>(taps.front().rows()); }
    int n_tx() const { return taps.empty() ? 0 : static_cast<int>(taps.front().cols()); }
    int n_taps() const { return static_cast<int>(taps.size()); }
};

// Per-subcarrier channel matrices H_{f,k}, k = 0..N_c-1.
struct FrequencyDomainChannel {
    std::vector<Eigen::MatrixXcd> subcarriers;

    int n_subcarriers() const { return static_cast<int>(subcarriers.size()); }
    int n_rx() const {
        return subcarriers.empty() ? 0 : static_cast<int>(subcarriers.front().rows());
    }
    int n_tx() const {
        return subcarriers.empty() ? 0 : static_cast<int>(subcarriers.front().cols());
    }
};

// SVD of one subcarrier, singular values sorted ascending so that the
// strongest modes sit in the right-most columns of u and v. On rectangular
// channels the first |n_rx - n_tx| columns of the larger factor span the
// null space; singular column i pairs u column (n_rx - n_min + i) with
// v column (n_tx - n_min + i).
struct SubcarrierSvd {
    Eigen::MatrixXcd u;              // n_rx x n_rx unitary
    Eigen::MatrixXcd v;              // n_tx x n_tx unitary
    Eigen::VectorXd singular_values; // length min(n_rx, n_tx), ascending
};

// Cached decompositions plus the retained per-stream power gains
// gains(k, m) = (m-th largest singular value of H_{f,k})^2 in ascending order.
struct ChannelSvd {
    std::vector<SubcarrierSvd> subcarriers;
    Eigen::MatrixXd gains;  // N_c x M
    int n_streams = 0;

    int n_subcarriers() const { return static_cast<int>(subcarriers.size()); }
};

class RankDeficientChannel : public std::runtime_error {
public:
    RankDeficientChannel(int subcarrier, double ratio);
    int subcarrier() const { return subcarrier_; }

private:
    int subcarrier_;
};

// A subcarrier counts as rank deficient below m when sigma_m / sigma_1 falls
// under this ratio (singular values sorted descending here).
inline constexpr double kRankThreshold = 1e-10;

// Rayleigh block-fading taps: every entry of tap l is an independent
// CN(0, p[l]) draw with p from pdp.weights(). Identical (seed, realization)
// pairs give bit-identical channels.
TimeDomainChannel generate_channel(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                   std::uint64_t seed, std::uint32_t realization = 0);

// Entrywise unnormalized DFT of the zero-padded tap sequence:
// H_{f,k} = sum_l H_{t,l} e^{-j 2 pi k l / n_c}.
FrequencyDomainChannel to_frequency_domain(const TimeDomainChannel& ch, int n_c);

// Full SVD per subcarrier; throws RankDeficientChannel if any subcarrier has
// rank below n_streams.
ChannelSvd decompose(const FrequencyDomainChannel& fd, int n_streams);

// Dense block-circulant channel matrix (n_rx*n_c x n_tx*n_c): block (r, c)
// holds H_{t, (r-c) mod n_c}. Test oracle for the frequency-domain model.
Eigen::MatrixXcd build_block_circulant(const TimeDomainChannel& ch, int n_c);

// Unitary block DFT F (x) I_x used to diagonalize block circulants.
Eigen::MatrixXcd block_dft(int n_c, int x);

}  // namespace scfde
