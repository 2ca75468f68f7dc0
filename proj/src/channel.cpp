#include "scfde/channel.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>

#include "scfde/fft.hpp"

namespace scfde {

RankDeficientChannel::RankDeficientChannel(int subcarrier, double ratio)
    : std::runtime_error("channel rank below requested stream count at subcarrier " +
                         std::to_string(subcarrier) + " (singular value ratio " +
                         std::to_string(ratio) + ")"),
      subcarrier_(subcarrier) {}

TimeDomainChannel generate_channel(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                   std::uint64_t seed, std::uint32_t realization) {
    cfg.validate();
    pdp.validate();
    if (pdp.length != cfg.cir_len)
        throw std::invalid_argument("generate_channel: pdp.length != cfg.cir_len");

    const std::vector<double> p = pdp.weights();
    Philox rng(seed, Stream::kChannelTaps, realization, 0);
    TimeDomainChannel ch;
    ch.taps.reserve(static_cast<std::size_t>(cfg.cir_len));
    for (int l = 0; l < cfg.cir_len; ++l) {
        Eigen::MatrixXcd tap(cfg.n_rx, cfg.n_tx);
        for (int r = 0; r < cfg.n_rx; ++r)
            for (int c = 0; c < cfg.n_tx; ++c)
                tap(r, c) = rng.next_cnormal(p[static_cast<std::size_t>(l)]);
        ch.taps.push_back(std::move(tap));
    }
    return ch;
}

FrequencyDomainChannel to_frequency_domain(const TimeDomainChannel& ch, int n_c) {
    if (ch.taps.empty()) throw std::invalid_argument("to_frequency_domain: empty channel");
    if (n_c < ch.n_taps())
        throw std::invalid_argument("to_frequency_domain: n_c must be >= tap count");

    constexpr double kTwoPi = 6.283185307179586476925286766559;
    FrequencyDomainChannel fd;
    fd.subcarriers.reserve(static_cast<std::size_t>(n_c));
    for (int k = 0; k < n_c; ++k) {
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(ch.n_rx(), ch.n_tx());
        for (int l = 0; l < ch.n_taps(); ++l) {
            const std::complex<double> w =
                std::polar(1.0, -kTwoPi * static_cast<double>(k) * static_cast<double>(l) / n_c);
            h += w * ch.taps[static_cast<std::size_t>(l)];
        }
        fd.subcarriers.push_back(std::move(h));
    }
    return fd;
}

ChannelSvd decompose(const FrequencyDomainChannel& fd, int n_streams) {
    if (fd.subcarriers.empty()) throw std::invalid_argument("decompose: empty channel");
    const int n_min = std::min(fd.n_rx(), fd.n_tx());
    if (n_streams < 1 || n_streams > n_min)
        throw std::invalid_argument("decompose: n_streams must satisfy 1 <= M <= min(N_t, N_r)");

    ChannelSvd out;
    out.n_streams = n_streams;
    out.gains.resize(fd.n_subcarriers(), n_streams);
    out.subcarriers.reserve(fd.subcarriers.size());
    for (int k = 0; k < fd.n_subcarriers(); ++k) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(fd.subcarriers[static_cast<std::size_t>(k)],
                                               Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Eigen::VectorXd sv = svd.singularValues();  // descending
        const double top = sv(0);
        const double ratio = top > 0.0 ? sv(n_streams - 1) / top : 0.0;
        if (!(ratio >= kRankThreshold)) throw RankDeficientChannel(k, ratio);

        // Stable ascending reorder: exact ties keep their original positions,
        // so e.g. an identity channel keeps u = v = I. On rectangular
        // channels the orthonormal completion (null-space directions) moves
        // to the left-most columns, keeping the strongest modes right-most.
        std::vector<int> order(static_cast<std::size_t>(n_min));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&sv](int a, int b) { return sv(a) < sv(b); });

        const int extra_u = fd.n_rx() - n_min;
        const int extra_v = fd.n_tx() - n_min;
        SubcarrierSvd s;
        s.u.resize(fd.n_rx(), fd.n_rx());
        s.v.resize(fd.n_tx(), fd.n_tx());
        s.u.leftCols(extra_u) = svd.matrixU().rightCols(extra_u);
        s.v.leftCols(extra_v) = svd.matrixV().rightCols(extra_v);
        s.singular_values.resize(n_min);
        for (int i = 0; i < n_min; ++i) {
            const int src = order[static_cast<std::size_t>(i)];
            s.singular_values(i) = sv(src);
            s.u.col(extra_u + i) = svd.matrixU().col(src);
            s.v.col(extra_v + i) = svd.matrixV().col(src);
        }
        for (int m = 0; m < n_streams; ++m) {
            const double sigma = s.singular_values(n_min - n_streams + m);
            out.gains(k, m) = sigma * sigma;
        }
        out.subcarriers.push_back(std::move(s));
    }
    return out;
}

Eigen::MatrixXcd build_block_circulant(const TimeDomainChannel& ch, int n_c) {
    if (ch.taps.empty()) throw std::invalid_argument("build_block_circulant: empty channel");
    if (n_c < ch.n_taps())
        throw std::invalid_argument("build_block_circulant: n_c must be >= tap count");

    const int nr = ch.n_rx();
    const int nt = ch.n_tx();
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nr) * n_c,
                                                static_cast<Eigen::Index>(nt) * n_c);
    for (int r = 0; r < n_c; ++r) {
        for (int c = 0; c < n_c; ++c) {
            const int l = (r - c + n_c) % n_c;
            if (l < ch.n_taps())
                h.block(static_cast<Eigen::Index>(r) * nr, static_cast<Eigen::Index>(c) * nt,
                        nr, nt) = ch.taps[static_cast<std::size_t>(l)];
        }
    }
    return h;
}

Eigen::MatrixXcd block_dft(int n_c, int x) {
    const Eigen::MatrixXcd f = fft::dft_matrix(n_c, true);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_c) * x,
                                                  static_cast<Eigen::Index>(n_c) * x);
    for (int k = 0; k < n_c; ++k)
        for (int n = 0; n < n_c; ++n)
            out.block(static_cast<Eigen::Index>(k) * x, static_cast<Eigen::Index>(n) * x, x, x) =
                f(k, n) * Eigen::MatrixXcd::Identity(x, x);
    return out;
}

}  // namespace scfde
