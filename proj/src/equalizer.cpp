#include "scfde/equalizer.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>
#include <string>

namespace scfde {
namespace {

void check_dims(const FrequencyDomainChannel& fd, const BeamformerSet& bf,
                const SystemConfig& cfg) {
    if (fd.n_subcarriers() != bf.n_subcarriers())
        throw std::invalid_argument("beamformer/channel subcarrier count mismatch");
    if (fd.n_rx() != cfg.n_rx || fd.n_tx() != cfg.n_tx)
        throw std::invalid_argument("channel dimensions disagree with config");
    for (const auto& p : bf.precoders)
        if (p.rows() != cfg.n_tx || p.cols() != cfg.n_streams)
            throw std::invalid_argument("precoder dimensions disagree with config");
}

}  // namespace

double BeamformerSet::total_power() const {
    double t = 0.0;
    for (const auto& p : precoders) t += (p.adjoint() * p).real().trace();
    return t;
}

Eigen::MatrixXcd psi_k(const Eigen::MatrixXcd& h_fk, const Eigen::MatrixXcd& p_k,
                       const SystemConfig& cfg) {
    if (h_fk.cols() != p_k.rows())
        throw std::invalid_argument("psi_k: channel/precoder dimension mismatch");
    const Eigen::MatrixXcd hp = h_fk * p_k;
    Eigen::MatrixXcd psi = (cfg.sigma_s2 / cfg.sigma_n2) * (hp.adjoint() * hp);
    psi += Eigen::MatrixXcd::Identity(p_k.cols(), p_k.cols());
    return psi;
}

EqualizerSet mmse_filter(const FrequencyDomainChannel& fd, const BeamformerSet& bf,
                         const SystemConfig& cfg) {
    check_dims(fd, bf, cfg);
    EqualizerSet eq;
    eq.filters.reserve(bf.precoders.size());
    for (std::size_t k = 0; k < bf.precoders.size(); ++k) {
        const Eigen::MatrixXcd& h = fd.subcarriers[k];
        const Eigen::MatrixXcd& p = bf.precoders[k];
        const Eigen::MatrixXcd psi = psi_k(h, p, cfg);
        // Psi >= I, so the Cholesky factorization always exists.
        const Eigen::MatrixXcd rhs = (cfg.sigma_s2 / cfg.sigma_n2) * (p.adjoint() * h.adjoint());
        eq.filters.push_back(psi.llt().solve(rhs));
    }
    return eq;
}

StreamMse stream_mse(const FrequencyDomainChannel& fd, const BeamformerSet& bf,
                     const SystemConfig& cfg) {
    check_dims(fd, bf, cfg);
    const int m = cfg.n_streams;
    const int n_c = fd.n_subcarriers();
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(m, m);
    if (bf.structured) {
        // Psi_k = V0^H diag(Psi_km) V0 with Psi_km = (s2/n2) P_km H_km + 1.
        Eigen::VectorXd diag_sum = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < n_c; ++k)
            for (int j = 0; j < m; ++j)
                diag_sum(j) +=
                    1.0 / (cfg.sigma_s2 / cfg.sigma_n2 * bf.allocation.p(k, j) * bf.gains(k, j) +
                           1.0);
        acc = bf.rotation.adjoint() * diag_sum.asDiagonal() * bf.rotation;
    } else {
        const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(m, m);
        for (int k = 0; k < n_c; ++k) {
            const Eigen::MatrixXcd psi =
                psi_k(fd.subcarriers[static_cast<std::size_t>(k)],
                      bf.precoders[static_cast<std::size_t>(k)], cfg);
            acc += psi.llt().solve(eye);
        }
    }
    StreamMse out;
    out.sigma_s2 = cfg.sigma_s2;
    out.values = (cfg.sigma_s2 / n_c) * acc.diagonal().real();
    // Guard against roundoff pushing an entry out of (0, sigma_s2].
    out.values = out.values.cwiseMin(cfg.sigma_s2);
    return out;
}

Eigen::MatrixXcd mse_matrix_for_filter(const FrequencyDomainChannel& fd,
                                       const BeamformerSet& bf, const EqualizerSet& eq,
                                       const SystemConfig& cfg) {
    check_dims(fd, bf, cfg);
    if (eq.n_subcarriers() != fd.n_subcarriers())
        throw std::invalid_argument("equalizer/channel subcarrier count mismatch");
    const int m = cfg.n_streams;
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(m, m);
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(m, m);
    for (std::size_t k = 0; k < bf.precoders.size(); ++k) {
        const Eigen::MatrixXcd d = eq.filters[k] * fd.subcarriers[k] * bf.precoders[k] - eye;
        acc += cfg.sigma_s2 * (d * d.adjoint()) +
               cfg.sigma_n2 * (eq.filters[k] * eq.filters[k].adjoint());
    }
    return acc / static_cast<double>(fd.n_subcarriers());
}

Eigen::MatrixXcd dense_mse_matrix(const TimeDomainChannel& ch, const BeamformerSet& bf,
                                  const EqualizerSet& eq, const SystemConfig& cfg) {
    const int n_c = bf.n_subcarriers();
    if (n_c > kDenseMseLimit)
        throw std::invalid_argument("dense_mse_matrix: block_len limited to " +
                                    std::to_string(kDenseMseLimit));
    if (eq.n_subcarriers() != n_c)
        throw std::invalid_argument("equalizer/beamformer subcarrier count mismatch");

    const int m = cfg.n_streams;
    const int nt = cfg.n_tx;
    const int nr = cfg.n_rx;

    // Frequency-domain channel from the block circulant, H_f = F_Nr H_t F_Nt^H.
    const Eigen::MatrixXcd h_t = build_block_circulant(ch, n_c);
    const Eigen::MatrixXcd f_nr = block_dft(n_c, nr);
    const Eigen::MatrixXcd f_nt = block_dft(n_c, nt);
    const Eigen::MatrixXcd h_f = f_nr * h_t * f_nt.adjoint();

    Eigen::MatrixXcd p_f = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nt) * n_c,
                                                  static_cast<Eigen::Index>(m) * n_c);
    Eigen::MatrixXcd w_f = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(m) * n_c,
                                                  static_cast<Eigen::Index>(nr) * n_c);
    for (int k = 0; k < n_c; ++k) {
        p_f.block(static_cast<Eigen::Index>(k) * nt, static_cast<Eigen::Index>(k) * m, nt, m) =
            bf.precoders[static_cast<std::size_t>(k)];
        w_f.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(k) * nr, m, nr) =
            eq.filters[static_cast<std::size_t>(k)];
    }

    const Eigen::MatrixXcd whp = w_f * h_f * p_f;
    const Eigen::MatrixXcd eye =
        Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(m) * n_c,
                                   static_cast<Eigen::Index>(m) * n_c);
    const Eigen::MatrixXcd inner =
        cfg.sigma_s2 * (whp * whp.adjoint() - whp - whp.adjoint() + eye) +
        cfg.sigma_n2 * (w_f * w_f.adjoint());
    const Eigen::MatrixXcd f_m = block_dft(n_c, m);
    return f_m.adjoint() * inner * f_m;
}

}  // namespace scfde
