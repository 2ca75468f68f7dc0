#include "scfde/simulator.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

#include "scfde/fft.hpp"

namespace scfde {

PowerAllocation epa_allocation(const SystemConfig& cfg) {
    cfg.validate();
    PowerAllocation p;
    p.p = Eigen::MatrixXd::Constant(
        cfg.block_len, cfg.n_streams,
        cfg.power_budget / (static_cast<double>(cfg.block_len) * cfg.n_streams));
    return p;
}

BlockResult run_block(const LinkRealization& link, const SystemConfig& cfg, Philox& rng) {
    const int m = cfg.n_streams;
    const int n_c = cfg.block_len;
    const int k_cp = cfg.cp_len;
    const int n_t = cfg.n_tx;
    const int n_r = cfg.n_rx;
    if (link.channel.n_taps() > k_cp)
        throw std::invalid_argument("run_block: cyclic prefix shorter than channel");
    if (link.beamformer.n_subcarriers() != n_c || link.equalizer.n_subcarriers() != n_c)
        throw std::invalid_argument("run_block: beamformer/equalizer block length mismatch");
    if (!std::isfinite(link.snr_db)) throw std::invalid_argument("run_block: snr_db not finite");

    const double snr = std::pow(10.0, link.snr_db / 10.0);
    const double sigma_n2 = cfg.sigma_s2 * cfg.power_budget / (m * n_c * snr);
    const double amp = std::sqrt(cfg.sigma_s2 / 2.0);

    BlockResult res;
    res.n_symbols = n_c;
    res.tx_bits.resize(static_cast<std::size_t>(2 * m * n_c));
    res.rx_bits.resize(static_cast<std::size_t>(2 * m * n_c));

    // Gray-mapped QPSK, one symbol vector per time slot.
    Eigen::MatrixXcd s(m, n_c);
    for (int n = 0; n < n_c; ++n) {
        for (int j = 0; j < m; ++j) {
            const std::size_t base = 2 * static_cast<std::size_t>(n * m + j);
            const bool bi = rng.next_bit();
            const bool bq = rng.next_bit();
            res.tx_bits[base] = bi;
            res.tx_bits[base + 1] = bq;
            s(j, n) = {amp * (bi ? -1.0 : 1.0), amp * (bq ? -1.0 : 1.0)};
        }
    }

    // Transmit chain.
    const Eigen::MatrixXcd s_f = fft::rows_forward_unitary(s);
    Eigen::MatrixXcd x_f(n_t, n_c);
    for (int k = 0; k < n_c; ++k)
        x_f.col(k) = link.beamformer.precoders[static_cast<std::size_t>(k)] * s_f.col(k);
    const Eigen::MatrixXcd x = fft::rows_inverse_unitary(x_f);

    Eigen::MatrixXcd x_cp(n_t, k_cp + n_c);
    x_cp.leftCols(k_cp) = x.rightCols(k_cp);
    x_cp.rightCols(n_c) = x;

    // Tap-wise linear convolution; only the post-CP window is kept.
    Eigen::MatrixXcd y(n_r, n_c);
    for (int n = 0; n < n_c; ++n) {
        Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(n_r);
        const int t = n + k_cp;
        for (int l = 0; l < link.channel.n_taps(); ++l) {
            if (t - l < 0) break;
            acc += link.channel.taps[static_cast<std::size_t>(l)] * x_cp.col(t - l);
        }
        y.col(n) = acc;
    }
    for (int n = 0; n < n_c; ++n)
        for (int r = 0; r < n_r; ++r) y(r, n) += rng.next_cnormal(sigma_n2);

    // Receive chain.
    const Eigen::MatrixXcd y_f = fft::rows_forward_unitary(y);
    Eigen::MatrixXcd z_f(m, n_c);
    for (int k = 0; k < n_c; ++k)
        z_f.col(k) = link.equalizer.filters[static_cast<std::size_t>(k)] * y_f.col(k);
    const Eigen::MatrixXcd yhat = fft::rows_inverse_unitary(z_f);

    res.tx_symbols = s;
    res.equalized = yhat;
    res.stream_error_energy = (yhat - s).rowwise().squaredNorm();
    for (int n = 0; n < n_c; ++n) {
        for (int j = 0; j < m; ++j) {
            const std::size_t base = 2 * static_cast<std::size_t>(n * m + j);
            res.rx_bits[base] = yhat(j, n).real() < 0.0;
            res.rx_bits[base + 1] = yhat(j, n).imag() < 0.0;
        }
    }
    return res;
}

double achievable_bit_rate(const StreamMse& mse, const SystemConfig& cfg) {
    (void)cfg;
    const Eigen::VectorXd e = mse.normalized();
    double abr = 0.0;
    for (Eigen::Index j = 0; j < e.size(); ++j) {
        if (!(e(j) > 0.0 && e(j) <= 1.0 + 1e-12))
            throw std::invalid_argument("achievable_bit_rate: normalized MSE outside (0, 1]");
        abr -= std::log2(std::min(e(j), 1.0));
    }
    return abr;
}

double theoretical_aber(const StreamMse& mse, const Criterion& c) {
    if (c.kind != CriterionKind::kAber)
        throw std::invalid_argument("theoretical_aber: criterion must be ABER");
    const Eigen::VectorXd e = mse.normalized();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < e.size(); ++j) {
        const double sinr = 1.0 / e(j) - 1.0;
        sum += c.ber_alpha * q_function(std::sqrt(std::max(0.0, c.ber_beta * sinr)));
    }
    return sum / static_cast<double>(e.size());
}

namespace {

struct CellAccum {
    long long errors = 0;
    long long bits = 0;
    long long blocks = 0;
    double abr = 0.0;
};

struct ChannelOutcome {
    bool excluded = false;
    std::vector<CellAccum> cells;  // snr-major, then scheme
    std::vector<SolverTraceRecord> traces;
};

ChannelOutcome simulate_channel(int ch_idx, const SystemConfig& cfg,
                                const PowerDelayProfile& pdp, const SolverConfig& sc,
                                const std::vector<Scheme>& schemes,
                                const std::vector<double>& snrs_db, const SweepOptions& opts,
                                std::uint64_t seed) {
    ChannelOutcome out;
    out.cells.resize(snrs_db.size() * schemes.size());
    try {
        const TimeDomainChannel ch =
            generate_channel(cfg, pdp, seed, static_cast<std::uint32_t>(ch_idx));
        const FrequencyDomainChannel fd = to_frequency_domain(ch, cfg.block_len);
        const ChannelSvd svd = decompose(fd, cfg.n_streams);

        for (std::size_t si = 0; si < snrs_db.size(); ++si) {
            const SystemConfig cfg_s = cfg.at_snr_db(snrs_db[si]);
            // Schur-convex criteria reuse the AMSE allocation; solve each
            // distinct power problem once per operating point.
            std::map<std::string, DualSolution> solved;
            for (std::size_t qi = 0; qi < schemes.size(); ++qi) {
                const Scheme& scheme = schemes[qi];
                PowerAllocation alloc;
                const DualSolution* dual = nullptr;
                if (scheme.optimized) {
                    Criterion eff = scheme.criterion;
                    if (schur_class(eff) == SchurClass::kConvex) eff.kind = CriterionKind::kAmse;
                    auto it = solved.find(eff.name());
                    if (it == solved.end())
                        it = solved.emplace(eff.name(), solve_dual(eff, svd, cfg_s, sc)).first;
                    dual = &it->second;
                    alloc = dual->allocation;
                } else {
                    alloc = epa_allocation(cfg_s);
                }

                const Criterion rot =
                    scheme.optimized ? scheme.criterion : Criterion{CriterionKind::kAmse};
                LinkRealization link;
                link.channel = ch;
                link.beamformer = assemble_beamformer(svd, alloc, rot);
                link.equalizer = mmse_filter(fd, link.beamformer, cfg_s);
                link.snr_db = snrs_db[si];

                StreamMse diag_mse;
                diag_mse.sigma_s2 = cfg_s.sigma_s2;
                diag_mse.values = stream_mse_from_allocation(alloc, svd, cfg_s);
                CellAccum& cell = out.cells[si * schemes.size() + qi];
                cell.abr = achievable_bit_rate(diag_mse, cfg_s);

                for (int b = 0; b < opts.blocks_per_channel; ++b) {
                    Philox rng(seed, Stream::kBlockData, static_cast<std::uint32_t>(ch_idx),
                               static_cast<std::uint32_t>(b));
                    const BlockResult blk = run_block(link, cfg_s, rng);
                    for (std::size_t i = 0; i < blk.tx_bits.size(); ++i)
                        cell.errors += blk.tx_bits[i] != blk.rx_bits[i];
                    cell.bits += static_cast<long long>(blk.tx_bits.size());
                    ++cell.blocks;
                }

                if (ch_idx < opts.trace_channels && dual != nullptr) {
                    SolverTraceRecord rec;
                    rec.channel = ch_idx;
                    rec.snr_db = snrs_db[si];
                    rec.scheme = scheme.label();
                    rec.iterates = dual->trace;
                    rec.converged = dual->converged;
                    out.traces.push_back(std::move(rec));
                }
            }
        }
    } catch (const SolverError&) {
        out.excluded = true;
    } catch (const RankDeficientChannel&) {
        out.excluded = true;
    }
    return out;
}

}  // namespace

MonteCarloReport monte_carlo_sweep(const SystemConfig& cfg, const PowerDelayProfile& pdp,
                                   const SolverConfig& sc, const std::vector<Scheme>& schemes,
                                   const std::vector<double>& snrs_db, const SweepOptions& opts,
                                   std::uint64_t seed) {
    cfg.validate();
    pdp.validate();
    sc.validate();
    if (schemes.empty()) throw std::invalid_argument("monte_carlo_sweep: no schemes");
    if (snrs_db.empty()) throw std::invalid_argument("monte_carlo_sweep: no SNR points");
    if (opts.n_channels < 1 || opts.blocks_per_channel < 1)
        throw std::invalid_argument("monte_carlo_sweep: counts must be >= 1");

    std::vector<ChannelOutcome> outcomes(static_cast<std::size_t>(opts.n_channels));
    unsigned n_threads = opts.n_threads > 0 ? static_cast<unsigned>(opts.n_threads)
                                            : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(opts.n_channels));

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int idx = next.fetch_add(1);
            if (idx >= opts.n_channels) return;
            outcomes[static_cast<std::size_t>(idx)] =
                simulate_channel(idx, cfg, pdp, sc, schemes, snrs_db, opts, seed);
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MonteCarloReport report;
    report.cp_overhead = static_cast<double>(cfg.cp_len) / cfg.block_len;
    int included = 0;
    std::vector<CellAccum> totals(snrs_db.size() * schemes.size());
    for (int ch = 0; ch < opts.n_channels; ++ch) {
        const ChannelOutcome& o = outcomes[static_cast<std::size_t>(ch)];
        if (o.excluded) {
            report.excluded_channels.push_back(ch);
            continue;
        }
        ++included;
        for (std::size_t i = 0; i < totals.size(); ++i) {
            totals[i].errors += o.cells[i].errors;
            totals[i].bits += o.cells[i].bits;
            totals[i].blocks += o.cells[i].blocks;
            totals[i].abr += o.cells[i].abr;
        }
        for (const auto& tr : o.traces) report.traces.push_back(tr);
    }
    if (included == 0) throw SolverError("monte_carlo_sweep: every channel was excluded");

    for (std::size_t si = 0; si < snrs_db.size(); ++si) {
        for (std::size_t qi = 0; qi < schemes.size(); ++qi) {
            const CellAccum& cell = totals[si * schemes.size() + qi];
            SweepPoint pt;
            pt.snr_db = snrs_db[si];
            pt.scheme = schemes[qi].label();
            pt.bit_errors = cell.errors;
            pt.bits_counted = cell.bits;
            pt.trials = cell.blocks;
            pt.ber = cell.bits > 0 ? static_cast<double>(cell.errors) / cell.bits : 0.0;
            pt.ber_stderr =
                cell.bits > 0 ? std::sqrt(pt.ber * (1.0 - pt.ber) / cell.bits) : 0.0;
            pt.abr_bits_per_symbol = cell.abr / included;
            report.points.push_back(std::move(pt));
        }
    }
    return report;
}

}  // namespace scfde
