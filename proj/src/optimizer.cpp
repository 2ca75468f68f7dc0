#include "scfde/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "scfde/rng.hpp"

namespace scfde {
namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;
constexpr double kInf = std::numeric_limits<double>::infinity();

// The waterfilling multiplier lambda and the true Lagrange multiplier mu of
// the power constraint differ by a constant: mu = lambda * sigma_s2 * c / N_c,
// where c absorbs the normalization of the GSINR stream weights.
double multiplier_scale(CriterionKind kind, const SystemConfig& cfg) {
    return kind == CriterionKind::kGsinr ? cfg.sigma_s2 : 1.0;
}

// Per-stream weight g_m = d f_m / d d_m of the minimized power-domain
// objective, evaluated at stream MSEs d.
Eigen::VectorXd stream_weights(const Criterion& c, const Eigen::VectorXd& d,
                               const SystemConfig& cfg) {
    const int m = static_cast<int>(d.size());
    Eigen::VectorXd g(m);
    switch (schur_class(c) == SchurClass::kConvex ? CriterionKind::kAmse : c.kind) {
        case CriterionKind::kAmse:
            g.setOnes();
            break;
        case CriterionKind::kGmse:
            for (int j = 0; j < m; ++j) g(j) = 1.0 / (kLn2 * d(j));
            break;
        case CriterionKind::kAsinr:
            for (int j = 0; j < m; ++j) g(j) = 1.0 / (d(j) * d(j));
            break;
        case CriterionKind::kGsinr:
            for (int j = 0; j < m; ++j) {
                if (!(d(j) < cfg.sigma_s2)) throw ZeroSinrError(j);
                g(j) = cfg.sigma_s2 / (kLn2 * d(j) * (cfg.sigma_s2 - d(j)));
            }
            break;
        default:
            g.setOnes();
            break;
    }
    return g;
}

class InnerDivergence : public SolverError {
public:
    using SolverError::SolverError;
};

double objective_or_inf(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                        const SystemConfig& cfg) {
    try {
        return power_objective(c, p, svd, cfg);
    } catch (const ZeroSinrError&) {
        return kInf;
    }
}

// ---------------------------------------------------------------------------
// Within one stream, the optimal shape is criterion-independent: Psi_k =
// max(1, sqrt(s H_k)) for a single scale s (the criterion weight g(A) and the
// multiplier only ever enter through their product). The criterion decides
// how the budget splits across streams. The refinement below exploits this:
// reshape every stream onto its exact shape for its budget, then move budget
// between stream pairs by golden-section on the (convex) per-stream costs.

double stream_power_at_scale(const Eigen::MatrixXd& gains, int j, double s,
                             const SystemConfig& cfg) {
    double t = 0.0;
    for (int k = 0; k < gains.rows(); ++k) {
        const double h = gains(k, j);
        if (h <= 0.0) continue;
        const double psi = std::sqrt(s * h);
        if (psi > 1.0) t += (psi - 1.0) * cfg.sigma_n2 / (cfg.sigma_s2 * h);
    }
    return t;
}

// Monotone bisection of the shape scale meeting a per-stream budget.
double stream_scale_for_budget(const Eigen::MatrixXd& gains, int j, double budget,
                               const SystemConfig& cfg) {
    if (budget <= 0.0) return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    while (stream_power_at_scale(gains, j, hi, cfg) < budget && hi < 1e280) hi *= 2.0;
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (stream_power_at_scale(gains, j, mid, cfg) < budget ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void stream_row_at_scale(const Eigen::MatrixXd& gains, int j, double s,
                         const SystemConfig& cfg, Eigen::MatrixXd& p) {
    for (int k = 0; k < gains.rows(); ++k) {
        const double h = gains(k, j);
        const double psi = h > 0.0 && s > 0.0 ? std::sqrt(s * h) : 0.0;
        p(k, j) = psi > 1.0 ? (psi - 1.0) * cfg.sigma_n2 / (cfg.sigma_s2 * h) : 0.0;
    }
}

// Per-stream cost at a given budget under the optimal within-stream shape;
// +inf where the criterion is undefined (GSINR at zero useful power).
double stream_cost_at_budget(const Criterion& c, const Eigen::MatrixXd& gains, int j,
                             double budget, const SystemConfig& cfg) {
    const double s = stream_scale_for_budget(gains, j, budget, cfg);
    double a = 0.0;
    for (int k = 0; k < gains.rows(); ++k) {
        const double h = gains(k, j);
        const double psi = h > 0.0 && s > 0.0 ? std::max(1.0, std::sqrt(s * h)) : 1.0;
        a += 1.0 / psi;
    }
    a *= cfg.sigma_s2 / static_cast<double>(gains.rows());
    switch (schur_class(c) == SchurClass::kConvex ? CriterionKind::kAmse : c.kind) {
        case CriterionKind::kGmse: return std::log2(a);
        case CriterionKind::kAsinr: return -1.0 / a;
        case CriterionKind::kGsinr:
            if (!(a < cfg.sigma_s2 * (1.0 - 1e-15))) return kInf;
            return -std::log2(cfg.sigma_s2 / a - 1.0);
        default: return a;
    }
}

// Exact primal polish: pairwise budget exchanges between streams, each solved
// by golden-section over the convex transfer cost. Returns the number of
// applied transfers.
int refine_allocation(const Criterion& c, const ChannelSvd& svd, const SystemConfig& cfg,
                      int max_sweeps, PowerAllocation& p, double& improvement) {
    improvement = 0.0;
    if (max_sweeps <= 0) return 0;
    const int m = svd.n_streams;
    const double p_t = cfg.power_budget;
    const double f0 = objective_or_inf(c, p, svd, cfg);

    Eigen::VectorXd budgets = p.p.colwise().sum();
    if (!(budgets.sum() > 0.0)) budgets.setConstant(p_t / m);
    budgets *= p_t / budgets.sum();

    int transfers = 0;
    constexpr double kGolden = 0.61803398874989484820;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double moved = 0.0;
        for (int a = 0; a < m; ++a) {
            for (int b = a + 1; b < m; ++b) {
                const double total = budgets(a) + budgets(b);
                if (!(total > 0.0)) continue;
                auto cost = [&](double x) {
                    return stream_cost_at_budget(c, svd.gains, a, x, cfg) +
                           stream_cost_at_budget(c, svd.gains, b, total - x, cfg);
                };
                double lo = 0.0, hi = total;
                double x1 = hi - kGolden * (hi - lo);
                double x2 = lo + kGolden * (hi - lo);
                double f1 = cost(x1), f2 = cost(x2);
                for (int it = 0; it < 120 && (hi - lo) > 1e-14 * total; ++it) {
                    if (f1 < f2) {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - kGolden * (hi - lo);
                        f1 = cost(x1);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + kGolden * (hi - lo);
                        f2 = cost(x2);
                    }
                }
                // Apply the transfer only on measurable improvement, so flat
                // exchange directions (ASINR on symmetric gains) keep the
                // symmetric split instead of drifting to an arbitrary one.
                const double x = 0.5 * (lo + hi);
                const double f_now = cost(budgets(a));
                const double f_new = cost(x);
                if (f_new < f_now - 1e-13 * (1.0 + std::abs(f_now))) {
                    moved = std::max(moved, std::abs(x - budgets(a)));
                    ++transfers;
                    budgets(a) = x;
                    budgets(b) = total - x;
                }
            }
        }
        if (m == 1 || moved < 1e-13 * p_t) break;
    }

    for (int j = 0; j < m; ++j)
        stream_row_at_scale(svd.gains, j, stream_scale_for_budget(svd.gains, j, budgets(j), cfg),
                            cfg, p.p);
    const double f1 = objective_or_inf(c, p, svd, cfg);
    improvement = f0 - f1;
    return transfers;
}

// Multiplier implied by an allocation: stationarity fixes -grad = mu on the
// support, so the support mean recovers mu (exactly, at a stationary point).
double fit_multiplier(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                      const SystemConfig& cfg, double fallback_lambda) {
    try {
        const Eigen::MatrixXd grad = power_gradient(c, p, svd, cfg);
        const double support_eps = 1e-12 * cfg.power_budget /
                                   (static_cast<double>(svd.n_subcarriers()) * svd.n_streams);
        double sum = 0.0;
        long long n = 0;
        for (int j = 0; j < svd.n_streams; ++j)
            for (int k = 0; k < svd.n_subcarriers(); ++k)
                if (p.p(k, j) > support_eps) {
                    sum -= grad(k, j);
                    ++n;
                }
        if (n > 0 && sum > 0.0)
            return (sum / static_cast<double>(n)) * svd.n_subcarriers() /
                   (cfg.sigma_s2 * multiplier_scale(c.kind, cfg));
    } catch (const ZeroSinrError&) {
    }
    return fallback_lambda;
}

}  // namespace

ZeroSinrError::ZeroSinrError(int stream)
    : std::runtime_error("zero-SINR condition on stream " + std::to_string(stream)),
      stream_(stream) {}

std::string Criterion::name() const {
    switch (kind) {
        case CriterionKind::kAmse: return "AMSE";
        case CriterionKind::kGmse: return "GMSE";
        case CriterionKind::kMaxMse: return "maxMSE";
        case CriterionKind::kAsinr: return "ASINR";
        case CriterionKind::kGsinr: return "GSINR";
        case CriterionKind::kHsinr: return "HSINR";
        case CriterionKind::kAber: return "ABER";
    }
    return "?";
}

Criterion Criterion::parse(const std::string& name, double aber_alpha, double aber_beta) {
    std::string u;
    for (char ch : name) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    Criterion c;
    c.ber_alpha = aber_alpha;
    c.ber_beta = aber_beta;
    if (u == "AMSE") c.kind = CriterionKind::kAmse;
    else if (u == "GMSE") c.kind = CriterionKind::kGmse;
    else if (u == "MAXMSE") c.kind = CriterionKind::kMaxMse;
    else if (u == "ASINR") c.kind = CriterionKind::kAsinr;
    else if (u == "GSINR") c.kind = CriterionKind::kGsinr;
    else if (u == "HSINR") c.kind = CriterionKind::kHsinr;
    else if (u == "ABER") c.kind = CriterionKind::kAber;
    else throw std::invalid_argument("unknown criterion: " + name);
    return c;
}

SchurClass schur_class(CriterionKind kind) {
    switch (kind) {
        case CriterionKind::kMaxMse:
        case CriterionKind::kHsinr:
        case CriterionKind::kAber:
            return SchurClass::kConvex;
        default:
            return SchurClass::kConcave;
    }
}

double q_function(double x) { return 0.5 * std::erfc(x / 1.4142135623730950488016887242097); }

double objective(const Criterion& c, const StreamMse& mse) {
    const Eigen::VectorXd e = mse.normalized();
    const int m = static_cast<int>(e.size());
    auto sinr = [&e](int j) {
        if (!(e(j) < 1.0)) throw ZeroSinrError(j);
        return 1.0 / e(j) - 1.0;
    };
    switch (c.kind) {
        case CriterionKind::kAmse:
            return e.sum();
        case CriterionKind::kGmse:
            return e.prod();
        case CriterionKind::kMaxMse:
            return e.maxCoeff();
        case CriterionKind::kAsinr: {
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += 1.0 / e(j) - 1.0;
            return -s;
        }
        case CriterionKind::kGsinr: {
            double p = 1.0;
            for (int j = 0; j < m; ++j) p *= sinr(j);
            return -p;
        }
        case CriterionKind::kHsinr: {
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += 1.0 / sinr(j);
            return s;
        }
        case CriterionKind::kAber: {
            double s = 0.0;
            for (int j = 0; j < m; ++j) {
                const double x = 1.0 / e(j) - 1.0;  // Q(0) = 1/2 at zero SINR
                s += c.ber_alpha * q_function(std::sqrt(std::max(0.0, c.ber_beta * x)));
            }
            return s;
        }
    }
    throw std::logic_error("objective: unreachable");
}

Eigen::MatrixXcd rotation_matrix(int m, SchurClass cls) {
    if (m < 1) throw std::invalid_argument("rotation_matrix: m must be >= 1");
    if (cls == SchurClass::kConcave) return Eigen::MatrixXcd::Identity(m, m);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    Eigen::MatrixXcd v(m, m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            v(a, b) = scale * std::polar(1.0, -kTwoPi * static_cast<double>(a) *
                                                  static_cast<double>(b) / m);
    return v;
}

Eigen::VectorXd stream_mse_from_allocation(const PowerAllocation& p, const ChannelSvd& svd,
                                           const SystemConfig& cfg) {
    const int n_c = svd.n_subcarriers();
    const int m = svd.n_streams;
    if (p.n_subcarriers() != n_c || p.n_streams() != m)
        throw std::invalid_argument("allocation/channel dimension mismatch");
    const double rho = cfg.sigma_s2 / cfg.sigma_n2;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < m; ++j) {
        for (int k = 0; k < n_c; ++k) d(j) += 1.0 / (rho * p.p(k, j) * svd.gains(k, j) + 1.0);
        d(j) *= cfg.sigma_s2 / n_c;
    }
    return d;
}

double power_objective(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                       const SystemConfig& cfg) {
    const Eigen::VectorXd d = stream_mse_from_allocation(p, svd, cfg);
    const int m = static_cast<int>(d.size());
    double f = 0.0;
    switch (schur_class(c) == SchurClass::kConvex ? CriterionKind::kAmse : c.kind) {
        case CriterionKind::kAmse:
            f = d.sum();
            break;
        case CriterionKind::kGmse:
            for (int j = 0; j < m; ++j) f += std::log2(d(j));
            break;
        case CriterionKind::kAsinr:
            for (int j = 0; j < m; ++j) f -= 1.0 / d(j);
            break;
        case CriterionKind::kGsinr:
            for (int j = 0; j < m; ++j) {
                if (!(d(j) < cfg.sigma_s2)) throw ZeroSinrError(j);
                f -= std::log2(cfg.sigma_s2 / d(j) - 1.0);
            }
            break;
        default:
            break;
    }
    return f;
}

Eigen::MatrixXd power_gradient(const Criterion& c, const PowerAllocation& p,
                               const ChannelSvd& svd, const SystemConfig& cfg) {
    const Eigen::VectorXd d = stream_mse_from_allocation(p, svd, cfg);
    const Eigen::VectorXd g = stream_weights(c, d, cfg);
    const double rho = cfg.sigma_s2 / cfg.sigma_n2;
    const int n_c = svd.n_subcarriers();
    Eigen::MatrixXd grad(n_c, svd.n_streams);
    for (int j = 0; j < svd.n_streams; ++j) {
        for (int k = 0; k < n_c; ++k) {
            const double psi = rho * p.p(k, j) * svd.gains(k, j) + 1.0;
            grad(k, j) = -(cfg.sigma_s2 / n_c) * rho * svd.gains(k, j) * g(j) / (psi * psi);
        }
    }
    return grad;
}

Eigen::VectorXd b_factor(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                         const SystemConfig& cfg) {
    const int m = svd.n_streams;
    if (schur_class(c) == SchurClass::kConvex || c.kind == CriterionKind::kAmse)
        return Eigen::VectorXd::Ones(m);
    const Eigen::VectorXd d = stream_mse_from_allocation(p, svd, cfg);
    Eigen::VectorXd b(m);
    switch (c.kind) {
        case CriterionKind::kGmse:
            for (int j = 0; j < m; ++j) b(j) = 1.0 / (kLn2 * d(j));
            break;
        case CriterionKind::kAsinr:
            for (int j = 0; j < m; ++j) b(j) = 1.0 / (d(j) * d(j));
            break;
        case CriterionKind::kGsinr:
            for (int j = 0; j < m; ++j) {
                if (!(d(j) < cfg.sigma_s2)) throw ZeroSinrError(j);
                // C_m / ln2 * d^{-2} with C_m = (sigma_s2/d - 1)^{-1}
                b(j) = 1.0 / (kLn2 * d(j) * (cfg.sigma_s2 - d(j)));
            }
            break;
        default:
            throw std::logic_error("b_factor: unreachable");
    }
    return b;
}

PowerAllocation waterfill(double lambda, const Eigen::VectorXd& b, const ChannelSvd& svd,
                          const SystemConfig& cfg) {
    if (!(lambda > 0.0)) throw std::invalid_argument("waterfill: lambda must be > 0");
    if (b.size() != svd.n_streams) throw std::invalid_argument("waterfill: b has wrong length");
    if ((b.array() <= 0.0).any()) throw std::invalid_argument("waterfill: b must be positive");
    const int n_c = svd.n_subcarriers();
    PowerAllocation out;
    out.p.resize(n_c, svd.n_streams);
    for (int j = 0; j < svd.n_streams; ++j) {
        for (int k = 0; k < n_c; ++k) {
            const double h = svd.gains(k, j);
            if (h <= 0.0) {
                out.p(k, j) = 0.0;
                continue;
            }
            const double level = std::sqrt(cfg.sigma_n2 * b(j) / (cfg.sigma_s2 * lambda * h));
            out.p(k, j) = std::max(0.0, level - cfg.sigma_n2 / (cfg.sigma_s2 * h));
        }
    }
    return out;
}

PowerAllocation solve_inner(double lambda, const Criterion& c, const ChannelSvd& svd,
                            const SystemConfig& cfg, const SolverConfig& sc) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_inner: lambda must be > 0");
    const bool amse_like =
        schur_class(c) == SchurClass::kConvex || c.kind == CriterionKind::kAmse;
    if (amse_like) return waterfill(lambda, Eigen::VectorXd::Ones(svd.n_streams), svd, cfg);

    // The waterfilling weights B_m and the allocation determine each other.
    // The system is separable per stream: on the support
    // Psi_km = sqrt(kappa H_km g(A_m)) with kappa = s2 / (n2 lambda c), and
    // A_m must reproduce itself through Phi(A) = (s2/N_c) sum_k 1/Psi_km.
    // Phi(A) - A changes sign on (0, s2] whenever the inner problem is
    // bounded; a plain B-from-P fixed point instead stalls on the SINR
    // criteria, whose inner map is scale-free over fully active supports.
    const int n_c = svd.n_subcarriers();
    const int m = svd.n_streams;
    const double s2 = cfg.sigma_s2;
    const double kappa = s2 / (cfg.sigma_n2 * lambda * multiplier_scale(c.kind, cfg));
    PowerAllocation out;
    out.p.resize(n_c, m);

    for (int j = 0; j < m; ++j) {
        auto weight = [&](double a) {
            switch (c.kind) {
                case CriterionKind::kGmse: return 1.0 / (kLn2 * a);
                case CriterionKind::kAsinr: return 1.0 / (a * a);
                case CriterionKind::kGsinr: return s2 / (kLn2 * a * (s2 - a));
                default: return 1.0;
            }
        };
        auto delta = [&](double a) {
            double phi = 0.0;
            const double g = weight(a);
            for (int k = 0; k < n_c; ++k)
                phi += 1.0 / std::max(1.0, std::sqrt(kappa * svd.gains(k, j) * g));
            return phi * s2 / n_c - a;
        };

        // Bracket the root on a geometric grid, finest near zero.
        constexpr int kGrid = 512;
        const double lo_a = s2 * 1e-15;
        const double hi_a = s2 * (1.0 - 1e-12);
        double prev_a = lo_a;
        double prev_d = delta(prev_a);
        double root_lo = 0.0, root_hi = 0.0;
        bool bracketed = false;
        bool any_positive = prev_d > 0.0;
        const double ratio = std::pow(hi_a / lo_a, 1.0 / (kGrid - 1));
        for (int i = 1; i < kGrid; ++i) {
            const double a = i + 1 == kGrid ? hi_a : prev_a * ratio;
            const double d = delta(a);
            any_positive |= d > 0.0;
            if ((prev_d > 0.0) != (d > 0.0)) {
                root_lo = prev_a;
                root_hi = a;
                bracketed = true;
                break;
            }
            prev_a = a;
            prev_d = d;
        }
        if (!bracketed) {
            if (!any_positive)
                throw InnerDivergence("inner minimization unbounded at this multiplier");
            // Positive all the way to s2: the stationary point is (numerically)
            // the zero-power row.
            out.p.row(j).setZero();
            continue;
        }
        for (int it = 0; it < sc.max_inner_iters && root_hi - root_lo > sc.fixedpoint_tol * s2;
             ++it) {
            const double mid = 0.5 * (root_lo + root_hi);
            (delta(mid) > 0.0 ? root_lo : root_hi) = mid;
        }
        const double a_star = 0.5 * (root_lo + root_hi);
        const double g_star = weight(a_star);
        for (int k = 0; k < n_c; ++k) {
            const double h = svd.gains(k, j);
            const double psi = h > 0.0 ? std::sqrt(kappa * h * g_star) : 0.0;
            out.p(k, j) = psi > 1.0 ? (psi - 1.0) * cfg.sigma_n2 / (s2 * h) : 0.0;
        }
    }
    return out;
}

DualSolution solve_dual(const Criterion& c, const ChannelSvd& svd, const SystemConfig& cfg,
                        const SolverConfig& sc) {
    cfg.validate();
    sc.validate();
    const double p_t = cfg.power_budget;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(svd.n_streams);

    // lambda0: meet the budget exactly for the AMSE weights (B = 1).
    double lo = 1.0, hi = 1.0;
    while (waterfill(lo, ones, svd, cfg).total() < p_t) {
        lo *= 0.5;
        if (lo < 1e-300) break;
    }
    while (waterfill(hi, ones, svd, cfg).total() > p_t) {
        hi *= 2.0;
        if (hi > 1e300) break;
    }
    double lambda0 = 0.5 * (lo + hi);
    for (int i = 0; i < 200; ++i) {
        lambda0 = 0.5 * (lo + hi);
        const double total = waterfill(lambda0, ones, svd, cfg).total();
        if (std::abs(total - p_t) / p_t < 0.1 * sc.power_tol) break;
        (total > p_t ? lo : hi) = lambda0;
    }

    DualSolution sol;
    double lambda = lambda0;
    double bracket_lo = 0.0;        // gap > 0 observed at or below this multiplier
    double bracket_hi = kInf;       // gap < 0 observed at or above this multiplier
    double step = 0.0;
    PowerAllocation current;
    bool have_current = false;
    PowerAllocation best;
    double best_gap = kInf;
    int iter = 0;

    for (iter = 1; iter <= sc.max_outer_iters; ++iter) {
        double gap;
        try {
            current = solve_inner(lambda, c, svd, cfg, sc);
            have_current = true;
            gap = current.total() - p_t;
        } catch (const InnerDivergence&) {
            bracket_lo = std::max(bracket_lo, lambda);
            lambda = std::isfinite(bracket_hi) ? 0.5 * (bracket_lo + bracket_hi) : lambda * 2.0;
            continue;
        } catch (const ZeroSinrError&) {
            bracket_hi = std::min(bracket_hi, lambda);
            lambda = 0.5 * (bracket_lo + bracket_hi);
            continue;
        }
        sol.trace.push_back({lambda, gap, power_objective(c, current, svd, cfg)});
        if (std::abs(gap) < best_gap) {
            best_gap = std::abs(gap);
            best = current;
            sol.state.lambda = lambda;
        }
        if (std::abs(gap) / p_t < sc.power_tol) {
            sol.converged = true;
            break;
        }
        if (gap > 0.0)
            bracket_lo = std::max(bracket_lo, lambda);
        else
            bracket_hi = std::min(bracket_hi, lambda);

        step = sc.step0 * lambda0 / static_cast<double>(iter + 1);
        double next = lambda + step * gap;  // ascent on the concave dual
        if (std::isfinite(bracket_hi)) {
            // The monotone constraint gap certifies the bracket; fall back to
            // its midpoint when the diminishing step exits it or stalls.
            const double width = bracket_hi - bracket_lo;
            if (!(next > bracket_lo) || !(next < bracket_hi) || !std::isfinite(next) ||
                std::abs(next - lambda) < 0.1 * width)
                next = 0.5 * (bracket_lo + bracket_hi);
        } else {
            // No upper bracket yet: force geometric growth so the hunt for a
            // negative gap cannot stall on diminishing steps.
            if (!std::isfinite(next)) next = lambda * 2.0;
            next = std::max(next, lambda * 2.0);
        }
        lambda = std::max(next, 1e-300);
    }

    sol.allocation = have_current && sol.converged ? current : best;
    if (!have_current && best_gap == kInf)
        throw SolverError("dual ascent produced no usable iterate");
    sol.state.iteration = std::min(iter, sc.max_outer_iters);
    sol.state.step = step;
    if (sol.converged) sol.state.lambda = lambda;

    // Land exactly inside the budget; polish if the rescaled point fails a
    // tight stationarity check or leaves budget slack (every criterion is
    // strictly decreasing in power, so the budget binds at the optimum; the
    // SINR criteria can leave slack when the dual hits their critical
    // multiplier, where the inner solution scale is unresolved).
    const double total = sol.allocation.total();
    sol.feasibility_scale = total > p_t ? p_t / total : 1.0;
    sol.allocation.p *= sol.feasibility_scale;
    sol.state.lambda = fit_multiplier(c, sol.allocation, svd, cfg, sol.state.lambda);
    const bool slack = sol.allocation.total() < p_t * (1.0 - 1e-9);
    if (slack || kkt_residual(c, sol.allocation, sol.state.lambda, svd, cfg) > 1e-8) {
        sol.refine_steps = refine_allocation(c, svd, cfg, sc.refine_iters, sol.allocation,
                                             sol.refine_improvement);
        sol.state.lambda = fit_multiplier(c, sol.allocation, svd, cfg, sol.state.lambda);
    }
    sol.state.constraint_gap = sol.allocation.total() - p_t;
    return sol;
}

BeamformerSet assemble_beamformer(const ChannelSvd& svd, const PowerAllocation& p,
                                  const Criterion& c) {
    const int n_c = svd.n_subcarriers();
    const int m = svd.n_streams;
    if (p.n_subcarriers() != n_c || p.n_streams() != m)
        throw std::invalid_argument("allocation/channel dimension mismatch");
    if ((p.p.array() < 0.0).any())
        throw std::invalid_argument("assemble_beamformer: negative power entry");

    BeamformerSet bf;
    bf.rotation = rotation_matrix(m, schur_class(c));
    bf.allocation = p;
    bf.gains = svd.gains;
    bf.structured = true;
    bf.precoders.reserve(static_cast<std::size_t>(n_c));
    for (int k = 0; k < n_c; ++k) {
        const auto& s = svd.subcarriers[static_cast<std::size_t>(k)];
        const Eigen::MatrixXcd vbar = s.v.rightCols(m);
        const Eigen::VectorXd amp = p.p.row(k).array().sqrt();
        bf.precoders.push_back(vbar * amp.asDiagonal() * bf.rotation);
    }
    return bf;
}

double kkt_residual(const Criterion& c, const PowerAllocation& p, double lambda,
                    const ChannelSvd& svd, const SystemConfig& cfg) {
    const double mu =
        lambda * cfg.sigma_s2 * multiplier_scale(c.kind, cfg) / svd.n_subcarriers();
    const Eigen::MatrixXd grad = power_gradient(c, p, svd, cfg);
    const double support_eps = 1e-12 * cfg.power_budget /
                               (static_cast<double>(svd.n_subcarriers()) * svd.n_streams);
    double worst = 0.0;
    for (int j = 0; j < svd.n_streams; ++j) {
        for (int k = 0; k < svd.n_subcarriers(); ++k) {
            const double r = grad(k, j) + mu;
            if (p.p(k, j) > support_eps)
                worst = std::max(worst, std::abs(r) / mu);
            else
                worst = std::max(worst, std::max(0.0, -r) / mu);
        }
    }
    return worst;
}

ConvexityReport convexity_probe(const Criterion& c, const ChannelSvd& svd,
                                const SystemConfig& cfg, int trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("convexity_probe: trials must be >= 1");
    const int n_c = svd.n_subcarriers();
    const int m = svd.n_streams;
    Philox rng(seed, Stream::kGeneric, 7, 0);
    const double mean_entry = cfg.power_budget / (static_cast<double>(n_c) * m);

    auto random_allocation = [&]() {
        PowerAllocation p;
        p.p.resize(n_c, m);
        for (int k = 0; k < n_c; ++k)
            for (int j = 0; j < m; ++j)
                p.p(k, j) = (0.05 + 1.9 * rng.next_double()) * mean_entry;
        if (p.total() > cfg.power_budget) p.p *= cfg.power_budget / p.total();
        return p;
    };

    ConvexityReport rep;
    rep.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const PowerAllocation p1 = random_allocation();
        const PowerAllocation p2 = random_allocation();
        const double f1 = power_objective(c, p1, svd, cfg);
        const double f2 = power_objective(c, p2, svd, cfg);
        for (double theta : {0.25, 0.5, 0.75}) {
            PowerAllocation mid;
            mid.p = theta * p1.p + (1.0 - theta) * p2.p;
            const double fm = power_objective(c, mid, svd, cfg);
            const double bound = theta * f1 + (1.0 - theta) * f2;
            const double tol = 1e-9 * (1.0 + std::abs(f1) + std::abs(f2));
            if (fm > bound + tol) {
                ++rep.violations;
                rep.max_violation = std::max(rep.max_violation, fm - bound);
            }
        }
        if (c.kind == CriterionKind::kAmse) {
            // Analytic d2f/dP_km^2 = (2 sigma_s2/N_c) Psi^-3 (sigma_s2 H/sigma_n2)^2
            // against a central finite difference.
            const PowerAllocation p0 = random_allocation();
            const int k = static_cast<int>(rng.next_u32() % static_cast<unsigned>(n_c));
            const int j = static_cast<int>(rng.next_u32() % static_cast<unsigned>(m));
            const double rho = cfg.sigma_s2 / cfg.sigma_n2;
            const double psi = rho * p0.p(k, j) * svd.gains(k, j) + 1.0;
            const double analytic = 2.0 * cfg.sigma_s2 / n_c * std::pow(psi, -3.0) *
                                    rho * rho * svd.gains(k, j) * svd.gains(k, j);
            // Truncation error scales as (h rho H / psi)^2; keep it near 1e-6.
            const double h =
                std::min(0.45 * p0.p(k, j), 1e-3 * psi / (rho * svd.gains(k, j)));
            PowerAllocation plus = p0, minus = p0;
            plus.p(k, j) += h;
            minus.p(k, j) -= h;
            const double fd = (power_objective(c, plus, svd, cfg) -
                               2.0 * power_objective(c, p0, svd, cfg) +
                               power_objective(c, minus, svd, cfg)) /
                              (h * h);
            if (analytic > 1e-14)
                rep.max_second_derivative_error =
                    std::max(rep.max_second_derivative_error, std::abs(fd - analytic) / analytic);
        }
    }
    return rep;
}

}  // namespace scfde
