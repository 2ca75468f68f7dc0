#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfde/allocation.hpp"
#include "scfde/channel.hpp"
#include "scfde/config.hpp"
#include "scfde/equalizer.hpp"

namespace scfde {

enum class CriterionKind { kAmse, kGmse, kMaxMse, kAsinr, kGsinr, kHsinr, kAber };

enum class SchurClass { kConvex, kConcave };

// Design criterion: a scalar function of the per-stream MSEs. ber_alpha and
// ber_beta are the constellation constants of the ABER metric; the defaults
// match Gray-mapped QPSK.
struct Criterion {
    CriterionKind kind = CriterionKind::kAmse;
    double ber_alpha = 1.0;
    double ber_beta = 1.0;

    std::string name() const;
    static Criterion parse(const std::string& name, double aber_alpha = 1.0,
                           double aber_beta = 1.0);
};

// AMSE, GMSE, ASINR, GSINR are Schur-concave in the MSE vector; maxMSE,
// HSINR, ABER are Schur-convex.
SchurClass schur_class(CriterionKind kind);
inline SchurClass schur_class(const Criterion& c) { return schur_class(c.kind); }

// Raised when a SINR-based quantity is requested for a stream whose
// normalized MSE is 1 (no useful signal power on that stream).
class ZeroSinrError : public std::runtime_error {
public:
    explicit ZeroSinrError(int stream);
    int stream() const { return stream_; }

private:
    int stream_;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Gaussian tail probability Q(x).
double q_function(double x);

// Criterion value on a stream-MSE vector; SINR-based rows use the normalized
// MSEs e_m = mse_m / sigma_s2, so SINR_m = 1/e_m - 1.
double objective(const Criterion& c, const StreamMse& mse);

// V0 of the optimal precoder: identity for Schur-concave criteria, the
// unitary DFT matrix for Schur-convex ones (it makes the diagonal entries of
// V0^H D V0 equal for any diagonal D).
Eigen::MatrixXcd rotation_matrix(int m, SchurClass cls);

// Stream MSEs of the diagonalized problem, d_m = (sigma_s2/N_c) sum_k
// 1/Psi_km with Psi_km = (sigma_s2/sigma_n2) P_km H_km + 1. This is the
// quantity the power allocation problem is expressed in; the rotation V0
// never changes it.
Eigen::VectorXd stream_mse_from_allocation(const PowerAllocation& p, const ChannelSvd& svd,
                                           const SystemConfig& cfg);

// Power-domain objective f(P) = sum_m f_m(P) actually minimized by the
// solver (log forms for GMSE/GSINR; Schur-convex kinds share the AMSE form).
double power_objective(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                       const SystemConfig& cfg);
Eigen::MatrixXd power_gradient(const Criterion& c, const PowerAllocation& p,
                               const ChannelSvd& svd, const SystemConfig& cfg);

// Waterfilling weights B_m: 1 for AMSE (and the Schur-convex kinds, which
// reuse the AMSE allocation), otherwise the criterion-dependent factor built
// from the current stream MSEs.
Eigen::VectorXd b_factor(const Criterion& c, const PowerAllocation& p, const ChannelSvd& svd,
                         const SystemConfig& cfg);

// Single-level waterfilling,
//   P_km = ( sqrt(sigma_n2 B_m / (sigma_s2 lambda H_km)) - sigma_n2/(sigma_s2 H_km) )^+ .
PowerAllocation waterfill(double lambda, const Eigen::VectorXd& b, const ChannelSvd& svd,
                          const SystemConfig& cfg);

// Inner minimizer of the Lagrangian at fixed lambda. AMSE-type criteria are a
// single waterfill; for GMSE/ASINR/GSINR the implicit (B, P) system is solved
// exactly, stream by stream, as a 1-D root of the stream-MSE self-consistency
// equation. Throws when the inner problem is unbounded at this multiplier
// (possible for the SINR criteria below their critical lambda).
PowerAllocation solve_inner(double lambda, const Criterion& c, const ChannelSvd& svd,
                            const SystemConfig& cfg, const SolverConfig& sc);

struct DualState {
    double lambda = 0.0;
    int iteration = 0;
    double step = 0.0;
    double constraint_gap = 0.0;
};

struct DualIterate {
    double lambda = 0.0;
    double gap = 0.0;
    double objective = 0.0;
};

struct DualSolution {
    PowerAllocation allocation;
    DualState state;
    std::vector<DualIterate> trace;
    bool converged = false;
    double feasibility_scale = 1.0;  // applied to land exactly inside the budget
    int refine_steps = 0;
    double refine_improvement = 0.0;
};

// Projected subgradient ascent on the dual variable (diminishing steps
// step0 * lambda0 / i, iterates kept inside the bracket certified by the
// monotone constraint gap), followed by a feasibility rescale and a bounded
// primal polish.
DualSolution solve_dual(const Criterion& c, const ChannelSvd& svd, const SystemConfig& cfg,
                        const SolverConfig& sc);

// P_k = Vbar_k diag(sqrt(P_km)) V0 with Vbar_k the M right-most columns of
// the subcarrier's right singular matrix.
BeamformerSet assemble_beamformer(const ChannelSvd& svd, const PowerAllocation& p,
                                  const Criterion& c);

// Max KKT stationarity violation: relative |df/dP_km + mu| over the support
// plus the one-sided multiplier check on inactive entries, with mu the
// multiplier implied by lambda.
double kkt_residual(const Criterion& c, const PowerAllocation& p, double lambda,
                    const ChannelSvd& svd, const SystemConfig& cfg);

struct ConvexityReport {
    int trials = 0;
    int violations = 0;
    double max_violation = 0.0;
    // AMSE only: worst relative gap between the analytic second derivative
    // and a central finite difference.
    double max_second_derivative_error = 0.0;
};

// Midpoint-convexity sweep over random allocation pairs; any violation would
// indicate an implementation bug.
ConvexityReport convexity_probe(const Criterion& c, const ChannelSvd& svd,
                                const SystemConfig& cfg, int trials, std::uint64_t seed = 2024);

}  // namespace scfde
