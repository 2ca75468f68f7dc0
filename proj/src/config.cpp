#include "scfde/config.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace scfde {

void SystemConfig::validate() const {
    std::ostringstream bad;
    auto fail = [&bad](const char* msg) { bad << (bad.tellp() > 0 ? "; " : "") << msg; };
    if (n_tx < 1) fail("n_tx must be >= 1");
    if (n_rx < 1) fail("n_rx must be >= 1");
    if (n_streams < 1) fail("n_streams must be >= 1");
    if (n_streams > std::min(n_tx, n_rx)) fail("n_streams must satisfy M <= min(N_t, N_r)");
    if (block_len < 1) fail("block_len must be >= 1");
    if (cir_len < 1) fail("cir_len must be >= 1");
    if (cp_len < cir_len) fail("cp_len must satisfy K >= L");
    if (block_len < cir_len) fail("block_len must satisfy N_c >= L");
    if (!(sigma_s2 > 0.0)) fail("sigma_s2 must be > 0");
    if (!(sigma_n2 > 0.0)) fail("sigma_n2 must be > 0");
    if (!(power_budget > 0.0)) fail("power_budget must be > 0");
    if (bad.tellp() > 0) throw std::invalid_argument("SystemConfig: " + bad.str());
}

SystemConfig SystemConfig::at_snr_db(double snr_db) const {
    SystemConfig out = *this;
    const double snr = std::pow(10.0, snr_db / 10.0);
    out.sigma_n2 = sigma_s2 * power_budget / (n_streams * block_len * snr);
    return out;
}

void PowerDelayProfile::validate() const {
    if (!(decay > 0.0)) throw std::invalid_argument("PowerDelayProfile: decay must be > 0");
    if (length < 1) throw std::invalid_argument("PowerDelayProfile: length must be >= 1");
}

std::vector<double> PowerDelayProfile::weights() const {
    validate();
    std::vector<double> p(static_cast<std::size_t>(length));
    double total = 0.0;
    for (int l = 0; l < length; ++l) {
        p[static_cast<std::size_t>(l)] = std::exp(-static_cast<double>(l) / decay);
        total += p[static_cast<std::size_t>(l)];
    }
    for (double& w : p) w /= total;
    return p;
}

void SolverConfig::validate() const {
    if (!(step0 > 0.0)) throw std::invalid_argument("SolverConfig: step0 must be > 0");
    if (max_outer_iters < 1) throw std::invalid_argument("SolverConfig: max_outer_iters must be >= 1");
    if (max_inner_iters < 1) throw std::invalid_argument("SolverConfig: max_inner_iters must be >= 1");
    if (!(power_tol > 0.0)) throw std::invalid_argument("SolverConfig: power_tol must be > 0");
    if (!(fixedpoint_tol > 0.0)) throw std::invalid_argument("SolverConfig: fixedpoint_tol must be > 0");
    if (refine_iters < 0) throw std::invalid_argument("SolverConfig: refine_iters must be >= 0");
}

}  // namespace scfde
