#pragma once

#include <Eigen/Dense>

namespace scfde {

// Nonnegative per-(subcarrier, stream) transmit powers P_{km}, the variable
// the power-allocation solver works on.
struct PowerAllocation {
    Eigen::MatrixXd p;  // N_c x M

    int n_subcarriers() const { return static_cast<int>(p.rows()); }
    int n_streams() const { return static_cast<int>(p.cols()); }
    double total() const { return p.sum(); }
};

}  // namespace scfde
