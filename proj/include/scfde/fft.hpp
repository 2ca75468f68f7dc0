#pragma once

#include <Eigen/Dense>

namespace scfde::fft {

// Unitary DFT pair: forward kernel e^{-j2*pi*kn/N}/sqrt(N), inverse is its
// adjoint, so forward(inverse(x)) == x. Power-of-two sizes use an iterative
// radix-2 transform; other sizes fall back to a cached DFT matrix.
Eigen::VectorXcd forward_unitary(const Eigen::VectorXcd& x);
Eigen::VectorXcd inverse_unitary(const Eigen::VectorXcd& x);

// Transform every row of a (streams x time) block independently.
Eigen::MatrixXcd rows_forward_unitary(const Eigen::MatrixXcd& x);
Eigen::MatrixXcd rows_inverse_unitary(const Eigen::MatrixXcd& x);

// Dense DFT matrix, plain (unscaled) or unitary.
Eigen::MatrixXcd dft_matrix(int n, bool unitary);

}  // namespace scfde::fft
