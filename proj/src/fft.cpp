#include "scfde/fft.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace scfde::fft {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

struct Radix2Plan {
    std::vector<int> bitrev;
    std::vector<std::complex<double>> twiddle;  // e^{-j*2*pi*k/n}, k < n/2
};

const Radix2Plan& plan_for(int n) {
    thread_local std::unordered_map<int, Radix2Plan> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Radix2Plan plan;
    plan.bitrev.resize(n);
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
        int r = 0;
        for (int b = 0; b < log2n; ++b)
            if (i & (1 << b)) r |= 1 << (log2n - 1 - b);
        plan.bitrev[i] = r;
    }
    plan.twiddle.resize(n / 2);
    for (int k = 0; k < n / 2; ++k)
        plan.twiddle[k] = std::polar(1.0, -kTwoPi * k / n);
    return cache.emplace(n, std::move(plan)).first->second;
}

// In-place radix-2, forward kernel, no scaling.
void radix2(std::complex<double>* x, int n, bool inverse) {
    const Radix2Plan& plan = plan_for(n);
    for (int i = 0; i < n; ++i) {
        const int j = plan.bitrev[i];
        if (j > i) std::swap(x[i], x[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len / 2;
        const int stride = n / len;
        for (int base = 0; base < n; base += len) {
            for (int k = 0; k < half; ++k) {
                std::complex<double> w = plan.twiddle[k * stride];
                if (inverse) w = std::conj(w);
                const std::complex<double> t = w * x[base + k + half];
                x[base + k + half] = x[base + k] - t;
                x[base + k] += t;
            }
        }
    }
}

const Eigen::MatrixXcd& cached_dft(int n) {
    thread_local std::unordered_map<int, Eigen::MatrixXcd> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    return cache.emplace(n, dft_matrix(n, false)).first->second;
}

Eigen::VectorXcd transform(const Eigen::VectorXcd& x, bool inverse) {
    const int n = static_cast<int>(x.size());
    if (n == 0) throw std::invalid_argument("fft: empty input");
    Eigen::VectorXcd y;
    if (is_pow2(n)) {
        y = x;
        radix2(y.data(), n, inverse);
    } else {
        const Eigen::MatrixXcd& f = cached_dft(n);
        y = inverse ? (f.adjoint() * x).eval() : (f * x).eval();
    }
    return y / std::sqrt(static_cast<double>(n));
}

}  // namespace

Eigen::VectorXcd forward_unitary(const Eigen::VectorXcd& x) { return transform(x, false); }

Eigen::VectorXcd inverse_unitary(const Eigen::VectorXcd& x) { return transform(x, true); }

Eigen::MatrixXcd rows_forward_unitary(const Eigen::MatrixXcd& x) {
    Eigen::MatrixXcd y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        y.row(r) = forward_unitary(x.row(r).transpose()).transpose();
    return y;
}

Eigen::MatrixXcd rows_inverse_unitary(const Eigen::MatrixXcd& x) {
    Eigen::MatrixXcd y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        y.row(r) = inverse_unitary(x.row(r).transpose()).transpose();
    return y;
}

Eigen::MatrixXcd dft_matrix(int n, bool unitary) {
    if (n <= 0) throw std::invalid_argument("fft: dft_matrix size must be positive");
    Eigen::MatrixXcd f(n, n);
    const double scale = unitary ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
    for (int k = 0; k < n; ++k)
        for (int m = 0; m < n; ++m)
            f(k, m) = scale * std::polar(1.0, -kTwoPi * static_cast<double>(k) *
                                                  static_cast<double>(m) / n);
    return f;
}

}  // namespace scfde::fft
