#pragma once

// Test-only reference implementations, kept independent of the library's
// computational paths (direct sums instead of FFTs, scatter instead of gather
// convolution, hand-rolled autocorrelation).

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "csilab/ofdm.hpp"
#include "csilab/rng.hpp"

namespace oracles {

using csilab::ofdm::ComplexVec;
using csilab::ofdm::cplx;

// O(W^2) unitary DFT, sign = -1 forward / +1 inverse.
inline ComplexVec dft_direct(const ComplexVec& x, int sign) {
    const std::size_t n = x.size();
    ComplexVec out(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = sign * 2.0 * M_PI * static_cast<double>(k * m) /
                               static_cast<double>(n);
            acc += x[m] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc * scale;
    }
    return out;
}

// Direct-sum circular convolution.
inline ComplexVec circ_conv_direct(const ComplexVec& a, const ComplexVec& b) {
    const std::size_t w = a.size();
    ComplexVec out(w, {0.0, 0.0});
    for (std::size_t n = 0; n < w; ++n)
        for (std::size_t m = 0; m < w; ++m) out[n] += a[m] * b[(n + w - m) % w];
    return out;
}

// Scatter-form linear convolution (accumulation order matches the library's
// gather form addition-for-addition, so equality is exact).
inline ComplexVec lin_conv_scatter(const ComplexVec& a, const ComplexVec& b) {
    ComplexVec out(a.size() + b.size() - 1, {0.0, 0.0});
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

inline ComplexVec random_complex(std::size_t n, csilab::Rng& rng, double sigma = 1.0) {
    ComplexVec v(n);
    for (auto& z : v) z = cplx(sigma * rng.gaussian(), sigma * rng.gaussian());
    return v;
}

inline double max_abs_diff(const ComplexVec& a, const ComplexVec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double norm2(const ComplexVec& a) {
    double acc = 0.0;
    for (const auto& z : a) acc += std::norm(z);
    return acc;
}

// Brute-force 2-D autocorrelation R[u,v] = sum X[b,w] conj(X[b-u,w-v]) as an
// explicitly indexed quadruple loop over the output grid.
inline Eigen::VectorXd xcorr2d_bruteforce(const Eigen::MatrixXcd& x) {
    const long b_n = x.rows(), t_n = x.cols();
    const long u_n = 2 * b_n - 1, v_n = 2 * t_n - 1;
    Eigen::VectorXd out(2 * u_n * v_n);
    for (long u = -(b_n - 1); u <= b_n - 1; ++u)
        for (long v = -(t_n - 1); v <= t_n - 1; ++v) {
            std::complex<double> acc(0.0, 0.0);
            for (long b = 0; b < b_n; ++b)
                for (long w = 0; w < t_n; ++w) {
                    const long bb = b - u, ww = w - v;
                    if (bb >= 0 && bb < b_n && ww >= 0 && ww < t_n)
                        acc += x(b, w) * std::conj(x(bb, ww));
                }
            const long idx = (u + b_n - 1) * v_n + (v + t_n - 1);
            out(idx) = acc.real();
            out(u_n * v_n + idx) = acc.imag();
        }
    return out;
}

} // namespace oracles
