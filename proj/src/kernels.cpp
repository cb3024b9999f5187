#include "csilab/kernels.hpp"

#include <complex>

namespace csilab::kernels {

Eigen::VectorXd xcorr2d_stack(const Eigen::MatrixXcd& x) {
    const long b_n = x.rows();
    const long t_n = x.cols();
    const long u_n = 2 * b_n - 1;
    const long v_n = 2 * t_n - 1;
    const long m = u_n * v_n;
    Eigen::VectorXd out(2 * m);
    for (long iu = 0; iu < u_n; ++iu) {
        const long u = iu - (b_n - 1);
        const long b_lo = std::max<long>(0, u);
        const long b_hi = std::min(b_n - 1, b_n - 1 + u);
        for (long iv = 0; iv < v_n; ++iv) {
            const long v = iv - (t_n - 1);
            const long w_lo = std::max<long>(0, v);
            const long w_hi = std::min(t_n - 1, t_n - 1 + v);
            std::complex<double> acc(0.0, 0.0);
            for (long b = b_lo; b <= b_hi; ++b)
                for (long w = w_lo; w <= w_hi; ++w)
                    acc += x(b, w) * std::conj(x(b - u, w - v));
            const long idx = iu * v_n + iv;
            out(idx) = acc.real();
            out(m + idx) = acc.imag();
        }
    }
    return out;
}

Eigen::VectorXd normalize_guarded(const Eigen::VectorXd& v) {
    const double n = std::max(v.norm(), kNormGuard);
    return v / n;
}

} // namespace csilab::kernels
