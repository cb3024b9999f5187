#pragma once

#include <Eigen/Dense>

namespace csilab::kernels {

// Full 2-D self-cross-correlation of a B x T complex matrix:
//   R[u,v] = sum_{b,w} X[b,w] * conj(X[b-u, w-v]),
// u in [-(B-1), B-1], v in [-(T-1), T-1], returned as a stacked real vector
// [vec(Re R); vec(Im R)] with vec row-major in (u, v). Shared by the plain
// feature pipeline and the autodiff node so both produce identical bits.
Eigen::VectorXd xcorr2d_stack(const Eigen::MatrixXcd& x);

// v / max(||v||, 1e-12); the guard keeps degenerate inputs NaN-free.
Eigen::VectorXd normalize_guarded(const Eigen::VectorXd& v);

inline constexpr double kNormGuard = 1e-12;

} // namespace csilab::kernels
