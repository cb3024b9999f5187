#include "csilab/autodiff.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "csilab/kernels.hpp"
#include "csilab/ofdm.hpp"

namespace csilab::diff {

namespace {
constexpr double kGuard = kernels::kNormGuard;
constexpr double kLn2 = 0.69314718055994530941723212145818;
} // namespace

int Tape::push(Node n) {
    for (int id : n.in) {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw std::invalid_argument("tape: input node id out of range");
        n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(id)].needs_grad;
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Mat v) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(v);
    n.needs_grad = true;
    return push(std::move(n));
}

int Tape::constant(Mat v) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(v);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    if (x.rows() == y.rows() && x.cols() == y.cols()) {
        n.val = x + y;
    } else if (y.rows() == x.rows() && y.cols() == 1) {
        n.val = x.colwise() + y.col(0);
    } else if (y.size() == 1) {
        n.val = x.array() + y(0, 0);
    } else {
        throw std::invalid_argument("add: shape mismatch");
    }
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    if (x.rows() == y.rows() && x.cols() == y.cols()) {
        n.val = x.cwiseProduct(y);
    } else if (y.size() == 1) {
        n.val = x * y(0, 0);
    } else {
        throw std::invalid_argument("mul: shape mismatch");
    }
    return push(std::move(n));
}

int Tape::matmul(int a, int b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    if (x.cols() != y.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.val = x * y;
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.in = {a};
    n.val = val(a).cwiseMax(0.0);
    return push(std::move(n));
}

int Tape::square(int a) {
    Node n;
    n.op = Op::Square;
    n.in = {a};
    n.val = val(a).array().square();
    return push(std::move(n));
}

int Tape::sqrt_(int a) {
    Node n;
    n.op = Op::Sqrt;
    n.in = {a};
    n.val = val(a).array().sqrt();
    return push(std::move(n));
}

int Tape::reciprocal(int a) {
    Node n;
    n.op = Op::Reciprocal;
    n.in = {a};
    n.val = val(a).array().inverse();
    return push(std::move(n));
}

int Tape::log_(int a) {
    Node n;
    n.op = Op::Log;
    n.in = {a};
    n.val = val(a).array().log();
    return push(std::move(n));
}

int Tape::log2_(int a) {
    Node n;
    n.op = Op::Log2;
    n.in = {a};
    n.val = val(a).array().log() / kLn2;
    return push(std::move(n));
}

int Tape::exp_(int a) {
    Node n;
    n.op = Op::Exp;
    n.in = {a};
    n.val = val(a).array().exp();
    return push(std::move(n));
}

int Tape::abs_c(int re, int im) {
    const Mat& x = val(re);
    const Mat& y = val(im);
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw std::invalid_argument("abs_c: re/im shape mismatch");
    Node n;
    n.op = Op::AbsC;
    n.in = {re, im};
    n.val = (x.array().square() + y.array().square()).sqrt();
    return push(std::move(n));
}

int Tape::sum(int a) {
    Node n;
    n.op = Op::Sum;
    n.in = {a};
    n.val = Mat::Constant(1, 1, val(a).sum());
    return push(std::move(n));
}

int Tape::concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    long rows = 0;
    const long cols = val(parts.front()).cols();
    for (int p : parts) {
        if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += val(p).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.in = parts;
    n.val.resize(rows, cols);
    long r = 0;
    for (int p : parts) {
        n.val.middleRows(r, val(p).rows()) = val(p);
        r += val(p).rows();
    }
    return push(std::move(n));
}

int Tape::slice(int a, long row0, long col0, long rows, long cols) {
    const Mat& x = val(a);
    if (row0 < 0 || col0 < 0 || rows < 1 || cols < 1 || row0 + rows > x.rows() ||
        col0 + cols > x.cols())
        throw std::invalid_argument("slice: block out of range");
    Node n;
    n.op = Op::Slice;
    n.in = {a};
    n.i0 = row0;
    n.i1 = col0;
    n.i2 = rows;
    n.i3 = cols;
    n.val = x.block(row0, col0, rows, cols);
    return push(std::move(n));
}

int Tape::l2norm(int a) {
    Node n;
    n.op = Op::L2Norm;
    n.in = {a};
    n.val = Mat::Constant(1, 1, val(a).norm());
    return push(std::move(n));
}

int Tape::normalize(int a) {
    Node n;
    n.op = Op::Normalize;
    n.in = {a};
    const double nrm = std::max(val(a).norm(), kGuard);
    n.s0 = nrm;
    n.val = val(a) / nrm;
    return push(std::move(n));
}

int Tape::softmax_cols(int a) {
    const Mat& x = val(a);
    Node n;
    n.op = Op::SoftmaxCols;
    n.in = {a};
    n.val.resize(x.rows(), x.cols());
    for (long c = 0; c < x.cols(); ++c) {
        const double mx = x.col(c).maxCoeff();
        Eigen::VectorXd e = (x.col(c).array() - mx).exp();
        n.val.col(c) = e / e.sum();
    }
    return push(std::move(n));
}

int Tape::batchnorm_train(int x, int gamma, int beta, double eps) {
    const Mat& v = val(x);
    const Mat& g = val(gamma);
    const Mat& b = val(beta);
    if (g.cols() != 1 || b.cols() != 1 || g.rows() != v.rows() || b.rows() != v.rows())
        throw std::invalid_argument("batchnorm_train: parameter shape mismatch");
    const double n_cols = static_cast<double>(v.cols());
    Eigen::VectorXd mean = v.rowwise().mean();
    Mat centered = v.colwise() - mean;
    Eigen::VectorXd var = centered.array().square().rowwise().sum() / n_cols;
    Eigen::VectorXd istd = (var.array() + eps).rsqrt();
    Node n;
    n.op = Op::BnTrain;
    n.in = {x, gamma, beta};
    n.aux0 = centered.array().colwise() * istd.array();  // xhat
    n.aux1.resize(v.rows(), 3);
    n.aux1.col(0) = istd;
    n.aux1.col(1) = mean;
    n.aux1.col(2) = var;
    n.val = (n.aux0.array().colwise() * g.col(0).array()).colwise() + b.col(0).array();
    return push(std::move(n));
}

int Tape::batchnorm_infer(int x, int gamma, int beta, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& var, double eps) {
    const Mat& v = val(x);
    const Mat& g = val(gamma);
    const Mat& b = val(beta);
    if (g.cols() != 1 || b.cols() != 1 || g.rows() != v.rows() || b.rows() != v.rows() ||
        mean.size() != v.rows() || var.size() != v.rows())
        throw std::invalid_argument("batchnorm_infer: parameter shape mismatch");
    Eigen::VectorXd istd = (var.array() + eps).rsqrt();
    Node n;
    n.op = Op::BnInfer;
    n.in = {x, gamma, beta};
    n.aux0 = ((v.colwise() - mean).array().colwise() * istd.array()).matrix();  // xhat
    n.aux1.resize(v.rows(), 1);
    n.aux1.col(0) = istd;
    n.val = (n.aux0.array().colwise() * g.col(0).array()).colwise() + b.col(0).array();
    return push(std::move(n));
}

int Tape::clamp(int a, double lo, double hi) {
    Node n;
    n.op = Op::Clamp;
    n.in = {a};
    n.s0 = lo;
    n.s1 = hi;
    n.val = val(a).cwiseMax(lo).cwiseMin(hi);
    return push(std::move(n));
}

int Tape::scale(int a, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {a};
    n.s0 = s;
    n.val = val(a) * s;
    return push(std::move(n));
}

int Tape::add_scalar(int a, double s) {
    Node n;
    n.op = Op::AddScalar;
    n.in = {a};
    n.s0 = s;
    n.val = val(a).array() + s;
    return push(std::move(n));
}

Tape::CVec Tape::complex_leaf(const Eigen::VectorXd& re, const Eigen::VectorXd& im) {
    return {leaf(re), leaf(im)};
}

Tape::CVec Tape::complex_constant(const Eigen::VectorXd& re, const Eigen::VectorXd& im) {
    return {constant(re), constant(im)};
}

Tape::CVec Tape::cmul(CVec a, CVec b) {
    const int rr = mul(a.re, b.re);
    const int ii = mul(a.im, b.im);
    const int ri = mul(a.re, b.im);
    const int ir = mul(a.im, b.re);
    return {add(rr, scale(ii, -1.0)), add(ri, ir)};
}

Tape::CVec Tape::cscale(CVec a, double s) { return {scale(a.re, s), scale(a.im, s)}; }

Tape::CVec Tape::dft_map(CVec x, std::size_t out_len, bool inverse) {
    const Mat& re = val(x.re);
    const Mat& im = val(x.im);
    if (re.cols() != 1 || im.cols() != 1 || re.rows() != im.rows())
        throw std::invalid_argument("dft_map: expects matching column vectors");
    if (static_cast<std::size_t>(re.rows()) > out_len)
        throw std::invalid_argument("dft_map: input longer than transform length");
    ofdm::ComplexVec in(out_len, {0.0, 0.0});
    for (long i = 0; i < re.rows(); ++i) in[static_cast<std::size_t>(i)] = {re(i, 0), im(i, 0)};
    const ofdm::ComplexVec out = inverse ? ofdm::idft(in) : ofdm::dft(in);
    Node n;
    n.op = Op::DftStack;
    n.in = {x.re, x.im};
    n.i0 = static_cast<long>(out_len);
    n.i1 = inverse ? 1 : 0;
    n.i2 = re.rows();  // input length before zero-padding
    n.val.resize(2 * static_cast<long>(out_len), 1);
    for (std::size_t i = 0; i < out_len; ++i) {
        n.val(static_cast<long>(i), 0) = out[i].real();
        n.val(static_cast<long>(i + out_len), 0) = out[i].imag();
    }
    const int stacked = push(std::move(n));
    const long w = static_cast<long>(out_len);
    return {slice(stacked, 0, 0, w, 1), slice(stacked, w, 0, w, 1)};
}

int Tape::xcorr2d(const std::vector<CVec>& rows) {
    if (rows.empty()) throw std::invalid_argument("xcorr2d: no rows");
    const long t_n = val(rows.front().re).rows();
    Node n;
    n.op = Op::XCorr2d;
    Eigen::MatrixXcd x(static_cast<long>(rows.size()), t_n);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const Mat& re = val(rows[b].re);
        const Mat& im = val(rows[b].im);
        if (re.cols() != 1 || im.cols() != 1 || re.rows() != t_n || im.rows() != t_n)
            throw std::invalid_argument("xcorr2d: row shape mismatch");
        n.in.push_back(rows[b].re);
        n.in.push_back(rows[b].im);
        for (long w = 0; w < t_n; ++w)
            x(static_cast<long>(b), w) = std::complex<double>(re(w, 0), im(w, 0));
    }
    n.i0 = static_cast<long>(rows.size());
    n.i1 = t_n;
    n.val = kernels::xcorr2d_stack(x);
    return push(std::move(n));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Tape::batch_stats(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op != Op::BnTrain) throw std::invalid_argument("batch_stats: not a batchnorm_train node");
    return {n.aux1.col(1), n.aux1.col(2)};
}

void Tape::backward(int root) {
    if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size())
        throw std::invalid_argument("backward: bad root id");
    if (nodes_[static_cast<std::size_t>(root)].val.size() != 1)
        throw std::invalid_argument("backward: root is not a scalar");
    for (auto& n : nodes_) n.adj = Mat::Zero(n.val.rows(), n.val.cols());
    nodes_[static_cast<std::size_t>(root)].adj(0, 0) = 1.0;
    for (std::size_t i = static_cast<std::size_t>(root) + 1; i-- > 0;) {
        if (!nodes_[i].needs_grad) continue;
        if (nodes_[i].adj.isZero(0.0)) continue;
        backprop(i);
    }
}

void Tape::backprop(std::size_t idx) {
    Node& n = nodes_[idx];
    auto adj_of = [&](int k) -> Mat& { return nodes_[static_cast<std::size_t>(k)].adj; };
    auto val_of = [&](int k) -> const Mat& { return nodes_[static_cast<std::size_t>(k)].val; };
    const Mat& g = n.adj;
    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::Add: {
            const Mat& y = val_of(n.in[1]);
            adj_of(n.in[0]) += g;
            if (y.rows() == g.rows() && y.cols() == g.cols()) {
                adj_of(n.in[1]) += g;
            } else if (y.cols() == 1 && y.rows() == g.rows()) {
                adj_of(n.in[1]) += g.rowwise().sum();
            } else {
                adj_of(n.in[1])(0, 0) += g.sum();
            }
            break;
        }
        case Op::Mul: {
            const Mat& x = val_of(n.in[0]);
            const Mat& y = val_of(n.in[1]);
            if (y.rows() == x.rows() && y.cols() == x.cols()) {
                adj_of(n.in[0]) += g.cwiseProduct(y);
                adj_of(n.in[1]) += g.cwiseProduct(x);
            } else {
                adj_of(n.in[0]) += g * y(0, 0);
                adj_of(n.in[1])(0, 0) += g.cwiseProduct(x).sum();
            }
            break;
        }
        case Op::MatMul:
            adj_of(n.in[0]) += g * val_of(n.in[1]).transpose();
            adj_of(n.in[1]) += val_of(n.in[0]).transpose() * g;
            break;
        case Op::Relu:
            adj_of(n.in[0]) +=
                g.cwiseProduct((val_of(n.in[0]).array() > 0.0).cast<double>().matrix());
            break;
        case Op::Square:
            adj_of(n.in[0]) += 2.0 * g.cwiseProduct(val_of(n.in[0]));
            break;
        case Op::Sqrt:
            adj_of(n.in[0]) += (g.array() * 0.5 / n.val.array()).matrix();
            break;
        case Op::Reciprocal:
            adj_of(n.in[0]) -= g.cwiseProduct(n.val.array().square().matrix());
            break;
        case Op::Log:
            adj_of(n.in[0]) += (g.array() / val_of(n.in[0]).array()).matrix();
            break;
        case Op::Log2:
            adj_of(n.in[0]) += (g.array() / (val_of(n.in[0]).array() * kLn2)).matrix();
            break;
        case Op::Exp:
            adj_of(n.in[0]) += g.cwiseProduct(n.val);
            break;
        case Op::AbsC: {
            const Mat denom = n.val.cwiseMax(kGuard);
            adj_of(n.in[0]) += (g.array() * val_of(n.in[0]).array() / denom.array()).matrix();
            adj_of(n.in[1]) += (g.array() * val_of(n.in[1]).array() / denom.array()).matrix();
            break;
        }
        case Op::Sum:
            adj_of(n.in[0]).array() += g(0, 0);
            break;
        case Op::ConcatRows: {
            long r = 0;
            for (int p : n.in) {
                adj_of(p) += g.middleRows(r, val_of(p).rows());
                r += val_of(p).rows();
            }
            break;
        }
        case Op::Slice:
            adj_of(n.in[0]).block(n.i0, n.i1, n.i2, n.i3) += g;
            break;
        case Op::L2Norm: {
            const double nrm = std::max(n.val(0, 0), kGuard);
            adj_of(n.in[0]) += (g(0, 0) / nrm) * val_of(n.in[0]);
            break;
        }
        case Op::Normalize: {
            const double dot = n.val.cwiseProduct(g).sum();
            adj_of(n.in[0]) += (g - dot * n.val) / n.s0;
            break;
        }
        case Op::SoftmaxCols: {
            Mat& dx = adj_of(n.in[0]);
            for (long c = 0; c < g.cols(); ++c) {
                const double dot = n.val.col(c).dot(g.col(c));
                dx.col(c) += n.val.col(c).cwiseProduct((g.col(c).array() - dot).matrix());
            }
            break;
        }
        case Op::BnTrain: {
            const Mat& xhat = n.aux0;
            const Eigen::VectorXd istd = n.aux1.col(0);
            const Eigen::VectorXd gamma = val_of(n.in[1]).col(0);
            const double n_cols = static_cast<double>(g.cols());
            Eigen::VectorXd dbeta = g.rowwise().sum();
            Eigen::VectorXd dgamma = g.cwiseProduct(xhat).rowwise().sum();
            Mat dxhat = g.array().colwise() * gamma.array();
            Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
            Eigen::VectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
            Mat dx = n_cols * dxhat;
            dx.colwise() -= sum_dxhat;
            dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
            dx = (dx.array().colwise() * (istd.array() / n_cols)).matrix();
            adj_of(n.in[0]) += dx;
            adj_of(n.in[1]).col(0) += dgamma;
            adj_of(n.in[2]).col(0) += dbeta;
            break;
        }
        case Op::BnInfer: {
            const Mat& xhat = n.aux0;
            const Eigen::VectorXd istd = n.aux1.col(0);
            const Eigen::VectorXd gamma = val_of(n.in[1]).col(0);
            adj_of(n.in[0]) += (g.array().colwise() * (gamma.array() * istd.array())).matrix();
            adj_of(n.in[1]).col(0) += g.cwiseProduct(xhat).rowwise().sum();
            adj_of(n.in[2]).col(0) += g.rowwise().sum();
            break;
        }
        case Op::Clamp: {
            const Mat& x = val_of(n.in[0]);
            adj_of(n.in[0]) +=
                g.cwiseProduct(((x.array() >= n.s0) && (x.array() <= n.s1)).cast<double>().matrix());
            break;
        }
        case Op::Scale:
            adj_of(n.in[0]) += g * n.s0;
            break;
        case Op::AddScalar:
            adj_of(n.in[0]) += g;
            break;
        case Op::DftStack: {
            const std::size_t w = static_cast<std::size_t>(n.i0);
            const bool inverse = n.i1 != 0;
            ofdm::ComplexVec gz(w);
            for (std::size_t i = 0; i < w; ++i)
                gz[i] = {g(static_cast<long>(i), 0), g(static_cast<long>(i + w), 0)};
            // adjoint of the unitary map is its inverse
            const ofdm::ComplexVec back = inverse ? ofdm::dft(gz) : ofdm::idft(gz);
            const long in_len = n.i2;
            Mat& dre = adj_of(n.in[0]);
            Mat& dim = adj_of(n.in[1]);
            for (long i = 0; i < in_len; ++i) {
                dre(i, 0) += back[static_cast<std::size_t>(i)].real();
                dim(i, 0) += back[static_cast<std::size_t>(i)].imag();
            }
            break;
        }
        case Op::XCorr2d: {
            const long b_n = n.i0;
            const long t_n = n.i1;
            const long u_n = 2 * b_n - 1;
            const long v_n = 2 * t_n - 1;
            const long m = u_n * v_n;
            Eigen::MatrixXcd x(b_n, t_n);
            for (long b = 0; b < b_n; ++b) {
                const Mat& re = val_of(n.in[static_cast<std::size_t>(2 * b)]);
                const Mat& im = val_of(n.in[static_cast<std::size_t>(2 * b + 1)]);
                for (long w = 0; w < t_n; ++w)
                    x(b, w) = std::complex<double>(re(w, 0), im(w, 0));
            }
            Eigen::MatrixXcd xt = Eigen::MatrixXcd::Zero(b_n, t_n);
            for (long iu = 0; iu < u_n; ++iu) {
                const long u = iu - (b_n - 1);
                const long b_lo = std::max<long>(0, u);
                const long b_hi = std::min(b_n - 1, b_n - 1 + u);
                for (long iv = 0; iv < v_n; ++iv) {
                    const long v = iv - (t_n - 1);
                    const long w_lo = std::max<long>(0, v);
                    const long w_hi = std::min(t_n - 1, t_n - 1 + v);
                    const long idx = iu * v_n + iv;
                    const std::complex<double> rt(g(idx, 0), g(m + idx, 0));
                    if (rt == std::complex<double>(0.0, 0.0)) continue;
                    const std::complex<double> rtc = std::conj(rt);
                    for (long b = b_lo; b <= b_hi; ++b)
                        for (long w = w_lo; w <= w_hi; ++w) {
                            xt(b, w) += rt * x(b - u, w - v);
                            xt(b - u, w - v) += rtc * x(b, w);
                        }
                }
            }
            for (long b = 0; b < b_n; ++b) {
                Mat& dre = adj_of(n.in[static_cast<std::size_t>(2 * b)]);
                Mat& dim = adj_of(n.in[static_cast<std::size_t>(2 * b + 1)]);
                for (long w = 0; w < t_n; ++w) {
                    dre(w, 0) += xt(b, w).real();
                    dim(w, 0) += xt(b, w).imag();
                }
            }
            break;
        }
    }
}

double grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                  const std::vector<Mat>& leaves, double step) {
    Tape tape;
    std::vector<int> ids;
    ids.reserve(leaves.size());
    for (const auto& l : leaves) ids.push_back(tape.leaf(l));
    const int root = build(tape, ids);
    if (tape.value(root).size() != 1)
        throw std::invalid_argument("grad_check: builder must return a scalar root");
    tape.backward(root);

    auto eval_at = [&](const std::vector<Mat>& pts) {
        Tape t;
        std::vector<int> lids;
        lids.reserve(pts.size());
        for (const auto& l : pts) lids.push_back(t.leaf(l));
        return t.value(build(t, lids))(0, 0);
    };

    double max_rel = 0.0;
    std::vector<Mat> work = leaves;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (long i = 0; i < leaves[li].size(); ++i) {
            const double orig = work[li](i);
            work[li](i) = orig + step;
            const double fp = eval_at(work);
            work[li](i) = orig - step;
            const double fm = eval_at(work);
            work[li](i) = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = tape.grad(ids[li])(i);
            const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace csilab::diff
