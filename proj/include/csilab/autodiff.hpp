#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <vector>

namespace csilab::diff {

using Mat = Eigen::MatrixXd;

/// Reverse-mode tape over real matrices. Nodes are created eagerly (forward
/// values cached at construction), so ids are already in topological order and
/// backward() visits them in reverse exactly once. Complex quantities travel
/// as pairs of real nodes. One tape per thread; tapes are not shared.
class Tape {
public:
    struct CVec {
        int re = -1;
        int im = -1;
    };

    int leaf(Mat v);
    int constant(Mat v);

    // a + b; b may be a column vector broadcast across a's columns, or 1x1.
    int add(int a, int b);
    // elementwise a ⊙ b; b may be 1x1 (scalar broadcast).
    int mul(int a, int b);
    int matmul(int a, int b);
    int relu(int a);
    int square(int a);
    int sqrt_(int a);       // requires positive entries
    int reciprocal(int a);  // requires nonzero entries
    int log_(int a);
    int log2_(int a);
    int exp_(int a);
    // elementwise complex magnitude of a re/im pair; gradient denominator
    // guarded by max(|z|, 1e-12).
    int abs_c(int re, int im);
    int sum(int a);  // 1x1 total
    int concat_rows(const std::vector<int>& parts);
    int slice(int a, long row0, long col0, long rows, long cols);
    int l2norm(int a);    // 1x1, gradient guarded
    int normalize(int a); // a / max(||a||_2, 1e-12) over all entries
    int softmax_cols(int a);
    // Train-mode batch norm over columns: per-row batch statistics. The batch
    // mean/var are exposed through batch_stats() for running-average updates.
    int batchnorm_train(int x, int gamma, int beta, double eps);
    // Inference-mode batch norm with fixed running statistics.
    int batchnorm_infer(int x, int gamma, int beta, const Eigen::VectorXd& mean,
                        const Eigen::VectorXd& var, double eps);
    int clamp(int a, double lo, double hi);
    int scale(int a, double s);
    int add_scalar(int a, double s);

    // ---- complex helpers -------------------------------------------------
    CVec complex_leaf(const Eigen::VectorXd& re, const Eigen::VectorXd& im);
    CVec complex_constant(const Eigen::VectorXd& re, const Eigen::VectorXd& im);
    CVec cmul(CVec a, CVec b);
    CVec cscale(CVec a, double s);
    // Unitary W-point (I)DFT of the zero-padded input pair, registered as a
    // fixed linear map whose adjoint is the conjugate-transpose map.
    CVec dft_map(CVec x, std::size_t out_len, bool inverse);
    // Fused F1 correlation: rows form a B x T complex matrix; output is
    // [vec(Re R); vec(Im R)] of the full 2-D self-cross-correlation.
    int xcorr2d(const std::vector<CVec>& rows);

    void backward(int root);

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].adj; }
    // (mean, var) cached by the most recent batchnorm_train node `id`.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> batch_stats(int id) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, Const, Add, Mul, MatMul, Relu, Square, Sqrt, Reciprocal, Log, Log2,
        Exp, AbsC, Sum, ConcatRows, Slice, L2Norm, Normalize, SoftmaxCols,
        BnTrain, BnInfer, Clamp, Scale, AddScalar, DftStack, XCorr2d
    };

    struct Node {
        Op op;
        std::vector<int> in;
        Mat val;
        Mat adj;
        bool needs_grad = false;
        // op-specific payload
        double s0 = 0.0, s1 = 0.0;
        long i0 = 0, i1 = 0, i2 = 0, i3 = 0;
        Mat aux0, aux1;  // BN: xhat / inv-std (+ running stats for infer)
    };

    int push(Node n);
    const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    void backprop(std::size_t idx);

    std::vector<Node> nodes_;
};

/// Max over leaf coordinates of |analytic - numeric| / max(1e-8, |numeric|),
/// numeric = central finite differences with step 1e-5. The builder must
/// return a scalar (1x1) root.
double grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                  const std::vector<Mat>& leaves, double step = 1e-5);

} // namespace csilab::diff
