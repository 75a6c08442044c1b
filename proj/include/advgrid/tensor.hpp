#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace advgrid {

namespace detail {
struct TensorNode;
}

/// Dense double-precision tensor with an optional autodiff graph behind it.
///
/// Tensors are immutable after construction. Every operation validates its
/// result for NaN/Inf and throws if the values are not finite. Layout is
/// batch-first (N x C x H x W) for image data; shape is arbitrary otherwise.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    const std::vector<double>& values() const;
    int size() const;
    /// Value of a one-element tensor; throws otherwise.
    double value() const;
    bool requires_grad() const;

    /// Same values, no graph, no gradient tracking.
    Tensor detached() const;

  private:
    std::shared_ptr<detail::TensorNode> node_;

    friend class GradTape;
    friend struct OpAccess;
};

/// Records the operation graph reachable from a scalar loss and accumulates
/// reverse-mode gradients. Each recorded node is visited exactly once, in
/// reverse topological order. A tape is confined to one thread; independent
/// tapes may run concurrently.
class GradTape {
  public:
    explicit GradTape(const Tensor& loss);

    void backward();

    /// Gradient of the loss w.r.t. `t`. Zero if `t` never influenced the
    /// loss; throws if `t` is detached (requires_grad == false).
    Tensor gradient_of(const Tensor& t) const;

  private:
    std::shared_ptr<detail::TensorNode> root_;
    std::vector<detail::TensorNode*> order_;
    std::unordered_map<const detail::TensorNode*, std::vector<double>> grads_;
    bool ran_ = false;
};

/// Reverse-mode gradients of a scalar loss w.r.t. each tensor in `wrt`,
/// returned in the same order.
std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt);

// ---- primitives -----------------------------------------------------------

/// Affine map: x [N,K] * weight [K,M] + bias [M] -> [N,M].
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// 2-D convolution with zero padding: x [N,C,H,W], kernel [F,C,kh,kw],
/// bias [F] -> [N,F,Ho,Wo] with Ho = (H + 2*pad - kh)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride = 1,
              int padding = 0);

Tensor relu(const Tensor& x);

/// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
Tensor max_pool2x2(const Tensor& x);

/// [N,C,H,W] -> [N,C], mean over the spatial dims.
Tensor global_avg_pool(const Tensor& x);

/// [N,...] -> [N,rest].
Tensor flatten(const Tensor& x);

/// Elementwise sum of two equally shaped tensors (residual connections).
Tensor add(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);

/// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

Tensor clamp(const Tensor& x, double lo, double hi);

/// Mean over the batch of -log softmax(logits)[label]; logits [N,M],
/// labels[i] in [0,M). Returns a scalar.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Row-wise softmax of logits [N,M], computed outside the graph.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

}  // namespace advgrid
