#pragma once

// Minimal n-dimensional tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations record their
// inputs and a backward closure only when at least one input requires a
// gradient and recording is enabled, so inference builds no graph at all.
// Values are stored row-major. The scalar type is a template parameter; the
// library ships explicit instantiations for float (training and inference)
// and double (finite-difference replays in tests).

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rtsrts::tensor {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  // Mutable access for leaves (parameters, inputs). Mutating a tensor that
  // participates in a recorded graph invalidates that graph.
  std::span<T> mutable_values() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  void zero_grad();

  // Fresh leaf sharing no graph with this one (values copied).
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Graph recording switch for the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds a result node. When recording is active and any parent requires a
// gradient, the node keeps `parents` and `backward_fn`; otherwise both are
// dropped. Custom fused operations (losses, gating maps) use this directly.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn);

// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node that
// requires a gradient. Leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- convolution family -------------------------------------------------

// input [C_in,H,W], kernel [C_out,C_in,k,k] -> [C_out,H',W'].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding);

// input [C_in,D,H,W], kernel [C_out,C_in,k,k,k].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding);

// input [C_in,D,H,W], kernel [C_in,C_out,k,k,k] (adjoint layout of conv3d).
// Output extent per axis: (n-1)*stride - 2*padding + k + output_padding.
template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                           int padding, int output_padding);

// ---- normalization and activations --------------------------------------

// Per-channel standardization over all trailing axes, followed by an optional
// per-channel affine map. `gamma`/`beta` may be undefined (identity).
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                        T eps = T(1e-5));

// Softmax across the leading (channel) axis at every trailing location.
template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& input);

// Softmax along the last axis of a rank-2 tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& input);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// Elementwise f with derivative df (both evaluated at the input value).
template <typename T>
Tensor<T> unary(const Tensor<T>& x, std::function<T(T)> f, std::function<T(T)> df,
                const char* op = "unary");

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);

// ---- linear algebra -----------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// ---- elementwise arithmetic --------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// x * s where s holds a single element.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, const Tensor<T>& s);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);
// x[C,...] + bias[C] broadcast over trailing axes.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);
// x[C,...] * map[1,...] broadcast over channels.
template <typename T>
Tensor<T> mul_channel_map(const Tensor<T>& x, const Tensor<T>& map);

// ---- reductions ---------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// ---- data movement ------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Concatenation along axis 0; trailing extents must agree.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
// Channels [begin, end) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);
// [C,H,W] -> [C,depth,H,W] by stacking identical copies.
template <typename T>
Tensor<T> repeat_depth(const Tensor<T>& x, std::int64_t depth);

// Narrowing/widening copy into a fresh leaf of another scalar type.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x, bool requires_grad = false);

}  // namespace rtsrts::tensor
