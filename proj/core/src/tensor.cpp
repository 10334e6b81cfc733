#include "rtsrts/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rtsrts/error.hpp"

namespace rtsrts::tensor {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

template <typename T>
void accumulate(Node<T>& dst, const std::vector<T>& src) {
  dst.ensure_grad();
  for (std::size_t i = 0; i < src.size(); ++i) dst.grad[i] += src[i];
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

// Strided cross-correlation over three spatial axes. conv2d runs through the
// same kernels with a unit depth axis.
struct ConvGeom {
  std::int64_t cin = 0, cout = 0;
  std::int64_t in[3] = {1, 1, 1};
  std::int64_t out[3] = {1, 1, 1};
  std::int64_t k[3] = {1, 1, 1};
  std::int64_t stride[3] = {1, 1, 1};
  std::int64_t pad[3] = {0, 0, 0};

  std::int64_t in_size() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_size() const { return out[0] * out[1] * out[2]; }
  std::int64_t k_size() const { return k[0] * k[1] * k[2]; }

  // Inclusive range of output indices along `axis` whose input tap at kernel
  // offset `kk` lands inside the input.
  void valid(int axis, std::int64_t kk, std::int64_t& lo, std::int64_t& hi) const {
    lo = std::max<std::int64_t>(0, ceil_div(pad[axis] - kk, stride[axis]));
    hi = std::min<std::int64_t>(out[axis] - 1,
                                floor_div(in[axis] - 1 + pad[axis] - kk, stride[axis]));
  }
};

// y[co] += sum_ci w[co,ci] * x[ci]
template <typename T>
void conv_forward(const ConvGeom& g, const T* x, const T* w, T* y) {
  const std::int64_t in_sz = g.in_size(), out_sz = g.out_size(), ksz = g.k_size();
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < g.cout; ++co) {
    T* yc = y + co * out_sz;
    for (std::int64_t ci = 0; ci < g.cin; ++ci) {
      const T* xc = x + ci * in_sz;
      const T* wk = w + (co * g.cin + ci) * ksz;
      for (std::int64_t kd = 0; kd < g.k[0]; ++kd) {
        std::int64_t d_lo, d_hi;
        g.valid(0, kd, d_lo, d_hi);
        for (std::int64_t kh = 0; kh < g.k[1]; ++kh) {
          std::int64_t h_lo, h_hi;
          g.valid(1, kh, h_lo, h_hi);
          for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
            std::int64_t w_lo, w_hi;
            g.valid(2, kw, w_lo, w_hi);
            if (w_lo > w_hi) continue;
            const T wv = wk[(kd * g.k[1] + kh) * g.k[2] + kw];
            for (std::int64_t od = d_lo; od <= d_hi; ++od) {
              const std::int64_t id = od * g.stride[0] - g.pad[0] + kd;
              for (std::int64_t oh = h_lo; oh <= h_hi; ++oh) {
                const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kh;
                T* yrow = yc + (od * g.out[1] + oh) * g.out[2];
                const T* xrow = xc + (id * g.in[1] + ih) * g.in[2] - g.pad[2] + kw;
                if (g.stride[2] == 1) {
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) yrow[ow] += wv * xrow[ow];
                } else {
                  const std::int64_t s = g.stride[2];
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) yrow[ow] += wv * xrow[ow * s];
                }
              }
            }
          }
        }
      }
    }
  }
}

// gx[ci] += sum_co w[co,ci]^T gy[co]   (adjoint of conv_forward in x)
template <typename T>
void conv_backward_data(const ConvGeom& g, const T* gy, const T* w, T* gx) {
  const std::int64_t in_sz = g.in_size(), out_sz = g.out_size(), ksz = g.k_size();
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    T* gxc = gx + ci * in_sz;
    for (std::int64_t co = 0; co < g.cout; ++co) {
      const T* gyc = gy + co * out_sz;
      const T* wk = w + (co * g.cin + ci) * ksz;
      for (std::int64_t kd = 0; kd < g.k[0]; ++kd) {
        std::int64_t d_lo, d_hi;
        g.valid(0, kd, d_lo, d_hi);
        for (std::int64_t kh = 0; kh < g.k[1]; ++kh) {
          std::int64_t h_lo, h_hi;
          g.valid(1, kh, h_lo, h_hi);
          for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
            std::int64_t w_lo, w_hi;
            g.valid(2, kw, w_lo, w_hi);
            if (w_lo > w_hi) continue;
            const T wv = wk[(kd * g.k[1] + kh) * g.k[2] + kw];
            for (std::int64_t od = d_lo; od <= d_hi; ++od) {
              const std::int64_t id = od * g.stride[0] - g.pad[0] + kd;
              for (std::int64_t oh = h_lo; oh <= h_hi; ++oh) {
                const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kh;
                const T* gyrow = gyc + (od * g.out[1] + oh) * g.out[2];
                T* gxrow = gxc + (id * g.in[1] + ih) * g.in[2] - g.pad[2] + kw;
                if (g.stride[2] == 1) {
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) gxrow[ow] += wv * gyrow[ow];
                } else {
                  const std::int64_t s = g.stride[2];
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) gxrow[ow * s] += wv * gyrow[ow];
                }
              }
            }
          }
        }
      }
    }
  }
}

// gw[co,ci] += correlation of gy[co] with x[ci]
template <typename T>
void conv_backward_weight(const ConvGeom& g, const T* x, const T* gy, T* gw) {
  const std::int64_t in_sz = g.in_size(), out_sz = g.out_size(), ksz = g.k_size();
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < g.cout; ++co) {
    const T* gyc = gy + co * out_sz;
    for (std::int64_t ci = 0; ci < g.cin; ++ci) {
      const T* xc = x + ci * in_sz;
      T* gwk = gw + (co * g.cin + ci) * ksz;
      for (std::int64_t kd = 0; kd < g.k[0]; ++kd) {
        std::int64_t d_lo, d_hi;
        g.valid(0, kd, d_lo, d_hi);
        for (std::int64_t kh = 0; kh < g.k[1]; ++kh) {
          std::int64_t h_lo, h_hi;
          g.valid(1, kh, h_lo, h_hi);
          for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
            std::int64_t w_lo, w_hi;
            g.valid(2, kw, w_lo, w_hi);
            if (w_lo > w_hi) continue;
            T acc = 0;
            for (std::int64_t od = d_lo; od <= d_hi; ++od) {
              const std::int64_t id = od * g.stride[0] - g.pad[0] + kd;
              for (std::int64_t oh = h_lo; oh <= h_hi; ++oh) {
                const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kh;
                const T* gyrow = gyc + (od * g.out[1] + oh) * g.out[2];
                const T* xrow = xc + (id * g.in[1] + ih) * g.in[2] - g.pad[2] + kw;
                if (g.stride[2] == 1) {
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) acc += gyrow[ow] * xrow[ow];
                } else {
                  const std::int64_t s = g.stride[2];
                  for (std::int64_t ow = w_lo; ow <= w_hi; ++ow) acc += gyrow[ow] * xrow[ow * s];
                }
              }
            }
            gwk[(kd * g.k[1] + kh) * g.k[2] + kw] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_impl(const Tensor<T>& input, const Tensor<T>& kernel, const ConvGeom& g,
                    Shape out_shape, const char* op) {
  std::vector<T> y(static_cast<std::size_t>(numel(out_shape)), T(0));
  conv_forward(g, input.values().data(), kernel.values().data(), y.data());
  return make_result<T>(std::move(out_shape), std::move(y), op, {input, kernel},
                        [g](Node<T>& self) {
                          Node<T>& x = *self.parents[0];
                          Node<T>& w = *self.parents[1];
                          if (x.requires_grad) {
                            x.ensure_grad();
                            conv_backward_data(g, self.grad.data(), w.value.data(), x.grad.data());
                          }
                          if (w.requires_grad) {
                            w.ensure_grad();
                            conv_backward_weight(g, x.value.data(), self.grad.data(),
                                                 w.grad.data());
                          }
                        });
}

std::int64_t conv_out_extent(std::int64_t n, std::int64_t k, std::int64_t stride,
                             std::int64_t pad) {
  return floor_div(n + 2 * pad - k, stride) + 1;
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node<T>>();
  node->value.assign(static_cast<std::size_t>(tensor::numel(shape)), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != tensor::numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->value, false);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  bool any = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  Node<T>* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), T(0));
  }
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- convolutions ----------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (input.dim(0) != kernel.dim(1)) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " has " +
                     std::to_string(input.dim(0)) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                     to_string(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeom g;
  g.cin = input.dim(0);
  g.cout = kernel.dim(0);
  g.in[1] = input.dim(1);
  g.in[2] = input.dim(2);
  g.k[1] = g.k[2] = kernel.dim(2);
  g.stride[1] = g.stride[2] = stride;
  g.pad[1] = g.pad[2] = padding;
  g.out[1] = conv_out_extent(g.in[1], g.k[1], stride, padding);
  g.out[2] = conv_out_extent(g.in[2], g.k[2], stride, padding);
  if (g.out[1] < 1 || g.out[2] < 1) {
    throw ShapeError("conv2d: empty output for input " + to_string(input.shape()) +
                     " and kernel " + to_string(kernel.shape()));
  }
  return conv_impl(input, kernel, g, {g.cout, g.out[1], g.out[2]}, "conv2d");
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
  require_rank(input, 4, "conv3d input");
  require_rank(kernel, 5, "conv3d kernel");
  if (input.dim(0) != kernel.dim(1)) {
    throw ShapeError("conv3d: input " + to_string(input.shape()) + " has " +
                     std::to_string(input.dim(0)) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(3) != kernel.dim(4) || kernel.dim(2) % 2 == 0) {
    throw ShapeError("conv3d: kernel must be cubic with odd extent, got " +
                     to_string(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv3d: invalid stride/padding");
  ConvGeom g;
  g.cin = input.dim(0);
  g.cout = kernel.dim(0);
  for (int a = 0; a < 3; ++a) {
    g.in[a] = input.dim(a + 1);
    g.k[a] = kernel.dim(a + 2);
    g.stride[a] = stride;
    g.pad[a] = padding;
    g.out[a] = conv_out_extent(g.in[a], g.k[a], stride, padding);
    if (g.out[a] < 1) {
      throw ShapeError("conv3d: empty output for input " + to_string(input.shape()) +
                       " and kernel " + to_string(kernel.shape()));
    }
  }
  return conv_impl(input, kernel, g, {g.cout, g.out[0], g.out[1], g.out[2]}, "conv3d");
}

template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                           int padding, int output_padding) {
  require_rank(input, 4, "conv_transpose3d input");
  require_rank(kernel, 5, "conv_transpose3d kernel");
  if (input.dim(0) != kernel.dim(0)) {
    throw ShapeError("conv_transpose3d: input " + to_string(input.shape()) + " has " +
                     std::to_string(input.dim(0)) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(0)));
  }
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(3) != kernel.dim(4)) {
    throw ShapeError("conv_transpose3d: kernel must be cubic, got " + to_string(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv_transpose3d: invalid stride/padding");
  if (output_padding < 0 || output_padding >= stride) {
    throw ShapeError("conv_transpose3d: output_padding " + std::to_string(output_padding) +
                     " must lie in [0, stride=" + std::to_string(stride) + ")");
  }
  // Geometry of the forward convolution this operator is the adjoint of:
  // it maps the transposed output (as conv input) back to `input`.
  ConvGeom g;
  g.cin = kernel.dim(1);
  g.cout = kernel.dim(0);
  for (int a = 0; a < 3; ++a) {
    g.k[a] = kernel.dim(a + 2);
    g.stride[a] = stride;
    g.pad[a] = padding;
    g.out[a] = input.dim(a + 1);
    g.in[a] = (g.out[a] - 1) * stride - 2 * padding + g.k[a] + output_padding;
    if (g.in[a] < 1 || conv_out_extent(g.in[a], g.k[a], stride, padding) != g.out[a]) {
      throw ShapeError("conv_transpose3d: inconsistent geometry for input " +
                       to_string(input.shape()) + ", kernel " + to_string(kernel.shape()) +
                       ", stride " + std::to_string(stride) + ", padding " +
                       std::to_string(padding) + ", output_padding " +
                       std::to_string(output_padding));
    }
  }
  Shape out_shape{g.cin, g.in[0], g.in[1], g.in[2]};
  std::vector<T> y(static_cast<std::size_t>(numel(out_shape)), T(0));
  conv_backward_data(g, input.values().data(), kernel.values().data(), y.data());
  return make_result<T>(std::move(out_shape), std::move(y), "conv_transpose3d", {input, kernel},
                        [g](Node<T>& self) {
                          Node<T>& x = *self.parents[0];
                          Node<T>& w = *self.parents[1];
                          if (x.requires_grad) {
                            x.ensure_grad();
                            conv_forward(g, self.grad.data(), w.value.data(), x.grad.data());
                          }
                          if (w.requires_grad) {
                            w.ensure_grad();
                            conv_backward_weight(g, self.grad.data(), x.value.data(),
                                                 w.grad.data());
                          }
                        });
}

// ---- normalization ---------------------------------------------------------

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                        T eps) {
  if (!input.defined() || input.rank() < 2) {
    throw ShapeError("instance_norm: expected [C, spatial...] input");
  }
  const std::int64_t channels = input.dim(0);
  const std::int64_t n = input.numel() / channels;
  if (n < 2) {
    throw ShapeError("instance_norm: each channel needs at least 2 spatial elements, got " +
                     to_string(input.shape()));
  }
  const bool affine = gamma.defined();
  if (affine && (!beta.defined() || gamma.numel() != channels || beta.numel() != channels)) {
    throw ShapeError("instance_norm: affine parameters must have " + std::to_string(channels) +
                     " entries");
  }
  auto xhat = std::make_shared<std::vector<T>>(input.values().begin(), input.values().end());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(channels));
  std::vector<T> y(xhat->size());
  const T* x = input.values().data();
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * n;
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += xc[i];
    const double mu = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = xc[i] - mu;
      ss += d * d;
    }
    const double var = ss / static_cast<double>(n);
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_std)[static_cast<std::size_t>(c)] = is;
    const T g = affine ? gamma.values()[static_cast<std::size_t>(c)] : T(1);
    const T b = affine ? beta.values()[static_cast<std::size_t>(c)] : T(0);
    T* hc = xhat->data() + c * n;
    T* yc = y.data() + c * n;
    for (std::int64_t i = 0; i < n; ++i) {
      hc[i] = static_cast<T>((xc[i] - mu) * is);
      yc[i] = g * hc[i] + b;
    }
  }
  std::vector<Tensor<T>> parents{input};
  if (affine) {
    parents.push_back(gamma);
    parents.push_back(beta);
  }
  return make_result<T>(
      input.shape(), std::move(y), "instance_norm", std::move(parents),
      [xhat, inv_std, channels, n, affine](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>* g = affine ? self.parents[1].get() : nullptr;
        Node<T>* b = affine ? self.parents[2].get() : nullptr;
        if (g && g->requires_grad) g->ensure_grad();
        if (b && b->requires_grad) b->ensure_grad();
        if (x.requires_grad) x.ensure_grad();
        for (std::int64_t c = 0; c < channels; ++c) {
          const T* gy = self.grad.data() + c * n;
          const T* hc = xhat->data() + c * n;
          double sum_gy = 0.0, sum_gy_h = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            sum_gy += gy[i];
            sum_gy_h += static_cast<double>(gy[i]) * hc[i];
          }
          const auto cu = static_cast<std::size_t>(c);
          if (g && g->requires_grad) g->grad[cu] += static_cast<T>(sum_gy_h);
          if (b && b->requires_grad) b->grad[cu] += static_cast<T>(sum_gy);
          if (x.requires_grad) {
            const double gam = g ? static_cast<double>(g->value[cu]) : 1.0;
            const double is = (*inv_std)[cu];
            const double mean_g = gam * sum_gy / static_cast<double>(n);
            const double mean_gh = gam * sum_gy_h / static_cast<double>(n);
            T* gx = x.grad.data() + c * n;
            for (std::int64_t i = 0; i < n; ++i) {
              gx[i] += static_cast<T>(is * (gam * gy[i] - mean_g - hc[i] * mean_gh));
            }
          }
        }
      });
}

// ---- softmax -----------------------------------------------------------------

namespace {

// Softmax over an axis of extent `len` with element stride `stride`, applied
// at `count` independent positions addressed by `base(j)`.
template <typename T, typename Base>
void softmax_lanes(const T* x, T* y, std::int64_t count, std::int64_t len, std::int64_t stride,
                   Base base) {
  for (std::int64_t j = 0; j < count; ++j) {
    const std::int64_t b0 = base(j);
    T mx = x[b0];
    for (std::int64_t c = 1; c < len; ++c) mx = std::max(mx, x[b0 + c * stride]);
    T s = 0;
    for (std::int64_t c = 0; c < len; ++c) {
      const T e = std::exp(x[b0 + c * stride] - mx);
      y[b0 + c * stride] = e;
      s += e;
    }
    const T inv = T(1) / s;
    for (std::int64_t c = 0; c < len; ++c) y[b0 + c * stride] *= inv;
  }
}

template <typename T, typename Base>
void softmax_lanes_backward(const T* y, const T* gy, T* gx, std::int64_t count, std::int64_t len,
                            std::int64_t stride, Base base) {
  for (std::int64_t j = 0; j < count; ++j) {
    const std::int64_t b0 = base(j);
    T dot = 0;
    for (std::int64_t c = 0; c < len; ++c) dot += gy[b0 + c * stride] * y[b0 + c * stride];
    for (std::int64_t c = 0; c < len; ++c) {
      const std::int64_t i = b0 + c * stride;
      gx[i] += y[i] * (gy[i] - dot);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& input) {
  if (!input.defined() || input.rank() < 1 || input.dim(0) < 2) {
    throw ShapeError("softmax_channel: need at least 2 channels");
  }
  const std::int64_t len = input.dim(0);
  const std::int64_t count = input.numel() / len;
  std::vector<T> y(static_cast<std::size_t>(input.numel()));
  auto base = [](std::int64_t j) { return j; };
  softmax_lanes(input.values().data(), y.data(), count, len, count, base);
  return make_result<T>(input.shape(), std::move(y), "softmax_channel", {input},
                        [len, count](Node<T>& self) {
                          Node<T>& x = *self.parents[0];
                          x.ensure_grad();
                          auto b = [](std::int64_t j) { return j; };
                          softmax_lanes_backward(self.value.data(), self.grad.data(),
                                                 x.grad.data(), count, len, count, b);
                        });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& input) {
  require_rank(input, 2, "softmax_rows");
  const std::int64_t rows = input.dim(0), len = input.dim(1);
  std::vector<T> y(static_cast<std::size_t>(input.numel()));
  auto base = [len](std::int64_t j) { return j * len; };
  softmax_lanes(input.values().data(), y.data(), rows, len, 1, base);
  return make_result<T>(input.shape(), std::move(y), "softmax_rows", {input},
                        [rows, len](Node<T>& self) {
                          Node<T>& x = *self.parents[0];
                          x.ensure_grad();
                          auto b = [len](std::int64_t j) { return j * len; };
                          softmax_lanes_backward(self.value.data(), self.grad.data(),
                                                 x.grad.data(), rows, len, 1, b);
                        });
}

// ---- elementwise maps --------------------------------------------------------

template <typename T>
Tensor<T> unary(const Tensor<T>& x, std::function<T(T)> f, std::function<T(T)> df,
                const char* op) {
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(y), op, {x}, [df = std::move(df)](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * df(in.value[i]);
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  return make_result<T>(x.shape(), std::move(y), "leaky_relu", {x}, [slope](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += in.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = xv[i];
    y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_result<T>(x.shape(), std::move(y), "sigmoid", {x}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.value[i];
      in.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(xv[i], lo, hi);
  return make_result<T>(x.shape(), std::move(y), "clamp", {x}, [lo, hi](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = in.value[i];
      if (v >= lo && v <= hi) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "maximum");
  std::vector<T> y(static_cast<std::size_t>(a.numel()));
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] >= bv[i] ? av[i] : bv[i];
  return make_result<T>(a.shape(), std::move(y), "maximum", {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      // Ties route to the first argument.
      if (pa.value[i] >= pb.value[i]) {
        if (pa.requires_grad) pa.grad[i] += self.grad[i];
      } else if (pb.requires_grad) {
        pb.grad[i] += self.grad[i];
      }
    }
  });
}

// ---- linear algebra ----------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<T> c(static_cast<std::size_t>(m * n), T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      const T* brow = bv + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result<T>({m, n}, std::move(c), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data();
    if (pa.requires_grad) {
      // dA = G B^T
      pa.ensure_grad();
      const T* bv2 = pb.value.data();
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::int64_t j = 0; j < n; ++j) acc += g[i * n + j] * bv2[p * n + j];
          pa.grad[static_cast<std::size_t>(i * k + p)] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T G
      pb.ensure_grad();
      const T* av2 = pa.value.data();
#pragma omp parallel for schedule(static)
      for (std::int64_t p = 0; p < k; ++p) {
        T* gb = pb.grad.data() + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
          const T aip = av2[i * k + p];
          for (std::int64_t j = 0; j < n; ++j) gb[j] += aip * g[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  std::vector<T> y(static_cast<std::size_t>(r * c));
  const auto av = a.values();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) y[static_cast<std::size_t>(j * r + i)] = av[static_cast<std::size_t>(i * c + j)];
  return make_result<T>({c, r}, std::move(y), "transpose", {a}, [r, c](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j)
        in.grad[static_cast<std::size_t>(i * c + j)] += self.grad[static_cast<std::size_t>(j * r + i)];
  });
}

// ---- arithmetic --------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(static_cast<std::size_t>(a.numel()));
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_result<T>(a.shape(), std::move(y), "add", {a, b}, [](Node<T>& self) {
    for (int p = 0; p < 2; ++p) {
      Node<T>& in = *self.parents[static_cast<std::size_t>(p)];
      if (in.requires_grad) accumulate(in, self.grad);
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(static_cast<std::size_t>(a.numel()));
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return make_result<T>(a.shape(), std::move(y), "sub", {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad);
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(static_cast<std::size_t>(a.numel()));
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(y), "mul", {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, const Tensor<T>& s) {
  if (!s.defined() || s.numel() != 1) throw ShapeError("scale: factor must hold one element");
  const T f = s.values()[0];
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * f;
  return make_result<T>(x.shape(), std::move(y), "scale", {x, s}, [](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& ps = *self.parents[1];
    const T f2 = ps.value[0];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * f2;
    }
    if (ps.requires_grad) {
      ps.ensure_grad();
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px.value[i];
      ps.grad[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * s;
  return make_result<T>(x.shape(), std::move(y), "scale_const", {x}, [s](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    px.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * s;
  });
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (!x.defined() || x.rank() < 1 || !bias.defined() || bias.numel() != x.dim(0)) {
    throw ShapeError("add_channel_bias: bias must have one entry per channel");
  }
  const std::int64_t channels = x.dim(0), n = x.numel() / channels;
  std::vector<T> y(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(c * n + i)] += bv[static_cast<std::size_t>(c)];
  return make_result<T>(x.shape(), std::move(y), "add_channel_bias", {x, bias},
                        [channels, n](Node<T>& self) {
                          Node<T>& px = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          if (px.requires_grad) accumulate(px, self.grad);
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            for (std::int64_t c = 0; c < channels; ++c) {
                              T acc = 0;
                              for (std::int64_t i = 0; i < n; ++i) acc += self.grad[static_cast<std::size_t>(c * n + i)];
                              pb.grad[static_cast<std::size_t>(c)] += acc;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mul_channel_map(const Tensor<T>& x, const Tensor<T>& map) {
  if (!x.defined() || !map.defined() || x.rank() != map.rank() || map.dim(0) != 1) {
    throw ShapeError("mul_channel_map: map must be [1, ...] with the rank of x");
  }
  for (int a = 1; a < x.rank(); ++a) {
    if (x.dim(a) != map.dim(a)) {
      throw ShapeError("mul_channel_map: spatial mismatch " + to_string(x.shape()) + " vs " +
                       to_string(map.shape()));
    }
  }
  const std::int64_t channels = x.dim(0), n = map.numel();
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const auto xv = x.values(), mv = map.values();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(c * n + i);
      y[idx] = xv[idx] * mv[static_cast<std::size_t>(i)];
    }
  return make_result<T>(x.shape(), std::move(y), "mul_channel_map", {x, map},
                        [channels, n](Node<T>& self) {
                          Node<T>& px = *self.parents[0];
                          Node<T>& pm = *self.parents[1];
                          if (px.requires_grad) px.ensure_grad();
                          if (pm.requires_grad) pm.ensure_grad();
                          for (std::int64_t c = 0; c < channels; ++c)
                            for (std::int64_t i = 0; i < n; ++i) {
                              const auto idx = static_cast<std::size_t>(c * n + i);
                              const auto ii = static_cast<std::size_t>(i);
                              if (px.requires_grad) px.grad[idx] += self.grad[idx] * pm.value[ii];
                              if (pm.requires_grad) pm.grad[ii] += self.grad[idx] * px.value[idx];
                            }
                        });
}

// ---- reductions ----------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.values()) s += v;
  return make_result<T>({1}, {static_cast<T>(s)}, "sum", {x}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    const T g = self.grad[0];
    for (auto& v : in.grad) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.values()) s += v;
  const double n = static_cast<double>(x.numel());
  return make_result<T>({1}, {static_cast<T>(s / n)}, "mean", {x}, [n](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    in.ensure_grad();
    const T g = static_cast<T>(self.grad[0] / n);
    for (auto& v : in.grad) v += g;
  });
}

// ---- data movement ---------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check_shape(shape);
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> y(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(y), "reshape", {x}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape out = parts.front().shape();
  out[0] = 0;
  for (const auto& p : parts) {
    Shape tail = p.shape();
    if (tail.size() != out.size()) throw ShapeError("concat_channels: rank mismatch");
    for (std::size_t a = 1; a < tail.size(); ++a) {
      if (tail[a] != out[a]) {
        throw ShapeError("concat_channels: trailing extents differ, " +
                         to_string(parts.front().shape()) + " vs " + to_string(p.shape()));
      }
    }
    out[0] += tail[0];
  }
  std::vector<T> y;
  y.reserve(static_cast<std::size_t>(numel(out)));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(y.size());
    y.insert(y.end(), p.values().begin(), p.values().end());
  }
  return make_result<T>(std::move(out), std::move(y), "concat_channels", parts,
                        [offsets](Node<T>& self) {
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            Node<T>& in = *self.parents[k];
                            if (!in.requires_grad) continue;
                            in.ensure_grad();
                            for (std::size_t i = 0; i < in.grad.size(); ++i) {
                              in.grad[i] += self.grad[offsets[k] + i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
  if (!x.defined() || begin < 0 || end > x.dim(0) || begin >= end) {
    throw ShapeError("slice_channels: invalid range");
  }
  Shape out = x.shape();
  out[0] = end - begin;
  const std::int64_t n = x.numel() / x.dim(0);
  std::vector<T> y(x.values().begin() + begin * n, x.values().begin() + end * n);
  return make_result<T>(std::move(out), std::move(y), "slice_channels", {x},
                        [begin, n](Node<T>& self) {
                          Node<T>& in = *self.parents[0];
                          in.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            in.grad[static_cast<std::size_t>(begin * n) + i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> repeat_depth(const Tensor<T>& x, std::int64_t depth) {
  require_rank(x, 3, "repeat_depth");
  if (depth < 1) throw ShapeError("repeat_depth: depth must be positive");
  const std::int64_t channels = x.dim(0), plane = x.dim(1) * x.dim(2);
  std::vector<T> y(static_cast<std::size_t>(channels * depth * plane));
  const auto xv = x.values();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t d = 0; d < depth; ++d)
      std::copy(xv.begin() + c * plane, xv.begin() + (c + 1) * plane,
                y.begin() + (c * depth + d) * plane);
  return make_result<T>({channels, depth, x.dim(1), x.dim(2)}, std::move(y), "repeat_depth", {x},
                        [channels, depth, plane](Node<T>& self) {
                          Node<T>& in = *self.parents[0];
                          in.ensure_grad();
                          for (std::int64_t c = 0; c < channels; ++c)
                            for (std::int64_t d = 0; d < depth; ++d)
                              for (std::int64_t i = 0; i < plane; ++i)
                                in.grad[static_cast<std::size_t>(c * plane + i)] +=
                                    self.grad[static_cast<std::size_t>((c * depth + d) * plane + i)];
                        });
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x, bool requires_grad) {
  std::vector<To> v(x.values().begin(), x.values().end());
  return Tensor<To>::from(x.shape(), std::move(v), requires_grad);
}

// ---- explicit instantiations -----------------------------------------------------

#define RTSRTS_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                   \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, const char*,                       \
                                    std::vector<Tensor<T>>, std::function<void(Node<T>&)>);   \
  template void backward<T>(const Tensor<T>&);                                                \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, int, int);                 \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, int, int);                 \
  template Tensor<T> conv_transpose3d<T>(const Tensor<T>&, const Tensor<T>&, int, int, int);  \
  template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                      T);                                                     \
  template Tensor<T> softmax_channel<T>(const Tensor<T>&);                                    \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                       \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                      \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                            \
  template Tensor<T> unary<T>(const Tensor<T>&, std::function<T(T)>, std::function<T(T)>,     \
                              const char*);                                                   \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                                        \
  template Tensor<T> maximum<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> add_channel_bias<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul_channel_map<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);                                               \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                     \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                       \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t);         \
  template Tensor<T> repeat_depth<T>(const Tensor<T>&, std::int64_t);

RTSRTS_INSTANTIATE(float)
RTSRTS_INSTANTIATE(double)
#undef RTSRTS_INSTANTIATE

template Tensor<float> cast<float, float>(const Tensor<float>&, bool);
template Tensor<float> cast<float, double>(const Tensor<double>&, bool);
template Tensor<double> cast<double, float>(const Tensor<float>&, bool);
template Tensor<double> cast<double, double>(const Tensor<double>&, bool);

}  // namespace rtsrts::tensor
