#include "szd/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "szd/error.hpp"

namespace szd::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorKind::kShapeMismatch,
       std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Result node; keeps parents and adjoint only when a gradient can flow.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value,
                           std::vector<NodePtr<T>> parents,
                           std::function<void(Node<T>&)> adjoint) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const NodePtr<T>& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->adjoint = std::move(adjoint);
  }
  return BasicTensor<T>(std::move(node));
}

template <typename T>
void check_same(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

template <typename T, typename F, typename D>
BasicTensor<T> unary(const BasicTensor<T>& x, F f, D derivative_from_output) {
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x.shared()},
                        [derivative_from_output](Node<T>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          auto& g = p.ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += self.grad[i] * derivative_from_output(p.value[i], self.value[i]);
                          }
                        });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(ErrorKind::kShapeMismatch, "dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::constant(Shape shape, std::vector<T> values) {
  if (numel(shape) != values.size()) {
    fail(ErrorKind::kShapeMismatch, "value count does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return BasicTensor<T>(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::parameter(Shape shape, std::vector<T> values) {
  auto t = constant(std::move(shape), std::move(values));
  t.node()->requires_grad = true;
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  auto t = constant(std::move(shape), std::vector<T>(n, T(0)));
  t.node()->requires_grad = requires_grad;
  return t;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) fail(ErrorKind::kShapeMismatch, "item() needs a single-element tensor");
  return node_->value[0];
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MapM<T>(out.data(), m, n).noalias() =
      MapC<T>(a.data().data(), m, k) * MapC<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {a.shared(), b.shared()},
                        [m, k, n](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          MapC<T> dc(self.grad.data(), m, n);
                          if (pa.requires_grad) {
                            MapM<T>(pa.ensure_grad().data(), m, k).noalias() +=
                                dc * MapC<T>(pb.value.data(), k, n).transpose();
                          }
                          if (pb.requires_grad) {
                            MapM<T>(pb.ensure_grad().data(), k, n).noalias() +=
                                MapC<T>(pa.value.data(), m, k).transpose() * dc;
                          }
                        });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const T sign = k == 0 ? T(1) : T(-1);
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  return unary(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary(
      x,
      [](T v) {
        // Split by sign so exp never overflows.
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return make_result<T>({1}, {static_cast<T>(acc)}, {x.shared()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const std::size_t n = x.size();
  return make_result<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {x.shared()},
                        [n](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          const T share = self.grad[0] / static_cast<T>(n);
                          for (auto& v : g) v += share;
                        });
}

namespace {

// outer x axis x inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[i]);
  r.axis = static_cast<std::size_t>(s[axis]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) {
    r.inner *= static_cast<std::size_t>(s[i]);
  }
  return r;
}

}  // namespace

template <typename T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b, int axis) {
  if (a.rank() != b.rank() || axis < 0 || axis >= static_cast<int>(a.rank())) {
    shape_error("concat", a.shape(), b.shape());
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (static_cast<int>(i) != axis && a.dim(i) != b.dim(i)) shape_error("concat", a.shape(), b.shape());
  }
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  const AxisSplit sa = split_at(a.shape(), axis), sb = split_at(b.shape(), axis);
  const std::size_t ra = sa.axis * sa.inner, rb = sb.axis * sb.inner;
  std::vector<T> out(a.size() + b.size());
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(a.data().data() + o * ra, ra, out.data() + o * (ra + rb));
    std::copy_n(b.data().data() + o * rb, rb, out.data() + o * (ra + rb) + ra);
  }
  return make_result<T>(std::move(shape), std::move(out), {a.shared(), b.shared()},
                        [outer = sa.outer, ra, rb](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* g = self.grad.data() + o * (ra + rb);
                            if (pa.requires_grad) {
                              T* d = pa.ensure_grad().data() + o * ra;
                              for (std::size_t i = 0; i < ra; ++i) d[i] += g[i];
                            }
                            if (pb.requires_grad) {
                              T* d = pb.ensure_grad().data() + o * rb;
                              for (std::size_t i = 0; i < rb; ++i) d[i] += g[ra + i];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, int axis, int begin, int length) {
  if (axis < 0 || axis >= static_cast<int>(x.rank()) || begin < 0 || length <= 0 ||
      begin + length > x.dim(static_cast<std::size_t>(axis))) {
    fail(ErrorKind::kShapeMismatch, "narrow: slice outside " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t row = s.axis * s.inner, take = static_cast<std::size_t>(length) * s.inner,
                    offset = static_cast<std::size_t>(begin) * s.inner;
  std::vector<T> out(s.outer * take);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data().data() + o * row + offset, take, out.data() + o * take);
  }
  return make_result<T>(std::move(shape), std::move(out), {x.shared()},
                        [outer = s.outer, row, take, offset](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < outer; ++o) {
                            T* d = g.data() + o * row + offset;
                            const T* src = self.grad.data() + o * take;
                            for (std::size_t i = 0; i < take; ++i) d[i] += src[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, int index) {
  if (x.rank() < 2) fail(ErrorKind::kShapeMismatch, "select needs rank >= 2");
  auto slice = narrow(x, 0, index, 1);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return reshape(slice, std::move(shape));
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x.shared()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0) ||
      (x.rank() != 1 && x.rank() != 2) || x.shape().back() != weight.dim(1)) {
    shape_error("dense", x.shape(), weight.shape());
  }
  const int in = weight.dim(1), out_dim = weight.dim(0);
  const int batch = x.rank() == 2 ? x.dim(0) : 1;
  Shape shape = x.rank() == 2 ? Shape{batch, out_dim} : Shape{out_dim};
  std::vector<T> out(static_cast<std::size_t>(batch) * out_dim);
  MapM<T> y(out.data(), batch, out_dim);
  MapC<T> w(weight.data().data(), out_dim, in);
  y.noalias() = MapC<T>(x.data().data(), batch, in) * w.transpose();
  for (int r = 0; r < batch; ++r) {
    for (int j = 0; j < out_dim; ++j) y(r, j) += bias.data()[static_cast<std::size_t>(j)];
  }
  return make_result<T>(
      std::move(shape), std::move(out), {x.shared(), weight.shared(), bias.shared()},
      [batch, in, out_dim](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        MapC<T> dy(self.grad.data(), batch, out_dim);
        if (px.requires_grad) {
          MapM<T>(px.ensure_grad().data(), batch, in).noalias() +=
              dy * MapC<T>(pw.value.data(), out_dim, in);
        }
        if (pw.requires_grad) {
          MapM<T>(pw.ensure_grad().data(), out_dim, in).noalias() +=
              dy.transpose() * MapC<T>(px.value.data(), batch, in);
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (int r = 0; r < batch; ++r) {
            for (int j = 0; j < out_dim; ++j) g[static_cast<std::size_t>(j)] += dy(r, j);
          }
        }
      });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                      const BasicTensor<T>& bias, int padding) {
  const bool batched = input.rank() == 4;
  if ((input.rank() != 3 && !batched) || kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3) ||
      kernels.dim(2) % 2 == 0 || padding < 0) {
    shape_error("conv2d", input.shape(), kernels.shape());
  }
  const int n = batched ? input.dim(0) : 1;
  const int c = input.dim(batched ? 1 : 0), h = input.dim(batched ? 2 : 1),
            w = input.dim(batched ? 3 : 2);
  const int co = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c) shape_error("conv2d", input.shape(), kernels.shape());
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    shape_error("conv2d", kernels.shape(), bias.shape());
  }
  const int ho = h + 2 * padding - k + 1, wo = w + 2 * padding - k + 1;
  if (ho <= 0 || wo <= 0) shape_error("conv2d", input.shape(), kernels.shape());

  const int rows = c * k * k;
  const int plane = ho * wo;
  const int cols = n * plane;
  // im2col: rows index (channel, ki, kj); columns index (image, i, j).
  std::vector<T> col(static_cast<std::size_t>(rows) * cols, T(0));
  const T* x = input.data().data();
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = col.data() + static_cast<std::size_t>((ch * k + ki) * k + kj) * cols;
        for (int img = 0; img < n; ++img) {
          const T* src = x + (static_cast<std::size_t>(img) * c + ch) * h * w;
          for (int i = 0; i < ho; ++i) {
            const int si = i + ki - padding;
            if (si < 0 || si >= h) continue;
            for (int j = 0; j < wo; ++j) {
              const int sj = j + kj - padding;
              if (sj < 0 || sj >= w) continue;
              dst[img * plane + i * wo + j] = src[si * w + sj];
            }
          }
        }
      }
    }
  }
  RowMat<T> out_mat = MapC<T>(kernels.data().data(), co, rows) * MapC<T>(col.data(), rows, cols);
  std::vector<T> out(static_cast<std::size_t>(n) * co * plane);
  for (int img = 0; img < n; ++img) {
    for (int o = 0; o < co; ++o) {
      const T b = bias.defined() ? bias.data()[static_cast<std::size_t>(o)] : T(0);
      T* dst = out.data() + (static_cast<std::size_t>(img) * co + o) * plane;
      const T* src = out_mat.data() + static_cast<std::size_t>(o) * cols + img * plane;
      for (int p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  }
  Shape shape = batched ? Shape{n, co, ho, wo} : Shape{co, ho, wo};
  std::vector<NodePtr<T>> parents{input.shared(), kernels.shared()};
  if (bias.defined()) parents.push_back(bias.shared());
  return make_result<T>(
      std::move(shape), std::move(out), std::move(parents),
      [col = std::move(col), n, c, h, w, co, k, padding, ho, wo, rows, plane,
       cols](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        RowMat<T> dout(co, cols);
        for (int img = 0; img < n; ++img) {
          for (int o = 0; o < co; ++o) {
            const T* src = self.grad.data() + (static_cast<std::size_t>(img) * co + o) * plane;
            for (int p = 0; p < plane; ++p) dout(o, img * plane + p) = src[p];
          }
        }
        if (pk.requires_grad) {
          MapM<T>(pk.ensure_grad().data(), co, rows).noalias() +=
              dout * MapC<T>(col.data(), rows, cols).transpose();
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& g = self.parents[2]->ensure_grad();
          for (int o = 0; o < co; ++o) g[static_cast<std::size_t>(o)] += dout.row(o).sum();
        }
        if (px.requires_grad) {
          RowMat<T> dcol = MapC<T>(pk.value.data(), co, rows).transpose() * dout;
          T* dx = px.ensure_grad().data();
          for (int ch = 0; ch < c; ++ch) {
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                const T* src = dcol.data() + static_cast<std::size_t>((ch * k + ki) * k + kj) * cols;
                for (int img = 0; img < n; ++img) {
                  T* dst = dx + (static_cast<std::size_t>(img) * c + ch) * h * w;
                  for (int i = 0; i < ho; ++i) {
                    const int si = i + ki - padding;
                    if (si < 0 || si >= h) continue;
                    for (int j = 0; j < wo; ++j) {
                      const int sj = j + kj - padding;
                      if (sj < 0 || sj >= w) continue;
                      dst[si * w + sj] += src[img * plane + i * wo + j];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input) {
  if (input.rank() < 2) fail(ErrorKind::kShapeMismatch, "maxpool2d needs rank >= 2");
  const std::size_t r = input.rank();
  const int h = input.dim(r - 2), w = input.dim(r - 1);
  const int ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) fail(ErrorKind::kShapeMismatch, "maxpool2d input smaller than 2x2");
  Shape shape = input.shape();
  shape[r - 2] = ho;
  shape[r - 1] = wo;
  const std::size_t planes = input.size() / (static_cast<std::size_t>(h) * w);
  std::vector<T> out(planes * ho * wo);
  std::vector<std::uint32_t> argmax(out.size());
  const T* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * h * w;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * i * w + 2 * j);
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const auto idx = static_cast<std::uint32_t>((2 * i + di) * w + 2 * j + dj);
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + i) * wo + j;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(p * h * w) + best;
      }
    }
  }
  return make_result<T>(std::move(shape), std::move(out), {input.shared()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                        });
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 1 && logits.rank() != 2) {
    fail(ErrorKind::kShapeMismatch, "logits must be [C] or [N, C]");
  }
  const int classes = logits.shape().back();
  const int rows = logits.rank() == 2 ? logits.dim(0) : 1;
  if (static_cast<int>(labels.size()) != rows) {
    fail(ErrorKind::kShapeMismatch, "one label per logit row expected");
  }
  std::vector<T> probs(logits.size());
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes) fail(ErrorKind::kInvalidArgument, "label out of range");
    const T* z = logits.data().data() + static_cast<std::size_t>(r) * classes;
    double zmax = z[0];
    for (int j = 1; j < classes; ++j) zmax = std::max<double>(zmax, z[j]);
    double denom = 0.0;
    for (int j = 0; j < classes; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
    for (int j = 0; j < classes; ++j) {
      probs[static_cast<std::size_t>(r) * classes + j] =
          static_cast<T>(std::exp(static_cast<double>(z[j]) - zmax) / denom);
    }
    loss += std::log(denom) - (static_cast<double>(z[label]) - zmax);
  }
  std::vector<int> owned(labels.begin(), labels.end());
  return make_result<T>({1}, {static_cast<T>(loss)}, {logits.shared()},
                        [probs = std::move(probs), owned = std::move(owned), classes](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          const T up = self.grad[0];
                          for (std::size_t r = 0; r < owned.size(); ++r) {
                            for (int j = 0; j < classes; ++j) {
                              const std::size_t i = r * classes + static_cast<std::size_t>(j);
                              g[i] += up * (probs[i] - (j == owned[r] ? T(1) : T(0)));
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, int label) {
  const int labels[1] = {label};
  return softmax_cross_entropy(logits, std::span<const int>(labels));
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> lstm_cell(const BasicTensor<T>& x,
                                                    const BasicTensor<T>& h_prev,
                                                    const BasicTensor<T>& c_prev,
                                                    const LstmParams<T>& params) {
  if (x.rank() != 1 || h_prev.rank() != 1 || c_prev.shape() != h_prev.shape()) {
    shape_error("lstm_cell", x.shape(), h_prev.shape());
  }
  const int hidden = h_prev.dim(0);
  if (params.weight.rank() != 2 || params.weight.dim(0) != 4 * hidden ||
      params.weight.dim(1) != x.dim(0) + hidden) {
    shape_error("lstm_cell", params.weight.shape(), Shape{4 * hidden, x.dim(0) + hidden});
  }
  auto gates = dense(concat(x, h_prev, 0), params.weight, params.bias);
  auto i = sigmoid(narrow(gates, 0, 0, hidden));
  auto f = sigmoid(narrow(gates, 0, hidden, hidden));
  auto g = tanh(narrow(gates, 0, 2 * hidden, hidden));
  auto o = sigmoid(narrow(gates, 0, 3 * hidden, hidden));
  auto c = add(mul(f, c_prev), mul(i, g));
  auto h = mul(o, tanh(c));
  return {h, c};
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.size() != 1) fail(ErrorKind::kShapeMismatch, "backward needs a scalar loss");
  Node<T>* root = loss.node();
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order of the reachable graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->adjoint && !node->grad.empty()) node->adjoint(*node);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) denom += (out[i] = std::exp(logits[i] - zmax));
  for (auto& v : out) v /= denom;
  return out;
}

template <typename T>
void rmsprop_step(std::span<T> params, std::span<const T> grads, std::span<T> mean_square,
                  const RmspropConfig& config) {
  if (params.size() != grads.size() || params.size() != mean_square.size()) {
    fail(ErrorKind::kShapeMismatch, "rmsprop: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double e = config.rho * mean_square[i] + (1.0 - config.rho) * g * g;
    mean_square[i] = static_cast<T>(e);
    params[i] = static_cast<T>(params[i] - config.learning_rate * g / std::sqrt(e + config.epsilon));
  }
}

#define SZD_INSTANTIATE(T)                                                                     \
  template class BasicTensor<T>;                                                               \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                         \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                      \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                         \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                         \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                          \
  template BasicTensor<T> concat(const BasicTensor<T>&, const BasicTensor<T>&, int);           \
  template BasicTensor<T> narrow(const BasicTensor<T>&, int, int, int);                        \
  template BasicTensor<T> select(const BasicTensor<T>&, int);                                  \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                               \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                const BasicTensor<T>&);                                        \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&, int);                                  \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>); \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, int);                   \
  template std::pair<BasicTensor<T>, BasicTensor<T>> lstm_cell(                                \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                     \
      const LstmParams<T>&);                                                                   \
  template void backward(const BasicTensor<T>&);                                               \
  template void rmsprop_step(std::span<T>, std::span<const T>, std::span<T>,                   \
                             const RmspropConfig&);

SZD_INSTANTIATE(float)
SZD_INSTANTIATE(double)

#undef SZD_INSTANTIATE

}  // namespace szd::ad
