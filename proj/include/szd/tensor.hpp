#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

// Minimal dense tensor engine with reverse-mode differentiation. Each forward
// op records its inputs and an adjoint closure on the result node; backward()
// walks the recorded graph once in reverse topological order.
//
// Tensors are instantiated for float (training and inference) and double
// (finite-difference checks).
namespace szd::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> adjoint;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor constant(Shape shape, std::vector<T> values);
  // Leaf whose gradient is populated by backward().
  static BasicTensor parameter(Shape shape, std::vector<T> values);
  static BasicTensor zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }
  // Direct write access; only meaningful on leaves before a forward pass.
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }
  T item() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;

// 2D product: (m x k) . (k x n).
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b, int axis);
// Slice [begin, begin + length) along `axis`.
template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, int axis, int begin, int length);
// x[index] along the leading axis, which is dropped from the shape.
template <typename T> BasicTensor<T> select(const BasicTensor<T>& x, int index);
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

// W . x + b with x of shape [in] or [batch, in], W [out, in], b [out].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias);

// Cross-correlation. input [C, H, W] or [N, C, H, W]; kernels [Co, C, k, k]
// with k odd; optional bias [Co]. Output spatial size H + 2p - k + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                      const BasicTensor<T>& bias, int padding);

// 2x2 window, stride 2, over the last two axes. Ties go to the first element
// in row-major order, and so does the gradient.
template <typename T> BasicTensor<T> maxpool2d(const BasicTensor<T>& input);

// Sum over rows of -log softmax(logits)[label]; logits [C] or [N, C].
// Stabilized by subtracting the row maximum; accumulated in double.
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, int label);

template <typename T>
struct LstmParams {
  BasicTensor<T> weight;  // [4H, in + H], gate blocks in order input, forget, cell, output
  BasicTensor<T> bias;    // [4H]
};

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> lstm_cell(const BasicTensor<T>& x,
                                                    const BasicTensor<T>& h_prev,
                                                    const BasicTensor<T>& c_prev,
                                                    const LstmParams<T>& params);

// Populates grad of every requires_grad tensor reachable from `loss` (a
// single-element tensor). Gradients add up over multiple uses of a tensor.
template <typename T> void backward(const BasicTensor<T>& loss);

// Softmax of a plain vector, computed in double.
std::vector<double> softmax(std::span<const double> logits);

struct RmspropConfig {
  double learning_rate = 0.001;
  double rho = 0.9;
  double epsilon = 1e-8;
};

// E <- rho E + (1 - rho) g^2;  theta <- theta - lr g / sqrt(E + eps)
template <typename T>
void rmsprop_step(std::span<T> params, std::span<const T> grads, std::span<T> mean_square,
                  const RmspropConfig& config);

}  // namespace szd::ad
