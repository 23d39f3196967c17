#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace prodcat::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value when requires_grad
  bool requires_grad = false;
};
}  // namespace detail

// Value-semantics handle to a shared dense array (64-bit values). Copies
// alias the same storage; training keeps one writer per tensor while frozen
// tensors are safe to share across threads.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  double item() const;  // scalar value; throws unless size() == 1
  double at(std::size_t r, std::size_t c) const;  // 2D convenience

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::Node> node_;
  friend class Tape;
};

// Records forward operations and replays their backward rules in reverse
// order. One tape per execution context; a tape and the tensors created on
// it stay on a single thread during a training step. Constructing with
// grad_enabled=false gives a pure inference context that records nothing.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // --- elementwise / broadcast ---
  // add/sub/mul accept equal shapes, or b whose shape equals a trailing
  // suffix of a's shape (broadcast over the leading dimensions).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor affine(const Tensor& a, double scale, double shift);
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor pow_const(const Tensor& a, double exponent);
  Tensor clamp(const Tensor& a, double lo, double hi);

  // --- shape / linear algebra ---
  Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)
  Tensor transpose(const Tensor& a);                // 2D
  Tensor softmax(const Tensor& a, std::size_t axis);
  Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
  Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
               std::size_t len);
  Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);  // rows of a 2D tensor

  // --- gather / scatter ---
  // Rows of `matrix` selected by ids; gradients are scattered back to the
  // looked-up rows only, and ids equal to skip_id receive none.
  Tensor embedding_lookup(const Tensor& matrix, const std::vector<int>& ids,
                          int skip_id = -1);
  // out[i] = a[i, idx[i]] for a 2D tensor.
  Tensor select_index(const Tensor& a, const std::vector<int>& idx);
  // Row r of the result comes from a when mask[r] != 0, else from b.
  Tensor where_rows(const std::vector<unsigned char>& mask, const Tensor& a,
                    const Tensor& b);

  // --- regularization / reductions ---
  // Inverted dropout: surviving entries scaled by 1/(1-rate); identity when
  // train is false or rate is 0.
  Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, bool train);
  Tensor reduce_sum(const Tensor& a);
  Tensor reduce_mean(const Tensor& a);

  // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse. Grad
  // accumulators of requires_grad leaves receive d(loss)/d(leaf);
  // intermediate grads are reset per call, so repeated calls accumulate
  // into the leaves.
  void backward(const Tensor& loss);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t recorded_ops() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::shared_ptr<detail::Node> out;
    std::function<void()> fn;
  };

  bool track(const Tensor& a) const {
    return grad_enabled_ && a.requires_grad();
  }
  bool track(const Tensor& a, const Tensor& b) const {
    return grad_enabled_ && (a.requires_grad() || b.requires_grad());
  }
  void record(Tensor& out, std::function<void()> fn);

  bool grad_enabled_;
  std::vector<Record> records_;
};

// Central finite differences against the tape gradients for a scalar-valued
// function of the given leaves. Returns the max relative error
// |a - n| / max(|a|, |n|, 1e-8) over all coordinates.
double gradient_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& f,
    std::vector<Tensor> leaves, double epsilon = 1e-5);

}  // namespace prodcat::ad
