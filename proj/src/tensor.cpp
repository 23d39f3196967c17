#include "prodcat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prodcat/util.hpp"

namespace prodcat::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void check_finite(double v, const char* op) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

// b broadcastable over a when b's shape is a trailing suffix of a's shape;
// in row-major layout b then tiles contiguously, so the flat index of b is
// simply i % numel(b).
bool suffix_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
  }
  return true;
}

void require_broadcastable(const Shape& a, const Shape& b, const char* op) {
  if (!suffix_broadcast(a, b)) {
    throw DataError(std::string(op) + ": shape mismatch " + shape_str(a) +
                    " vs " + shape_str(b));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value.assign(numel(node_->shape), fill);
  if (requires_grad) {
    node_->requires_grad = true;
    node_->grad.assign(node_->value.size(), 0.0);
  }
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw DataError("tensor data size " + std::to_string(values.size()) +
                    " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.node_ = std::make_shared<detail::Node>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(values);
  if (requires_grad) {
    t.node_->requires_grad = true;
    t.node_->grad.assign(t.node_->value.size(), 0.0);
  }
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

std::vector<double>& Tensor::grad() {
  if (!requires_grad()) throw DataError("tensor does not track gradients");
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad()) throw DataError("tensor does not track gradients");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) {
    throw DataError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * node_->shape[1] + c];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->value.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

void Tensor::zero_grad() {
  if (requires_grad()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tape::record(Tensor& out, std::function<void()> fn) {
  out.set_requires_grad(true);
  records_.push_back({out.node_, std::move(fn)});
}

// ---------------------------------------------------------------------------
// elementwise / broadcast
// ---------------------------------------------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_broadcastable(a.shape(), b.shape(), "add");
  const std::size_t nb = b.size();
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] + b.data()[i % nb];
  }
  if (track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      if (ac.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i];
      }
      if (bc.requires_grad()) {
        const std::size_t nb2 = bc.size();
        for (std::size_t i = 0; i < g.size(); ++i) bc.grad()[i % nb2] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_broadcastable(a.shape(), b.shape(), "sub");
  const std::size_t nb = b.size();
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] - b.data()[i % nb];
  }
  if (track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      if (ac.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i];
      }
      if (bc.requires_grad()) {
        const std::size_t nb2 = bc.size();
        for (std::size_t i = 0; i < g.size(); ++i) bc.grad()[i % nb2] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_broadcastable(a.shape(), b.shape(), "mul");
  const std::size_t nb = b.size();
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] * b.data()[i % nb];
  }
  if (track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      const std::size_t nb2 = bc.size();
      if (ac.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          ac.grad()[i] += g[i] * bc.data()[i % nb2];
        }
      }
      if (bc.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          bc.grad()[i % nb2] += g[i] * ac.data()[i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::affine(const Tensor& a, double scale, double shift) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = scale * a.data()[i] + shift;
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, scale]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += scale * g[i];
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a.data()[i];
    out.data()[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double s = oc.data()[i];
        ac.grad()[i] += g[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = std::tanh(a.data()[i]);
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double t = oc.data()[i];
        ac.grad()[i] += g[i] * (1.0 - t * t);
      }
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] > 0 ? a.data()[i] : 0.0;
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (ac.data()[i] > 0) ac.grad()[i] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::log(const Tensor& a) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = std::log(a.data()[i]);
    check_finite(out.data()[i], "log");
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ac.grad()[i] += g[i] / ac.data()[i];
      }
    });
  }
  return out;
}

Tensor Tape::pow_const(const Tensor& a, double exponent) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = std::pow(a.data()[i], exponent);
    check_finite(out.data()[i], "pow_const");
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, exponent]() mutable {
      if (exponent == 0.0) return;  // derivative identically zero
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ac.grad()[i] +=
            g[i] * exponent * std::pow(ac.data()[i], exponent - 1.0);
      }
    });
  }
  return out;
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = std::min(std::max(a.data()[i], lo), hi);
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, lo, hi]() mutable {
      const std::vector<double>& g = oc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = ac.data()[i];
        if (x > lo && x < hi) ac.grad()[i] += g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape / linear algebra
// ---------------------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DataError("matmul: shape mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n}, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  if (track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        const double* pb2 = bc.data().data();
        // dA[i,kk] += sum_j G[i,j] * B[kk,j]
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb2 + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
        }
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        const double* pa2 = ac.data().data();
        // dB[kk,j] += sum_i A[i,kk] * G[i,j]
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t kk = 0; kk < k; ++kk) {
            double aik = pa2[i * k + kk];
            if (aik == 0.0) continue;
            double* gbrow = gb + kk * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DataError("transpose: expected 2D tensor, got " +
                    shape_str(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.data()[j * m + i] = a.data()[i * n + j];
    }
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, m, n]() mutable {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          ac.grad()[i * n + j] += oc.grad()[j * m + i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DataError("softmax: axis " + std::to_string(axis) +
                    " out of range for " + shape_str(a.shape()));
  }
  const std::size_t n = a.dim(axis);
  if (n == 0) throw DataError("softmax over empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

  Tensor out(a.shape(), 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = a.data()[base];
      for (std::size_t i = 1; i < n; ++i) {
        mx = std::max(mx, a.data()[base + i * inner]);
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(a.data()[base + i * inner] - mx);
        out.data()[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) out.data()[base + i * inner] /= sum;
    }
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, outer, inner, n]() mutable {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = base + i * inner;
            dot += oc.grad()[idx] * oc.data()[idx];
          }
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = base + i * inner;
            ac.grad()[idx] += oc.data()[idx] * (oc.grad()[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DataError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DataError("concat: axis out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) {
      throw DataError("concat: rank mismatch");
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw DataError("concat: shape mismatch " + shape_str(p.shape()) +
                        " vs " + shape_str(first));
      }
    }
    out_shape[axis] += p.dim(axis);
  }

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (std::size_t i = axis + 1; i < out_shape.size(); ++i) {
    inner *= out_shape[i];
  }
  Tensor out(out_shape, 0.0);
  const std::size_t out_stride = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t slab = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * slab, slab,
                  out.data().data() + o * out_stride + offset);
    }
    offset += slab;
  }

  bool any = false;
  std::vector<std::size_t> slabs;
  slabs.reserve(parts.size());
  for (const Tensor& p : parts) {
    any = any || p.requires_grad();
    slabs.push_back(p.dim(axis) * inner);
  }
  if (grad_enabled_ && any) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    record(out, [pc, oc, outer, out_stride, slabs = std::move(slabs)]() mutable {
      std::size_t off = 0;
      for (std::size_t t = 0; t < pc.size(); ++t) {
        const std::size_t slab = slabs[t];
        if (pc[t].requires_grad()) {
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = oc.grad().data() + o * out_stride + off;
            double* dst = pc[t].grad().data() + o * slab;
            for (std::size_t i = 0; i < slab; ++i) dst[i] += src[i];
          }
        }
        off += slab;
      }
    });
  }
  return out;
}

Tensor Tape::slice(const Tensor& a, std::size_t axis, std::size_t start,
                   std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(axis)) {
    throw DataError("slice: range [" + std::to_string(start) + "," +
                    std::to_string(start + len) + ") out of bounds for " +
                    shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t in_stride = a.dim(axis) * inner;
  const std::size_t out_stride = len * inner;

  Tensor out(out_shape, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + o * in_stride + start * inner, out_stride,
                out.data().data() + o * out_stride);
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, outer, inner, in_stride, out_stride, start]() mutable {
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = oc.grad().data() + o * out_stride;
        double* dst = ac.grad().data() + o * in_stride + start * inner;
        for (std::size_t i = 0; i < out_stride; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gain,
                        const Tensor& bias, double eps) {
  if (a.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != a.dim(1) || bias.dim(0) != a.dim(1)) {
    throw DataError("layer_norm: shape mismatch " + shape_str(a.shape()) +
                    " with gain " + shape_str(gain.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor out(a.shape(), 0.0);
  std::vector<double> xhat(rows * cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += a.data()[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double d = a.data()[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      double h = (a.data()[r * cols + c] - mean) * inv_std[r];
      xhat[r * cols + c] = h;
      out.data()[r * cols + c] = h * gain.data()[c] + bias.data()[c];
    }
  }
  if (grad_enabled_ && (a.requires_grad() || gain.requires_grad() ||
                        bias.requires_grad())) {
    Tensor ac = a, gc = gain, bc = bias, oc = out;
    record(out, [ac, gc, bc, oc, xhat = std::move(xhat),
                 inv_std = std::move(inv_std), rows, cols]() mutable {
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          double dxhat = oc.grad()[i] * gc.data()[c];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat[i];
        }
        if (ac.requires_grad()) {
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            double dxhat = oc.grad()[i] * gc.data()[c];
            ac.grad()[i] += inv_std[r] * (dxhat - inv_n * sum_dxhat -
                                          inv_n * xhat[i] * sum_dxhat_xhat);
          }
        }
        if (gc.requires_grad()) {
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            gc.grad()[c] += oc.grad()[i] * xhat[i];
          }
        }
        if (bc.requires_grad()) {
          for (std::size_t c = 0; c < cols; ++c) {
            bc.grad()[c] += oc.grad()[r * cols + c];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// gather / scatter
// ---------------------------------------------------------------------------

Tensor Tape::embedding_lookup(const Tensor& matrix, const std::vector<int>& ids,
                              int skip_id) {
  if (matrix.rank() != 2) {
    throw DataError("embedding_lookup: matrix must be 2D");
  }
  const std::size_t rows = matrix.dim(0), dim = matrix.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw DataError("embedding_lookup: id " + std::to_string(id) +
                      " >= vocab size " + std::to_string(rows));
    }
  }
  Tensor out({ids.size(), dim}, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(matrix.data().data() +
                    static_cast<std::size_t>(ids[i]) * dim,
                dim, out.data().data() + i * dim);
  }
  if (track(matrix)) {
    Tensor mc = matrix, oc = out;
    record(out, [mc, oc, ids, skip_id, dim]() mutable {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == skip_id) continue;
        double* dst =
            mc.grad().data() + static_cast<std::size_t>(ids[i]) * dim;
        const double* src = oc.grad().data() + i * dim;
        for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

Tensor Tape::select_index(const Tensor& a, const std::vector<int>& idx) {
  if (a.rank() != 2 || idx.size() != a.dim(0)) {
    throw DataError("select_index: need one index per row of " +
                    shape_str(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  for (int j : idx) {
    if (j < 0 || static_cast<std::size_t>(j) >= cols) {
      throw DataError("select_index: index out of range: " +
                      std::to_string(j));
    }
  }
  Tensor out({idx.size()}, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.data()[i] = a.data()[i * cols + static_cast<std::size_t>(idx[i])];
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, idx, cols]() mutable {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        ac.grad()[i * cols + static_cast<std::size_t>(idx[i])] +=
            oc.grad()[i];
      }
    });
  }
  return out;
}

Tensor Tape::where_rows(const std::vector<unsigned char>& mask,
                        const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() != b.shape() || mask.size() != a.dim(0)) {
    throw DataError("where_rows: shape mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
  }
  const std::size_t cols = a.dim(1);
  Tensor out(a.shape(), 0.0);
  for (std::size_t r = 0; r < mask.size(); ++r) {
    const Tensor& src = mask[r] ? a : b;
    std::copy_n(src.data().data() + r * cols, cols,
                out.data().data() + r * cols);
  }
  if (track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, mask, cols]() mutable {
      for (std::size_t r = 0; r < mask.size(); ++r) {
        Tensor& dst = mask[r] ? ac : bc;
        if (!dst.requires_grad()) continue;
        for (std::size_t c = 0; c < cols; ++c) {
          dst.grad()[r * cols + c] += oc.grad()[r * cols + c];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// regularization / reductions
// ---------------------------------------------------------------------------

Tensor Tape::dropout(const Tensor& a, double rate, std::uint64_t seed,
                     bool train) {
  if (rate < 0.0 || rate >= 1.0) {
    throw DataError("dropout rate must lie in [0,1)");
  }
  if (!train || rate == 0.0) return a;

  Rng rng(seed);
  std::vector<double> mask(a.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) {
    m = rng.uniform() >= rate ? keep_scale : 0.0;
  }
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] * mask[i];
  }
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, mask = std::move(mask)]() mutable {
      for (std::size_t i = 0; i < mask.size(); ++i) {
        ac.grad()[i] += oc.grad()[i] * mask[i];
      }
    });
  }
  return out;
}

Tensor Tape::reduce_sum(const Tensor& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v;
  Tensor out = Tensor::from({1}, {sum});
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc]() mutable {
      double g = oc.grad()[0];
      for (std::size_t i = 0; i < ac.size(); ++i) ac.grad()[i] += g;
    });
  }
  return out;
}

Tensor Tape::reduce_mean(const Tensor& a) {
  if (a.size() == 0) throw DataError("reduce_mean of empty tensor");
  double sum = 0.0;
  for (double v : a.data()) sum += v;
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::from({1}, {sum * inv_n});
  if (track(a)) {
    Tensor ac = a, oc = out;
    record(out, [ac, oc, inv_n]() mutable {
      double g = oc.grad()[0] * inv_n;
      for (std::size_t i = 0; i < ac.size(); ++i) ac.grad()[i] += g;
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DataError("backward requires a scalar loss, got " +
                    shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;  // nothing recorded reaches this loss
  // Intermediate grads are reset so repeated backward calls accumulate only
  // into leaves.
  for (Record& r : records_) {
    std::fill(r.out->grad.begin(), r.out->grad.end(), 0.0);
  }
  loss.node_->grad[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->fn();
  }
}

double gradient_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& f,
    std::vector<Tensor> leaves, double epsilon) {
  for (Tensor& leaf : leaves) {
    leaf.set_requires_grad(true);
  }
  Tape tape;
  Tensor loss = f(tape, leaves);
  if (loss.size() != 1) {
    throw NumericalError("gradient_check: function is not scalar-valued");
  }
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (Tensor& leaf : leaves) analytic.push_back(leaf.grad());

  double max_rel = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double orig = leaves[l].data()[i];
      auto eval = [&](double x) {
        leaves[l].data()[i] = x;
        Tape t(false);
        double v = f(t, leaves).item();
        if (!std::isfinite(v)) {
          throw NumericalError("gradient_check: non-finite function value");
        }
        return v;
      };
      const double fp = eval(orig + epsilon);
      const double fm = eval(orig - epsilon);
      leaves[l].data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[l][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace prodcat::ad
