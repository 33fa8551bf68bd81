#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "runet/rng.hpp"

namespace runet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor. Image batches use N,C,H,W order.
///
/// A rank-0 tensor (empty shape) holds a single scalar. Every dimension of a
/// non-scalar tensor is positive.
template <typename T>
class BasicTensor {
public:
  using value_type = T;

  BasicTensor() : shape_{}, data_(1, T{0}) {}

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_dims();
    data_.assign(runet::numel(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_dims();
    if (data_.size() != runet::numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T{0}); }
  static BasicTensor full(Shape shape, T v) { return BasicTensor(std::move(shape), v); }

  static BasicTensor randn(Shape shape, Rng& rng, double stddev = 1.0, double mean = 0.0) {
    BasicTensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<T>(mean + stddev * rng.normal());
    return t;
  }

  static BasicTensor uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    BasicTensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element access for rank-4 NCHW tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset4(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset4(n, c, h, w)];
  }

  /// Pointer to the H*W plane of sample n, channel c.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + offset4(n, c, 0, 0); }
  const T* plane(std::size_t n, std::size_t c) const { return data_.data() + offset4(n, c, 0, 0); }

  BasicTensor reshaped(Shape shape) const {
    if (runet::numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  void validate_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  std::size_t offset4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Throws when checked mode is enabled and the tensor holds NaN/Inf.
/// Checked mode is on in builds without NDEBUG or with RUNET_CHECKED defined.
template <typename T>
inline void check_finite(const BasicTensor<T>& t, const char* where) {
#if !defined(NDEBUG) || defined(RUNET_CHECKED)
  if (!t.all_finite()) throw std::domain_error(std::string("non-finite value in ") + where);
#else
  (void)t;
  (void)where;
#endif
}

template <typename T>
inline void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
inline void require_rank4(const BasicTensor<T>& a, const char* op) {
  if (a.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + to_string(a.shape()));
  }
}

// ---------------------------------------------------------------------------
// Elementwise

enum class ElementwiseOp { add, sub, mul };

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, op == ElementwiseOp::add ? "add" : op == ElementwiseOp::sub ? "sub" : "mul");
  BasicTensor<T> out(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  const std::size_t n = a.numel();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}

template <typename T>
BasicTensor<T> scalar_mul(const BasicTensor<T>& a, T s) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
BasicTensor<T> scalar_add(const BasicTensor<T>& a, T s) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + s;
  return out;
}

/// In-place a += b, used for gradient accumulation.
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add_inplace");
  T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
}

// ---------------------------------------------------------------------------
// Reductions
//
// Each output element accumulates its inputs in row-major order of the input
// tensor, in double precision, and is rounded to T once at the end.

enum class ReduceOp { sum, mean, max };

template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& a, std::vector<std::size_t> axes) {
  const std::size_t r = a.rank();
  std::vector<bool> reduced(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r) {
      throw std::out_of_range("reduce: axis " + std::to_string(ax) + " invalid for rank " +
                              std::to_string(r));
    }
    if (reduced[ax]) throw std::invalid_argument("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < r; ++i)
    if (!reduced[i]) out_shape.push_back(a.dim(i));

  const std::size_t out_n = numel(out_shape);
  std::vector<double> acc(out_n, op == ReduceOp::max ? -INFINITY : 0.0);
  std::vector<std::size_t> count(out_n, 0);

  // Strides of the output for kept axes.
  std::vector<std::size_t> out_stride(r, 0);
  {
    std::size_t s = 1;
    for (std::size_t i = r; i-- > 0;) {
      if (!reduced[i]) {
        out_stride[i] = s;
        s *= a.dim(i);
      }
    }
  }
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < a.numel(); ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < r; ++i) o += idx[i] * out_stride[i];
    const double v = static_cast<double>(a[flat]);
    if (op == ReduceOp::max) {
      if (v > acc[o]) acc[o] = v;
    } else {
      acc[o] += v;
    }
    ++count[o];
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < a.dim(i)) break;
      idx[i] = 0;
    }
  }
  BasicTensor<T> out(out_shape);
  for (std::size_t i = 0; i < out_n; ++i) {
    const double v = op == ReduceOp::mean ? acc[i] / static_cast<double>(count[i]) : acc[i];
    out[i] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
BasicTensor<T> reduce_all(ReduceOp op, const BasicTensor<T>& a) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return reduce(op, a, axes);
}

/// Sum of all elements in double precision, row-major order.
template <typename T>
double sum_all(const BasicTensor<T>& a) {
  double s = 0.0;
  for (T v : a.data()) s += static_cast<double>(v);
  return s;
}

/// Inner product in double precision, row-major order.
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Channel layout

/// Concatenates along C. Channels [0, Ca) of the result come from a.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  BasicTensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.plane(i, 0), ca * hw, out.plane(i, 0));
    std::copy_n(b.plane(i, 0), cb * hw, out.plane(i, ca));
  }
  return out;
}

/// Channels [begin, end) of an NCHW tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank4(x, "slice_channels");
  if (begin >= end || end > x.dim(1)) {
    throw std::out_of_range("slice_channels: range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") invalid for " + to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  BasicTensor<T> out({n, end - begin, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.plane(i, begin), (end - begin) * hw, out.plane(i, 0));
  return out;
}

/// Backward of concat_channels: splits dy into the gradients of a and b.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& dy, std::size_t ca) {
  return {slice_channels(dy, 0, ca), slice_channels(dy, ca, dy.dim(1))};
}

/// Sample n of an NCHW batch as a (1,C,H,W) tensor.
template <typename T>
BasicTensor<T> sample(const BasicTensor<T>& x, std::size_t n) {
  require_rank4(x, "sample");
  const std::size_t len = x.dim(1) * x.dim(2) * x.dim(3);
  BasicTensor<T> out({1, x.dim(1), x.dim(2), x.dim(3)});
  std::copy_n(x.plane(n, 0), len, out.raw());
  return out;
}

/// Stacks same-shape (C,H,W) or (1,C,H,W) tensors into one NCHW batch.
template <typename T>
BasicTensor<T> stack(const std::vector<const BasicTensor<T>*>& items) {
  if (items.empty()) throw std::invalid_argument("stack: empty input");
  const Shape& s0 = items.front()->shape();
  Shape chw = s0.size() == 4 ? Shape{s0[1], s0[2], s0[3]} : s0;
  if (chw.size() != 3) throw ShapeError("stack: expected (C,H,W) items, got " + to_string(s0));
  const std::size_t len = numel(chw);
  BasicTensor<T> out({items.size(), chw[0], chw[1], chw[2]});
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->numel() != len) {
      throw ShapeError("stack: item " + std::to_string(i) + " has shape " +
                       to_string(items[i]->shape()) + ", expected " + to_string(chw));
    }
    std::copy_n(items[i]->raw(), len, out.raw() + i * len);
  }
  return out;
}

}  // namespace runet
