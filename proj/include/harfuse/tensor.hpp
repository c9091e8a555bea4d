#ifndef HARFUSE_TENSOR_HPP
#define HARFUSE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "harfuse/errors.hpp"
#include "harfuse/rng.hpp"

namespace harfuse {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("shape must have at least one dimension");
  for (Index d : shape) {
    if (d < 1) throw ShapeError("every dimension must be >= 1, got " + shape_string(shape));
  }
}

/// Dense row-major N-dimensional array.
///
/// Storage is a contiguous Eigen vector; `matrix()` and `as_matrix()` expose
/// row-major views so products go through Eigen's kernels. A
/// default-constructed tensor is empty (rank 0, no data) and only serves as
/// a placeholder.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Constant(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, std::span<const Scalar> values) : shape_(std::move(shape)) {
    check_shape(shape_);
    if (static_cast<Index>(values.size()) != shape_size(shape_)) {
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_string(shape_));
    }
    data_ = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + shape_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar* begin() { return data_.data(); }
  Scalar* end() { return data_.data() + data_.size(); }
  const Scalar* begin() const { return data_.data(); }
  const Scalar* end() const { return data_.data() + data_.size(); }
  std::span<Scalar> span() { return {data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> span() const { return {data(), static_cast<std::size_t>(size())}; }

  Vector& values() { return data_; }
  const Vector& values() const { return data_; }

  Scalar& operator[](Index flat) { return data_[flat]; }
  Scalar operator[](Index flat) const { return data_[flat]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[offset({static_cast<Index>(ix)...})];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return data_[offset({static_cast<Index>(ix)...})];
  }

  Index offset(std::initializer_list<Index> ix) const {
    if (static_cast<Index>(ix.size()) != rank()) throw ShapeError("index rank mismatch");
    Index flat = 0;
    std::size_t axis = 0;
    for (Index i : ix) {
      if (i < 0 || i >= shape_[axis]) throw ShapeError("index out of range for " + shape_string(shape_));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  /// Row-major view with the given row count; columns inferred.
  MatrixMap as_matrix(Index rows) {
    check_rows(rows);
    return MatrixMap(data(), rows, size() / rows);
  }
  ConstMatrixMap as_matrix(Index rows) const {
    check_rows(rows);
    return ConstMatrixMap(data(), rows, size() / rows);
  }
  /// Leading axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return as_matrix(dim(0)); }
  ConstMatrixMap matrix() const { return as_matrix(dim(0)); }

  BasicTensor reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    BasicTensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  void fill(Scalar v) { data_.setConstant(v); }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "+=");
    data_ += other.data_;
    return *this;
  }
  BasicTensor& operator-=(const BasicTensor& other) {
    require_same_shape(other, "-=");
    data_ -= other.data_;
    return *this;
  }
  BasicTensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }
  friend BasicTensor operator*(BasicTensor a, Scalar s) { return a *= s; }
  friend BasicTensor operator*(Scalar s, BasicTensor a) { return a *= s; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  void require_same_shape(const BasicTensor& other, const char* op) const {
    if (shape_ != other.shape_) {
      throw ShapeError(std::string(op) + ": shape " + shape_string(shape_) + " vs " +
                       shape_string(other.shape_));
    }
  }

 private:
  void check_rows(Index rows) const {
    if (rows <= 0 || size() % rows != 0) {
      throw ShapeError("cannot view " + shape_string(shape_) + " with " + std::to_string(rows) + " rows");
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

// ---------------------------------------------------------------------------
// Construction

template <typename Scalar = double>
BasicTensor<Scalar> zeros(const Shape& shape) {
  return BasicTensor<Scalar>(shape, Scalar(0));
}

template <typename Scalar = double>
BasicTensor<Scalar> ones(const Shape& shape) {
  return BasicTensor<Scalar>(shape, Scalar(1));
}

template <typename Scalar = double>
BasicTensor<Scalar> full(const Shape& shape, Scalar value) {
  return BasicTensor<Scalar>(shape, value);
}

template <typename Scalar = double>
BasicTensor<Scalar> identity(Index n) {
  BasicTensor<Scalar> out({n, n});
  for (Index i = 0; i < n; ++i) out(i, i) = Scalar(1);
  return out;
}

/// I.i.d. normal values with mean 0 and standard deviation `scale`.
template <typename Scalar = double>
BasicTensor<Scalar> randn(const Shape& shape, Rng& rng, Scalar scale = Scalar(1)) {
  if (!(scale > Scalar(0))) throw ParameterError("randn scale must be positive");
  BasicTensor<Scalar> out(shape);
  for (auto& v : out) v = static_cast<Scalar>(rng.normal()) * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Arithmetic

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  BasicTensor<Scalar> out({a.dim(0), b.dim(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  return out;
}

template <typename Scalar, typename F>
BasicTensor<Scalar> map(const BasicTensor<Scalar>& t, F&& f) {
  BasicTensor<Scalar> out = t;
  for (auto& v : out) v = f(v);
  return out;
}

template <typename Scalar, typename F>
BasicTensor<Scalar> zip(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, F&& f) {
  a.require_same_shape(b, "zip");
  BasicTensor<Scalar> out = a;
  for (Index i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <typename Scalar>
Scalar sum(const BasicTensor<Scalar>& t) {
  return t.values().sum();
}

template <typename Scalar>
bool all_finite(const BasicTensor<Scalar>& t) {
  return t.values().allFinite();
}

template <typename Scalar>
Scalar max_abs_diff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  a.require_same_shape(b, "max_abs_diff");
  return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Structure

namespace detail {

inline Index normalize_axis(Index axis, Index rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
inline std::tuple<Index, Index, Index> split_extent(const Shape& shape, Index axis) {
  Index outer = 1;
  Index inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) inner *= shape[static_cast<std::size_t>(i)];
  return {outer, shape[static_cast<std::size_t>(axis)], inner};
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> concat(std::span<const BasicTensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  axis = detail::normalize_axis(axis, static_cast<Index>(first.size()));
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<Index>(first.size())) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (static_cast<Index>(d) != axis && p.shape()[d] != first[d]) {
        throw ShapeError("concat: incompatible shapes " + shape_string(first) + " and " +
                         shape_string(p.shape()));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }
  BasicTensor<Scalar> out(out_shape);
  const auto [outer, total, inner] = detail::split_extent(out_shape, axis);
  Index offset = 0;
  for (const auto& p : parts) {
    const Index block = p.dim(axis) * inner;
    for (Index o = 0; o < outer; ++o) {
      std::copy_n(p.data() + o * block, block, out.data() + o * total * inner + offset * inner);
    }
    offset += p.dim(axis);
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> concat(std::initializer_list<BasicTensor<Scalar>> parts, Index axis) {
  return concat(std::span<const BasicTensor<Scalar>>(parts.begin(), parts.size()), axis);
}

/// Elements [begin, end) along `axis`.
template <typename Scalar>
BasicTensor<Scalar> slice(const BasicTensor<Scalar>& t, Index axis, Index begin, Index end) {
  axis = detail::normalize_axis(axis, t.rank());
  if (begin < 0 || end > t.dim(axis) || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_string(t.shape()));
  }
  Shape out_shape = t.shape();
  out_shape[static_cast<std::size_t>(axis)] = end - begin;
  BasicTensor<Scalar> out(out_shape);
  const auto [outer, extent, inner] = detail::split_extent(t.shape(), axis);
  const Index block = (end - begin) * inner;
  for (Index o = 0; o < outer; ++o) {
    std::copy_n(t.data() + (o * extent + begin) * inner, block, out.data() + o * block);
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> reshape(const BasicTensor<Scalar>& t, const Shape& shape) {
  return t.reshaped(shape);
}

/// Axis permutation: output axis i is input axis `order[i]`.
template <typename Scalar>
BasicTensor<Scalar> permute(const BasicTensor<Scalar>& t, const std::vector<Index>& order) {
  const Index r = t.rank();
  if (static_cast<Index>(order.size()) != r) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r));
  for (Index i = 0; i < r; ++i) {
    const Index a = order[static_cast<std::size_t>(i)];
    if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)]) throw ShapeError("permute: invalid order");
    seen[static_cast<std::size_t>(a)] = true;
    out_shape[static_cast<std::size_t>(i)] = t.dim(a);
  }
  std::vector<Index> in_strides(static_cast<std::size_t>(r), 1);
  for (Index i = r - 2; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(i + 1)] * t.dim(i + 1);
  }
  BasicTensor<Scalar> out(out_shape);
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  for (Index flat = 0; flat < out.size(); ++flat) {
    Index src = 0;
    for (Index i = 0; i < r; ++i) {
      src += idx[static_cast<std::size_t>(i)] * in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    out[flat] = t[src];
    for (Index i = r - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return out;
}

/// Zero-pads (or crops) `axis` at its end to `length`.
template <typename Scalar>
BasicTensor<Scalar> resize_axis(const BasicTensor<Scalar>& t, Index axis, Index length) {
  axis = detail::normalize_axis(axis, t.rank());
  if (length < 1) throw ShapeError("resize_axis: length must be positive");
  Shape out_shape = t.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  BasicTensor<Scalar> out(out_shape);
  const auto [outer, extent, inner] = detail::split_extent(t.shape(), axis);
  const Index keep = std::min(extent, length) * inner;
  for (Index o = 0; o < outer; ++o) {
    std::copy_n(t.data() + o * extent * inner, keep, out.data() + o * length * inner);
  }
  return out;
}

/// Mean over the listed axes; those axes are kept with extent 1. An empty
/// axis list reduces over all axes.
template <typename Scalar>
BasicTensor<Scalar> reduce_mean(const BasicTensor<Scalar>& t, std::vector<Index> axes = {}) {
  if (axes.empty()) {
    for (Index a = 0; a < t.rank(); ++a) axes.push_back(a);
  }
  std::vector<bool> reduce(static_cast<std::size_t>(t.rank()), false);
  for (Index a : axes) reduce[static_cast<std::size_t>(detail::normalize_axis(a, t.rank()))] = true;
  Shape out_shape = t.shape();
  Index count = 1;
  for (Index a = 0; a < t.rank(); ++a) {
    if (reduce[static_cast<std::size_t>(a)]) {
      count *= out_shape[static_cast<std::size_t>(a)];
      out_shape[static_cast<std::size_t>(a)] = 1;
    }
  }
  BasicTensor<Scalar> out(out_shape);
  std::vector<Index> idx(static_cast<std::size_t>(t.rank()), 0);
  for (Index flat = 0; flat < t.size(); ++flat) {
    Index dst = 0;
    for (Index a = 0; a < t.rank(); ++a) {
      const auto ua = static_cast<std::size_t>(a);
      dst = dst * out_shape[ua] + (reduce[ua] ? 0 : idx[ua]);
    }
    out[dst] += t[flat];
    for (Index a = t.rank() - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < t.dim(a)) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
  out *= Scalar(1) / static_cast<Scalar>(count);
  return out;
}

}  // namespace harfuse

#endif  // HARFUSE_TENSOR_HPP
