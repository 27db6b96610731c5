#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qadb/errors.hpp"

namespace qadb {

using Index = std::int64_t;
using Shape = std::vector<Index>;

std::string shape_str(const Shape& dims);

inline Index shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense n-dimensional array, row-major, backed by an Eigen column vector.
// A rank-0 tensor (empty dims) holds one element.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMajorMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix<Scalar>>;

  BasicTensor() : data_(Vector::Zero(1)) {}

  explicit BasicTensor(Shape dims) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_ = Vector::Zero(shape_size(dims_));
  }

  BasicTensor(Shape dims, Vector data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != shape_size(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(dims_));
    }
  }

  BasicTensor(Shape dims, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(dims), Vector::Map(values.begin(), static_cast<Index>(values.size()))) {}

  static BasicTensor zeros(Shape dims) { return BasicTensor(std::move(dims)); }

  static BasicTensor full(Shape dims, Scalar value) {
    BasicTensor t(std::move(dims));
    t.data_.setConstant(value);
    return t;
  }

  static BasicTensor scalar(Scalar value) { return BasicTensor({}, {value}); }

  const Shape& dims() const { return dims_; }
  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(dims_));
    return data_[0];
  }

  // View as a rows x cols row-major matrix; rows * cols must equal size().
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }

  // Leading axis against everything else: [N, ...] -> N x (size / N).
  ConstMatrixMap rows() const { return matrix(leading(), trailing()); }
  MatrixMap rows() { return matrix(leading(), trailing()); }

  BasicTensor reshaped(Shape dims) const {
    if (shape_size(dims) != size()) {
      throw ShapeError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
    }
    return BasicTensor(std::move(dims), data_);
  }

  // Rows [begin, end) along the leading axis.
  BasicTensor slice_rows(Index begin, Index end) const {
    if (dims_.empty() || begin < 0 || end > dims_[0] || begin > end) {
      throw ShapeError("row slice out of range for shape " + shape_str(dims_));
    }
    Shape d = dims_;
    d[0] = end - begin;
    const Index stride = dims_[0] == 0 ? 0 : size() / dims_[0];
    return BasicTensor(std::move(d), data_.segment(begin * stride, (end - begin) * stride));
  }

  bool same_shape(const BasicTensor& other) const { return dims_ == other.dims_; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(const Shape& dims) {
    for (Index d : dims) {
      if (d < 0) throw ShapeError("negative extent in shape " + shape_str(dims));
    }
  }
  Index leading() const {
    if (dims_.empty()) throw ShapeError("rows() on a rank-0 tensor");
    return dims_[0];
  }
  Index trailing() const { return dims_[0] == 0 ? shape_size(Shape(dims_.begin() + 1, dims_.end())) : size() / dims_[0]; }
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("cannot view shape " + shape_str(dims_) + " as " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  Shape dims_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

// Stack equally shaped row blocks along the leading axis.
template <typename Scalar>
BasicTensor<Scalar> concat_rows(const std::vector<BasicTensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Shape d = parts.front().dims();
  if (d.empty()) throw ShapeError("concat_rows needs rank >= 1");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<Index>(d.size()) ||
        !std::equal(d.begin() + 1, d.end(), p.dims().begin() + 1)) {
      throw ShapeError("concat_rows shape mismatch: " + shape_str(d) + " vs " + shape_str(p.dims()));
    }
    rows += p.dim(0);
  }
  d[0] = rows;
  BasicTensor<Scalar> out(d);
  Index offset = 0;
  for (const auto& p : parts) {
    out.data().segment(offset, p.size()) = p.data();
    offset += p.size();
  }
  return out;
}

template <typename Scalar>
bool all_finite(const BasicTensor<Scalar>& t) {
  return t.data().allFinite();
}

}  // namespace qadb
