#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "marlrr/errors.hpp"

namespace marlrr {

/// Row-major dense matrix; every network value is carried in one of these.
template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = MatrixR<double>;
using Vec = Eigen::VectorXd;

using Shape = std::vector<Eigen::Index>;

Eigen::Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Rank-1 tensors view as a 1×n row, rank-2 as rows×cols, and higher ranks
/// as (product of leading extents)×(last extent).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Vec data);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor from_matrix(const Mat& m);
  /// Checked construction: NumericError when any value is NaN or infinite.
  static Tensor checked(Shape shape, Vec data);

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(shape_.size()); }
  Eigen::Index dim(std::size_t axis) const { return shape_.at(axis); }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }
  double& operator[](Eigen::Index i) { return data_[i]; }
  double operator[](Eigen::Index i) const { return data_[i]; }

  Eigen::Map<Mat> matrix();
  Eigen::Map<const Mat> matrix() const;

  bool all_finite() const { return data_.allFinite(); }
  /// Throws NumericError naming `what` when any value is NaN or infinite.
  void check_finite(const std::string& what) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Eigen::Index rows() const;
  Eigen::Index cols() const;

  Shape shape_;
  Vec data_;
};

/// Ordered named parameter set with a monotone update counter.
class ParamStore {
 public:
  using Entries = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  Entries& entries() { return entries_; }
  const Entries& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Eigen::Index scalar_count() const;

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  /// True when both stores have identical names and shapes.
  bool congruent(const ParamStore& other) const;
  /// Values equal entry by entry; versions ignored.
  bool same_values(const ParamStore& other) const;

 private:
  Entries entries_;
  std::uint64_t version_ = 0;
};

/// Gradient store shape-matched to a ParamStore.
class GradStore {
 public:
  GradStore() = default;
  /// Zero-initialized with the same names and shapes as `params`.
  explicit GradStore(const ParamStore& params);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::map<std::string, Tensor>& entries() { return entries_; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  void set_zero();
  double norm() const;
  bool congruent(const ParamStore& params) const;

 private:
  std::map<std::string, Tensor> entries_;
};

}  // namespace marlrr
