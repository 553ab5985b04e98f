#include "marlrr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace marlrr {

Eigen::Index shape_size(const Shape& shape) {
  Eigen::Index n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(Vec::Zero(shape_size(shape_))) {}

Tensor::Tensor(Shape shape, Vec data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), Eigen::Map<const Vec>(values.begin(),
                                                      static_cast<Eigen::Index>(values.size()))) {}

Tensor Tensor::from_matrix(const Mat& m) {
  return Tensor({m.rows(), m.cols()}, Eigen::Map<const Vec>(m.data(), m.size()));
}

Tensor Tensor::checked(Shape shape, Vec data) {
  Tensor t(std::move(shape), std::move(data));
  t.check_finite("Tensor::checked");
  return t;
}

Eigen::Index Tensor::rows() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return 1;
  return data_.size() == 0 ? 0 : data_.size() / shape_.back();
}

Eigen::Index Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

Eigen::Map<Mat> Tensor::matrix() { return {data_.data(), rows(), cols()}; }

Eigen::Map<const Mat> Tensor::matrix() const { return {data_.data(), rows(), cols()}; }

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError(what + ": non-finite value in tensor");
}

void ParamStore::add(const std::string& name, Tensor value) {
  if (!entries_.emplace(name, std::move(value)).second) {
    throw ContractViolation("duplicate parameter name '" + name + "'");
  }
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown parameter '" + name + "'");
  return it->second;
}

Eigen::Index ParamStore::scalar_count() const {
  Eigen::Index n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

bool ParamStore::congruent(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  }
  return true;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (!congruent(other)) return false;
  auto b = other.entries_.begin();
  for (auto a = entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (!(a->second == b->second)) return false;
  }
  return true;
}

GradStore::GradStore(const ParamStore& params) {
  for (const auto& [name, t] : params.entries()) entries_.emplace(name, Tensor::zeros(t.shape()));
}

Tensor& GradStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown gradient '" + name + "'");
  return it->second;
}

const Tensor& GradStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown gradient '" + name + "'");
  return it->second;
}

void GradStore::set_zero() {
  for (auto& [name, t] : entries_) t.data().setZero();
}

double GradStore::norm() const {
  double sq = 0.0;
  for (const auto& [name, t] : entries_) sq += t.data().squaredNorm();
  return std::sqrt(sq);
}

bool GradStore::congruent(const ParamStore& params) const {
  if (entries_.size() != params.size()) return false;
  auto b = params.entries().begin();
  for (auto a = entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  }
  return true;
}

}  // namespace marlrr
