#pragma once

#include <cmath>
#include <string>

#include "marlrr/tape.hpp"
#include "marlrr/tensor.hpp"

namespace marlrr {

template <typename Scalar>
Scalar sigmoid_scalar(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar elu_scalar(Scalar x) {
  return x > Scalar(0) ? x : std::expm1(x);
}

/// output[b] = weights · input[b] + bias, for weights [out×in] and input [batch×in].
template <typename DerivedW, typename DerivedB, typename DerivedX>
MatrixR<typename DerivedX::Scalar> linear_forward(const Eigen::MatrixBase<DerivedW>& weights,
                                                  const Eigen::MatrixBase<DerivedB>& bias,
                                                  const Eigen::MatrixBase<DerivedX>& input) {
  if (input.cols() != weights.cols() || bias.size() != weights.rows()) {
    throw DimensionError("linear_forward: weights " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()) + ", bias " + std::to_string(bias.size()) +
                         ", input " + std::to_string(input.rows()) + "x" +
                         std::to_string(input.cols()));
  }
  using Scalar = typename DerivedX::Scalar;
  MatrixR<Scalar> out = input * weights.transpose();
  out.rowwise() += bias.derived().reshaped().transpose();
  return out;
}

/// Tensor-level linear layer with shape checks.
Tensor linear_forward(const Tensor& weights, const Tensor& bias, const Tensor& input);

/// Gated recurrent unit weights, gates stacked in (reset, update, candidate) order.
///
/// input_weights: [3H×in], hidden_rz: [2H×H] acting on h, hidden_c: [H×H]
/// acting on r⊙h, bias: [3H].
template <typename Scalar>
struct GruWeights {
  MatrixR<Scalar> input_weights;
  MatrixR<Scalar> hidden_rz;
  MatrixR<Scalar> hidden_c;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> bias;

  Eigen::Index hidden_dim() const { return hidden_c.rows(); }
  Eigen::Index input_dim() const { return input_weights.cols(); }
};

/// Parameter names of a GRU cell stored under `prefix`.
struct GruNames {
  std::string input_weights, hidden_rz, hidden_c, bias;
  explicit GruNames(const std::string& prefix)
      : input_weights(prefix + ".w_x"),
        hidden_rz(prefix + ".u_rz"),
        hidden_c(prefix + ".u_c"),
        bias(prefix + ".b") {}
};

GruWeights<double> gru_weights(const ParamStore& params, const std::string& prefix);

/// GRU step from a precomputed input projection gx = x·W_xᵀ + b [batch×3H].
template <typename Scalar, typename DerivedG, typename DerivedH>
MatrixR<Scalar> gru_cell_projected(const GruWeights<Scalar>& w, const Eigen::MatrixBase<DerivedG>& gx,
                                   const Eigen::MatrixBase<DerivedH>& hidden) {
  const Eigen::Index H = w.hidden_dim();
  const MatrixR<Scalar> gh = hidden * w.hidden_rz.transpose();
  const MatrixR<Scalar> r = (gx.leftCols(H) + gh.leftCols(H)).unaryExpr([](Scalar v) {
    return sigmoid_scalar(v);
  });
  const MatrixR<Scalar> z = (gx.middleCols(H, H) + gh.rightCols(H)).unaryExpr([](Scalar v) {
    return sigmoid_scalar(v);
  });
  const MatrixR<Scalar> gated = r.cwiseProduct(hidden);
  const MatrixR<Scalar> c =
      (gx.rightCols(H) + gated * w.hidden_c.transpose()).array().tanh().matrix();
  return hidden + z.cwiseProduct(c - hidden);
}

/// One GRU step: r = σ(W_r x + U_r h + b_r), z = σ(W_z x + U_z h + b_z),
/// c = tanh(W_c x + U_c (r⊙h) + b_c), h' = (1−z)⊙h + z⊙c.
template <typename Scalar, typename DerivedX, typename DerivedH>
MatrixR<Scalar> gru_cell_forward(const GruWeights<Scalar>& w, const Eigen::MatrixBase<DerivedX>& input,
                                 const Eigen::MatrixBase<DerivedH>& hidden) {
  const Eigen::Index H = w.hidden_dim();
  if (input.cols() != w.input_dim() || hidden.cols() != H || input.rows() != hidden.rows() ||
      w.input_weights.rows() != 3 * H || w.hidden_rz.rows() != 2 * H || w.hidden_rz.cols() != H ||
      w.hidden_c.cols() != H || w.bias.size() != 3 * H) {
    throw DimensionError("gru_cell_forward: inconsistent shapes (input " +
                         std::to_string(input.rows()) + "x" + std::to_string(input.cols()) +
                         ", hidden " + std::to_string(hidden.rows()) + "x" +
                         std::to_string(hidden.cols()) + ", H=" + std::to_string(H) + ")");
  }
  MatrixR<Scalar> gx = input * w.input_weights.transpose();
  gx.rowwise() += w.bias;
  return gru_cell_projected(w, gx, hidden);
}

/// ParamStore-slice overload: weights read from `prefix`.{w_x,u_rz,u_c,b}.
Mat gru_cell_forward(const ParamStore& params, const std::string& prefix, const Mat& input,
                     const Mat& hidden);

/// Tape-recorded linear layer; `prefix`.weight is [out×in], `prefix`.bias is [out].
Tape::Var linear(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x);

/// Tape-recorded GRU step with the same algebra as gru_cell_forward.
Tape::Var gru_cell(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x,
                   Tape::Var h);

/// Tape-recorded input projection x·W_xᵀ + b, stackable across time steps.
Tape::Var gru_input_projection(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x);

/// Tape-recorded GRU step from a projection made by gru_input_projection.
Tape::Var gru_cell_projected(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var gx,
                             Tape::Var h);

}  // namespace marlrr
