#include "marlrr/layers.hpp"

namespace marlrr {

Tensor linear_forward(const Tensor& weights, const Tensor& bias, const Tensor& input) {
  if (weights.rank() != 2 || bias.rank() != 1 || input.rank() > 2) {
    throw DimensionError("linear_forward: expected weights [out x in], bias [out], input [batch x in]");
  }
  return Tensor::from_matrix(linear_forward(weights.matrix(), bias.data(), input.matrix()));
}

GruWeights<double> gru_weights(const ParamStore& params, const std::string& prefix) {
  const GruNames names(prefix);
  GruWeights<double> w;
  w.input_weights = params.at(names.input_weights).matrix();
  w.hidden_rz = params.at(names.hidden_rz).matrix();
  w.hidden_c = params.at(names.hidden_c).matrix();
  w.bias = params.at(names.bias).data().transpose();
  return w;
}

Mat gru_cell_forward(const ParamStore& params, const std::string& prefix, const Mat& input,
                     const Mat& hidden) {
  return gru_cell_forward(gru_weights(params, prefix), input, hidden);
}

Tape::Var linear(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x) {
  auto w = tape.param(params, prefix + ".weight");
  auto b = tape.param(params, prefix + ".bias");
  return tape.add_row(tape.matmul_nt(x, w), b);
}

Tape::Var gru_input_projection(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x) {
  const GruNames names(prefix);
  return tape.add_row(tape.matmul_nt(x, tape.param(params, names.input_weights)), tape.param(params, names.bias));
}

Tape::Var gru_cell_projected(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var gx,
                             Tape::Var h) {
  const GruNames names(prefix);
  auto u_rz = tape.param(params, names.hidden_rz);
  auto u_c = tape.param(params, names.hidden_c);
  const Eigen::Index H = tape.value(u_c).rows();
  if (tape.value(h).cols() != H || tape.value(gx).cols() != 3 * H || tape.value(gx).rows() != tape.value(h).rows()) {
    throw DimensionError("gru_cell: hidden " + std::to_string(tape.value(h).rows()) + "x" +
                         std::to_string(tape.value(h).cols()) + ", projection " +
                         std::to_string(tape.value(gx).rows()) + "x" + std::to_string(tape.value(gx).cols()) +
                         ", H=" + std::to_string(H));
  }
  auto gh = tape.matmul_nt(h, u_rz);
  auto r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, H), tape.slice_cols(gh, 0, H)));
  auto z = tape.sigmoid(tape.add(tape.slice_cols(gx, H, H), tape.slice_cols(gh, H, H)));
  auto c = tape.tanh(tape.add(tape.slice_cols(gx, 2 * H, H), tape.matmul_nt(tape.mul(r, h), u_c)));
  return tape.add(h, tape.mul(z, tape.sub(c, h)));
}

Tape::Var gru_cell(Tape& tape, const ParamStore& params, const std::string& prefix, Tape::Var x,
                   Tape::Var h) {
  return gru_cell_projected(tape, params, prefix, gru_input_projection(tape, params, prefix, x), h);
}

}  // namespace marlrr
