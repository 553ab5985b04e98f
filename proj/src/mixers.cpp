#include "marlrr/mixers.hpp"

#include "marlrr/layers.hpp"

namespace marlrr {

namespace {

const std::string kHyperW1 = "mixer.hyper_w1";
const std::string kHyperB1 = "mixer.hyper_b1";
const std::string kHyperW2 = "mixer.hyper_w2";
const std::string kHyperB2a = "mixer.hyper_b2_1";
const std::string kHyperB2b = "mixer.hyper_b2_2";
const std::string kLambda = "mixer.lambda";

}  // namespace

std::string to_string(MixerKind kind) {
  switch (kind) {
    case MixerKind::Vdn: return "vdn";
    case MixerKind::Qmix: return "qmix";
    case MixerKind::Qplex: return "qplex";
  }
  return "?";
}

MixerKind parse_mixer_kind(const std::string& name) {
  if (name == "vdn") return MixerKind::Vdn;
  if (name == "qmix") return MixerKind::Qmix;
  if (name == "qplex") return MixerKind::Qplex;
  throw ConfigError("unknown mixer '" + name + "' (expected vdn, qmix or qplex)");
}

void MixerSpec::validate() const {
  if (n_agents < 1 || n_actions < 1 || state_dim < 1 || embed_dim < 1) {
    throw ConfigError("mixer dimensions must all be >= 1");
  }
}

ParamLayout mixer_layout(const MixerSpec& spec) {
  spec.validate();
  ParamLayout layout;
  switch (spec.kind) {
    case MixerKind::Vdn:
      break;
    case MixerKind::Qmix:
      add_linear(layout, kHyperW1, spec.state_dim, spec.n_agents * spec.embed_dim);
      add_linear(layout, kHyperB1, spec.state_dim, spec.embed_dim);
      add_linear(layout, kHyperW2, spec.state_dim, spec.embed_dim);
      add_linear(layout, kHyperB2a, spec.state_dim, spec.embed_dim);
      add_linear(layout, kHyperB2b, spec.embed_dim, 1);
      break;
    case MixerKind::Qplex:
      add_linear(layout, kLambda, spec.state_dim + spec.n_agents * spec.n_actions, spec.n_agents);
      break;
  }
  return layout;
}

MixerInput make_mixer_input(Tape& tape, Tape::Var utilities, const std::vector<int>& actions,
                            const Mat& available, Mat states, int n_agents) {
  const Eigen::Index total = tape.value(utilities).rows();
  const Eigen::Index A = tape.value(utilities).cols();
  const Eigen::Index rows = total / n_agents;
  if (total % n_agents != 0 || states.rows() != rows) {
    throw DimensionError("make_mixer_input: utilities and states disagree on row count");
  }
  MixerInput in;
  in.states = std::move(states);
  in.chosen = tape.reshape(tape.gather_cols(utilities, actions), rows, n_agents);
  in.values = tape.reshape(tape.max_cols(utilities, &available), rows, n_agents);
  in.chosen_one_hot = Mat::Zero(rows, n_agents * A);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index i = 0; i < n_agents; ++i)
      in.chosen_one_hot(r, i * A + actions[static_cast<std::size_t>(r * n_agents + i)]) = 1.0;
  return in;
}

MixerOutput vdn_mix(Tape& tape, const MixerInput& input) {
  return {tape.row_sum(input.chosen), {}, {}};
}

MixerOutput qmix_mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                     const MixerInput& input) {
  const Eigen::Index rows = tape.value(input.chosen).rows();
  if (tape.value(input.chosen).cols() != spec.n_agents || input.states.cols() != spec.state_dim ||
      input.states.rows() != rows) {
    throw DimensionError("qmix_mix: input shapes disagree with the mixer spec");
  }
  auto s = tape.input(input.states);
  auto w1 = tape.abs(linear(tape, params, kHyperW1, s));
  auto b1 = linear(tape, params, kHyperB1, s);
  auto hidden = tape.elu(tape.add(tape.batched_vecmat(input.chosen, w1, spec.embed_dim), b1));
  auto w2 = tape.abs(linear(tape, params, kHyperW2, s));
  auto b2 = linear(tape, params, kHyperB2b, tape.relu(linear(tape, params, kHyperB2a, s)));
  return {tape.add(tape.row_dot(hidden, w2), b2), hidden, {}};
}

MixerOutput qplex_mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                      const MixerInput& input, const MixOptions& options) {
  const Eigen::Index rows = tape.value(input.chosen).rows();
  if (!input.values.valid() || tape.value(input.chosen).cols() != spec.n_agents ||
      input.states.rows() != rows || tape.value(input.values).rows() != rows ||
      tape.value(input.values).cols() != spec.n_agents || input.chosen_one_hot.rows() != rows ||
      input.chosen_one_hot.cols() != spec.n_agents * spec.n_actions ||
      input.states.cols() != spec.state_dim) {
    throw DimensionError("qplex_mix: input shapes disagree with the mixer spec");
  }
  auto advantage = tape.sub(input.chosen, input.values);
  Tape::Var lambda;
  if (options.force_lambda_one) {
    lambda = tape.input(Mat::Ones(rows, spec.n_agents));
  } else {
    Mat head_in(rows, spec.state_dim + input.chosen_one_hot.cols());
    head_in << input.states, input.chosen_one_hot;
    auto raw = linear(tape, params, kLambda, tape.input(std::move(head_in)));
    lambda = tape.add_scalar(tape.abs(raw), kQplexLambdaFloor);
  }
  auto q = tape.add(tape.row_sum(input.values), tape.row_dot(lambda, advantage));
  return {q, {}, lambda};
}

MixerOutput mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                const MixerInput& input, const MixOptions& options) {
  switch (spec.kind) {
    case MixerKind::Vdn: return vdn_mix(tape, input);
    case MixerKind::Qmix: return qmix_mix(tape, params, spec, input);
    case MixerKind::Qplex: return qplex_mix(tape, params, spec, input, options);
  }
  throw ConfigError("unknown mixer kind");
}

namespace {

MixerInput constant_input(Tape& tape, const Mat& states, const Mat& chosen, const Mat& values,
                          const Mat& chosen_one_hot) {
  MixerInput in;
  in.states = states;
  in.chosen = tape.input(chosen, true);
  if (values.size() != 0) in.values = tape.input(values, true);
  in.chosen_one_hot = chosen_one_hot;
  return in;
}

}  // namespace

MixerGradients mixer_gradients(const ParamStore& params, const MixerSpec& spec, const Mat& states,
                               const Mat& chosen, const Mat& values, const Mat& chosen_one_hot,
                               const Mat& upstream, const MixOptions& options) {
  Tape tape;
  const MixerInput in = constant_input(tape, states, chosen, values, chosen_one_hot);
  const MixerOutput out = mix(tape, params, spec, in, options);
  auto weighted = tape.sum(tape.mul(out.q_tot, tape.input(upstream)));
  tape.backward(weighted);
  MixerGradients g;
  g.params = tape.gradients(params);
  g.chosen = tape.grad(in.chosen).size() ? tape.grad(in.chosen) : Mat::Zero(chosen.rows(), chosen.cols());
  if (in.values.valid()) {
    g.values = tape.grad(in.values).size() ? tape.grad(in.values) : Mat::Zero(values.rows(), values.cols());
  }
  return g;
}

Mat mixer_value(const ParamStore& params, const MixerSpec& spec, const Mat& states,
                const Mat& chosen, const Mat& values, const Mat& chosen_one_hot,
                const MixOptions& options) {
  Tape tape;
  const MixerInput in = constant_input(tape, states, chosen, values, chosen_one_hot);
  return tape.value(mix(tape, params, spec, in, options).q_tot);
}

}  // namespace marlrr
