#pragma once

#include <functional>
#include <string>
#include <vector>

#include "marlrr/rng.hpp"
#include "marlrr/tensor.hpp"

namespace marlrr {

/// One parameter in a layer-shape description.
struct ParamSpec {
  std::string name;
  Shape shape;
  Eigen::Index fan_in = 1;
  bool is_bias = false;
};

/// Ordered description of a network's parameters. Draw order is list order.
using ParamLayout = std::vector<ParamSpec>;

/// Appends `prefix`.weight [out×in] and `prefix`.bias [out].
void add_linear(ParamLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index out);
/// Appends the four GRU tensors under `prefix` (see GruWeights).
void add_gru(ParamLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index hidden);

/// Weights uniform in [−1/√fan_in, 1/√fan_in], biases zero.
ParamStore init_params(const ParamLayout& layout, Rng& rng);

using NameSelector = std::function<bool(const std::string&)>;

NameSelector select_prefix(std::string prefix);
NameSelector select_all();
NameSelector select_none();

/// Redraws entries matched by `selector` with the init_params rule, walking
/// the layout in order. Unmatched entries stay bit-identical. Returns the
/// names that were reset.
std::vector<std::string> reset_selected(ParamStore& params, const ParamLayout& layout,
                                        const NameSelector& selector, Rng& rng);

/// p ← p − rate·g, then version += 1.
void sgd_step(ParamStore& params, const GradStore& grads, double rate);

/// t ← (1−eta)·t + eta·o for every scalar; eta must lie in (0, 1).
void ema_update(ParamStore& target, const ParamStore& online, double eta);

/// Copies `names` from `source` into `dest` without touching other entries.
void hard_copy(ParamStore& dest, const ParamStore& source, const std::vector<std::string>& names);

using ScalarFunction = std::function<double(const ParamStore&)>;

/// Central differences (f(p+step) − f(p−step)) / (2·step) per scalar component.
GradStore finite_difference_gradient(const ScalarFunction& f, const ParamStore& params, double step);

}  // namespace marlrr
