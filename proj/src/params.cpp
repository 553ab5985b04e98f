#include "marlrr/params.hpp"

#include <cmath>

namespace marlrr {

void add_linear(ParamLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index out) {
  layout.push_back({prefix + ".weight", {out, in}, in, false});
  layout.push_back({prefix + ".bias", {out}, in, true});
}

void add_gru(ParamLayout& layout, const std::string& prefix, Eigen::Index in, Eigen::Index hidden) {
  layout.push_back({prefix + ".w_x", {3 * hidden, in}, in, false});
  layout.push_back({prefix + ".u_rz", {2 * hidden, hidden}, hidden, false});
  layout.push_back({prefix + ".u_c", {hidden, hidden}, hidden, false});
  layout.push_back({prefix + ".b", {3 * hidden}, hidden, true});
}

namespace {

Tensor draw(const ParamSpec& spec, Rng& rng) {
  Tensor t = Tensor::zeros(spec.shape);
  if (spec.is_bias) return t;
  if (spec.fan_in <= 0) throw ConfigError("parameter '" + spec.name + "' has non-positive fan_in");
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ParamStore init_params(const ParamLayout& layout, Rng& rng) {
  ParamStore store;
  for (const auto& spec : layout) store.add(spec.name, draw(spec, rng));
  return store;
}

NameSelector select_prefix(std::string prefix) {
  return [prefix = std::move(prefix)](const std::string& name) {
    return name.compare(0, prefix.size(), prefix) == 0;
  };
}

NameSelector select_all() {
  return [](const std::string&) { return true; };
}

NameSelector select_none() {
  return [](const std::string&) { return false; };
}

std::vector<std::string> reset_selected(ParamStore& params, const ParamLayout& layout,
                                        const NameSelector& selector, Rng& rng) {
  std::vector<std::string> touched;
  for (const auto& spec : layout) {
    if (!selector(spec.name)) continue;
    Tensor& current = params.at(spec.name);
    if (current.shape() != spec.shape) {
      throw DimensionError("reset_selected: '" + spec.name + "' has shape " +
                           shape_string(current.shape()) + ", layout says " +
                           shape_string(spec.shape));
    }
    current = draw(spec, rng);
    touched.push_back(spec.name);
  }
  return touched;
}

void sgd_step(ParamStore& params, const GradStore& grads, double rate) {
  if (!grads.congruent(params)) throw DimensionError("sgd_step: gradient store not congruent with params");
  auto g = grads.entries().begin();
  for (auto& [name, p] : params.entries()) {
    p.data() -= rate * g->second.data();
    ++g;
  }
  params.bump_version();
}

void ema_update(ParamStore& target, const ParamStore& online, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) {
    throw ConfigError("ema_update: eta must lie in (0, 1), got " + std::to_string(eta));
  }
  if (!target.congruent(online)) throw DimensionError("ema_update: stores not congruent");
  auto o = online.entries().begin();
  for (auto& [name, t] : target.entries()) {
    t.data() = (1.0 - eta) * t.data() + eta * o->second.data();
    ++o;
  }
  target.bump_version();
}

void hard_copy(ParamStore& dest, const ParamStore& source, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    Tensor& d = dest.at(name);
    const Tensor& s = source.at(name);
    if (!d.same_shape(s)) throw DimensionError("hard_copy: shape mismatch for '" + name + "'");
    d = s;
  }
}

GradStore finite_difference_gradient(const ScalarFunction& f, const ParamStore& params, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_difference_gradient: step must be positive");
  ParamStore probe = params;
  GradStore grads(params);
  for (auto& [name, g] : grads.entries()) {
    Tensor& p = probe.at(name);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + step;
      const double up = f(probe);
      p[i] = original - step;
      const double down = f(probe);
      p[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_difference_gradient: non-finite value perturbing '" + name + "'");
      }
      g[i] = (up - down) / (2.0 * step);
    }
  }
  return grads;
}

}  // namespace marlrr
