#pragma once

// Straight-line reference implementations used to check the library.
// Everything here is written with explicit scalar loops over plain indices
// and shares no code path with the vectorized implementations under test.

#include <string>
#include <vector>

#include "marlrr/trainer.hpp"

namespace oracle {

using marlrr::Mat;
using marlrr::ParamStore;
using marlrr::Vec;

double sigmoid(double x);
double elu(double x);

/// y[b][o] = Σ_k W[o][k] x[b][k] + bias[o].
Mat linear(const Mat& w, const Vec& bias, const Mat& x);

/// One GRU step on [batch × in] with weights read from `prefix`.{w_x,u_rz,u_c,b}.
Mat gru_step(const ParamStore& params, const std::string& prefix, const Mat& x, const Mat& h);

/// Utilities [n × A] per slot for episode `b` of `batch`, slots 0..slots-1.
std::vector<Mat> agent_episode(const ParamStore& params, const marlrr::AgentNetworkSpec& spec,
                               const marlrr::EpisodeBatch& batch, int b, int slots);

/// QMIX q_tot for one state and chosen-utility vector.
double qmix(const ParamStore& params, int embed, const Vec& state, const Vec& chosen);

/// QPLEX q_tot for one state, full utilities [n × A], availability and chosen actions.
double qplex(const ParamStore& params, const Vec& state, const Mat& utilities, const Mat& available,
             const std::vector<int>& actions, bool lambda_one = false);

/// Mixed value for any kind; `utilities` is [n × A].
double mix(marlrr::MixerKind kind, const ParamStore& params, int embed, const Vec& state,
           const Mat& utilities, const Mat& available, const std::vector<int>& actions);

/// Online value at the taken actions and target value at the target-greedy
/// next actions for one valid transition.
struct TdTerm {
  int episode = 0;
  int t = 0;
  double q = 0.0;
  double q_next = 0.0;
  double reward = 0.0;
  double terminated = 0.0;
};

std::vector<TdTerm> td_terms(const marlrr::EpisodeBatch& batch, const marlrr::Networks& nets,
                             const marlrr::LearnerState& state);

/// Full TD loss evaluated transition by transition.
double td_loss(const marlrr::EpisodeBatch& batch, const marlrr::Networks& nets,
               const marlrr::LearnerState& state, double gamma);

/// Neuron scores by two explicit loops.
Vec neuron_scores(const Mat& activations);
double dormant_ratio(const Vec& scores, double rho);

/// Random episode of `length` steps with random views, masks (≥1 action
/// available per agent), legal actions and rewards.
marlrr::Trajectory random_trajectory(const marlrr::DecPomdpSpec& spec, int length, bool terminal,
                                     marlrr::Rng& rng);

/// Gradient agreement: |a − f| ≤ max(abs_floor, rel · max(|a|, |f|)).
struct GradCheck {
  long long components = 0;
  long long violations = 0;
  double worst_rel = 0.0;
  std::string worst_name;

  bool ok() const { return violations == 0; }
};

void compare(GradCheck& check, const std::string& name, const Mat& analytic, const Mat& numeric,
             double rel = 1e-4, double abs_floor = 1e-7);
void compare(GradCheck& check, const marlrr::GradStore& analytic, const marlrr::GradStore& numeric,
             double rel = 1e-4, double abs_floor = 1e-7);

/// Central differences of `f` with respect to each entry of `x`.
Mat numeric_gradient(const std::function<double(const Mat&)>& f, const Mat& x, double step = 1e-5);

}  // namespace oracle
