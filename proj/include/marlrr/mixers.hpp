#pragma once

#include <string>
#include <vector>

#include "marlrr/params.hpp"
#include "marlrr/tape.hpp"

namespace marlrr {

enum class MixerKind { Vdn, Qmix, Qplex };

std::string to_string(MixerKind kind);
MixerKind parse_mixer_kind(const std::string& name);

struct MixerSpec {
  MixerKind kind = MixerKind::Vdn;
  int n_agents = 1;
  int n_actions = 1;
  int state_dim = 1;
  int embed_dim = 32;  // QMIX mixing width

  void validate() const;
};

/// Lower bound added to QPLEX λ so it is strictly positive.
inline constexpr double kQplexLambdaFloor = 1e-6;

ParamLayout mixer_layout(const MixerSpec& spec);

/// Mixer arguments for R rows (one row per (time, episode) cell).
struct MixerInput {
  Mat states;                  // [R × state_dim]
  Tape::Var chosen;            // [R × n] utilities at the chosen actions
  Tape::Var values;            // [R × n] V_i = max_a u_i(a); QPLEX only
  Mat chosen_one_hot;          // [R × n·A]; QPLEX only
};

struct MixOptions {
  bool force_lambda_one = false;  // QPLEX test hook: λ ≡ 1
};

struct MixerOutput {
  Tape::Var q_tot;   // [R × 1]
  Tape::Var hidden;  // QMIX ELU layer [R × embed]; invalid for other kinds
  Tape::Var lambda;  // QPLEX λ [R × n]; invalid for other kinds
};

/// Builds a MixerInput from per-agent utilities [R·n × A] (rows ordered
/// (cell, agent)), chosen actions (R·n entries) and availability [R·n × A].
MixerInput make_mixer_input(Tape& tape, Tape::Var utilities, const std::vector<int>& actions,
                            const Mat& available, Mat states, int n_agents);

MixerOutput vdn_mix(Tape& tape, const MixerInput& input);
MixerOutput qmix_mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                     const MixerInput& input);
MixerOutput qplex_mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                      const MixerInput& input, const MixOptions& options = {});
MixerOutput mix(Tape& tape, const ParamStore& params, const MixerSpec& spec,
                const MixerInput& input, const MixOptions& options = {});

struct MixerGradients {
  GradStore params;
  Mat chosen;  // ∂/∂ chosen utilities [R × n]
  Mat values;  // ∂/∂ V_i [R × n] (QPLEX)
};

/// Gradients of Σ upstream ⊙ q_tot with respect to φ and the utility inputs.
MixerGradients mixer_gradients(const ParamStore& params, const MixerSpec& spec, const Mat& states,
                               const Mat& chosen, const Mat& values, const Mat& chosen_one_hot,
                               const Mat& upstream, const MixOptions& options = {});

/// Forward only, returning q_tot [R × 1].
Mat mixer_value(const ParamStore& params, const MixerSpec& spec, const Mat& states,
                const Mat& chosen, const Mat& values, const Mat& chosen_one_hot,
                const MixOptions& options = {});

}  // namespace marlrr
