#include <doctest.h>

#include <cmath>

#include "marlrr/trainer.hpp"
#include "oracles.hpp"

using namespace marlrr;

namespace {

DecPomdpSpec env_spec() {
  DecPomdpSpec s;
  s.n_agents = 2;
  s.n_actions = 3;
  s.obs_dim = 4;
  s.state_dim = 5;
  s.horizon = 12;
  return s;
}

Networks nets_for(MixerKind mixer, int hidden = 6, AgentKind kind = AgentKind::Recurrent) {
  TrainConfig cfg;
  cfg.mixer = mixer;
  cfg.hidden_dim = hidden;
  cfg.agent_kind = kind;
  cfg.qmix_embed = 4;
  return make_networks(cfg, env_spec());
}

void jitter(ParamStore& p, Rng& rng, double scale) {
  for (auto& [name, t] : p.entries())
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] += rng.uniform(-scale, scale);
}

LearnerState random_state(const Networks& nets, std::uint64_t seed, bool distinct_target = true) {
  Rng rng(seed);
  LearnerState s = init_learner(nets, rng);
  jitter(s.agent, rng, 0.2);
  jitter(s.mixer, rng, 0.2);
  s.target_agent = s.agent;
  s.target_mixer = s.mixer;
  if (distinct_target) {
    jitter(s.target_agent, rng, 0.1);
    jitter(s.target_mixer, rng, 0.1);
  }
  return s;
}

struct Episodes {
  std::vector<Trajectory> storage;
  EpisodeBatch batch;

  void rebuild() {
    std::vector<const Trajectory*> ptrs;
    for (const auto& t : storage) ptrs.push_back(&t);
    batch = make_batch(ptrs, env_spec());
  }
};

Episodes random_episodes(const std::vector<int>& lengths, std::uint64_t seed, bool terminal = true) {
  Rng rng(seed);
  Episodes e;
  for (int len : lengths) e.storage.push_back(oracle::random_trajectory(env_spec(), len, terminal, rng));
  e.rebuild();
  return e;
}

bool same(const ParamStore& a, const ParamStore& b) { return a.congruent(b) && a.same_values(b); }

bool same_grads(const GradStore& a, const GradStore& b) {
  for (const auto& [name, t] : a.entries())
    if (t.data() != b.at(name).data()) return false;
  return true;
}

TrainConfig matrix_config() {
  TrainConfig cfg;
  cfg.env = EnvKind::Matrix;
  cfg.hidden_dim = 8;
  cfg.batch_size = 1;
  cfg.eval_every = 5;
  cfg.eval_episodes = 4;
  cfg.probe_batch = 2;
  return cfg;
}

TrainConfig small_grid_config() {
  TrainConfig cfg;
  cfg.grid.grid_size = 5;
  cfg.grid.n_agents = 2;
  cfg.grid.n_prey = 1;
  cfg.grid.horizon = 10;
  cfg.hidden_dim = 8;
  cfg.batch_size = 2;
  cfg.total_episodes = 6;
  cfg.eval_every = 3;
  cfg.eval_episodes = 2;
  cfg.probe_batch = 2;
  return cfg;
}

class EpisodeCollector final : public MetricsSink {
 public:
  void on_episode(int, const Trajectory& t) override { lengths.push_back(static_cast<long long>(t.length())); }
  std::vector<long long> lengths;
};

}  // namespace

TEST_SUITE("td loss") {
  TEST_CASE("single transition with gamma zero is the squared error") {
    const Networks nets = nets_for(MixerKind::Vdn);
    const LearnerState s = random_state(nets, 1);
    Episodes e = random_episodes({1}, 2);
    e.storage[0].transitions[0].reward = 0.75;
    e.rebuild();
    const Tensor u = agent_utilities(s.agent, nets.agent, e.batch, 1);
    double q = 0.0;
    for (int i = 0; i < 2; ++i) q += u[i * 3 + e.batch.action(0, 0, i)];
    const TdLoss td = compute_td_loss(e.batch, nets, s, 0.0);
    CHECK(td.loss == doctest::Approx((q - 0.75) * (q - 0.75)).epsilon(1e-12));
    CHECK(td.valid_cells == 1.0);
  }

  TEST_CASE("fixed-point rewards give zero loss") {
    for (MixerKind kind : {MixerKind::Vdn, MixerKind::Qmix, MixerKind::Qplex}) {
      const Networks nets = nets_for(kind);
      const LearnerState s = random_state(nets, 3, false);
      Episodes e = random_episodes({4, 6, 2}, 4, false);
      for (const oracle::TdTerm& k : oracle::td_terms(e.batch, nets, s)) {
        e.storage[static_cast<std::size_t>(k.episode)].transitions[static_cast<std::size_t>(k.t)].reward =
            k.q - (1.0 - k.terminated) * k.q_next;
      }
      e.rebuild();
      CHECK(compute_td_loss(e.batch, nets, s, 1.0).loss < 1e-24);
    }
  }

  TEST_CASE("loss matches the per-transition reference for every mixer") {
    for (MixerKind kind : {MixerKind::Vdn, MixerKind::Qmix, MixerKind::Qplex}) {
      for (AgentKind agent : {AgentKind::Recurrent, AgentKind::Feedforward}) {
        const Networks nets = nets_for(kind, 6, agent);
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
          const LearnerState s = random_state(nets, seed);
          const Episodes e = random_episodes({4, 2, 7, 1}, seed + 10, seed % 2 == 0);
          const double lib = compute_td_loss(e.batch, nets, s, 0.9).loss;
          const double ref = oracle::td_loss(e.batch, nets, s, 0.9);
          CHECK_MESSAGE(std::abs(lib - ref) <= 1e-11 * std::max(1.0, std::abs(ref)), to_string(kind), " seed ",
                        seed);
        }
      }
    }
  }

  TEST_CASE("targets follow the time-major order") {
    const Networks nets = nets_for(MixerKind::Vdn);
    const LearnerState s = random_state(nets, 6);
    const Episodes e = random_episodes({3, 2}, 7);
    const Mat y = td_targets(e.batch, nets, s.target_agent, s.target_mixer, 0.5);
    CHECK(y.rows() == 2 * 3);
    for (const oracle::TdTerm& k : oracle::td_terms(e.batch, nets, s)) {
      const double expect = k.reward + 0.5 * (1.0 - k.terminated) * k.q_next;
      CHECK(y(k.t * 2 + k.episode, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("padded cells never reach the loss or gradients") {
    for (MixerKind kind : {MixerKind::Vdn, MixerKind::Qmix, MixerKind::Qplex}) {
      const Networks nets = nets_for(kind);
      const LearnerState s = random_state(nets, 8);
      const Episodes e = random_episodes({2, 6, 3}, 9);
      EpisodeBatch noisy = e.batch;
      Rng rng(10);
      const int T = noisy.max_length;
      for (int b = 0; b < noisy.batch_size; ++b) {
        const int len = noisy.lengths[static_cast<std::size_t>(b)];
        for (int t = len + 1; t <= T; ++t) {
          for (int k = 0; k < noisy.state_dim; ++k)
            noisy.states[(static_cast<Eigen::Index>(b) * (T + 1) + t) * noisy.state_dim + k] = rng.uniform(-5, 5);
          for (int k = 0; k < 2 * noisy.obs_dim; ++k)
            noisy.obs[(static_cast<Eigen::Index>(b) * (T + 1) + t) * 2 * noisy.obs_dim + k] = rng.uniform(-5, 5);
          for (int k = 0; k < 2 * 3; ++k)
            noisy.available[(static_cast<Eigen::Index>(b) * (T + 1) + t) * 6 + k] = 1.0;
        }
        for (int t = len; t < T; ++t) {
          noisy.rewards[static_cast<Eigen::Index>(b) * T + t] = rng.uniform(-5, 5);
          noisy.terminated[static_cast<Eigen::Index>(b) * T + t] = 1.0;
          for (int i = 0; i < 2; ++i)
            noisy.actions[static_cast<std::size_t>((b * T + t) * 2 + i)] = static_cast<int>(rng.below(3));
        }
      }
      const TdLoss clean = compute_td_loss(e.batch, nets, s, 0.99);
      const TdLoss dirty = compute_td_loss(noisy, nets, s, 0.99);
      CHECK(clean.loss == dirty.loss);
      CHECK(same_grads(clean.agent_grads, dirty.agent_grads));
      CHECK(same_grads(clean.mixer_grads, dirty.mixer_grads));
    }
  }

  TEST_CASE("empty valid mask is a contract violation") {
    const Networks nets = nets_for(MixerKind::Vdn);
    const LearnerState s = random_state(nets, 1);
    Episodes e = random_episodes({2}, 1);
    e.batch.valid.data().setZero();
    CHECK_THROWS_AS(compute_td_loss(e.batch, nets, s, 0.99), ContractViolation);
  }

  TEST_CASE("gradients through mixer and GRU agree with finite differences") {
    for (MixerKind kind : {MixerKind::Vdn, MixerKind::Qmix, MixerKind::Qplex}) {
      const Networks nets = nets_for(kind, 5);
      const LearnerState s = random_state(nets, 11);
      const Episodes e = random_episodes({8, 5}, 12, false);
      const TdLoss td = compute_td_loss(e.batch, nets, s, 0.99);

      auto with_agent = [&](const ParamStore& p) {
        LearnerState x = s;
        x.agent = p;
        return oracle::td_loss(e.batch, nets, x, 0.99);
      };
      auto with_mixer = [&](const ParamStore& p) {
        LearnerState x = s;
        x.mixer = p;
        return oracle::td_loss(e.batch, nets, x, 0.99);
      };
      oracle::GradCheck check;
      oracle::compare(check, td.agent_grads, finite_difference_gradient(with_agent, s.agent, 1e-5));
      if (kind != MixerKind::Vdn)
        oracle::compare(check, td.mixer_grads, finite_difference_gradient(with_mixer, s.mixer, 1e-5));
      CHECK_MESSAGE(check.ok(), to_string(kind), " worst ", check.worst_name, " rel ", check.worst_rel);
    }
  }
}

TEST_SUITE("train step") {
  struct Fixture {
    Networks nets = nets_for(MixerKind::Qmix);
    LearnerState state = random_state(nets, 20, false);
    ReplayBuffer buffer{16};
    TrainConfig config;

    Fixture() {
      Rng rng(21);
      for (int k = 0; k < 6; ++k) buffer.push(oracle::random_trajectory(env_spec(), 1 + k % 4, true, rng));
      config.batch_size = 3;
      config.mixer = MixerKind::Qmix;
    }
  };

  TEST_CASE("N updates consume N fresh batches") {
    Fixture f;
    f.config.replay_ratio = 4;
    Rng rng(5);
    Rng mirror(5);
    TrainProgress progress;
    std::vector<long long> seen;
    const int done = train_step(f.buffer, f.state, f.nets, f.config, rng, progress,
                                [&](const UpdateRecord& u) { seen.push_back(u.update); });
    CHECK(done == 4);
    CHECK(progress.updates == 4);
    CHECK(progress.batches_drawn == 4);
    CHECK(progress.ema_applications == 4);
    CHECK(seen == std::vector<long long>{1, 2, 3, 4});
    std::vector<std::vector<std::size_t>> draws;
    for (int k = 0; k < 4; ++k) draws.push_back(f.buffer.sample(3, mirror, f.nets.env).source_slots);
    CHECK(rng.next() == mirror.next());
    bool distinct = false;
    for (int k = 1; k < 4; ++k) distinct = distinct || draws[static_cast<std::size_t>(k)] != draws[0];
    CHECK(distinct);
  }

  TEST_CASE("N=1 equals a hand-rolled single update") {
    Fixture f;
    f.config.replay_ratio = 1;
    LearnerState manual = f.state;
    Rng rng(6);
    Rng mirror(6);
    TrainProgress progress;
    for (int rep = 0; rep < 3; ++rep) {
      train_step(f.buffer, f.state, f.nets, f.config, rng, progress);
      const EpisodeBatch batch = f.buffer.sample(3, mirror, f.nets.env);
      const TdLoss td = compute_td_loss(batch, f.nets, manual, f.config.gamma);
      sgd_step(manual.agent, td.agent_grads, f.config.alpha_theta);
      sgd_step(manual.mixer, td.mixer_grads, f.config.alpha_phi);
      ema_update(manual.target_agent, manual.agent, f.config.eta_theta);
      ema_update(manual.target_mixer, manual.mixer, f.config.eta_phi);
    }
    CHECK(same(f.state.agent, manual.agent));
    CHECK(same(f.state.mixer, manual.mixer));
    CHECK(same(f.state.target_agent, manual.target_agent));
    CHECK(same(f.state.target_mixer, manual.target_mixer));
  }

  TEST_CASE("buffer below batch size is a no-op") {
    Fixture f;
    f.config.batch_size = 7;
    const LearnerState before = f.state;
    Rng rng(7);
    Rng mirror(7);
    TrainProgress progress;
    CHECK(train_step(f.buffer, f.state, f.nets, f.config, rng, progress) == 0);
    CHECK(progress.updates == 0);
    CHECK(same(f.state.agent, before.agent));
    CHECK(same(f.state.target_mixer, before.target_mixer));
    CHECK(rng.next() == mirror.next());
  }

  TEST_CASE("update cap stops the inner loop") {
    Fixture f;
    f.config.replay_ratio = 4;
    f.config.max_updates = 6;
    Rng rng(8);
    TrainProgress progress;
    CHECK(train_step(f.buffer, f.state, f.nets, f.config, rng, progress) == 4);
    CHECK(train_step(f.buffer, f.state, f.nets, f.config, rng, progress) == 2);
    CHECK(train_step(f.buffer, f.state, f.nets, f.config, rng, progress) == 0);
    CHECK(progress.updates == 6);
  }

  TEST_CASE("frozen online parameters give the EMA closed form on targets") {
    Fixture f;
    f.config.replay_ratio = 5;
    f.config.alpha_theta = 0.0;
    f.config.alpha_phi = 0.0;
    f.config.eta_theta = 0.05;
    f.config.eta_phi = 0.1;
    Rng init(22);
    jitter(f.state.target_agent, init, 0.5);
    jitter(f.state.target_mixer, init, 0.5);
    const LearnerState start = f.state;
    Rng rng(9);
    TrainProgress progress;
    train_step(f.buffer, f.state, f.nets, f.config, rng, progress);
    train_step(f.buffer, f.state, f.nets, f.config, rng, progress);
    auto check_closed_form = [](const ParamStore& target, const ParamStore& initial, const ParamStore& online,
                                double eta) {
      const double keep = std::pow(1.0 - eta, 10);
      for (const auto& [name, t] : target.entries()) {
        const Vec expect = keep * initial.at(name).data() + (1.0 - keep) * online.at(name).data();
        CHECK((t.data() - expect).cwiseAbs().maxCoeff() < 1e-12);
      }
    };
    CHECK(same(f.state.agent, start.agent));
    check_closed_form(f.state.target_agent, start.target_agent, start.agent, 0.05);
    check_closed_form(f.state.target_mixer, start.target_mixer, start.mixer, 0.1);
  }
}

TEST_SUITE("run") {
  TEST_CASE("J=10 with N=2 and batch size 1 records 20 updates") {
    TrainConfig cfg = matrix_config();
    cfg.total_episodes = 10;
    cfg.replay_ratio = 2;
    const RunMetrics m = run(cfg);
    CHECK(m.gradient_updates == 20);
    CHECK(m.updates.size() == 20);
    CHECK(m.batches_drawn == 20);
    CHECK(m.ema_applications == 20);
    CHECK(m.episodes_with_updates == 10);
    CHECK(m.evals.size() == 2);
    CHECK(m.updates.back().update == 20);
  }

  TEST_CASE("update total is N times the episodes after the buffer is ready") {
    TrainConfig cfg = small_grid_config();
    cfg.replay_ratio = 3;
    const RunMetrics m = run(cfg);
    CHECK(m.episodes_with_updates == cfg.total_episodes - cfg.batch_size + 1);
    CHECK(m.gradient_updates == 3 * m.episodes_with_updates);
  }

  TEST_CASE("env-step total is the sum of episode lengths") {
    TrainConfig cfg = small_grid_config();
    EpisodeCollector sink;
    const RunMetrics m = run(cfg, &sink);
    REQUIRE(sink.lengths.size() == 6);
    long long total = 0;
    for (long long l : sink.lengths) total += l;
    CHECK(m.env_steps == total);
    CHECK(m.evals.back().env_steps == total);
  }

  TEST_CASE("same config and seed reproduce the run exactly") {
    TrainConfig cfg = small_grid_config();
    cfg.mixer = MixerKind::Qplex;
    cfg.replay_ratio = 2;
    cfg.reset_every = 3;
    const RunMetrics a = run(cfg);
    const RunMetrics b = run(cfg);
    REQUIRE(a.updates.size() == b.updates.size());
    for (std::size_t k = 0; k < a.updates.size(); ++k) {
      CHECK(a.updates[k].loss == b.updates[k].loss);
      CHECK(a.updates[k].grad_norm == b.updates[k].grad_norm);
    }
    REQUIRE(a.evals.size() == b.evals.size());
    for (std::size_t k = 0; k < a.evals.size(); ++k) {
      CHECK(a.evals[k].result.discounted_return == b.evals[k].result.discounted_return);
      CHECK(a.evals[k].dnr.overall == b.evals[k].dnr.overall);
    }
    CHECK(a.resets == 2);
    cfg.seed = 2;
    CHECK(run(cfg).updates.front().loss != a.updates.front().loss);
  }

  TEST_CASE("invalid config fails before any work") {
    TrainConfig cfg = matrix_config();
    cfg.replay_ratio = 0;
    EpisodeCollector sink;
    CHECK_THROWS_AS(run(cfg, &sink), ConfigError);
    CHECK(sink.lengths.empty());
  }

  TEST_CASE("episodes to threshold reads the first qualifying evaluation") {
    RunMetrics m;
    for (int k = 1; k <= 4; ++k) {
      EvalRecord e;
      e.episode = k * 100;
      e.result.win_rate = k * 0.25;
      m.evals.push_back(e);
    }
    CHECK(m.episodes_to_threshold(0.5) == 200);
    CHECK(m.episodes_to_threshold(0.8) == 400);
    CHECK(m.episodes_to_threshold(1.1) == -1);
    CHECK(m.final_eval()->episode == 400);
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("matrix game with greedy joint action (0,0)") {
    TrainConfig cfg = matrix_config();
    MatrixGame game;
    const Networks nets = make_networks(cfg, game.spec());
    Rng init(1);
    ParamStore p = init_params(nets.agent_layout, init);
    for (auto& [name, t] : p.entries()) t.data().setZero();
    p.at("agent.fc2.bias")[0] = 1.0;
    Rng rng(2);
    const EvalResult r = evaluate(p, nets, game, 8, 0.99, rng);
    CHECK(r.mean_return == 1.0);
    CHECK(r.discounted_return == 1.0);
    CHECK(r.win_rate == 1.0);
  }

  TEST_CASE("zero parameters replay the always-action-0 policy") {
    GridworldConfig g;
    g.grid_size = 5;
    g.horizon = 15;
    CaptureGridworld env(g);
    TrainConfig cfg;
    cfg.hidden_dim = 4;
    const Networks nets = make_networks(cfg, env.spec());
    Rng init(1);
    ParamStore p = init_params(nets.agent_layout, init);
    for (auto& [name, t] : p.entries()) t.data().setZero();
    for (std::uint64_t s = 1; s <= 5; ++s) {
      Rng rng(s);
      const EvalResult r = evaluate(p, nets, env, 1, 0.9, rng);
      CaptureGridworld replay(g);
      replay.reset(Rng(s).next());
      double total = 0.0, discounted = 0.0, discount = 1.0, first = 0.0;
      for (int k = 0; !replay.terminated(); ++k) {
        const StepOutcome o = replay.step(std::vector<int>(3, 0));
        if (k == 0) first = o.reward;
        total += o.reward;
        discounted += discount * o.reward;
        discount *= 0.9;
      }
      CHECK(r.mean_return == doctest::Approx(total).epsilon(1e-12));
      CHECK(r.discounted_return == doctest::Approx(discounted).epsilon(1e-12));
      Rng again(s);
      CHECK(evaluate(p, nets, env, 1, 0.0, again).discounted_return == doctest::Approx(first).epsilon(1e-12));
    }
  }

  TEST_CASE("episode count must be positive") {
    MatrixGame game;
    const Networks nets = make_networks(matrix_config(), game.spec());
    Rng rng(1);
    const ParamStore p = init_params(nets.agent_layout, rng);
    CHECK_THROWS_AS(evaluate(p, nets, game, 0, 0.99, rng), ContractViolation);
  }
}

TEST_SUITE("budget") {
  TEST_CASE("budget config derives the replay ratio") {
    const TrainConfig base;
    const TrainConfig a = budget_config(base, 20000, 5000, 3);
    CHECK(a.replay_ratio == 4);
    CHECK(a.max_updates == 20000);
    CHECK(a.total_episodes == 5000);
    CHECK(a.seed == 3);
    CHECK(budget_config(base, 10000, 10000, 1).replay_ratio == 1);
    CHECK(budget_config(base, 3000, 5000, 1).replay_ratio == 1);
    CHECK(budget_config(base, 25000, 10000, 1).replay_ratio == 3);
  }

  TEST_CASE("grid counting and doubling the update budget") {
    TrainConfig base = matrix_config();
    base.eval_every = 10;
    std::vector<std::pair<long long, std::uint64_t>> calls;
    const auto cells = budget_grid(base, {20, 40, 5}, {10}, {1, 2}, 1,
                                   [&](const BudgetCell& c, std::uint64_t seed, const RunMetrics&) {
                                     calls.emplace_back(c.update_budget, seed);
                                   });
    REQUIRE(cells.size() == 3);
    CHECK(calls.size() == 6);
    CHECK(cells[0].replay_ratio == 2);
    CHECK(cells[1].replay_ratio == 4);
    CHECK(cells[0].updates == std::vector<long long>{20, 20});
    CHECK(cells[1].updates == std::vector<long long>{40, 40});
    CHECK(cells[2].infeasible);
    CHECK(cells[2].updates == std::vector<long long>{5, 5});
    CHECK_FALSE(cells[0].infeasible);
    CHECK(cells[0].win_rates.size() == 2);
    CHECK(std::isfinite(cells[0].mean_win_rate()));
  }

  TEST_CASE("a one-by-one grid reduces to run") {
    TrainConfig base = matrix_config();
    base.eval_every = 10;
    const auto cells = budget_grid(base, {10}, {10}, {4});
    TrainConfig single = budget_config(base, 10, 10, 4);
    const RunMetrics m = run(single);
    CHECK(cells[0].win_rates[0] == m.final_eval()->result.win_rate);
  }

  TEST_CASE("failed runs are recorded without stopping the grid") {
    TrainConfig base = matrix_config();
    base.payoff_file = "/nonexistent/payoff.txt";
    const auto cells = budget_grid(base, {10}, {10}, {1, 2});
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].errors.size() == 2);
    CHECK_FALSE(cells[0].errors[0].empty());
    CHECK(std::isnan(cells[0].mean_win_rate()));
  }

  TEST_CASE("non-positive budgets are rejected") {
    CHECK_THROWS_AS(budget_grid(matrix_config(), {0}, {10}, {1}), ConfigError);
    CHECK_THROWS_AS(budget_grid(matrix_config(), {10}, {}, {1}), ConfigError);
  }
}
