#include <doctest.h>

#include <array>

#include "marlrr/agent.hpp"
#include "oracles.hpp"

using namespace marlrr;

namespace {

DecPomdpSpec env_spec() {
  DecPomdpSpec s;
  s.n_agents = 3;
  s.n_actions = 4;
  s.obs_dim = 5;
  s.state_dim = 6;
  s.horizon = 10;
  return s;
}

AgentNetworkSpec net_spec(AgentKind kind = AgentKind::Recurrent, int hidden = 6) {
  const DecPomdpSpec e = env_spec();
  return {e.obs_dim, e.n_actions, e.n_agents, hidden, kind};
}

ParamStore random_params(const AgentNetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p = init_params(agent_layout(spec), rng);
  for (auto& [name, t] : p.entries())
    if (t.rank() == 1)
      for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.3, 0.3);
  return p;
}

struct Episodes {
  std::vector<Trajectory> storage;
  EpisodeBatch batch;
};

Episodes random_batch(std::vector<int> lengths, std::uint64_t seed) {
  Rng rng(seed);
  Episodes e;
  for (int len : lengths) e.storage.push_back(oracle::random_trajectory(env_spec(), len, true, rng));
  std::vector<const Trajectory*> ptrs;
  for (const auto& t : e.storage) ptrs.push_back(&t);
  e.batch = make_batch(ptrs, env_spec());
  return e;
}

}  // namespace

TEST_SUITE("agent network") {
  TEST_CASE("layout") {
    const auto spec = net_spec();
    CHECK(spec.input_dim() == 5 + 4 + 3);
    const ParamLayout l = agent_layout(spec);
    std::vector<std::string> names;
    for (const auto& p : l) names.push_back(p.name);
    CHECK(names == std::vector<std::string>{"agent.fc1.weight", "agent.fc1.bias", "agent.gru.w_x", "agent.gru.u_rz",
                                            "agent.gru.u_c", "agent.gru.b", "agent.fc2.weight", "agent.fc2.bias"});
    const ParamLayout ff = agent_layout(net_spec(AgentKind::Feedforward));
    for (const auto& p : ff) CHECK(p.name.find("gru") == std::string::npos);
  }

  TEST_CASE("seed 13 episode of length 3 matches the step-by-step reference") {
    const auto spec = net_spec();
    const ParamStore p = random_params(spec, 13);
    const Episodes e = random_batch({3}, 13);
    const Tensor u = agent_utilities(p, spec, e.batch, 3);
    const auto want = oracle::agent_episode(p, spec, e.batch, 0, 3);
    for (int t = 0; t < 3; ++t) {
      for (int i = 0; i < 3; ++i) {
        for (int a = 0; a < 4; ++a) {
          CHECK(std::abs(u[((t * 3) + i) * 4 + a] - want[static_cast<std::size_t>(t)](i, a)) < 1e-13);
        }
      }
    }
  }

  TEST_CASE("dense, packed and tape unrolls agree with the reference") {
    for (AgentKind kind : {AgentKind::Recurrent, AgentKind::Feedforward}) {
      const auto spec = net_spec(kind);
      const ParamStore p = random_params(spec, 21);
      const Episodes e = random_batch({4, 7, 2, 7, 1}, 22);
      const int T = e.batch.max_length;
      const SlotPlan plan = packed_plan(e.batch, T + 1, 0);
      CHECK(plan.order == std::vector<int>{1, 3, 0, 2, 4});
      const Mat packed = agent_values(p, spec, e.batch, plan);
      Tape tape;
      const AgentTrace trace = agent_forward(tape, p, spec, e.batch, plan);
      CHECK((tape.value(trace.utilities) - packed).cwiseAbs().maxCoeff() < 1e-13);

      const Tensor dense = agent_utilities(p, spec, e.batch, T + 1);
      Eigen::Index row = 0;
      for (int t = 0; t <= T; ++t) {
        for (int b : plan.episodes_at(t)) {
          const auto want = oracle::agent_episode(p, spec, e.batch, b, t + 1);
          for (int i = 0; i < 3; ++i, ++row) {
            for (int a = 0; a < 4; ++a) {
              const double ref = want.back()(i, a);
              CHECK(std::abs(packed(row, a) - ref) < 1e-12);
              CHECK(std::abs(dense[((static_cast<Eigen::Index>(b) * (T + 1) + t) * 3 + i) * 4 + a] - ref) < 1e-12);
            }
          }
        }
      }
      CHECK(row == packed.rows());
    }
  }

  TEST_CASE("packed plan counts") {
    const Episodes e = random_batch({3, 5}, 1);
    const SlotPlan online = packed_plan(e.batch, 5, 1);
    CHECK(online.counts == std::vector<int>{2, 2, 2, 1, 1});
    const SlotPlan target = packed_plan(e.batch, 6, 0);
    CHECK(target.counts == std::vector<int>{2, 2, 2, 2, 1, 1});
    CHECK(target.total() == 10);
    SlotPlan bad = online;
    bad.counts = {1, 2, 2, 1, 1};
    Tape tape;
    CHECK_THROWS_AS(agent_forward(tape, random_params(net_spec(), 1), net_spec(), e.batch, bad), ContractViolation);
  }

  TEST_CASE("stepper reproduces the batch unroll") {
    const auto spec = net_spec();
    const ParamStore p = random_params(spec, 5);
    const Episodes e = random_batch({6}, 6);
    AgentStepper stepper(spec);
    const Tensor u = agent_utilities(p, spec, e.batch, 6);
    std::vector<int> last;
    for (int t = 0; t < 6; ++t) {
      const auto& tr = e.storage[0].transitions[static_cast<std::size_t>(t)];
      const Mat got = stepper.step(p, tr.obs, last);
      last = tr.actions;
      for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 4; ++a) CHECK(std::abs(got(i, a) - u[(t * 3 + i) * 4 + a]) < 1e-13);
    }
    stepper.reset();
    CHECK(stepper.hidden().isZero(0.0));
  }

  TEST_CASE("zero parameters give zero utilities") {
    const auto spec = net_spec();
    ParamStore p = random_params(spec, 3);
    for (auto& [name, t] : p.entries()) t.data().setZero();
    const Episodes e = random_batch({4, 2}, 3);
    CHECK(agent_utilities(p, spec, e.batch, 5).data().isZero(0.0));
  }

  TEST_CASE("identical inputs give identical utility rows") {
    const auto spec = net_spec();
    const ParamStore p = random_params(spec, 4);
    Mat obs(3, 5);
    Rng rng(4);
    for (Eigen::Index k = 0; k < obs.size(); ++k) obs.data()[k] = rng.uniform(-1, 1);
    Mat last = Mat::Zero(3, 4);
    // Rows 0 and 3 are agent 0 in two different cells with the same input.
    Mat obs2(6, 5);
    obs2 << obs, obs;
    Mat last2(6, 4);
    last2 << last, last;
    const Mat x = agent_inputs(obs2, last2, 3);
    CHECK(x.row(0) == x.row(3));
    const Mat e = linear_forward(p.at("agent.fc1.weight").matrix(), p.at("agent.fc1.bias").data(), x).cwiseMax(0.0);
    const Mat h = gru_cell_forward(p, "agent.gru", e, Mat::Zero(6, 6));
    const Mat u = linear_forward(p.at("agent.fc2.weight").matrix(), p.at("agent.fc2.bias").data(), h);
    CHECK((u.row(0) - u.row(3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((u.row(1) - u.row(4)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("swapping two agents' inputs and ids swaps their utility rows") {
    const auto spec = net_spec();
    const ParamStore p = random_params(spec, 8);
    Rng rng(8);
    auto run = [&](const std::vector<Mat>& xs) {
      Mat h = Mat::Zero(3, 6);
      Mat u;
      for (const auto& x : xs) {
        const Mat e =
            linear_forward(p.at("agent.fc1.weight").matrix(), p.at("agent.fc1.bias").data(), x).cwiseMax(0.0);
        h = gru_cell_forward(p, "agent.gru", e, h);
        u = linear_forward(p.at("agent.fc2.weight").matrix(), p.at("agent.fc2.bias").data(), h);
      }
      return u;
    };
    std::vector<Mat> xs, swapped;
    std::vector<int> prev(3, -1);
    for (int t = 0; t < 4; ++t) {
      Mat obs(3, 5);
      for (Eigen::Index k = 0; k < obs.size(); ++k) obs.data()[k] = rng.uniform(-1, 1);
      Mat last = Mat::Zero(3, 4);
      for (int i = 0; i < 3; ++i)
        if (prev[static_cast<std::size_t>(i)] >= 0) last(i, prev[static_cast<std::size_t>(i)]) = 1.0;
      for (auto& a : prev) a = static_cast<int>(rng.below(4));
      const Mat x = agent_inputs(obs, last, 3);
      Mat y = x;
      y.row(0).swap(y.row(2));
      xs.push_back(x);
      swapped.push_back(y);
    }
    const Mat u = run(xs);
    const Mat v = run(swapped);
    CHECK(u.row(0) == v.row(2));
    CHECK(u.row(2) == v.row(0));
    CHECK(u.row(1) == v.row(1));
  }

  TEST_CASE("hidden state carries history") {
    const auto spec = net_spec();
    const ParamStore p = random_params(spec, 9);
    Episodes a = random_batch({3}, 10);
    Trajectory b = a.storage[0];
    // Same observation and last action at t = 2, different observations before.
    b.transitions[0].obs.array() += 0.7;
    b.transitions[1].obs.array() -= 0.4;
    b.transitions[0].next_obs = b.transitions[1].obs;
    const EpisodeBatch both = make_batch({&a.storage[0], &b}, env_spec());
    CHECK(both.obs_at(2, {0}) == both.obs_at(2, {1}));
    CHECK(both.last_action_one_hot(2, {0}) == both.last_action_one_hot(2, {1}));
    const Tensor u = agent_utilities(p, spec, both, 3);
    const Vec first = u.data().segment((0 * 3 + 2) * 12, 12);
    const Vec second = u.data().segment((1 * 3 + 2) * 12, 12);
    CHECK((first - second).cwiseAbs().maxCoeff() > 1e-6);

    const auto ff = net_spec(AgentKind::Feedforward);
    const Tensor w = agent_utilities(random_params(ff, 9), ff, both, 3);
    CHECK((w.data().segment(2 * 12, 12) - w.data().segment((3 + 2) * 12, 12)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("dimension mismatch") {
    const Episodes e = random_batch({2}, 1);
    AgentNetworkSpec wrong = net_spec();
    wrong.obs_dim = 4;
    Tape tape;
    CHECK_THROWS_AS(agent_forward(tape, random_params(wrong, 1), wrong, e.batch, 2), DimensionError);
  }
}

TEST_SUITE("select_actions") {
  TEST_CASE("greedy examples") {
    Rng rng(1);
    Mat u(1, 3);
    u << 1, 5, 2;
    CHECK(select_actions(u, Mat::Ones(1, 3), 0.0, rng) == std::vector<int>{1});
    u << 9, 1, 2;
    Mat m(1, 3);
    m << 0, 1, 1;
    CHECK(select_actions(u, m, 0.0, rng) == std::vector<int>{2});
    u << 3, 3, 1;
    CHECK(select_actions(u, Mat::Ones(1, 3), 0.0, rng) == std::vector<int>{0});
  }

  TEST_CASE("epsilon one is uniform over available actions") {
    Rng rng(2);
    Mat u = Mat::Zero(1, 4);
    u(0, 3) = 10;
    Mat m(1, 4);
    m << 1, 0, 1, 1;
    std::array<int, 4> counts{};
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(select_actions(u, m, 1.0, rng)[0])];
    CHECK(counts[1] == 0);
    for (int a : {0, 2, 3}) CHECK(std::abs(counts[static_cast<std::size_t>(a)] / double(draws) - 1.0 / 3.0) < 0.01);
  }

  TEST_CASE("adding a constant to one agent's utilities keeps the greedy choice") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      Mat u(3, 5);
      for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] = rng.uniform(-1, 1);
      Mat m = Mat::Ones(3, 5);
      m(trial % 3, trial % 5) = 0;
      const auto a = select_actions(u, m, 0.0, rng);
      Mat v = u;
      v.row(trial % 3).array() += rng.uniform(-5, 5);
      CHECK(select_actions(v, m, 0.0, rng) == a);
    }
  }

  TEST_CASE("errors") {
    Rng rng(4);
    CHECK_THROWS_AS(select_actions(Mat::Zero(1, 2), Mat::Zero(1, 2), 0.0, rng), ContractViolation);
    CHECK_THROWS_AS(select_actions(Mat::Zero(1, 2), Mat::Ones(1, 2), 1.5, rng), ContractViolation);
    CHECK_THROWS_AS(select_actions(Mat::Zero(1, 2), Mat::Ones(2, 2), 0.0, rng), DimensionError);
  }
}

TEST_SUITE("epsilon schedule") {
  TEST_CASE("linear decay") {
    const EpsilonSchedule s;
    CHECK(epsilon_at(0, s) == 1.0);
    CHECK(epsilon_at(25000, s) == doctest::Approx(0.525).epsilon(1e-15));
    CHECK(epsilon_at(50000, s) == doctest::Approx(0.05));
    CHECK(epsilon_at(1e9, s) == doctest::Approx(0.05));
    EpsilonSchedule instant{1.0, 0.2, 0.0};
    CHECK(epsilon_at(0, instant) == doctest::Approx(0.2));
  }
}
