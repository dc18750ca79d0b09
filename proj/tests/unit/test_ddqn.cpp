#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "packgen/ddqn.hpp"
#include "packgen/error.hpp"
#include "toy.hpp"

using namespace packgen;

namespace {

AgentConfig small_config() {
  AgentConfig c;
  c.hidden = {32};
  c.batch_size = 32;
  c.buffer_capacity = 5000;
  c.episodes = 2000;
  c.epsilon.decay = 0.002;
  return c;
}

Transition make_transition(int action, double reward, bool done, std::uint8_t fill = 10) {
  Transition t;
  t.state.bytes.assign(60, fill);
  t.state.label = 1;
  t.next = t.state;
  t.action = action;
  t.reward = reward;
  t.done = done;
  return t;
}

}  // namespace

TEST_CASE("td target: terminal returns the reward") {
  const std::vector<double> q(13, 5.0);
  CHECK(td_target(600.0, true, 0.8, q, q) == 600.0);
}

TEST_CASE("td target: policy picks, target evaluates") {
  std::vector<double> policy(13, 0.0), target(13, 0.0);
  policy[4] = 3.0;   // argmax under the policy net
  target[4] = 10.0;  // its value under the target net
  target[9] = 99.0;  // larger, but not chosen
  CHECK(td_target(-2.0, false, 0.8, policy, target) == 6.0);
}

TEST_CASE("td target with identical nets equals the plain Q-learning target") {
  std::vector<double> q{1, 7, 3, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(td_target(1.0, false, 0.5, q, q) == 1.0 + 0.5 * 7.0);
}

TEST_CASE("greedy ties go to the lower id and masks are honoured") {
  std::vector<double> q(13, 0.0);
  q[3] = q[8] = 2.0;
  CHECK(greedy_action(q) == 3);
  auto mask = all_enabled();
  mask[3] = false;
  CHECK(greedy_action(q, mask) == 8);
}

TEST_CASE("epsilon schedule endpoints") {
  const EpsilonSchedule e;
  CHECK(e.at(0) == 1.0);
  CHECK(std::abs(e.at(100000000) - 0.01) < 1e-12);
  CHECK(e.at(1000) > e.at(2000));
}

TEST_CASE("epsilon one gives uniform actions within three sigma") {
  nn::Rng rng(3);
  const auto net = make_q_network(small_config(), rng);
  std::vector<double> s(kStateDim, 0.0);
  std::vector<int> counts(13, 0);
  for (int i = 0; i < 13000; ++i) ++counts[act(net, s, 1.0, rng)];
  const double sigma = std::sqrt(13000.0 / 13 * 12 / 13);
  for (int c : counts) CHECK(std::abs(c - 1000.0) <= 3 * sigma);
}

TEST_CASE("epsilon zero follows a hand-set output layer") {
  nn::Rng rng(4);
  auto net = make_q_network(small_config(), rng);
  auto& out = net.layers().back();
  out.weight.setZero();
  out.bias.setZero();
  out.bias[7] = 1.0;
  std::vector<double> s(kStateDim, 0.3);
  for (int i = 0; i < 100; ++i) CHECK(act(net, s, 0.0, rng) == 7);
}

TEST_CASE("replay buffer is a FIFO ring") {
  ReplayBuffer b(3);
  for (int i = 0; i < 5; ++i) b.push(make_transition(i, 0, false));
  CHECK(b.size() == 3);
  CHECK(b.at(0).action == 2);
  CHECK(b.at(2).action == 4);
  nn::Rng rng(1);
  CHECK(b.sample(3, rng).size() == 3);
  ReplayBuffer small(10);
  small.push(make_transition(0, 0, false));
  CHECK_THROWS_AS(small.sample(2, rng), Error);
}

TEST_CASE("stored states rebuild the agent input") {
  auto p = toy::syn();
  EnvState s;
  s.features = defeaturize_sync(p);
  s.label = 1;
  const auto stored = StoredState::from(s);
  std::vector<double> in(kStateDim);
  stored.write_input(in.data());
  CHECK(in == s.as_input());
  CHECK(stored.bytes.size() < 100);
}

TEST_CASE("target network is copied every C learner steps") {
  auto c = small_config();
  c.target_update = 10;
  nn::Rng rng(5);
  DdqnLearner learner(make_q_network(c, rng), c);
  ReplayBuffer buf(100);
  for (int i = 0; i < 40; ++i) buf.push(make_transition(i % 13, i % 2 ? 200.0 : -2.0, i % 3 == 0, static_cast<std::uint8_t>(i)));
  const auto initial = learner.target();
  CHECK(learner.policy() == initial);
  for (int i = 0; i < 9; ++i) learner.learn_step(buf, rng);
  CHECK(learner.target() == initial);
  CHECK_FALSE(learner.policy() == initial);
  learner.learn_step(buf, rng);
  CHECK(learner.target() == learner.policy());
  CHECK(learner.steps() == 10);
}

TEST_CASE("repeated terminal transition drives Q to 600") {
  AgentConfig c;  // full-size network, batch 256, lr 0.001
  nn::Rng rng(6);
  DdqnLearner learner(make_q_network(c, rng), c);
  ReplayBuffer buf(c.batch_size);
  const auto t = make_transition(5, 600.0, true);
  for (std::size_t i = 0; i < c.batch_size; ++i) buf.push(t);
  for (int i = 0; i < 200; ++i) learner.learn_step(buf, rng);
  std::vector<double> in(kStateDim);
  t.state.write_input(in.data());
  const auto q = learner.policy().forward(Eigen::Map<const nn::Matrix>(in.data(), kStateDim, 1));
  CHECK(std::abs(q(5, 0) - 600.0) <= 5.0);
}

TEST_CASE("loss decreases on a fixed replay set") {
  auto c = small_config();
  nn::Rng rng(7);
  DdqnLearner learner(make_q_network(c, rng), c);
  ReplayBuffer buf(64);
  for (int i = 0; i < 64; ++i) buf.push(make_transition(i % 4, (i % 4) * 1.0, true, static_cast<std::uint8_t>(i * 3)));
  double first = 0, last = 0;
  for (int i = 0; i < 500; ++i) {
    const double l = learner.learn_step(buf, rng);
    if (i < 10) first += l;
    if (i >= 490) last += l;
  }
  CHECK(last < 0.1 * first);
}

TEST_CASE("q loss gradient matches central differences") {
  auto c = small_config();
  c.hidden = {16, 8};
  nn::Rng rng(8);
  auto net = make_q_network(c, rng);
  std::uniform_real_distribution<double> u(0, 1);
  nn::Matrix s = nn::Matrix::Zero(kStateDim, 5);
  for (Eigen::Index j = 0; j < 5; ++j) {
    for (Eigen::Index i = 0; i < 40; ++i) s(i, j) = u(rng);
    s(kStateDim - 1, j) = 1.0;
  }
  const std::vector<int> actions{0, 3, 3, 12, 7};
  const std::vector<double> targets{1.0, -2.0, 400.0, 6.0, 0.5};
  nn::Gradients g;
  q_loss(net, s, actions, targets, &g);
  const auto analytic = nn::FeedForward::flatten(g);
  const auto base = net.flat_parameters();
  std::vector<double> a, n;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (analytic[i] == 0.0 && i % 17) continue;  // unused inputs: sample a few zeros only
    auto probe = [&](double h) {
      auto p = base;
      p[i] += h;
      net.set_flat_parameters(p);
      return q_loss(net, s, actions, targets, nullptr);
    };
    a.push_back(analytic[i]);
    n.push_back((probe(1e-4) - probe(-1e-4)) / 2e-4);
  }
  net.set_flat_parameters(base);
  CHECK(a.size() > 500);
  CHECK(oracle::max_relative_error(a, n) < 1e-4);
}

TEST_CASE("toy environment: the agent finds the one decisive action") {
  AdversarialEnv env({toy::syn()}, Ensemble({toy::df_detector()}), std::vector<std::uint8_t>(64, 'a'));
  // Oracle: exhaustive search over constant single-action policies.
  double best = -1e9;
  for (auto a : all_actions()) {
    env.reset_to(0);
    double ret = 0;
    for (int t = 0; t < 30; ++t) {
      const auto r = env.step(a);
      ret += r.reward;
      if (r.done) break;
    }
    best = std::max(best, ret);
  }
  REQUIRE(best == 200.0);

  const auto c = small_config();
  TrainingLog log;
  const auto agent = train_agent(env, c, 11, 12, &log);
  const auto avg = log.moving_average(100);
  CHECK(*std::max_element(avg.begin(), avg.end()) >= 0.9 * best);
  CHECK(agent.greedy(env.reset_to(0)) == action_id(ActionKind::SetFragMF));

  SUBCASE("seeded rerun repeats the reward curve and the weights") {
    auto short_c = c;
    short_c.episodes = 300;
    TrainingLog a, b;
    const auto x = train_agent(env, short_c, 1, 2, &a);
    const auto y = train_agent(env, short_c, 1, 2, &b);
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t i = 0; i < a.episodes.size(); ++i) CHECK(a.episodes[i].reward == b.episodes[i].reward);
    CHECK(x.policy == y.policy);
  }
  SUBCASE("agent file round-trips") {
    oracle::TempDir dir;
    agent.save(dir / "agent.json");
    const auto back = TrainedAgent::load(dir / "agent.json");
    CHECK(back.policy == agent.policy);
    CHECK(back.target == agent.target);
    CHECK(back.greedy(env.reset_to(0)) == agent.greedy(env.reset_to(0)));
  }
}
