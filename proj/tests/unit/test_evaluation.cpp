#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "packgen/error.hpp"
#include "packgen/evaluation.hpp"
#include "toy.hpp"

using namespace packgen;

namespace {

/// Agent whose greedy choice is always `action`.
TrainedAgent fixed_agent(ActionKind action) {
  AgentConfig c;
  c.hidden = {8};
  nn::Rng rng(1);
  TrainedAgent a;
  a.policy = make_q_network(c, rng);
  auto& out = a.policy.layers().back();
  out.weight.setZero();
  out.bias.setZero();
  out.bias[action_id(action)] = 1.0;
  a.target = a.policy;
  a.config = c;
  return a;
}

std::vector<LabeledPacket> pool_of(std::size_t n) {
  std::vector<LabeledPacket> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledPacket lp;
    lp.packet = toy::syn();
    lp.packet.ip[8] = static_cast<std::uint8_t>(40 + i);  // distinct TTLs
    recompute_checksums(lp.packet);
    lp.label = Label::Attack;
    lp.attack_class = AttackClass::DoS;
    lp.packet_id = 1000 + i;
    out.push_back(lp);
  }
  return out;
}

ClassifierModel always(double bias) {
  return ClassifierModel(std::make_shared<LogisticRegression>(Eigen::VectorXd::Zero(kFeatureCount), bias));
}

}  // namespace

TEST_CASE("ASR examples") {
  CHECK(asr(100, 10, 50) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(asr(100, 10, 10) == 0.0);
  CHECK(asr(100, 10, 110) == 1.0);
  try {
    asr(0, 0, 0);
    FAIL("expected undefined metric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedMetric);
  }
  CHECK_THROWS_AS(asr(10, 5, 4), Error);
}

TEST_CASE("K-S basic cases") {
  const std::vector<double> x{0.1, 0.4, 0.4, 0.9};
  const auto same = ks_two_sample(x, x);
  CHECK(same.d == 0.0);
  CHECK_FALSE(same.reject);
  const std::vector<double> zeros(20, 0.0), ones(30, 1.0);
  CHECK(ks_two_sample(zeros, ones).d == 1.0);
  CHECK_THROWS_AS(ks_two_sample(std::vector<double>{}, x), Error);
  CHECK_THROWS_AS(ks_two_sample(x, x, 1.5), Error);
}

TEST_CASE("K-S threshold at n = m = 100 agrees with a permutation test") {
  std::vector<double> a(100), b(100);
  std::iota(a.begin(), a.end(), 0.0);
  for (std::size_t i = 0; i < 100; ++i) b[i] = static_cast<double>(i) + 24.5;  // D = 0.25
  const auto r = ks_two_sample(a, b, 0.05);
  CHECK(r.threshold == doctest::Approx(0.1923).epsilon(1e-3));
  CHECK(r.d == doctest::Approx(0.25));
  CHECK(r.reject);

  // Oracle: 95th percentile of D under random relabelling of the pooled sample.
  oracle::Rng rng(17);
  std::vector<double> pooled(200);
  std::iota(pooled.begin(), pooled.end(), 0.0);
  std::vector<double> ds;
  for (int k = 0; k < 10000; ++k) {
    std::shuffle(pooled.begin(), pooled.end(), rng);
    ds.push_back(ks_two_sample(std::span(pooled).first(100), std::span(pooled).last(100)).d);
  }
  std::sort(ds.begin(), ds.end());
  const double critical = ds[9500];
  CHECK(std::abs(critical - r.threshold) <= 0.011);  // D moves in steps of 0.01
}

TEST_CASE("K-S statistic equals the brute-force eCDF scan") {
  oracle::Rng rng(18);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 50, m = 1 + rng() % 50;
    std::vector<double> x(n), y(m);
    // Coarse values force many ties.
    for (auto& v : x) v = static_cast<double>(rng() % 20) / 7.0;
    for (auto& v : y) v = static_cast<double>(rng() % 23) / 7.0;
    REQUIRE(std::abs(ks_two_sample(x, y).d - oracle::ks_brute(x, y)) <= 1e-12);
  }
}

TEST_CASE("agent that never changes packets has ASR 0") {
  const auto agent = fixed_agent(ActionKind::SetFragDF);  // fixture already carries DF
  const auto report = evaluate_agent(agent, {{"ttl", toy::ttl_at_most(250)}, {"df", toy::df_detector()}}, pool_of(5),
                                     {}, EvalOptions{});
  for (const auto& row : report.rows) {
    CHECK(row.tp == 5);
    CHECK(row.asr == 0.0);
  }
  CHECK(report.adversarial.empty());
}

TEST_CASE("a model that calls everything benign reports the metric error") {
  const auto agent = fixed_agent(ActionKind::TtlInc);
  const auto report = evaluate_agent(agent, {{"blind", always(-10.0)}}, pool_of(3), {}, EvalOptions{});
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].tp == 0);
  CHECK_FALSE(report.rows[0].asr.has_value());
  CHECK_FALSE(report.rows[0].error.empty());
}

TEST_CASE("toy rollout: ASR 1 and OOD matching a brute-force replay") {
  const auto agent = fixed_agent(ActionKind::SetFragMF);
  const auto pool = pool_of(8);
  EvalOptions opts;
  const auto report = evaluate_agent(agent, {{"df", toy::df_detector()}}, pool, {}, opts);
  const auto& row = report.rows.at(0);
  CHECK(row.asr == 1.0);
  CHECK(row.successful == 8);
  CHECK(report.adversarial.size() == 8);

  std::size_t ood = 0;
  for (const auto& lp : pool) {
    const auto before = defeaturize_sync(lp.packet);
    const auto after = defeaturize_sync(apply(lp.packet, ActionKind::SetFragMF).packet);
    const auto x = before.values(), y = after.values();
    const double d = oracle::ks_brute(x, y);
    ood += d > 1.36 * std::sqrt(2.0 / kFeatureCount) ? 1 : 0;
  }
  CHECK(row.ood == ood);
  CHECK(row.ood_fraction == static_cast<double>(ood) / 8.0);
  for (const auto& s : report.samples) {
    CHECK(s.evaded);
    CHECK(s.steps == 1);
  }
}

TEST_CASE("overlap between the training split and the pool is refused") {
  const auto agent = fixed_agent(ActionKind::TtlInc);
  const auto pool = pool_of(3);
  const std::vector<std::uint64_t> train_ids{7, 1001};
  try {
    evaluate_agent(agent, {{"ttl", toy::ttl_at_most(250)}}, pool, {}, EvalOptions{}, train_ids);
    FAIL("expected a split overlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SplitOverlap);
  }
}

TEST_CASE("permutation importance") {
  oracle::Rng rng(19);
  TrainingData d;
  d.x = Eigen::MatrixXd::Zero(300, kFeatureCount);
  for (Eigen::Index i = 0; i < 300; ++i) {
    for (Eigen::Index j = 0; j < 40; ++j) d.x(i, j) = static_cast<double>(rng() % 256) / 255.0;
    d.y.push_back(d.x(i, 8) <= 100.5 / 255 ? 1 : 0);
  }
  nn::Rng prng(3);
  SUBCASE("threshold on feature 8 ranks it first") {
    const auto ranked = permutation_importance(toy::ttl_at_most(100), d, prng);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked[0].feature == 8);
    CHECK(ranked[0].drop > 0.2);
  }
  SUBCASE("a model that ignores its input scores zero everywhere") {
    const auto ranked = permutation_importance(always(3.0), d, prng);
    for (const auto& f : ranked) CHECK(f.drop == 0.0);
  }
}

TEST_CASE("ASR report round-trips and recomputes exactly") {
  oracle::TempDir dir;
  oracle::Rng rng(20);
  EvalReport rep;
  rep.attack_class = "DoS";
  for (int i = 0; i < 50; ++i) {
    ModelEval row;
    row.model = "m" + std::to_string(i);
    row.tp = 1 + rng() % 1000;
    row.fn_original = rng() % 100;
    row.fn_p = row.fn_original + rng() % (row.tp + 1);
    row.asr = asr(row.tp, row.fn_original, row.fn_p);
    rep.rows.push_back(row);
  }
  write_asr_csv(dir / "asr.csv", std::span(&rep, 1));
  const auto rows = read_asr_csv(dir / "asr.csv");
  REQUIRE(rows.size() == 50);
  for (const auto& r : rows) {
    REQUIRE(r.asr.has_value());
    CHECK(*r.asr == asr(r.tp, r.fn_original, r.fn_p));
  }
}
