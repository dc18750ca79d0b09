#include <doctest.h>

#include "oracles.hpp"
#include "packgen/error.hpp"
#include "packgen/hashing.hpp"
#include "packgen/pipeline.hpp"
#include "packgen/synthetic.hpp"

using namespace packgen;
namespace fs = std::filesystem;

namespace {

/// Tiny end-to-end configuration; seconds rather than minutes.
RunConfig tiny() {
  auto c = preset("desk");
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"synthetic.benign_packets", "300"},
           {"synthetic.attack_packets", "200"},
           {"data.min_class_count", "50"},
           {"classifiers.kinds", "LR,DT,MLP"},
           {"classifiers.mlp.max_epochs", "5"},
           {"classifiers.lr.epochs", "20"},
           {"agent.episodes", "15"},
           {"agent.hidden", "16"},
           {"agent.batch_size", "16"},
           {"agent.buffer_capacity", "500"},
           {"eval.importance_top_k", "5"}})
    set_config_value(c, k, v);
  c.validate();
  return c;
}

std::string read_text(const fs::path& p) {
  const auto b = oracle::read_file(p);
  return {b.begin(), b.end()};
}

ErrorCode code_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("largest-remainder split counts") {
  CHECK(split_counts(1000, {0.6, 0.3, 0.1}) == std::array<std::size_t, 3>{600, 300, 100});
  CHECK(split_counts(10, {0.6, 0.3, 0.1}) == std::array<std::size_t, 3>{6, 3, 1});
  // 7 * (0.6, 0.3, 0.1) = 4.2, 2.1, 0.7: the one leftover goes to the largest remainder.
  CHECK(split_counts(7, {0.6, 0.3, 0.1}) == std::array<std::size_t, 3>{4, 2, 1});
  CHECK(split_counts(5, {0.5, 0.5, 0.0}) == std::array<std::size_t, 3>{3, 2, 0});
  for (std::size_t n = 0; n < 200; ++n) {
    const auto c = split_counts(n, {0.6, 0.3, 0.1});
    REQUIRE(c[0] + c[1] + c[2] == n);
  }
}

TEST_CASE("stratified split keeps the class ratio") {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i < 30 ? 1 : 0);
  const auto [train, eval] = stratified_split(labels, 0.8, 4);
  CHECK(train.size() == 80);
  CHECK(eval.size() == 20);
  CHECK(std::count_if(train.begin(), train.end(), [&](auto i) { return labels[i] == 1; }) == 24);
  CHECK(std::count_if(eval.begin(), eval.end(), [&](auto i) { return labels[i] == 1; }) == 6);
  const auto again = stratified_split(labels, 0.8, 4);
  CHECK(again.first == train);
}

TEST_CASE("payload corpus is the most frequent payload, ties broken lexicographically") {
  auto mk = [](std::string s) {
    LabeledPacket p;
    p.packet.payload.assign(s.begin(), s.end());
    return p;
  };
  CHECK(payload_corpus({mk("bb"), mk("aa"), mk("bb"), mk("")}, 10) == std::vector<std::uint8_t>{'b', 'b'});
  CHECK(payload_corpus({mk("bb"), mk("aa")}, 10) == std::vector<std::uint8_t>{'a', 'a'});
  CHECK(payload_corpus({mk("abcdef")}, 3) == std::vector<std::uint8_t>{'a', 'b', 'c'});
}

TEST_CASE("a class below the minimum count is excluded with a warning") {
  oracle::TempDir dir;
  SyntheticSpec spec;
  spec.benign_packets = 300;
  spec.attack_packets = {{AttackClass::DoS, 200}, {AttackClass::PortScan, 12}};
  write_synthetic(generate_synthetic(spec, 5), dir / "cap.pcap", dir / "rules.csv");
  auto c = tiny();
  set_config_value(c, "data.source", "pcap");
  set_config_value(c, "data.pcap", (dir / "cap.pcap").string());
  set_config_value(c, "data.rules", (dir / "rules.csv").string());
  set_config_value(c, "data.classes", "DoS,PortScan");
  set_config_value(c, "data.min_class_count", "100");
  std::vector<std::string> logs;
  Pipeline p(c, {dir / "run", false, [&](const std::string& m) { logs.push_back(m); }});
  CHECK(p.build_dataset());
  CHECK(p.built_classes() == std::vector<AttackClass>{AttackClass::DoS});
  CHECK(std::any_of(logs.begin(), logs.end(), [](const auto& m) { return m.find("warning: class PortScan") != std::string::npos; }));
  const auto manifest = nlohmann::json::parse(read_text(dir / "run/manifest.json"));
  CHECK(manifest["excluded"][0]["class"] == "PortScan");
  CHECK(manifest["excluded"][0]["forward_packets"] == 12);
}

TEST_CASE("pipeline stages: errors, idempotence, determinism and verification") {
  oracle::TempDir dir;
  const auto c = tiny();
  Pipeline p(c, {dir / "a", false, {}});

  std::string msg;
  CHECK(code_of([&] { p.evaluate(); }, &msg) == ErrorCode::MissingArtifact);

  REQUIRE(p.generate_synthetic());
  REQUIRE(p.build_dataset());
  CHECK_FALSE(p.build_dataset());  // stamp matches: no-op
  REQUIRE(p.train_classifiers());
  CHECK(code_of([&] { p.evaluate(); }, &msg) == ErrorCode::MissingArtifact);
  CHECK(msg.find("train") != std::string::npos);

  REQUIRE(p.train_agent(AttackClass::DoS));
  REQUIRE(p.evaluate());
  CHECK_FALSE(p.evaluate());
  for (const char* f : {"reports/asr.csv", "reports/ood.csv", "reports/samples.csv", "reports/summary.json"})
    CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
  CHECK(p.verify().empty());

  // Splits are disjoint and the manifest counts match the files.
  const auto train = p.load_split(AttackClass::DoS, "train").ids();
  const auto test = p.load_split(AttackClass::DoS, "agenttest").ids();
  CHECK_NOTHROW(check_disjoint(train, test, "splits"));

  SUBCASE("a different configuration needs force") {
    auto changed = c;
    set_config_value(changed, "agent.episodes", "16");
    Pipeline q(changed, {dir / "a", false, {}});
    CHECK_FALSE(q.build_dataset());  // data section unchanged
    CHECK(code_of([&] { q.train_agent(AttackClass::DoS); }) == ErrorCode::AlreadyExists);
    Pipeline forced(changed, {dir / "a", true, {}});
    CHECK(forced.train_agent(AttackClass::DoS));
  }
  SUBCASE("tampering is reported by verify") {
    std::ofstream(dir / "a/reports/asr.csv", std::ios::app) << "tampered\n";
    CHECK_FALSE(p.verify().empty());
  }
  SUBCASE("same seed twice gives byte-identical artifacts") {
    Pipeline q(c, {dir / "b", false, {}});
    q.run(Stage::All);
    for (const char* f : {"manifest.json", "agents/DoS/reward_curve.csv", "reports/asr.csv", "reports/samples.csv",
                          "reports/ood.csv", "reports/summary.json", "datasets/DoS/train.csv"})
      CHECK_MESSAGE(sha256_file(dir / "a" / f) == sha256_file(dir / "b" / f), f);
  }
}

TEST_CASE("a second pipeline on the same directory is locked out") {
  oracle::TempDir dir;
  fs::create_directories(dir / "x");
  OutputLock first(dir / "x");
  CHECK(code_of([&] { OutputLock second(dir / "x"); }) == ErrorCode::AlreadyExists);
}
