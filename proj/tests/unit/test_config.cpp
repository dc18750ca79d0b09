#include <doctest.h>

#include <sstream>

#include "packgen/config.hpp"
#include "packgen/error.hpp"

using namespace packgen;

namespace {

ErrorCode code_of_parse(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse accepted " << text);
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("unknown, repeated and malformed keys are errors") {
  CHECK(code_of_parse("agent.episodse = 10\n") == ErrorCode::Config);
  CHECK(code_of_parse("seed = 1\nseed = 2\n") == ErrorCode::Config);
  CHECK(code_of_parse("seed\n") == ErrorCode::Config);
  CHECK(code_of_parse("seed = banana\n") == ErrorCode::Config);
}

TEST_CASE("the error names the offending line") {
  std::istringstream in("seed = 3\n\n# note\nagent.gama = 0.9\n");
  try {
    parse_config(in);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
    CHECK(std::string(e.what()).find("agent.gama") != std::string::npos);
  }
}

TEST_CASE("comments and blank lines are ignored and values apply") {
  std::istringstream in("# header\n\nseed = 42   # trailing\nagent.hidden = 8,4\ndata.classes = DoS,PortScan\n");
  const auto c = parse_config(in);
  CHECK(c.seed == 42);
  CHECK(c.agent.hidden == std::vector<int>{8, 4});
  CHECK(c.classes.size() == 2);
}

TEST_CASE("every preset dumps and parses back to the same hash") {
  for (const char* name : {"desk", "full"}) {
    const auto c = preset(name);
    c.validate();
    std::ostringstream text;
    const auto dumped = c.to_json();
    for (const auto& [key, value] : dumped.items()) {
      const auto v = value.get<std::string>();
      if (!v.empty()) text << key << " = " << v << "\n";
    }
    std::istringstream in(text.str());
    const auto back = parse_config(in);
    CHECK(back.hash() == c.hash());
    CHECK(back.to_json() == c.to_json());
  }
  CHECK_THROWS_AS(preset("laptop"), Error);
}

TEST_CASE("the desk preset keeps the agent constants") {
  const auto c = preset("desk");
  CHECK(c.agent.gamma == 0.8);
  CHECK(c.agent.batch_size == 256);
  CHECK(c.agent.learning_rate == 0.001);
  CHECK(c.agent.target_update == 10);
  CHECK(c.agent.max_steps == 30);
  CHECK(c.agent.episodes == 5000);
  CHECK(c.agent.hidden == std::vector<int>{256, 128, 64});
  CHECK(c.reward.evade_each == 200.0);
  CHECK(c.reward.penalty == -2.0);
}

TEST_CASE("output directory and thread count do not change the hash") {
  auto a = preset("desk"), b = preset("desk");
  b.out = "/somewhere/else";
  b.threads = 4;
  CHECK(a.hash() == b.hash());
  set_config_value(b, "agent.episodes", "10");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("validation catches inconsistent values") {
  auto c = preset("desk");
  set_config_value(c, "data.split.train", "0.9");
  CHECK_THROWS_AS(c.validate(), Error);
  auto d = preset("desk");
  set_config_value(d, "agent.gamma", "1.5");
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("schema lists every dumped key") {
  const auto schema = config_schema();
  const auto j = preset("desk").to_json();
  for (const auto& [key, value] : j.items()) {
    const bool found = std::any_of(schema.begin(), schema.end(), [&](const auto& s) { return s.first == key; });
    CHECK_MESSAGE(found, key);
  }
}
