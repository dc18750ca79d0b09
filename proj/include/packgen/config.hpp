#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "packgen/classifiers.hpp"
#include "packgen/ddqn.hpp"
#include "packgen/env.hpp"
#include "packgen/evaluation.hpp"
#include "packgen/labeling.hpp"
#include "packgen/synthetic.hpp"

namespace packgen {

enum class DataSource { Synthetic, Pcap };

struct SplitFractions {
  double train = 0.6;
  double mltest = 0.3;
  double agenttest = 0.1;  // 0 for the two-way scheme
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> out;
  int threads = 1;

  DataSource source = DataSource::Synthetic;
  std::filesystem::path pcap;
  std::filesystem::path rules;
  SplitFractions split;
  std::size_t min_class_count = 1000;
  std::vector<AttackClass> classes{AttackClass::DoS};
  std::size_t corpus_length = 320;

  SyntheticSpec synthetic;  // attack_packets is filled from the two fields below
  std::size_t synthetic_attack_packets = 2000;
  SyntheticSpec synthetic_spec() const;

  std::vector<ModelKind> model_kinds{ModelKind::LR, ModelKind::DT, ModelKind::RF, ModelKind::MLP, ModelKind::DNN};
  std::vector<ModelKind> ensemble_kinds{ModelKind::LR, ModelKind::DT, ModelKind::MLP};
  double model_train_fraction = 0.8;
  Hyperparams lr = Hyperparams::defaults(ModelKind::LR);
  Hyperparams dt = Hyperparams::defaults(ModelKind::DT);
  Hyperparams rf = Hyperparams::defaults(ModelKind::RF);
  Hyperparams mlp = Hyperparams::defaults(ModelKind::MLP);
  Hyperparams dnn = Hyperparams::defaults(ModelKind::DNN);

  AgentConfig agent;
  RewardSpec reward;
  std::size_t payload_chunk = kDefaultPayloadChunk;

  EvalOptions eval;
  /// Run directory whose agents are evaluated instead of this run's own
  /// (transfer evaluation on a two-way split).
  std::filesystem::path agents_from;
  std::size_t importance_top_k = 20;
  int importance_repeats = 1;

  const Hyperparams& hyperparams(ModelKind k) const;

  /// Canonical form; `out` and `threads` are excluded since they do not
  /// change results.
  nlohmann::json to_json() const;
  std::string hash() const;
  /// Throws Error(Config) on inconsistent values.
  void validate() const;
};

/// Parses `key = value` lines. `#` starts a comment. Unknown or repeated keys
/// throw Error(Config) naming the line.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
/// Applies one `key = value` assignment.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Every accepted key with a one-line description.
std::vector<std::pair<std::string, std::string>> config_schema();

/// Built-in presets: "desk" (scaled-down defaults) and "full" (the original training scale).
RunConfig preset(std::string_view name);

}  // namespace packgen
