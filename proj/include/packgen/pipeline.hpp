#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "packgen/config.hpp"
#include "packgen/featurizer.hpp"
#include "packgen/labeling.hpp"

namespace packgen {

enum class Stage { Ingest, Classify, Train, Evaluate, All };

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view text) noexcept;

/// Sizes of the three splits for `n` items; largest remainder, ties to the
/// earlier split.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f);

/// Train/eval index sets with the same class ratio in both parts.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<int>& labels,
                                                                                 double train_fraction,
                                                                                 std::uint64_t seed);

/// Most frequent non-empty payload (ties: lexicographically smallest),
/// truncated to `length` bytes.
std::vector<std::uint8_t> payload_corpus(const std::vector<LabeledPacket>& benign, std::size_t length);

/// One split as stored on disk: raw packets plus their feature rows.
struct SplitData {
  std::vector<LabeledPacket> packets;
  std::vector<FeatureVector> rows;

  std::vector<LabeledPacket> malicious() const;
  std::vector<std::uint64_t> ids() const;
};

struct PipelineOptions {
  std::filesystem::path out;
  bool force = false;
  std::function<void(const std::string&)> log;
};

/// Stage runner over one output directory. Each stage records a stamp with
/// its configuration hash and the hashes of its inputs and outputs; a rerun
/// whose stamp still matches is a no-op, and outputs from a different
/// configuration are only replaced with `force`.
class Pipeline {
 public:
  Pipeline(RunConfig config, PipelineOptions options);

  /// Writes synthetic/capture.pcap and synthetic/rules.csv.
  bool generate_synthetic();
  bool build_dataset();
  bool train_classifiers();
  bool train_agent(AttackClass cls);
  bool evaluate();
  void run(Stage stage);

  /// Classes that survived dataset building (reads the manifest).
  std::vector<AttackClass> built_classes() const;
  SplitData load_split(AttackClass cls, std::string_view split) const;
  /// Re-hashes every stamped artifact and re-checks split disjointness.
  std::vector<std::string> verify() const;

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& out() const { return options_.out; }

 private:
  struct StageRun;
  bool run_stage(const std::string& name, const std::vector<std::string>& config_prefixes,
                 const std::vector<std::filesystem::path>& inputs, const std::vector<std::filesystem::path>& owned,
                 const std::function<std::vector<std::filesystem::path>()>& body);
  std::string section_hash(const std::vector<std::string>& prefixes) const;
  void require(const std::filesystem::path& rel, std::string_view producer) const;
  void log(const std::string& message) const;
  std::filesystem::path abs(const std::filesystem::path& rel) const { return options_.out / rel; }

  RunConfig config_;
  PipelineOptions options_;
};

/// Exclusive ownership of an output directory via an O_EXCL lock file.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace packgen
