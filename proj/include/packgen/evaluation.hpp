#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packgen/classifiers.hpp"
#include "packgen/ddqn.hpp"
#include "packgen/labeling.hpp"

namespace packgen {

/// (fn_p - fn_original) / tp. Throws Error(UndefinedMetric) when tp == 0 and
/// Error(InvalidArgument) when fn_p < fn_original.
double asr(std::size_t tp, std::size_t fn_original, std::size_t fn_p);

/// Asymptotic two-sample coefficient c(alpha); tabulated for the usual levels.
double ks_coefficient(double alpha);

struct KsResult {
  double d = 0.0;
  double threshold = 0.0;
  bool reject = false;
};

/// D = sup |F_x - F_y|; reject iff D > c(alpha) * sqrt((n + m) / (n m)).
/// Throws Error(InvalidArgument) on empty input or alpha outside (0, 1).
KsResult ks_two_sample(std::span<const double> x, std::span<const double> y, double alpha = 0.05);

enum class KsMode { PerPacket, Population };
std::string_view to_string(KsMode m) noexcept;
std::optional<KsMode> parse_ks_mode(std::string_view text) noexcept;

struct NamedModel {
  std::string name;
  ClassifierModel model;
};

struct EvalOptions {
  int max_steps = 30;
  double alpha = 0.05;
  KsMode ks_mode = KsMode::PerPacket;
  std::size_t payload_chunk = kDefaultPayloadChunk;
};

struct ModelEval {
  std::string model;
  ModelKind kind = ModelKind::LR;
  std::size_t samples = 0;
  std::size_t tp = 0;
  std::size_t fn_original = 0;
  std::size_t fn_p = 0;
  std::optional<double> asr;  // empty when tp == 0
  std::string error;          // message of the metric error, if any
  std::size_t successful = 0;  // newly evading samples
  /// Per-packet mode: successful samples rejected by K-S. Population mode:
  /// feature columns whose original and perturbed populations differ.
  std::size_t ood = 0;
  double ood_fraction = 0.0;  // ood / successful, or ood / 1525 for population mode
  double mean_d = 0.0;        // over the K-S tests run
};

struct SampleOutcome {
  std::string model;
  std::uint64_t packet_id = 0;
  bool evaded = false;
  int steps = 0;
  std::vector<int> actions;
  std::optional<KsResult> ks;  // only for successful samples
};

struct AdversarialPacket {
  std::string model;
  std::uint64_t packet_id = 0;
  RawPacket packet;
};

struct EvalReport {
  std::string attack_class;
  std::vector<ModelEval> rows;
  std::vector<SampleOutcome> samples;
  std::vector<AdversarialPacket> adversarial;  // every rolled-out packet that was mutated

  double mean_asr() const;
};

/// Greedy rollout of the agent per (sample, model). Samples the model already
/// misses count towards fn_original and are not perturbed. The state's label
/// bit comes from the model under test and a rollout stops once that model
/// says benign or after max_steps actions. Throws Error(SplitOverlap) when a
/// pool packet id appears in `excluded_ids` (the agent's training split).
EvalReport evaluate_agent(const TrainedAgent& agent, const std::vector<NamedModel>& models,
                          const std::vector<LabeledPacket>& pool, const std::vector<std::uint8_t>& payload_corpus,
                          const EvalOptions& options, std::span<const std::uint64_t> excluded_ids = {},
                          std::string attack_class = {});

/// Throws Error(SplitOverlap) naming the first shared id.
void check_disjoint(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, std::string_view what);

struct FeatureImportance {
  std::size_t feature = 0;
  double drop = 0.0;  // baseline accuracy minus accuracy with the feature shuffled
};

/// Ranks features by accuracy drop under per-feature shuffling, averaged over
/// `repeats`. Constant columns score exactly zero. Ties rank by index.
std::vector<FeatureImportance> permutation_importance(const ClassifierModel& model, const TrainingData& data,
                                                      nn::Rng& rng, int repeats = 1);

void write_asr_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
void write_ood_csv(const std::filesystem::path& path, std::span<const EvalReport> reports, const EvalOptions& options);
void write_samples_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
void write_importance_csv(const std::filesystem::path& path, std::span<const FeatureImportance> ranked, std::size_t top_k);

/// One parsed row of an ASR report.
struct AsrRow {
  std::string attack_class;
  std::string model;
  std::size_t tp = 0, fn_original = 0, fn_p = 0;
  std::optional<double> asr;
};
std::vector<AsrRow> read_asr_csv(const std::filesystem::path& path);

}  // namespace packgen
