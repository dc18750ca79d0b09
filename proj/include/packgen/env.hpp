#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "packgen/classifiers.hpp"
#include "packgen/featurizer.hpp"
#include "packgen/nn.hpp"
#include "packgen/perturbation.hpp"

namespace packgen {

/// Reward for evading k members: k * evade_each when k > 0, else `penalty`.
struct RewardSpec {
  double evade_each = 200.0;
  double penalty = -2.0;

  double reward(std::size_t evaded) const {
    return evaded == 0 ? penalty : static_cast<double>(evaded) * evade_each;
  }
};

struct EnvConfig {
  int max_steps = 30;
  RewardSpec reward;
  std::size_t payload_chunk = kDefaultPayloadChunk;
};

struct EnvState {
  FeatureVector features;
  /// 0 iff every ensemble member says benign.
  int label = 1;
  int step_index = 0;
  RawPacket packet;
  std::size_t sample_index = 0;

  /// Agent input: 1525 feature values followed by the label.
  std::vector<double> as_input() const;
  void write_input(double* out) const;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  std::size_t evaded = 0;  // members outputting benign
  bool changed = false;
};

struct TraceRecord {
  int step = 0;
  int action = 0;
  std::size_t evaded = 0;
  double reward = 0.0;
};

/// Episodic perturbation environment over a pool of malicious packets. Every
/// action consumes one step; an episode ends on full evasion or after
/// max_steps actions.
class AdversarialEnv {
 public:
  /// Throws Error(Config) when the pool is empty.
  AdversarialEnv(std::vector<RawPacket> pool, Ensemble ensemble, std::vector<std::uint8_t> payload_corpus,
                 EnvConfig config = {});

  const EnvState& reset(nn::Rng& rng);
  const EnvState& reset_to(std::size_t sample_index);
  StepResult step(ActionKind action);

  const EnvState& state() const { return state_; }
  std::size_t evaded_count(const FeatureVector& f) const;
  const std::vector<TraceRecord>& trace() const { return trace_; }
  const Ensemble& ensemble() const { return ensemble_; }
  const EnvConfig& config() const { return config_; }
  std::size_t pool_size() const { return pool_.size(); }
  std::size_t append_cursor() const { return append_.cursor; }

 private:
  std::vector<RawPacket> pool_;
  Ensemble ensemble_;
  std::vector<std::uint8_t> corpus_;
  EnvConfig config_;
  EnvState state_;
  AppendContext append_;
  std::vector<TraceRecord> trace_;
  bool finished_ = true;
};

}  // namespace packgen
