#include "packgen/env.hpp"

#include <algorithm>
#include <random>

#include "packgen/error.hpp"

namespace packgen {

std::vector<double> EnvState::as_input() const {
  std::vector<double> out(kStateDim);
  write_input(out.data());
  return out;
}

void EnvState::write_input(double* out) const {
  const auto bytes = features.bytes();
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = bytes[i] / 255.0;
  out[kFeatureCount] = label;
}

AdversarialEnv::AdversarialEnv(std::vector<RawPacket> pool, Ensemble ensemble, std::vector<std::uint8_t> payload_corpus,
                               EnvConfig config)
    : pool_(std::move(pool)), ensemble_(std::move(ensemble)), corpus_(std::move(payload_corpus)), config_(config) {
  if (pool_.empty()) throw Error(ErrorCode::Config, "environment pool has no malicious samples");
  if (config_.max_steps <= 0) throw Error(ErrorCode::Config, "max episode length must be positive");
  if (ensemble_.members().front().input_dim() != kFeatureCount) {
    throw Error(ErrorCode::Config, "ensemble input width is not the packet feature width");
  }
}

std::size_t AdversarialEnv::evaded_count(const FeatureVector& f) const {
  const auto x = f.values();
  const auto labels = ensemble_.classify_all(x);
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
}

const EnvState& AdversarialEnv::reset(nn::Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  return reset_to(pick(rng));
}

const EnvState& AdversarialEnv::reset_to(std::size_t sample_index) {
  if (sample_index >= pool_.size()) throw Error(ErrorCode::InvalidArgument, "sample index outside the pool");
  state_ = EnvState{};
  state_.packet = pool_[sample_index];
  state_.sample_index = sample_index;
  state_.features = defeaturize_sync(state_.packet);
  state_.label = evaded_count(state_.features) == ensemble_.size() ? 0 : 1;
  append_ = AppendContext{corpus_, config_.payload_chunk, 0};
  trace_.clear();
  finished_ = false;
  return state_;
}

StepResult AdversarialEnv::step(ActionKind action) {
  if (finished_) throw Error(ErrorCode::InvalidArgument, "step called on a finished episode; call reset first");
  auto applied = apply(state_.packet, action, &append_);
  StepResult r;
  r.changed = applied.changed;
  EnvState next;
  next.packet = std::move(applied.packet);
  next.sample_index = state_.sample_index;
  next.step_index = state_.step_index + 1;
  next.features = r.changed ? defeaturize_sync(next.packet) : state_.features;
  r.evaded = evaded_count(next.features);
  next.label = r.evaded == ensemble_.size() ? 0 : 1;
  r.reward = config_.reward.reward(r.evaded);
  r.done = r.evaded == ensemble_.size() || next.step_index >= config_.max_steps;
  trace_.push_back({state_.step_index, action_id(action), r.evaded, r.reward});
  state_ = next;
  r.next = std::move(next);
  finished_ = r.done;
  return r;
}

}  // namespace packgen
