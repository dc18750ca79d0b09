#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "packgen/env.hpp"
#include "packgen/nn.hpp"
#include "packgen/perturbation.hpp"

namespace packgen {

/// eps(step) = end + (start - end) * exp(-decay * step), one step per action.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.01;
  double decay = 0.00002;

  double at(std::uint64_t step) const;
};

using ActionMask = std::array<bool, kActionCount>;
inline ActionMask all_enabled() {
  ActionMask m;
  m.fill(true);
  return m;
}

struct AgentConfig {
  std::vector<int> hidden{256, 128, 64};
  double gamma = 0.8;
  double learning_rate = 0.001;
  std::size_t batch_size = 256;
  std::size_t buffer_capacity = 100000;
  int target_update = 10;  // learner steps between hard copies
  int episodes = 50000;
  int max_steps = 30;
  EpsilonSchedule epsilon;
  ActionMask enabled = all_enabled();

  nlohmann::json to_json() const;
  static AgentConfig from_json(const nlohmann::json& j);
};

/// Compact agent state: feature bytes without trailing zero padding plus the
/// label bit.
struct StoredState {
  std::vector<std::uint8_t> bytes;
  std::uint8_t label = 0;

  static StoredState from(const EnvState& s);
  void write_input(double* out) const;  // kStateDim values
};

struct Transition {
  StoredState state;
  int action = 0;
  double reward = 0.0;
  StoredState next;
  bool done = false;
};

/// Fixed-capacity FIFO ring with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Uniform with replacement. Throws Error(InvalidArgument) when size() < n.
  std::vector<const Transition*> sample(std::size_t n, nn::Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest item once full
  std::vector<Transition> items_;
};

/// Argmax over enabled actions, ties to the lowest id.
int greedy_action(std::span<const double> q, const ActionMask& enabled = all_enabled());

/// Epsilon-greedy choice. Always draws one uniform number; a random action
/// additionally draws the action index.
int act(const nn::FeedForward& net, std::span<const double> state, double epsilon, nn::Rng& rng,
        const ActionMask& enabled = all_enabled());

/// Double-Q target: r when done, else r + gamma * q_target[argmax q_policy].
double td_target(double reward, bool done, double gamma, std::span<const double> q_policy_next,
                 std::span<const double> q_target_next, const ActionMask& enabled = all_enabled());

/// Mean over the batch of (Q(s_i, a_i) - y_i)^2. States are columns of `s`.
double q_loss(const nn::FeedForward& net, const nn::Matrix& s, std::span<const int> actions,
              std::span<const double> targets, nn::Gradients* grad);

nn::FeedForward make_q_network(const AgentConfig& config, nn::Rng& rng);

class DdqnLearner {
 public:
  DdqnLearner(nn::FeedForward policy, const AgentConfig& config);

  /// One minibatch update; returns the loss. Throws Error(Training) on a
  /// non-finite loss.
  double learn_step(const ReplayBuffer& buffer, nn::Rng& rng);
  /// Targets for a batch, computed with the current networks.
  std::vector<double> targets(std::span<const Transition* const> batch) const;

  const nn::FeedForward& policy() const { return policy_; }
  const nn::FeedForward& target() const { return target_; }
  nn::FeedForward& policy() { return policy_; }
  std::uint64_t steps() const { return steps_; }
  const AgentConfig& config() const { return config_; }

 private:
  AgentConfig config_;
  nn::FeedForward policy_;
  nn::FeedForward target_;
  nn::Adam optimizer_;
  std::uint64_t steps_ = 0;
};

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t end_step = 0;  // environment steps taken when the episode ended
  double reward = 0.0;         // sum over the episode
  int length = 0;
  bool evaded = false;
};

struct TrainingLog {
  std::vector<EpisodeRecord> episodes;
  std::uint64_t env_steps = 0;
  std::uint64_t learner_steps = 0;
  double final_epsilon = 1.0;

  std::vector<double> moving_average(std::size_t window = 100) const;
  void write_csv(const std::filesystem::path& path, std::size_t window = 100) const;
};

struct TrainedAgent {
  nn::FeedForward policy;
  nn::FeedForward target;
  AgentConfig config;
  std::uint64_t init_seed = 0;
  std::uint64_t exploration_seed = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t learner_steps = 0;
  nlohmann::json provenance = nlohmann::json::object();

  int greedy(const EnvState& s) const;

  nlohmann::json to_json() const;
  static TrainedAgent from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedAgent load(const std::filesystem::path& path);
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Runs the double-Q training loop: one learner step after every action
/// once the buffer holds a full batch.
TrainedAgent train_agent(AdversarialEnv& env, const AgentConfig& config, std::uint64_t init_seed,
                         std::uint64_t exploration_seed, TrainingLog* log = nullptr,
                         const EpisodeCallback& on_episode = {});

}  // namespace packgen
