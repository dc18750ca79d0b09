#include "packgen/ddqn.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "packgen/error.hpp"

namespace packgen {

namespace {

constexpr std::string_view kAgentFormat = "packgen-agent";
constexpr int kAgentVersion = 1;

nn::Matrix stack_states(std::span<const Transition* const> batch, bool next) {
  nn::Matrix m(static_cast<Eigen::Index>(kStateDim), static_cast<Eigen::Index>(batch.size()));  // write_input fills every row
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = next ? batch[i]->next : batch[i]->state;
    s.write_input(m.col(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

std::span<const double> column(const nn::Matrix& m, Eigen::Index c) {
  return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}

}  // namespace

double EpsilonSchedule::at(std::uint64_t step) const {
  return end + (start - end) * std::exp(-decay * static_cast<double>(step));
}

nlohmann::json AgentConfig::to_json() const {
  std::vector<int> mask;
  for (std::size_t i = 0; i < kActionCount; ++i)
    if (enabled[i]) mask.push_back(static_cast<int>(i));
  return {{"hidden", hidden},
          {"gamma", gamma},
          {"learning_rate", learning_rate},
          {"optimizer", "adam"},
          {"batch_size", batch_size},
          {"buffer_capacity", buffer_capacity},
          {"target_update", target_update},
          {"episodes", episodes},
          {"max_steps", max_steps},
          {"epsilon", {{"start", epsilon.start}, {"end", epsilon.end}, {"decay", epsilon.decay}}},
          {"enabled_actions", mask}};
}

AgentConfig AgentConfig::from_json(const nlohmann::json& j) {
  AgentConfig c;
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.gamma = j.at("gamma");
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.buffer_capacity = j.at("buffer_capacity");
  c.target_update = j.at("target_update");
  c.episodes = j.at("episodes");
  c.max_steps = j.at("max_steps");
  c.epsilon = {j.at("epsilon").at("start"), j.at("epsilon").at("end"), j.at("epsilon").at("decay")};
  c.enabled.fill(false);
  for (int id : j.at("enabled_actions").get<std::vector<int>>()) {
    if (id < 0 || id >= static_cast<int>(kActionCount)) throw Error(ErrorCode::UnsupportedFormat, "bad action id");
    c.enabled[static_cast<std::size_t>(id)] = true;
  }
  return c;
}

StoredState StoredState::from(const EnvState& s) {
  StoredState out;
  const auto b = s.features.bytes();
  std::size_t len = b.size();
  while (len > 0 && b[len - 1] == 0) --len;
  out.bytes.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(len));
  out.label = static_cast<std::uint8_t>(s.label);
  return out;
}

void StoredState::write_input(double* out) const {
  std::fill(out, out + kStateDim, 0.0);
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i] / 255.0;
  out[kFeatureCount] = label;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::Config, "replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw Error(ErrorCode::InvalidArgument, "replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, nn::Rng& rng) const {
  if (items_.size() < n || n == 0) throw Error(ErrorCode::InvalidArgument, "replay buffer holds fewer items than the batch");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& t : out) t = &items_[pick(rng)];
  return out;
}

int greedy_action(std::span<const double> q, const ActionMask& enabled) {
  int best = -1;
  for (std::size_t a = 0; a < q.size() && a < kActionCount; ++a) {
    if (!enabled[a]) continue;
    if (best < 0 || q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  if (best < 0) throw Error(ErrorCode::Config, "no action is enabled");
  return best;
}

int act(const nn::FeedForward& net, std::span<const double> state, double epsilon, nn::Rng& rng,
        const ActionMask& enabled) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::vector<int> ids;
    for (std::size_t a = 0; a < kActionCount; ++a)
      if (enabled[a]) ids.push_back(static_cast<int>(a));
    if (ids.empty()) throw Error(ErrorCode::Config, "no action is enabled");
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    return ids[pick(rng)];
  }
  const nn::Matrix x = Eigen::Map<const nn::Matrix>(state.data(), static_cast<Eigen::Index>(state.size()), 1);
  const nn::Matrix q = net.forward(x);
  return greedy_action(column(q, 0), enabled);
}

double td_target(double reward, bool done, double gamma, std::span<const double> q_policy_next,
                 std::span<const double> q_target_next, const ActionMask& enabled) {
  if (done) return reward;
  const int a = greedy_action(q_policy_next, enabled);
  return reward + gamma * q_target_next[static_cast<std::size_t>(a)];
}

double q_loss(const nn::FeedForward& net, const nn::Matrix& s, std::span<const int> actions,
              std::span<const double> targets, nn::Gradients* grad) {
  nn::Tape tape;
  const nn::Matrix q = net.forward(s, tape);
  const auto b = static_cast<double>(q.cols());
  nn::Matrix dq = nn::Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)]);
    const double diff = q(a, i) - targets[static_cast<std::size_t>(i)];
    loss += diff * diff;
    dq(a, i) = 2.0 * diff / b;
  }
  loss /= b;
  if (grad) *grad = net.backward(tape, dq);
  return loss;
}

nn::FeedForward make_q_network(const AgentConfig& config, nn::Rng& rng) {
  std::vector<int> sizes{static_cast<int>(kStateDim)};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<int>(kActionCount));
  return nn::FeedForward(sizes, nn::Init::KaimingNormal, rng);
}

DdqnLearner::DdqnLearner(nn::FeedForward policy, const AgentConfig& config)
    : config_(config), policy_(std::move(policy)), target_(policy_), optimizer_(policy_, config.learning_rate) {
  if (config_.target_update <= 0) throw Error(ErrorCode::Config, "target update period must be positive");
}

std::vector<double> DdqnLearner::targets(std::span<const Transition* const> batch) const {
  const nn::Matrix s2 = stack_states(batch, true);
  const nn::Matrix qp = policy_.forward(s2);
  const nn::Matrix qt = target_.forward(s2);
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    y[i] = td_target(batch[i]->reward, batch[i]->done, config_.gamma, column(qp, c), column(qt, c), config_.enabled);
  }
  return y;
}

double DdqnLearner::learn_step(const ReplayBuffer& buffer, nn::Rng& rng) {
  const auto batch = buffer.sample(config_.batch_size, rng);
  const auto y = targets(batch);
  const nn::Matrix s = stack_states(batch, false);
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) actions[i] = batch[i]->action;
  nn::Gradients g;
  const double loss = q_loss(policy_, s, actions, y, &g);
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::Training, "non-finite Q loss at learner step " + std::to_string(steps_) + " (batch " +
                                         std::to_string(batch.size()) + ", gamma " + std::to_string(config_.gamma) + ")");
  }
  optimizer_.step(policy_, g);
  ++steps_;
  if (steps_ % static_cast<std::uint64_t>(config_.target_update) == 0) target_ = policy_;
  return loss;
}

std::vector<double> TrainingLog::moving_average(std::size_t window) const {
  std::vector<double> out;
  out.reserve(episodes.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    sum += episodes[i].reward;
    if (i >= window) sum -= episodes[i - window].reward;
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path, std::size_t window) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write reward curve: " + path.string());
  const auto avg = moving_average(window);
  out << "step,episode,reward,length,evaded,moving_average\n";
  out.precision(17);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    out << e.end_step << ',' << e.episode << ',' << e.reward << ',' << e.length << ',' << (e.evaded ? 1 : 0) << ','
        << avg[i] << '\n';
  }
}

int TrainedAgent::greedy(const EnvState& s) const {
  const auto x = s.as_input();
  nn::Rng unused(0);
  return act(policy, x, 0.0, unused, config.enabled);
}

nlohmann::json TrainedAgent::to_json() const {
  nlohmann::json actions = nlohmann::json::array();
  for (auto a : all_actions()) actions.push_back({{"id", action_id(a)}, {"name", to_string(a)}});
  return {{"format", kAgentFormat},
          {"version", kAgentVersion},
          {"actions", std::move(actions)},
          {"config", config.to_json()},
          {"seeds", {{"init", init_seed}, {"exploration", exploration_seed}}},
          {"schedule", {{"env_steps", env_steps}, {"epsilon", config.epsilon.at(env_steps)}}},
          {"learner_steps", learner_steps},
          {"provenance", provenance},
          {"policy", policy.to_json()},
          {"target", target.to_json()}};
}

TrainedAgent TrainedAgent::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kAgentFormat) throw Error(ErrorCode::UnsupportedFormat, "not a packgen agent file");
  if (j.at("version").get<int>() != kAgentVersion) throw Error(ErrorCode::UnsupportedFormat, "unsupported agent version");
  for (const auto& a : j.at("actions")) {
    const auto kind = action_from_id(a.at("id").get<int>());
    if (!kind || to_string(*kind) != a.at("name").get<std::string>()) {
      throw Error(ErrorCode::UnsupportedFormat, "agent action table does not match this build");
    }
  }
  TrainedAgent t;
  t.config = AgentConfig::from_json(j.at("config"));
  t.init_seed = j.at("seeds").at("init");
  t.exploration_seed = j.at("seeds").at("exploration");
  t.env_steps = j.at("schedule").at("env_steps");
  t.learner_steps = j.at("learner_steps");
  t.provenance = j.at("provenance");
  t.policy = nn::FeedForward::from_json(j.at("policy"));
  t.target = nn::FeedForward::from_json(j.at("target"));
  if (t.policy.input_dim() != static_cast<int>(kStateDim) || t.policy.output_dim() != static_cast<int>(kActionCount)) {
    throw Error(ErrorCode::UnsupportedFormat, "agent network shape does not match the state/action space");
  }
  return t;
}

void TrainedAgent::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write agent: " + path.string());
  out << to_json().dump();
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

TrainedAgent TrainedAgent::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "agent file not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnsupportedFormat, "cannot parse agent " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

TrainedAgent train_agent(AdversarialEnv& env, const AgentConfig& config, std::uint64_t init_seed,
                         std::uint64_t exploration_seed, TrainingLog* log, const EpisodeCallback& on_episode) {
  if (config.episodes < 0 || config.max_steps <= 0 || config.batch_size == 0) {
    throw Error(ErrorCode::Config, "invalid agent training configuration");
  }
  if (config.max_steps != env.config().max_steps) {
    throw Error(ErrorCode::Config, "agent and environment disagree on the episode length");
  }
  nn::Rng init_rng(init_seed);
  nn::Rng rng(exploration_seed);
  DdqnLearner learner(make_q_network(config, init_rng), config);
  ReplayBuffer buffer(config.buffer_capacity);
  TrainingLog local;
  TrainingLog& out = log ? *log : local;
  out = TrainingLog{};
  std::vector<double> input(kStateDim);
  std::uint64_t step = 0;

  for (int episode = 0; episode < config.episodes; ++episode) {
    EnvState s = env.reset(rng);
    EpisodeRecord rec;
    rec.episode = episode;
    for (int t = 0; t < config.max_steps; ++t) {
      s.write_input(input.data());
      const int a = act(learner.policy(), input, config.epsilon.at(step), rng, config.enabled);
      auto r = env.step(*action_from_id(a));
      ++step;
      buffer.push({StoredState::from(s), a, r.reward, StoredState::from(r.next), r.done});
      if (buffer.size() >= config.batch_size) learner.learn_step(buffer, rng);
      rec.reward += r.reward;
      ++rec.length;
      s = std::move(r.next);
      if (r.done) {
        rec.evaded = r.evaded == env.ensemble().size();
        break;
      }
    }
    rec.end_step = step;
    out.episodes.push_back(rec);
    if (on_episode) on_episode(rec);
  }
  out.env_steps = step;
  out.learner_steps = learner.steps();
  out.final_epsilon = config.epsilon.at(step);

  TrainedAgent agent;
  agent.policy = learner.policy();
  agent.target = learner.target();
  agent.config = config;
  agent.init_seed = init_seed;
  agent.exploration_seed = exploration_seed;
  agent.env_steps = step;
  agent.learner_steps = learner.steps();
  return agent;
}

}  // namespace packgen
