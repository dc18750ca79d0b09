#include "packgen/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "packgen/error.hpp"
#include "packgen/hashing.hpp"

namespace packgen {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view expected) {
  throw Error(ErrorCode::Config, "invalid value '" + value + "' for " + key + " (expected " + std::string(expected) + ")");
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) {
    const int n = parse_int<int>(key, s);
    if (n <= 0) bad_value(key, v, "positive layer sizes");
    out.push_back(n);
  }
  if (out.empty()) bad_value(key, v, "at least one layer size");
  return out;
}

std::vector<ModelKind> parse_kinds(const std::string& key, const std::string& v) {
  std::vector<ModelKind> out;
  for (const auto& s : split_list(v)) {
    auto k = parse_model_kind(s);
    if (!k) bad_value(key, v, "a list of LR, DT, RF, MLP, DNN");
    if (std::find(out.begin(), out.end(), *k) == out.end()) out.push_back(*k);
  }
  if (out.empty()) bad_value(key, v, "at least one model kind");
  return out;
}

int parse_max_features(const std::string& key, const std::string& v) {
  if (v == "all") return kMaxFeaturesAll;
  if (v == "sqrt") return kMaxFeaturesSqrt;
  const int n = parse_int<int>(key, v);
  if (n <= 0) bad_value(key, v, "a positive count, sqrt or all");
  return n;
}

std::string max_features_text(int v) {
  return v == kMaxFeaturesAll ? "all" : v == kMaxFeaturesSqrt ? "sqrt" : std::to_string(v);
}

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += f(items[i]);
  }
  return out;
}

std::string real_text(double v) {
  std::array<char, 32> buf{};
  auto end = std::to_chars(buf.data(), buf.data() + buf.size(), v).ptr;
  return std::string(buf.data(), end);
}

struct Key {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;  // empty for keys outside the hash
};

#define PG_INT(field, T) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int<T>(k, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }
#define PG_REAL(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }, \
      [](const RunConfig& c) { return real_text(c.field); }
#define PG_BOOL(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
      [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }
#define PG_SIZES(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_sizes(k, v); }, \
      [](const RunConfig& c) { return join<int>(c.field, [](const int& n) { return std::to_string(n); }); }
#define PG_MAXF(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_max_features(k, v); }, \
      [](const RunConfig& c) { return max_features_text(c.field); }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> v{
        {"seed", "root seed; every random stream is derived from it", PG_INT(seed, std::uint64_t)},
        {"threads", "parallel classifier fits (results do not depend on it)",
         [](RunConfig& c, const std::string& k, const std::string& s) { c.threads = parse_int<int>(k, s); }, {}},
        {"out", "output directory",
         [](RunConfig& c, const std::string&, const std::string& s) { c.out = std::filesystem::path(s); }, {}},
        {"data.source", "synthetic or pcap",
         [](RunConfig& c, const std::string& k, const std::string& s) {
           if (s == "synthetic") c.source = DataSource::Synthetic;
           else if (s == "pcap") c.source = DataSource::Pcap;
           else bad_value(k, s, "synthetic or pcap");
         },
         [](const RunConfig& c) { return std::string(c.source == DataSource::Synthetic ? "synthetic" : "pcap"); }},
        {"data.pcap", "capture file for data.source = pcap",
         [](RunConfig& c, const std::string&, const std::string& s) { c.pcap = s; },
         [](const RunConfig& c) { return c.pcap.string(); }},
        {"data.rules", "label rules file for data.source = pcap",
         [](RunConfig& c, const std::string&, const std::string& s) { c.rules = s; },
         [](const RunConfig& c) { return c.rules.string(); }},
        {"data.split.scheme", "A (60/30/10) or B (70/30); sets the three fractions",
         [](RunConfig& c, const std::string& k, const std::string& s) {
           if (s == "A") c.split = {0.6, 0.3, 0.1};
           else if (s == "B") c.split = {0.7, 0.3, 0.0};
           else bad_value(k, s, "A or B");
         },
         {}},
        {"data.split.train", "fraction for agent training and the surrogate models", PG_REAL(split.train)},
        {"data.split.mltest", "fraction for the held-out test models", PG_REAL(split.mltest)},
        {"data.split.agenttest", "fraction for agent evaluation", PG_REAL(split.agenttest)},
        {"data.min_class_count", "classes with fewer forward attack packets are dropped",
         PG_INT(min_class_count, std::size_t)},
        {"data.classes", "attack classes to build, comma separated",
         [](RunConfig& c, const std::string& k, const std::string& s) {
           c.classes.clear();
           for (const auto& item : split_list(s)) {
             auto cls = parse_attack_class(item);
             if (!cls) bad_value(k, s, "attack class names");
             if (std::find(c.classes.begin(), c.classes.end(), *cls) == c.classes.end()) c.classes.push_back(*cls);
           }
           if (c.classes.empty()) bad_value(k, s, "at least one attack class");
         },
         [](const RunConfig& c) {
           return join<AttackClass>(c.classes, [](const AttackClass& a) { return std::string(to_string(a)); });
         }},
        {"data.corpus_length", "bytes of benign payload available to payload appends",
         PG_INT(corpus_length, std::size_t)},
        {"synthetic.benign_packets", "forward benign packets", PG_INT(synthetic.benign_packets, std::size_t)},
        {"synthetic.attack_packets", "forward packets per attack class in data.classes",
         PG_INT(synthetic_attack_packets, std::size_t)},
        {"synthetic.margin", "minimum benign payload length in bytes", PG_INT(synthetic.margin, std::size_t)},
        {"synthetic.reply_fraction", "chance of a backward reply per forward packet", PG_REAL(synthetic.reply_fraction)},
        {"synthetic.syn_fraction", "share of benign forward packets that are SYNs", PG_REAL(synthetic.syn_fraction)},
        {"synthetic.ttl_min", "lowest TTL", PG_INT(synthetic.ttl_min, std::uint8_t)},
        {"synthetic.ttl_max", "highest TTL", PG_INT(synthetic.ttl_max, std::uint8_t)},
        {"synthetic.window_min", "lowest TCP window", PG_INT(synthetic.window_min, std::uint16_t)},
        {"synthetic.window_max", "highest TCP window", PG_INT(synthetic.window_max, std::uint16_t)},
        {"classifiers.kinds", "model kinds trained for testing",
         [](RunConfig& c, const std::string& k, const std::string& s) { c.model_kinds = parse_kinds(k, s); },
         [](const RunConfig& c) {
           return join<ModelKind>(c.model_kinds, [](const ModelKind& m) { return std::string(to_string(m)); });
         }},
        {"classifiers.ensemble", "kinds forming the surrogate ensemble",
         [](RunConfig& c, const std::string& k, const std::string& s) { c.ensemble_kinds = parse_kinds(k, s); },
         [](const RunConfig& c) {
           return join<ModelKind>(c.ensemble_kinds, [](const ModelKind& m) { return std::string(to_string(m)); });
         }},
        {"classifiers.train_fraction", "fit share of each model split (rest scores the model)",
         PG_REAL(model_train_fraction)},
        {"classifiers.lr.epochs", "", PG_INT(lr.linear.epochs, int)},
        {"classifiers.lr.batch_size", "", PG_INT(lr.linear.batch_size, int)},
        {"classifiers.lr.learning_rate", "", PG_REAL(lr.linear.learning_rate)},
        {"classifiers.lr.l2", "", PG_REAL(lr.linear.l2)},
        {"classifiers.dt.max_depth", "", PG_INT(dt.tree.max_depth, int)},
        {"classifiers.dt.min_samples_split", "", PG_INT(dt.tree.min_samples_split, int)},
        {"classifiers.dt.min_samples_leaf", "", PG_INT(dt.tree.min_samples_leaf, int)},
        {"classifiers.dt.max_features", "count, sqrt or all", PG_MAXF(dt.tree.max_features)},
        {"classifiers.dt.ccp_alpha", "cost-complexity pruning strength", PG_REAL(dt.tree.ccp_alpha)},
        {"classifiers.rf.n_estimators", "", PG_INT(rf.forest.n_estimators, int)},
        {"classifiers.rf.bootstrap", "", PG_BOOL(rf.forest.bootstrap)},
        {"classifiers.rf.max_depth", "", PG_INT(rf.forest.tree.max_depth, int)},
        {"classifiers.rf.min_samples_split", "", PG_INT(rf.forest.tree.min_samples_split, int)},
        {"classifiers.rf.min_samples_leaf", "", PG_INT(rf.forest.tree.min_samples_leaf, int)},
        {"classifiers.rf.max_features", "count, sqrt or all", PG_MAXF(rf.forest.tree.max_features)},
        {"classifiers.rf.ccp_alpha", "", PG_REAL(rf.forest.tree.ccp_alpha)},
    };
    for (const std::string net : {"mlp", "dnn"}) {
      auto field = [net](RunConfig& c) -> NetworkParams& { return net == "mlp" ? c.mlp.network : c.dnn.network; };
      auto cfield = [net](const RunConfig& c) -> const NetworkParams& {
        return net == "mlp" ? c.mlp.network : c.dnn.network;
      };
      const std::string p = "classifiers." + net + ".";
      v.push_back({p + "hidden", "hidden layer sizes",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).hidden = parse_sizes(k, s); },
                   [cfield](const RunConfig& c) {
                     return join<int>(cfield(c).hidden, [](const int& n) { return std::to_string(n); });
                   }});
      v.push_back({p + "batch_size", "",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).batch_size = parse_int<int>(k, s); },
                   [cfield](const RunConfig& c) { return std::to_string(cfield(c).batch_size); }});
      v.push_back({p + "learning_rate", "",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).learning_rate = parse_real(k, s); },
                   [cfield](const RunConfig& c) { return real_text(cfield(c).learning_rate); }});
      v.push_back({p + "max_epochs", "",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).max_epochs = parse_int<int>(k, s); },
                   [cfield](const RunConfig& c) { return std::to_string(cfield(c).max_epochs); }});
      v.push_back({p + "l2", "",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).l2 = parse_real(k, s); },
                   [cfield](const RunConfig& c) { return real_text(cfield(c).l2); }});
      v.push_back({p + "tol", "early stopping tolerance",
                   [field](RunConfig& c, const std::string& k, const std::string& s) { field(c).tol = parse_real(k, s); },
                   [cfield](const RunConfig& c) { return real_text(cfield(c).tol); }});
      v.push_back({p + "n_iter_no_change", "",
                   [field](RunConfig& c, const std::string& k, const std::string& s) {
                     field(c).n_iter_no_change = parse_int<int>(k, s);
                   },
                   [cfield](const RunConfig& c) { return std::to_string(cfield(c).n_iter_no_change); }});
    }
    std::vector<Key> rest{
        {"agent.episodes", "training episodes", PG_INT(agent.episodes, int)},
        {"agent.max_steps", "actions per episode", PG_INT(agent.max_steps, int)},
        {"agent.gamma", "discount", PG_REAL(agent.gamma)},
        {"agent.learning_rate", "", PG_REAL(agent.learning_rate)},
        {"agent.batch_size", "", PG_INT(agent.batch_size, std::size_t)},
        {"agent.buffer_capacity", "replay capacity", PG_INT(agent.buffer_capacity, std::size_t)},
        {"agent.target_update", "learner steps between target copies", PG_INT(agent.target_update, int)},
        {"agent.hidden", "Q-network hidden layer sizes", PG_SIZES(agent.hidden)},
        {"agent.epsilon_start", "", PG_REAL(agent.epsilon.start)},
        {"agent.epsilon_end", "", PG_REAL(agent.epsilon.end)},
        {"agent.epsilon_decay", "per action step", PG_REAL(agent.epsilon.decay)},
        {"agent.actions", "enabled actions: all or a list of action names",
         [](RunConfig& c, const std::string& k, const std::string& s) {
           if (s == "all") {
             c.agent.enabled = all_enabled();
             return;
           }
           c.agent.enabled.fill(false);
           bool any = false;
           for (const auto& item : split_list(s)) {
             auto a = parse_action(item);
             if (!a) bad_value(k, s, "all or action names such as TtlInc,PayloadAppend");
             c.agent.enabled[static_cast<std::size_t>(action_id(*a))] = any = true;
           }
           if (!any) bad_value(k, s, "at least one action");
         },
         [](const RunConfig& c) {
           std::string out;
           for (auto a : all_actions()) {
             if (!c.agent.enabled[static_cast<std::size_t>(action_id(a))]) continue;
             if (!out.empty()) out += ',';
             out += to_string(a);
           }
           return out;
         }},
        {"reward.evade_each", "reward per evaded ensemble member", PG_REAL(reward.evade_each)},
        {"reward.penalty", "reward when no member is evaded", PG_REAL(reward.penalty)},
        {"perturbation.payload_chunk", "bytes added per payload append", PG_INT(payload_chunk, std::size_t)},
        {"eval.alpha", "K-S significance level", PG_REAL(eval.alpha)},
        {"eval.ks_mode", "per_packet or population",
         [](RunConfig& c, const std::string& k, const std::string& s) {
           auto m = parse_ks_mode(s);
           if (!m) bad_value(k, s, "per_packet or population");
           c.eval.ks_mode = *m;
         },
         [](const RunConfig& c) { return std::string(to_string(c.eval.ks_mode)); }},
        {"eval.agents_from", "run directory providing the agents (empty: this run)",
         [](RunConfig& c, const std::string&, const std::string& s) { c.agents_from = s; },
         [](const RunConfig& c) { return c.agents_from.string(); }},
        {"eval.importance_top_k", "features kept per importance table (0 disables)",
         PG_INT(importance_top_k, std::size_t)},
        {"eval.importance_repeats", "shuffles per feature", PG_INT(importance_repeats, int)},
    };
    v.insert(v.end(), rest.begin(), rest.end());
    return v;
  }();
  return k;
}

#undef PG_INT
#undef PG_REAL
#undef PG_BOOL
#undef PG_SIZES
#undef PG_MAXF

}  // namespace

const Hyperparams& RunConfig::hyperparams(ModelKind k) const {
  switch (k) {
    case ModelKind::LR: return lr;
    case ModelKind::DT: return dt;
    case ModelKind::RF: return rf;
    case ModelKind::MLP: return mlp;
    case ModelKind::DNN: return dnn;
  }
  return lr;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s = synthetic;
  s.attack_packets.clear();
  for (auto c : classes) s.attack_packets[c] = synthetic_attack_packets;
  return s;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keys())
    if (k.get) j[k.name] = k.get(*this);
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
  const double sum = split.train + split.mltest + split.agenttest;
  if (split.train < 0 || split.mltest < 0 || split.agenttest < 0 || std::abs(sum - 1.0) > 1e-9) {
    fail("split fractions must be non-negative and sum to 1 (got " + real_text(sum) + ")");
  }
  if (split.mltest == 0) fail("the mltest fraction must be positive");
  if (split.train == 0 && agents_from.empty()) fail("a run without a train split needs eval.agents_from");
  if (source == DataSource::Pcap && (pcap.empty() || rules.empty())) fail("data.source = pcap needs data.pcap and data.rules");
  if (model_train_fraction <= 0 || model_train_fraction >= 1) fail("classifiers.train_fraction must lie in (0, 1)");
  for (auto k : ensemble_kinds) {
    if (std::find(model_kinds.begin(), model_kinds.end(), k) == model_kinds.end()) {
      fail("ensemble kind " + std::string(to_string(k)) + " is missing from classifiers.kinds");
    }
  }
  if (std::find(model_kinds.begin(), model_kinds.end(), ModelKind::DT) == model_kinds.end()) {
    fail("classifiers.kinds must include DT");
  }
  if (agent.episodes < 0 || agent.max_steps <= 0 || agent.batch_size == 0 || agent.buffer_capacity < agent.batch_size ||
      agent.target_update <= 0) {
    fail("agent settings need max_steps > 0, batch_size > 0, buffer_capacity >= batch_size, target_update > 0");
  }
  if (agent.gamma < 0 || agent.gamma > 1) fail("agent.gamma must lie in [0, 1]");
  if (agent.epsilon.end < 0 || agent.epsilon.start > 1 || agent.epsilon.end > agent.epsilon.start ||
      agent.epsilon.decay < 0) {
    fail("epsilon schedule needs 0 <= end <= start <= 1 and decay >= 0");
  }
  if (!(eval.alpha > 0 && eval.alpha < 1)) fail("eval.alpha must lie in (0, 1)");
  if (threads < 1) fail("threads must be at least 1");
  if (payload_chunk == 0) fail("perturbation.payload_chunk must be positive");
  if (synthetic.reply_fraction < 0 || synthetic.reply_fraction > 1 || synthetic.syn_fraction < 0 ||
      synthetic.syn_fraction > 1) {
    fail("synthetic fractions must lie in [0, 1]");
  }
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(config, key, value);
      return;
    }
  }
  throw Error(ErrorCode::Config, "unknown configuration key '" + key + "'");
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::set<std::string> seen;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": expected key = value");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (!seen.insert(key).second) throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": repeated key " + key);
    try {
      set_config_value(base, key, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file " + path.string());
  auto cfg = parse_config(in);
  // relative capture paths are resolved against the config file
  const auto dir = path.parent_path();
  if (!cfg.pcap.empty() && cfg.pcap.is_relative()) cfg.pcap = dir / cfg.pcap;
  if (!cfg.rules.empty() && cfg.rules.is_relative()) cfg.rules = dir / cfg.rules;
  if (!cfg.agents_from.empty() && cfg.agents_from.is_relative()) cfg.agents_from = dir / cfg.agents_from;
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_schema() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.help);
  return out;
}

RunConfig preset(std::string_view name) {
  RunConfig c;
  if (name == "full") {
    c.synthetic.benign_packets = 30000;
    c.synthetic_attack_packets = 20000;
    return c;
  }
  if (name == "desk") {
    c.agent.episodes = 5000;
    c.agent.buffer_capacity = 20000;
    return c;
  }
  throw Error(ErrorCode::Config, "unknown preset '" + std::string(name) + "' (expected desk or full)");
}

}  // namespace packgen
