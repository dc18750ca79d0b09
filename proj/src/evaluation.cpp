#include "packgen/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "packgen/error.hpp"

namespace packgen {

namespace {

std::string fmt(double v) {
  std::array<char, 32> buf{};
  auto end = std::to_chars(buf.data(), buf.data() + buf.size(), v).ptr;
  return std::string(buf.data(), end);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write report: " + path.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::filesystem::path& path) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::UnsupportedFormat, "bad number '" + s + "' in " + path.string());
  }
  return v;
}

KsResult ks_sorted(const std::vector<double>& x, const std::vector<double>& y, double alpha) {
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsResult r;
  r.d = d;
  r.threshold = ks_coefficient(alpha) * std::sqrt((n + m) / (n * m));
  r.reject = d > r.threshold;
  return r;
}

}  // namespace

double asr(std::size_t tp, std::size_t fn_original, std::size_t fn_p) {
  if (tp == 0) throw Error(ErrorCode::UndefinedMetric, "ASR is undefined when the model detects no malicious sample");
  if (fn_p < fn_original) throw Error(ErrorCode::InvalidArgument, "perturbed false negatives below original count");
  return static_cast<double>(fn_p - fn_original) / static_cast<double>(tp);
}

double ks_coefficient(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  static constexpr std::array<std::pair<double, double>, 6> table{
      {{0.10, 1.22}, {0.05, 1.36}, {0.025, 1.48}, {0.01, 1.63}, {0.005, 1.73}, {0.001, 1.95}}};
  for (auto [a, c] : table)
    if (a == alpha) return c;
  return std::sqrt(-std::log(alpha / 2.0) / 2.0);
}

KsResult ks_two_sample(std::span<const double> x, std::span<const double> y, double alpha) {
  if (x.empty() || y.empty()) throw Error(ErrorCode::InvalidArgument, "K-S test needs two non-empty samples");
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return ks_sorted(xs, ys, alpha);
}

std::string_view to_string(KsMode m) noexcept { return m == KsMode::PerPacket ? "per_packet" : "population"; }

std::optional<KsMode> parse_ks_mode(std::string_view text) noexcept {
  if (text == "per_packet") return KsMode::PerPacket;
  if (text == "population") return KsMode::Population;
  return std::nullopt;
}

double EvalReport::mean_asr() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.asr) {
      sum += *r.asr;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

void check_disjoint(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, std::string_view what) {
  const std::unordered_set<std::uint64_t> seen(a.begin(), a.end());
  for (auto id : b) {
    if (seen.count(id)) {
      throw Error(ErrorCode::SplitOverlap, std::string(what) + ": packet id " + std::to_string(id) + " is in both splits");
    }
  }
}

EvalReport evaluate_agent(const TrainedAgent& agent, const std::vector<NamedModel>& models,
                          const std::vector<LabeledPacket>& pool, const std::vector<std::uint8_t>& payload_corpus,
                          const EvalOptions& options, std::span<const std::uint64_t> excluded_ids,
                          std::string attack_class) {
  if (pool.empty()) throw Error(ErrorCode::Config, "evaluation pool is empty");
  std::vector<std::uint64_t> ids;
  std::vector<RawPacket> packets;
  for (const auto& p : pool) {
    if (p.label != Label::Attack) throw Error(ErrorCode::InvalidArgument, "evaluation pool must be malicious packets");
    ids.push_back(p.packet_id);
    packets.push_back(p.packet);
  }
  check_disjoint(excluded_ids, ids, "agent training split vs evaluation pool");

  std::vector<FeatureVector> originals;
  originals.reserve(pool.size());
  for (const auto& p : packets) originals.push_back(defeaturize_sync(p));

  EvalReport report;
  report.attack_class = std::move(attack_class);
  EnvConfig env_cfg;
  env_cfg.max_steps = options.max_steps;
  env_cfg.payload_chunk = options.payload_chunk;

  for (const auto& nm : models) {
    ModelEval row;
    row.model = nm.name;
    row.kind = nm.model.kind();
    row.samples = pool.size();
    AdversarialEnv env(packets, Ensemble({nm.model}), payload_corpus, env_cfg);
    std::vector<std::size_t> successes;
    std::vector<FeatureVector> perturbed;

    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (nm.model.predict_label(originals[i].values()) == 0) {
        ++row.fn_original;
        ++row.fn_p;
        continue;
      }
      ++row.tp;
      SampleOutcome outcome;
      outcome.model = nm.name;
      outcome.packet_id = ids[i];
      EnvState s = env.reset_to(i);
      bool done = false;
      while (!done) {
        const int a = agent.greedy(s);
        auto r = env.step(*action_from_id(a));
        outcome.actions.push_back(a);
        ++outcome.steps;
        done = r.done;
        outcome.evaded = r.evaded == 1;
        s = std::move(r.next);
      }
      if (!(s.packet == packets[i])) report.adversarial.push_back({nm.name, ids[i], s.packet});
      if (outcome.evaded) {
        ++row.fn_p;
        ++row.successful;
        successes.push_back(i);
        perturbed.push_back(s.features);
        if (options.ks_mode == KsMode::PerPacket) {
          outcome.ks = ks_two_sample(originals[i].values(), s.features.values(), options.alpha);
          row.mean_d += outcome.ks->d;
          row.ood += outcome.ks->reject ? 1 : 0;
        }
      }
      report.samples.push_back(std::move(outcome));
    }

    if (options.ks_mode == KsMode::PerPacket) {
      if (row.successful) {
        row.mean_d /= static_cast<double>(row.successful);
        row.ood_fraction = static_cast<double>(row.ood) / static_cast<double>(row.successful);
      }
    } else if (!successes.empty()) {
      std::vector<double> x(successes.size()), y(successes.size());
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        for (std::size_t k = 0; k < successes.size(); ++k) {
          x[k] = originals[successes[k]].value(f);
          y[k] = perturbed[k].value(f);
        }
        const auto r = ks_two_sample(x, y, options.alpha);
        row.mean_d += r.d;
        row.ood += r.reject ? 1 : 0;
      }
      row.mean_d /= static_cast<double>(kFeatureCount);
      row.ood_fraction = static_cast<double>(row.ood) / static_cast<double>(kFeatureCount);
    }

    try {
      row.asr = asr(row.tp, row.fn_original, row.fn_p);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndefinedMetric) throw;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<FeatureImportance> permutation_importance(const ClassifierModel& model, const TrainingData& data,
                                                      nn::Rng& rng, int repeats) {
  if (data.size() == 0) throw Error(ErrorCode::InvalidArgument, "importance needs a non-empty dataset");
  const double base = model.accuracy(data);
  const auto d = static_cast<std::size_t>(data.x.cols());
  std::vector<FeatureImportance> out(d);
  TrainingData shuffled = data;
  std::vector<Eigen::Index> order(data.size());
  for (std::size_t f = 0; f < d; ++f) {
    out[f].feature = f;
    const auto col = static_cast<Eigen::Index>(f);
    if ((data.x.col(col).array() == data.x(0, col)).all()) continue;
    double drop = 0.0;
    for (int r = 0; r < repeats; ++r) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      shuffled.x.col(col) = data.x.col(col)(order);
      drop += base - model.accuracy(shuffled);
    }
    shuffled.x.col(col) = data.x.col(col);
    out[f].drop = drop / std::max(1, repeats);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.drop > b.drop; });
  return out;
}

void write_asr_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  auto out = open_out(path);
  out << "attack_class,model,kind,samples,tp,fn_original,fn_p,asr,note\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << rep.attack_class << ',' << r.model << ',' << to_string(r.kind) << ',' << r.samples << ',' << r.tp << ','
          << r.fn_original << ',' << r.fn_p << ',' << (r.asr ? fmt(*r.asr) : std::string()) << ','
          << (r.asr ? "" : "undefined: no true positives") << '\n';
    }
  }
}

void write_ood_csv(const std::filesystem::path& path, std::span<const EvalReport> reports, const EvalOptions& options) {
  auto out = open_out(path);
  out << "attack_class,model,mode,alpha,successful,ood,ood_fraction,mean_d\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << rep.attack_class << ',' << r.model << ',' << to_string(options.ks_mode) << ',' << fmt(options.alpha) << ','
          << r.successful << ',' << r.ood << ',' << fmt(r.ood_fraction) << ',' << fmt(r.mean_d) << '\n';
    }
  }
}

void write_samples_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  auto out = open_out(path);
  out << "attack_class,model,packet_id,evaded,steps,ks_d,ks_reject,actions\n";
  for (const auto& rep : reports) {
    for (const auto& s : rep.samples) {
      out << rep.attack_class << ',' << s.model << ',' << s.packet_id << ',' << (s.evaded ? 1 : 0) << ',' << s.steps
          << ',' << (s.ks ? fmt(s.ks->d) : "") << ',' << (s.ks ? (s.ks->reject ? "1" : "0") : "") << ',';
      for (std::size_t i = 0; i < s.actions.size(); ++i) {
        if (i) out << ' ';
        out << to_string(*action_from_id(s.actions[i]));
      }
      out << '\n';
    }
  }
}

void write_importance_csv(const std::filesystem::path& path, std::span<const FeatureImportance> ranked,
                          std::size_t top_k) {
  auto out = open_out(path);
  out << "rank,feature,drop\n";
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) {
    out << i + 1 << ",f" << std::setw(4) << std::setfill('0') << ranked[i].feature << std::setfill(' ') << ','
        << fmt(ranked[i].drop) << '\n';
  }
}

std::vector<AsrRow> read_asr_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "report not found: " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<AsrRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 9) throw Error(ErrorCode::UnsupportedFormat, "malformed ASR row in " + path.string());
    AsrRow r;
    r.attack_class = c[0];
    r.model = c[1];
    r.tp = parse_number<std::size_t>(c[4], path);
    r.fn_original = parse_number<std::size_t>(c[5], path);
    r.fn_p = parse_number<std::size_t>(c[6], path);
    if (!c[7].empty()) r.asr = parse_number<double>(c[7], path);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace packgen
