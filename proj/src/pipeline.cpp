#include "packgen/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "packgen/classifiers.hpp"
#include "packgen/ddqn.hpp"
#include "packgen/env.hpp"
#include "packgen/error.hpp"
#include "packgen/evaluation.hpp"
#include "packgen/hashing.hpp"
#include "packgen/synthetic.hpp"

namespace packgen {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 3> kSplits{"train", "mltest", "agenttest"};

std::string cls_name(AttackClass c) { return std::string(to_string(c)); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnsupportedFormat, "cannot parse " + path.string() + ": " + e.what());
  }
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool non_empty(const fs::path& p) {
  if (!fs::exists(p)) return false;
  if (fs::is_directory(p)) return fs::directory_iterator(p) != fs::directory_iterator();
  return true;
}

std::string rel_string(const fs::path& p) { return p.generic_string(); }

std::string stage_command(std::string_view producer) {
  if (producer == "ingest") return "build-dataset";
  if (producer == "classify") return "train-classifiers";
  if (producer.starts_with("train")) return "train-agent --attack <class>";
  return std::string(producer);
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Classify: return "classify";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::All: return "all";
  }
  return "all";
}

std::optional<Stage> parse_stage(std::string_view text) noexcept {
  for (auto s : {Stage::Ingest, Stage::Classify, Stage::Train, Stage::Evaluate, Stage::All})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f) {
  const std::array<double, 3> frac{f.train, f.mltest, f.agenttest};
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * frac[i];
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++out[order[k % 3]];
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<int>& labels,
                                                                                 double train_fraction,
                                                                                 std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<std::size_t> fit, hold;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * train_fraction));
    fit.insert(fit.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    hold.insert(hold.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(hold.begin(), hold.end());
  return {fit, hold};
}

std::vector<std::uint8_t> payload_corpus(const std::vector<LabeledPacket>& benign, std::size_t length) {
  std::map<std::vector<std::uint8_t>, std::size_t> freq;
  for (const auto& p : benign)
    if (!p.packet.payload.empty()) ++freq[p.packet.payload];
  const std::vector<std::uint8_t>* best = nullptr;
  std::size_t best_n = 0;
  for (const auto& [payload, n] : freq) {  // map order gives the lexicographic tie-break
    if (n > best_n) {
      best = &payload;
      best_n = n;
    }
  }
  if (!best) return {};
  return {best->begin(), best->begin() + static_cast<std::ptrdiff_t>(std::min(length, best->size()))};
}

std::vector<LabeledPacket> SplitData::malicious() const {
  std::vector<LabeledPacket> out;
  for (const auto& p : packets)
    if (p.label == Label::Attack) out.push_back(p);
  return out;
}

std::vector<std::uint64_t> SplitData::ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& p : packets) out.push_back(p.packet_id);
  return out;
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::AlreadyExists, "output directory " + dir.string() +
                                              " is locked by another run (remove " + path_.string() + " if stale)");
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Pipeline::Pipeline(RunConfig config, PipelineOptions options) : config_(std::move(config)), options_(std::move(options)) {
  config_.validate();
  if (options_.out.empty()) throw Error(ErrorCode::Config, "no output directory given");
  options_.out = fs::absolute(options_.out).lexically_normal();
}

void Pipeline::log(const std::string& message) const {
  if (options_.log) options_.log(message);
}

std::string Pipeline::section_hash(const std::vector<std::string>& prefixes) const {
  const auto all = config_.to_json();
  nlohmann::json part = nlohmann::json::object();
  for (const auto& [key, value] : all.items()) {
    for (const auto& p : prefixes) {
      if (key == p || (p.back() == '.' && key.starts_with(p))) {
        part[key] = value;
        break;
      }
    }
  }
  return sha256_hex(part.dump());
}

void Pipeline::require(const fs::path& rel, std::string_view producer) const {
  if (!fs::exists(abs(rel))) {
    throw Error(ErrorCode::MissingArtifact, "missing " + abs(rel).string() + "; produced by stage '" +
                                                std::string(producer) + "' (run `packgen " + stage_command(producer) +
                                                "` first)");
  }
}

bool Pipeline::run_stage(const std::string& name, const std::vector<std::string>& config_prefixes,
                         const std::vector<fs::path>& inputs, const std::vector<fs::path>& owned,
                         const std::function<std::vector<fs::path>()>& body) {
  const auto stamp_path = abs(fs::path("stages") / (name + ".json"));
  const auto cfg_hash = section_hash(config_prefixes);
  std::map<std::string, std::string> input_hashes;
  for (const auto& in : inputs) input_hashes[rel_string(in)] = sha256_file(abs(in));

  if (fs::exists(stamp_path)) {
    const auto stamp = read_json(stamp_path);
    bool current = stamp.value("config_hash", "") == cfg_hash &&
                   stamp.value("inputs", nlohmann::json::object()) == nlohmann::json(input_hashes);
    if (current) {
      for (const auto& [path, hash] : stamp.at("outputs").items()) {
        if (!fs::exists(abs(path)) || sha256_file(abs(path)) != hash.get<std::string>()) {
          current = false;
          break;
        }
      }
    }
    if (current) {
      log("stage " + name + ": up to date");
      return false;
    }
    if (!options_.force) {
      throw Error(ErrorCode::AlreadyExists, "stage " + name + ": outputs under " + options_.out.string() +
                                                " came from a different configuration or inputs; rerun with --force");
    }
  } else if (!options_.force) {
    for (const auto& o : owned) {
      if (non_empty(abs(o))) {
        throw Error(ErrorCode::AlreadyExists, "stage " + name + ": " + abs(o).string() +
                                                  " exists without a matching stamp; rerun with --force");
      }
    }
  }
  for (const auto& o : owned) fs::remove_all(abs(o));
  fs::remove(stamp_path);

  log("stage " + name + ": running");
  std::vector<fs::path> outputs;
  try {
    outputs = body();
  } catch (...) {
    for (const auto& o : owned) {
      std::error_code ec;
      fs::remove_all(abs(o), ec);
    }
    throw;
  }
  std::map<std::string, std::string> output_hashes;
  for (const auto& o : outputs) output_hashes[rel_string(o)] = sha256_file(abs(o));
  fs::create_directories(stamp_path.parent_path());
  write_json(stamp_path, {{"stage", name},
                          {"config_hash", cfg_hash},
                          {"run_config_hash", config_.hash()},
                          {"inputs", input_hashes},
                          {"outputs", output_hashes}});
  return true;
}

bool Pipeline::generate_synthetic() {
  OutputLock lock(options_.out);
  return run_stage("synthetic", {"seed", "synthetic.", "data.classes"}, {}, {"synthetic"}, [&] {
    fs::create_directories(abs("synthetic"));
    const auto capture = packgen::generate_synthetic(config_.synthetic_spec(), derive_seed(config_.seed, "dataset/synthetic"));
    write_synthetic(capture, abs("synthetic/capture.pcap"), abs("synthetic/rules.csv"));
    log("synthetic: " + std::to_string(capture.packets.size()) + " packets, " + std::to_string(capture.rules.size()) +
        " attack flows");
    return std::vector<fs::path>{"synthetic/capture.pcap", "synthetic/rules.csv"};
  });
}

bool Pipeline::build_dataset() {
  if (config_.source == DataSource::Synthetic) generate_synthetic();
  OutputLock lock(options_.out);
  const fs::path pcap = config_.source == DataSource::Synthetic ? fs::path("synthetic/capture.pcap") : config_.pcap;
  const fs::path rules = config_.source == DataSource::Synthetic ? fs::path("synthetic/rules.csv") : config_.rules;
  for (const auto& p : {pcap, rules}) {
    if (!fs::exists(abs(p))) throw Error(ErrorCode::MissingArtifact, "input not found: " + abs(p).string());
  }

  return run_stage("ingest", {"seed", "data."}, {pcap, rules}, {"datasets", "manifest.json"}, [&] {
    std::vector<fs::path> outputs;
    auto contents = parse_pcap(abs(pcap));
    const auto rule_list = load_rules(abs(rules));
    std::set<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>> attack_tuples;
    for (const auto& r : rule_list) {
      std::pair a{r.key.src_ip.value, r.key.src_port}, b{r.key.dst_ip.value, r.key.dst_port};
      if (b < a) std::swap(a, b);
      attack_tuples.insert({a.first, a.second, b.first, b.second});
    }
    auto labeled = label_packets(std::move(contents.packets), rule_list, 0);
    for (const auto& p : labeled) {
      if (p.label != Label::Benign) continue;
      std::pair a{p.packet.src_ip().value, p.packet.src_port()}, b{p.packet.dst_ip().value, p.packet.dst_port()};
      if (b < a) std::swap(a, b);
      if (attack_tuples.count({a.first, a.second, b.first, b.second})) {
        throw Error(ErrorCode::Config, "packet " + std::to_string(p.packet_id) + " (" + p.packet.src_ip().to_string() +
                                           ":" + std::to_string(p.packet.src_port()) +
                                           ") belongs to an attack flow but falls outside every labelled window");
      }
    }
    const auto forward = filter_forward(std::move(labeled));
    std::vector<LabeledPacket> benign;
    std::map<AttackClass, std::vector<LabeledPacket>> attacks;
    for (const auto& p : forward) {
      if (p.label == Label::Benign) benign.push_back(p);
      else attacks[*p.attack_class].push_back(p);
    }

    const auto dataset_seed = derive_seed(config_.seed, "dataset");
    nlohmann::json manifest{
        {"format", "packgen-manifest"},
        {"version", 1},
        {"config_hash", config_.hash()},
        {"seed", config_.seed},
        {"dataset_seed", dataset_seed},
        {"source",
         {{"kind", config_.source == DataSource::Synthetic ? "synthetic" : "pcap"},
          {"pcap", pcap.filename().string()},
          {"pcap_sha256", sha256_file(abs(pcap))},
          {"rules", rules.filename().string()},
          {"rules_sha256", sha256_file(abs(rules))},
          {"records", contents.stats.records},
          {"accepted", contents.stats.accepted},
          {"skipped_non_tcp", contents.stats.skipped_non_tcp},
          {"skipped_truncated", contents.stats.skipped_truncated},
          {"skipped_malformed", contents.stats.skipped_malformed},
          {"checksum_flagged", contents.stats.checksum_flagged},
          {"forward_packets", forward.size()},
          {"forward_benign", benign.size()}}},
        {"split_fractions",
         {{"train", config_.split.train}, {"mltest", config_.split.mltest}, {"agenttest", config_.split.agenttest}}},
        {"layout", ByteMap::describe()},
        {"classes", nlohmann::json::object()},
        {"excluded", nlohmann::json::array()}};

    for (auto cls : config_.classes) {
      const auto& mal = attacks[cls];
      const auto name = cls_name(cls);
      if (mal.size() < config_.min_class_count || benign.empty()) {
        log("warning: class " + name + " has " + std::to_string(mal.size()) + " forward packets (minimum " +
            std::to_string(config_.min_class_count) + "); excluded");
        manifest["excluded"].push_back({{"class", name}, {"forward_packets", mal.size()}, {"reason", "below minimum count"}});
        continue;
      }
      nn::Rng rng(derive_seed(dataset_seed, "balance/" + name));
      const auto n = std::min(mal.size(), benign.size());
      std::vector<std::size_t> mi(mal.size()), bi(benign.size());
      std::iota(mi.begin(), mi.end(), 0);
      std::iota(bi.begin(), bi.end(), 0);
      std::shuffle(mi.begin(), mi.end(), rng);
      std::shuffle(bi.begin(), bi.end(), rng);
      std::vector<const LabeledPacket*> chosen;
      for (std::size_t k = 0; k < n; ++k) {
        chosen.push_back(&mal[mi[k]]);
        chosen.push_back(&benign[bi[k]]);
      }
      std::shuffle(chosen.begin(), chosen.end(), rng);
      const auto counts = split_counts(chosen.size(), config_.split);

      const fs::path dir = fs::path("datasets") / name;
      fs::create_directories(abs(dir));
      nlohmann::json entry{{"forward_packets", mal.size()}, {"balanced_per_label", n}, {"splits", nlohmann::json::object()}};
      std::size_t offset = 0;
      std::vector<LabeledPacket> train_benign;
      for (std::size_t s = 0; s < 3; ++s) {
        std::vector<LabeledPacket> part;
        std::vector<FeatureVector> rows;
        std::vector<RawPacket> raw;
        for (std::size_t k = 0; k < counts[s]; ++k) {
          const auto& p = *chosen[offset + k];
          part.push_back(p);
          rows.push_back(featurize(p));
          raw.push_back(p.packet);
          if (s == 0 && p.label == Label::Benign) train_benign.push_back(p);
        }
        offset += counts[s];
        const auto csv = dir / (std::string(kSplits[s]) + ".csv");
        const auto cap = dir / (std::string(kSplits[s]) + ".pcap");
        write_dataset_csv(abs(csv), rows);
        write_pcap(abs(cap), raw);
        outputs.push_back(csv);
        outputs.push_back(cap);
        const auto malicious = static_cast<std::size_t>(
            std::count_if(part.begin(), part.end(), [](const auto& p) { return p.label == Label::Attack; }));
        entry["splits"][std::string(kSplits[s])] = {{"count", part.size()},
                                                   {"malicious", malicious},
                                                   {"benign", part.size() - malicious},
                                                   {"csv_sha256", sha256_file(abs(csv))},
                                                   {"pcap_sha256", sha256_file(abs(cap))}};
      }
      const auto corpus = payload_corpus(train_benign, config_.corpus_length);
      write_bytes(abs(dir / "corpus.bin"), corpus);
      outputs.push_back(dir / "corpus.bin");
      entry["corpus"] = {{"length", corpus.size()}, {"sha256", sha256_file(abs(dir / "corpus.bin"))}};
      manifest["classes"][name] = entry;
      log("dataset " + name + ": " + std::to_string(chosen.size()) + " samples -> " + std::to_string(counts[0]) + "/" +
          std::to_string(counts[1]) + "/" + std::to_string(counts[2]));
    }
    if (manifest["classes"].empty()) throw Error(ErrorCode::Config, "no attack class met the minimum sample count");
    fs::create_directories(abs("datasets"));
    write_json(abs("manifest.json"), manifest);
    outputs.push_back("manifest.json");
    return outputs;
  });
}

std::vector<AttackClass> Pipeline::built_classes() const {
  require("manifest.json", "ingest");
  const auto manifest = read_json(abs("manifest.json"));
  std::vector<AttackClass> out;
  for (const auto& [name, _] : manifest.at("classes").items()) {
    auto c = parse_attack_class(name);
    if (!c) throw Error(ErrorCode::UnsupportedFormat, "manifest names unknown class " + name);
    out.push_back(*c);
  }
  return out;
}

SplitData Pipeline::load_split(AttackClass cls, std::string_view split) const {
  const fs::path dir = fs::path("datasets") / cls_name(cls);
  const auto csv = dir / (std::string(split) + ".csv");
  const auto cap = dir / (std::string(split) + ".pcap");
  require(csv, "ingest");
  require(cap, "ingest");
  SplitData d;
  d.rows = read_dataset_csv(abs(csv));
  auto contents = parse_pcap(abs(cap));
  if (contents.packets.size() != d.rows.size()) {
    throw Error(ErrorCode::UnsupportedFormat, "split " + abs(csv).string() + " and its capture disagree in length");
  }
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    LabeledPacket p;
    p.packet = std::move(contents.packets[i]);
    p.label = d.rows[i].label ? Label::Attack : Label::Benign;
    p.attack_class = d.rows[i].attack_class;
    p.packet_id = d.rows[i].packet_id;
    d.packets.push_back(std::move(p));
  }
  return d;
}

bool Pipeline::train_classifiers() {
  OutputLock lock(options_.out);
  const auto classes = built_classes();
  std::vector<fs::path> inputs{"manifest.json"};
  for (auto c : classes) {
    for (auto s : {"train", "mltest"}) inputs.push_back(fs::path("datasets") / cls_name(c) / (std::string(s) + ".csv"));
  }
  return run_stage("classify", {"seed", "classifiers."}, inputs, {"models"}, [&] {
    std::vector<fs::path> outputs;
    for (auto cls : classes) {
      const auto name = cls_name(cls);
      std::ofstream acc;
      const fs::path dir = fs::path("models") / name;
      fs::create_directories(abs(dir));
      acc.open(abs(dir / "accuracy.csv"));
      acc << "role,kind,train_accuracy,eval_accuracy,fit_samples,eval_samples\n";
      acc.precision(17);
      for (std::string role : {"surrogate", "heldout"}) {
        const auto split = load_split(cls, role == "surrogate" ? "train" : "mltest");
        if (split.rows.empty()) {
          log("classify " + name + ": no " + role + " data; skipped");
          continue;
        }
        const auto data = TrainingData::from_features(split.rows);
        const auto seed_base = "init/" + name + "/" + role;
        auto [fit_idx, eval_idx] =
            stratified_split(data.y, config_.model_train_fraction, derive_seed(config_.seed, seed_base + "/split"));
        TrainingData fit, hold;
        std::vector<Eigen::Index> fi(fit_idx.begin(), fit_idx.end()), ei(eval_idx.begin(), eval_idx.end());
        fit.x = data.x(fi, Eigen::all);
        hold.x = data.x(ei, Eigen::all);
        for (auto i : fit_idx) fit.y.push_back(data.y[i]);
        for (auto i : eval_idx) hold.y.push_back(data.y[i]);

        std::vector<std::future<ClassifierModel>> pending;
        std::vector<ClassifierModel> models;
        for (std::size_t k = 0; k < config_.model_kinds.size(); ++k) {
          const auto kind = config_.model_kinds[k];
          const auto seed = derive_seed(config_.seed, seed_base + "/" + std::string(to_string(kind)));
          pending.push_back(std::async(config_.threads > 1 ? std::launch::async : std::launch::deferred,
                                       [&, kind, seed] { return train(fit, config_.hyperparams(kind), seed, &hold); }));
          if (pending.size() >= static_cast<std::size_t>(config_.threads) || k + 1 == config_.model_kinds.size()) {
            for (auto& f : pending) models.push_back(f.get());
            pending.clear();
          }
        }
        std::vector<Candidate> candidates;
        for (auto& m : models) {
          m.set_provenance({{"config_hash", config_.hash()},
                            {"attack_class", name},
                            {"role", role},
                            {"data_split", role == "surrogate" ? "train" : "mltest"}});
          const auto file = dir / role / (std::string(to_string(m.kind())) + ".json");
          fs::create_directories(abs(file.parent_path()));
          m.save(abs(file));
          outputs.push_back(file);
          const auto& meta = m.metadata();
          acc << role << ',' << to_string(m.kind()) << ',' << meta.train_accuracy.value_or(0.0) << ','
              << meta.eval_accuracy.value_or(0.0) << ',' << fit.size() << ',' << hold.size() << '\n';
          log("classify " + name + " " + role + " " + std::string(to_string(m.kind())) +
              ": held-out accuracy " + std::to_string(meta.eval_accuracy.value_or(0.0)));
          candidates.push_back({m, meta.eval_accuracy.value_or(0.0)});
        }
        if (role == "surrogate") {
          const auto ensemble = select_ensemble(candidates, config_.ensemble_kinds);
          nlohmann::json members = nlohmann::json::array();
          for (const auto& m : ensemble.members()) members.push_back(std::string(to_string(m.kind())) + ".json");
          write_json(abs(dir / "surrogate" / "ensemble.json"), {{"members", members}, {"config_hash", config_.hash()}});
          outputs.push_back(dir / "surrogate" / "ensemble.json");
        }
      }
      acc.close();
      outputs.push_back(dir / "accuracy.csv");
    }
    return outputs;
  });
}

namespace {

Ensemble load_ensemble(const fs::path& dir) {
  const auto j = read_json(dir / "ensemble.json");
  std::vector<ClassifierModel> members;
  for (const auto& f : j.at("members")) members.push_back(ClassifierModel::load(dir / f.get<std::string>()));
  return Ensemble(std::move(members));
}

}  // namespace

bool Pipeline::train_agent(AttackClass cls) {
  OutputLock lock(options_.out);
  const auto name = cls_name(cls);
  const auto classes = built_classes();
  if (std::find(classes.begin(), classes.end(), cls) == classes.end()) {
    throw Error(ErrorCode::MissingArtifact, "no dataset for class " + name + " (excluded or not requested)");
  }
  if (config_.split.train == 0) throw Error(ErrorCode::Config, "this run has no train split to train an agent on");
  const fs::path data = fs::path("datasets") / name;
  const fs::path models = fs::path("models") / name / "surrogate";
  require(models / "ensemble.json", "classify");
  std::vector<fs::path> inputs{data / "train.csv", data / "train.pcap", data / "corpus.bin", models / "ensemble.json"};
  const auto ensemble_doc = read_json(abs(models / "ensemble.json"));
  for (const auto& m : ensemble_doc.at("members")) inputs.push_back(models / m.get<std::string>());
  for (const auto& i : inputs) require(i, i.string().starts_with("models") ? "classify" : "ingest");

  return run_stage("train_" + name, {"seed", "agent.", "reward.", "perturbation."}, inputs,
                   {fs::path("agents") / name}, [&] {
    const auto split = load_split(cls, "train");
    std::vector<RawPacket> pool;
    for (const auto& p : split.malicious()) pool.push_back(p.packet);
    EnvConfig env_cfg;
    env_cfg.max_steps = config_.agent.max_steps;
    env_cfg.reward = config_.reward;
    env_cfg.payload_chunk = config_.payload_chunk;
    AdversarialEnv env(std::move(pool), load_ensemble(abs(models)), read_bytes(abs(data / "corpus.bin")), env_cfg);

    TrainingLog log_out;
    const auto report_every = std::max(1, config_.agent.episodes / 10);
    auto agent = packgen::train_agent(env, config_.agent, derive_seed(config_.seed, "init/agent/" + name),
                                      derive_seed(config_.seed, "exploration/" + name), &log_out,
                                      [&](const EpisodeRecord& r) {
                                        if ((r.episode + 1) % report_every == 0) {
                                          log("train " + name + ": episode " + std::to_string(r.episode + 1) + "/" +
                                              std::to_string(config_.agent.episodes));
                                        }
                                      });
    agent.provenance = {{"config_hash", config_.hash()},
                        {"attack_class", name},
                        {"train_csv_sha256", sha256_file(abs(data / "train.csv"))},
                        {"ensemble", read_json(abs(models / "ensemble.json")).at("members")}};
    const fs::path dir = fs::path("agents") / name;
    fs::create_directories(abs(dir));
    agent.save(abs(dir / "agent.json"));
    log_out.write_csv(abs(dir / "reward_curve.csv"));
    std::size_t evaded_tail = 0, tail = 0;
    for (std::size_t i = log_out.episodes.size() >= 100 ? log_out.episodes.size() - 100 : 0; i < log_out.episodes.size(); ++i) {
      ++tail;
      evaded_tail += log_out.episodes[i].evaded ? 1 : 0;
    }
    write_json(abs(dir / "training.json"),
               {{"config_hash", config_.hash()},
                {"episodes", log_out.episodes.size()},
                {"env_steps", log_out.env_steps},
                {"learner_steps", log_out.learner_steps},
                {"final_epsilon", log_out.final_epsilon},
                {"last_100_evasion_rate", tail ? static_cast<double>(evaded_tail) / static_cast<double>(tail) : 0.0}});
    return std::vector<fs::path>{dir / "agent.json", dir / "reward_curve.csv", dir / "training.json"};
  });
}

bool Pipeline::evaluate() {
  OutputLock lock(options_.out);
  const auto classes = built_classes();
  std::vector<fs::path> inputs{"manifest.json"};
  auto agent_path = [&](AttackClass c) {
    return config_.agents_from.empty() ? fs::path("agents") / cls_name(c) / "agent.json"
                                       : fs::absolute(config_.agents_from) / "agents" / cls_name(c) / "agent.json";
  };
  for (auto c : classes) {
    const auto name = cls_name(c);
    if (!fs::exists(abs(agent_path(c)))) {
      throw Error(ErrorCode::MissingArtifact, "missing agent " + abs(agent_path(c)).string() +
                                                  "; produced by stage 'train' (run `packgen train-agent --attack " +
                                                  name + "` first)");
    }
    inputs.push_back(agent_path(c));
    inputs.push_back(fs::path("datasets") / name / "agenttest.csv");
    inputs.push_back(fs::path("datasets") / name / "agenttest.pcap");
    inputs.push_back(fs::path("datasets") / name / "corpus.bin");
    for (auto k : config_.model_kinds) {
      const auto f = fs::path("models") / name / "heldout" / (std::string(to_string(k)) + ".json");
      require(f, "classify");
      inputs.push_back(f);
    }
  }

  return run_stage("evaluate", {"seed", "eval.", "agent.max_steps", "perturbation."}, inputs, {"reports"}, [&] {
    std::vector<fs::path> outputs;
    fs::create_directories(abs("reports/adversarial"));
    fs::create_directories(abs("reports/importance"));
    EvalOptions opts = config_.eval;
    opts.max_steps = config_.agent.max_steps;
    opts.payload_chunk = config_.payload_chunk;
    std::vector<EvalReport> reports;
    nlohmann::json summary{{"config_hash", config_.hash()}, {"ks_mode", to_string(opts.ks_mode)}, {"alpha", opts.alpha},
                           {"classes", nlohmann::json::object()}};
    for (auto cls : classes) {
      const auto name = cls_name(cls);
      const auto agent = TrainedAgent::load(abs(agent_path(cls)));
      const auto test = load_split(cls, "agenttest");
      if (test.rows.empty()) throw Error(ErrorCode::Config, "class " + name + " has an empty agenttest split");
      std::vector<std::uint64_t> excluded;
      if (config_.agents_from.empty() && config_.split.train > 0) excluded = load_split(cls, "train").ids();

      std::vector<NamedModel> models;
      for (auto k : config_.model_kinds) {
        models.push_back({"heldout_" + std::string(to_string(k)),
                          ClassifierModel::load(abs(fs::path("models") / name / "heldout" / (std::string(to_string(k)) + ".json")))});
      }
      const fs::path surrogate = fs::path("models") / name / "surrogate";
      if (fs::exists(abs(surrogate / "ensemble.json"))) {
        const auto ensemble = load_ensemble(abs(surrogate));
        for (const auto& m : ensemble.members()) {
          models.push_back({"surrogate_" + std::string(to_string(m.kind())), m});
        }
      }
      auto report = evaluate_agent(agent, models, test.malicious(), read_bytes(abs(fs::path("datasets") / name / "corpus.bin")),
                                   opts, excluded, name);
      for (const auto& m : models) {
        std::vector<RawPacket> packets;
        for (const auto& a : report.adversarial)
          if (a.model == m.name) packets.push_back(a.packet);
        const auto file = fs::path("reports/adversarial") / (name + "_" + m.name + ".pcap");
        write_pcap(abs(file), packets);
        outputs.push_back(file);
      }
      if (config_.importance_top_k > 0) {
        const auto data = TrainingData::from_features(test.rows);
        for (const auto& m : models) {
          if (!m.name.starts_with("heldout_")) continue;
          nn::Rng rng(derive_seed(config_.seed, "eval/importance/" + name + "/" + m.name));
          const auto ranked = permutation_importance(m.model, data, rng, config_.importance_repeats);
          const auto file = fs::path("reports/importance") / (name + "_" + m.name + ".csv");
          write_importance_csv(abs(file), ranked, config_.importance_top_k);
          outputs.push_back(file);
        }
      }
      nlohmann::json rows = nlohmann::json::object();
      for (const auto& r : report.rows) {
        rows[r.model] = {{"tp", r.tp},
                         {"fn_original", r.fn_original},
                         {"fn_p", r.fn_p},
                         {"asr", r.asr ? nlohmann::json(*r.asr) : nlohmann::json(nullptr)},
                         {"ood_fraction", r.ood_fraction}};
        log("evaluate " + name + " vs " + r.model + ": ASR " + (r.asr ? std::to_string(*r.asr) : "undefined") +
            ", OOD " + std::to_string(r.ood_fraction));
      }
      summary["classes"][name] = {{"mean_asr", report.mean_asr()}, {"models", rows}, {"pool", test.malicious().size()}};
      reports.push_back(std::move(report));
    }
    write_asr_csv(abs("reports/asr.csv"), reports);
    write_ood_csv(abs("reports/ood.csv"), reports, opts);
    write_samples_csv(abs("reports/samples.csv"), reports);
    write_json(abs("reports/summary.json"), summary);
    for (auto f : {"reports/asr.csv", "reports/ood.csv", "reports/samples.csv", "reports/summary.json"}) outputs.push_back(f);
    return outputs;
  });
}

void Pipeline::run(Stage stage) {
  switch (stage) {
    case Stage::Ingest: build_dataset(); break;
    case Stage::Classify: train_classifiers(); break;
    case Stage::Train:
      if (config_.split.train == 0) {
        log("train: no train split in this run; skipped");
        break;
      }
      for (auto c : built_classes()) train_agent(c);
      break;
    case Stage::Evaluate: evaluate(); break;
    case Stage::All:
      for (auto s : {Stage::Ingest, Stage::Classify, Stage::Train, Stage::Evaluate}) run(s);
      break;
  }
}

std::vector<std::string> Pipeline::verify() const {
  std::vector<std::string> issues;
  const auto stages = abs("stages");
  if (!fs::exists(stages)) return {"no stage stamps under " + stages.string()};
  std::vector<fs::path> stamps;
  for (const auto& e : fs::directory_iterator(stages)) stamps.push_back(e.path());
  std::sort(stamps.begin(), stamps.end());
  for (const auto& s : stamps) {
    const auto stamp = read_json(s);
    const auto name = stamp.value("stage", s.stem().string());
    for (const auto& [path, hash] : stamp.at("outputs").items()) {
      if (!fs::exists(abs(path))) issues.push_back(name + ": missing output " + path);
      else if (sha256_file(abs(path)) != hash.get<std::string>()) issues.push_back(name + ": modified output " + path);
    }
    for (const auto& [path, hash] : stamp.at("inputs").items()) {
      if (!fs::exists(abs(path))) issues.push_back(name + ": missing input " + path);
      else if (sha256_file(abs(path)) != hash.get<std::string>()) issues.push_back(name + ": stale input " + path);
    }
  }
  if (fs::exists(abs("manifest.json"))) {
    for (auto cls : built_classes()) {
      std::vector<std::vector<std::uint64_t>> ids;
      for (auto split : kSplits) ids.push_back(load_split(cls, split).ids());
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
          try {
            check_disjoint(ids[a], ids[b], cls_name(cls) + " " + std::string(kSplits[a]) + "/" + std::string(kSplits[b]));
          } catch (const Error& e) {
            issues.push_back(e.what());
          }
        }
      }
    }
  }
  return issues;
}

}  // namespace packgen
