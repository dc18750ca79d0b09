#include "packgen/featurizer.hpp"

#include <cmath>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>

namespace packgen {

FeatureVector::FeatureVector(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() != kFeatureCount) {
    throw Error(ErrorCode::InvalidArgument,
                "feature vector needs " + std::to_string(kFeatureCount) + " bytes, got " + std::to_string(bytes_.size()));
  }
}

std::vector<double> FeatureVector::values() const {
  std::vector<double> out(bytes_.size());
  for (std::size_t i = 0; i < bytes_.size(); ++i) out[i] = bytes_[i] / 255.0;
  return out;
}

bool excluded_ip_offset(std::size_t offset) { return offset >= 12 && offset < 20; }
bool excluded_tcp_offset(std::size_t offset) { return offset < 4; }

ByteMap ByteMap::for_packet(const RawPacket& p) {
  ByteMap map;
  map.origins_.reserve(kFeatureCount);
  auto push = [&](ByteLayer layer, std::size_t off) {
    if (map.origins_.size() < kFeatureCount) map.origins_.push_back({layer, static_cast<std::uint16_t>(off)});
  };
  for (std::size_t i = 0; i < p.ip.size(); ++i)
    if (!excluded_ip_offset(i)) push(ByteLayer::Ip, i);
  for (std::size_t i = 0; i < p.tcp.size(); ++i)
    if (!excluded_tcp_offset(i)) push(ByteLayer::Tcp, i);
  for (std::size_t i = 0; i < p.payload.size(); ++i) push(ByteLayer::Payload, i);
  map.mapped_ = map.origins_.size();
  map.origins_.resize(kFeatureCount, ByteOrigin{ByteLayer::Pad, 0});
  return map;
}

std::optional<std::size_t> ByteMap::feature_index(ByteLayer layer, std::size_t offset) const {
  for (std::size_t i = 0; i < mapped_; ++i) {
    if (origins_[i].layer == layer && origins_[i].offset == offset) return i;
  }
  return std::nullopt;
}

nlohmann::json ByteMap::describe() {
  return {
      {"width", kFeatureCount},
      {"scale", 255},
      {"order", {"ip_header", "tcp_header", "payload"}},
      {"excluded", {{"ethernet", "all"}, {"ip_header", {12, 13, 14, 15, 16, 17, 18, 19}}, {"tcp_header", {0, 1, 2, 3}}}},
      {"overflow", "truncate"},
      {"padding", "zero"},
  };
}

std::vector<std::uint8_t> stripped_bytes(const RawPacket& p) {
  std::vector<std::uint8_t> out;
  out.reserve(p.ip.size() + p.tcp.size() + p.payload.size() - 12);
  for (std::size_t i = 0; i < p.ip.size(); ++i)
    if (!excluded_ip_offset(i)) out.push_back(p.ip[i]);
  for (std::size_t i = 0; i < p.tcp.size(); ++i)
    if (!excluded_tcp_offset(i)) out.push_back(p.tcp[i]);
  out.insert(out.end(), p.payload.begin(), p.payload.end());
  return out;
}

FeatureVector defeaturize_sync(const RawPacket& p, int label, std::optional<AttackClass> attack_class,
                               std::uint64_t packet_id) {
  auto bytes = stripped_bytes(p);
  bytes.resize(kFeatureCount, 0);
  FeatureVector fv(std::move(bytes));
  fv.label = label;
  fv.attack_class = attack_class;
  fv.packet_id = packet_id;
  return fv;
}

FeatureVector featurize(const LabeledPacket& p) {
  return defeaturize_sync(p.packet, p.label == Label::Attack ? 1 : 0, p.attack_class, p.packet_id);
}

namespace {

// Shortest round-trip text of k/255 for every byte value.
const std::array<std::string, 256>& value_strings() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    for (int k = 0; k < 256; ++k) {
      std::array<char, 32> buf{};
      auto end = std::to_chars(buf.data(), buf.data() + buf.size(), k / 255.0).ptr;
      t[k].assign(buf.data(), end);
    }
    return t;
  }();
  return table;
}

std::uint8_t byte_from_value(std::string_view field, std::size_t line_no) {
  double v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size() || !(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::UnsupportedFormat,
                "dataset line " + std::to_string(line_no) + ": bad feature value '" + std::string(field) + "'");
  }
  const double scaled = v * 255.0;
  const auto k = static_cast<int>(scaled + 0.5);
  if (std::abs(scaled - k) > 1e-6) {
    throw Error(ErrorCode::UnsupportedFormat,
                "dataset line " + std::to_string(line_no) + ": value is not a multiple of 1/255");
  }
  return static_cast<std::uint8_t>(k);
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write dataset: " + path.string());
  const auto& strings = value_strings();
  std::string line;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    char name[8];
    std::snprintf(name, sizeof name, "f%04zu,", i);
    line += name;
  }
  line += "label,attack_class,packet_id\n";
  out << line;
  for (const auto& row : rows) {
    line.clear();
    for (auto b : row.bytes()) {
      line += strings[b];
      line += ',';
    }
    line += row.label ? '1' : '0';
    line += ',';
    if (row.attack_class) line += to_string(*row.attack_class);
    line += ',';
    line += std::to_string(row.packet_id);
    line += '\n';
    out << line;
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<FeatureVector> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("f0000,")) {
    throw Error(ErrorCode::UnsupportedFormat, "dataset header missing in " + path.string());
  }
  std::vector<FeatureVector> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::uint8_t> bytes;
    bytes.reserve(kFeatureCount);
    std::string_view rest(line);
    std::vector<std::string_view> tail;
    for (std::size_t field = 0; field < kFeatureCount + 3; ++field) {
      auto comma = rest.find(',');
      auto token = rest.substr(0, comma);
      if (field < kFeatureCount) {
        bytes.push_back(byte_from_value(token, line_no));
      } else {
        tail.push_back(token);
      }
      if (comma == std::string_view::npos) {
        if (field != kFeatureCount + 2) {
          throw Error(ErrorCode::UnsupportedFormat, "dataset line " + std::to_string(line_no) + ": too few fields");
        }
        rest = {};
        break;
      }
      rest.remove_prefix(comma + 1);
    }
    if (!rest.empty()) throw Error(ErrorCode::UnsupportedFormat, "dataset line " + std::to_string(line_no) + ": too many fields");
    FeatureVector fv(std::move(bytes));
    fv.label = tail[0] == "1" ? 1 : 0;
    if (!tail[1].empty()) {
      fv.attack_class = parse_attack_class(tail[1]);
      if (!fv.attack_class) {
        throw Error(ErrorCode::UnsupportedFormat, "dataset line " + std::to_string(line_no) + ": unknown attack class");
      }
    }
    std::from_chars(tail[2].data(), tail[2].data() + tail[2].size(), fv.packet_id);
    rows.push_back(std::move(fv));
  }
  return rows;
}

}  // namespace packgen
