#include "packgen/labeling.hpp"

#include <cctype>
#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace packgen {

namespace {

constexpr std::array<std::pair<AttackClass, std::string_view>, 6> kClassNames{{
    {AttackClass::DoS, "DoS"},
    {AttackClass::DDoS, "DDoS"},
    {AttackClass::PortScan, "PortScan"},
    {AttackClass::Infiltration, "Infiltration"},
    {AttackClass::WebAttack, "WebAttack"},
    {AttackClass::Other, "other"},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || p != field.data() + field.size()) {
    throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

bool windows_overlap(const FlowKey& a, const FlowKey& b) {
  return a.window_start <= b.window_end && b.window_start <= a.window_end;
}

}  // namespace

std::string_view to_string(AttackClass c) noexcept {
  for (auto [k, name] : kClassNames)
    if (k == c) return name;
  return "other";
}

std::optional<AttackClass> parse_attack_class(std::string_view text) noexcept {
  for (auto [k, name] : kClassNames) {
    if (std::equal(name.begin(), name.end(), text.begin(), text.end(),
                   [](char a, char b) { return std::tolower(a) == std::tolower(b); })) {
      return k;
    }
  }
  return std::nullopt;
}

std::vector<LabelRule> parse_rules(std::istream& in) {
  std::vector<LabelRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto comma = body.find(',', start);
      fields.push_back(trim(body.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 8) {
      throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": expected 8 fields, got " +
                                         std::to_string(fields.size()));
    }
    if (line_no == 1 && fields[0] == "src_ip") continue;  // header row

    LabelRule rule;
    rule.key.src_ip = Ipv4Address::parse(fields[0]);
    rule.key.dst_ip = Ipv4Address::parse(fields[1]);
    const auto sport = parse_number<unsigned>(fields[2], line_no);
    const auto dport = parse_number<unsigned>(fields[3], line_no);
    const auto proto = parse_number<unsigned>(fields[4], line_no);
    if (sport > 65535 || dport > 65535) {
      throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": port out of range");
    }
    if (proto != kProtocolTcp) {
      throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": only protocol 6 is supported");
    }
    rule.key.src_port = static_cast<std::uint16_t>(sport);
    rule.key.dst_port = static_cast<std::uint16_t>(dport);
    rule.key.window_start = parse_number<double>(fields[5], line_no);
    rule.key.window_end = parse_number<double>(fields[6], line_no);
    if (rule.key.window_start > rule.key.window_end) {
      throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": window start after end");
    }
    auto cls = parse_attack_class(fields[7]);
    if (!cls) {
      throw Error(ErrorCode::Config, "rules line " + std::to_string(line_no) + ": unknown attack class '" +
                                         std::string(fields[7]) + "'");
    }
    rule.attack_class = *cls;
    rules.push_back(rule);
  }
  return rules;
}

std::vector<LabelRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open rules file: " + path.string());
  return parse_rules(in);
}

void write_rules(std::ostream& out, const std::vector<LabelRule>& rules) {
  out << "src_ip,dst_ip,src_port,dst_port,protocol,window_start,window_end,class\n";
  for (const auto& r : rules) {
    std::array<char, 64> a{}, b{};
    auto ea = std::to_chars(a.data(), a.data() + a.size(), r.key.window_start).ptr;
    auto eb = std::to_chars(b.data(), b.data() + b.size(), r.key.window_end).ptr;
    out << r.key.src_ip.to_string() << ',' << r.key.dst_ip.to_string() << ',' << r.key.src_port << ','
        << r.key.dst_port << ',' << unsigned{r.key.protocol} << ',' << std::string_view(a.data(), ea) << ','
        << std::string_view(b.data(), eb) << ',' << to_string(r.attack_class) << '\n';
  }
}

Labeler::FlowId Labeler::canonical(Endpoint a, Endpoint b) {
  if (b < a) std::swap(a, b);
  return {a.first, a.second, b.first, b.second};
}

Labeler::Labeler(std::vector<LabelRule> rules) {
  for (auto& rule : rules) {
    auto id = canonical({rule.key.src_ip.value, rule.key.src_port}, {rule.key.dst_ip.value, rule.key.dst_port});
    auto& bucket = rules_[id];
    for (const auto& other : bucket) {
      if (other.attack_class != rule.attack_class && windows_overlap(other.key, rule.key)) {
        throw Error(ErrorCode::Config, "contradictory label rules for " + rule.key.src_ip.to_string() + ":" +
                                           std::to_string(rule.key.src_port) + " <-> " +
                                           rule.key.dst_ip.to_string() + ":" + std::to_string(rule.key.dst_port) +
                                           " (" + std::string(to_string(other.attack_class)) + " vs " +
                                           std::string(to_string(rule.attack_class)) + ")");
      }
    }
    bucket.push_back(rule);
  }
}

LabeledPacket Labeler::label(RawPacket packet, std::uint64_t packet_id) {
  LabeledPacket out;
  out.packet_id = packet_id;
  const Endpoint src{packet.src_ip().value, packet.src_port()};
  const Endpoint dst{packet.dst_ip().value, packet.dst_port()};
  const auto id = canonical(src, dst);
  const double t = packet.ts.seconds();

  if (auto it = rules_.find(id); it != rules_.end()) {
    for (const auto& rule : it->second) {
      if (t >= rule.key.window_start && t <= rule.key.window_end) {
        out.label = Label::Attack;
        out.attack_class = rule.attack_class;
        out.direction = packet.src_ip() == rule.key.src_ip ? Direction::Forward : Direction::Backward;
        out.packet = std::move(packet);
        return out;
      }
    }
  }

  auto [slot, inserted] = benign_source_.try_emplace(id, src);
  out.label = Label::Benign;
  out.direction = slot->second == src ? Direction::Forward : Direction::Backward;
  out.packet = std::move(packet);
  return out;
}

std::vector<LabeledPacket> label_packets(std::vector<RawPacket> packets, const std::vector<LabelRule>& rules,
                                         std::uint64_t first_id) {
  Labeler labeler(rules);
  std::vector<LabeledPacket> out;
  out.reserve(packets.size());
  for (auto& p : packets) out.push_back(labeler.label(std::move(p), first_id++));
  return out;
}

std::vector<LabeledPacket> filter_forward(std::vector<LabeledPacket> packets) {
  std::erase_if(packets, [](const LabeledPacket& p) { return p.direction != Direction::Forward; });
  return packets;
}

}  // namespace packgen
