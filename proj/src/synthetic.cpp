#include "packgen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string_view>

#include "packgen/error.hpp"
#include "packgen/perturbation.hpp"

namespace packgen {

namespace {

using Rng = std::mt19937_64;

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

const std::vector<std::vector<std::uint8_t>>& attack_templates() {
  static const std::vector<std::vector<std::uint8_t>> t{
      bytes_of("GET /dvwa/vulnerabilities/sqli/?id=1%27+OR+%271%27%3D%271&Submit=Submit HTTP/1.1\r\nHost: 10.0.1.10\r\n"
               "User-Agent: python-requests/2.22\r\n\r\n"),
      bytes_of("POST /login.php HTTP/1.1\r\nHost: 10.0.1.10\r\nContent-Type: application/x-www-form-urlencoded\r\n"
               "Content-Length: 38\r\n\r\nusername=admin&password=123456&Login=1"),
      bytes_of("GET /search?q=%3Cscript%3Ealert(document.cookie)%3C%2Fscript%3E HTTP/1.1\r\nHost: 10.0.1.10\r\n\r\n"),
  };
  return t;
}

const std::vector<std::uint8_t>& reply_body() {
  static const auto b = bytes_of(
      "HTTP/1.1 200 OK\r\nServer: Apache/2.4.29 (Ubuntu)\r\nContent-Type: text/html; charset=UTF-8\r\n"
      "Content-Length: 0\r\n\r\n");
  return b;
}

struct Generator {
  const SyntheticSpec& spec;
  Rng rng;
  double clock = 1.7e9;
  std::uint32_t port_cursor = 20000;
  SyntheticCapture out;

  std::uint16_t next_port() {
    port_cursor = port_cursor >= 65000 ? 1024 : port_cursor + 1;
    return static_cast<std::uint16_t>(port_cursor);
  }

  Timestamp tick() {
    clock += std::uniform_real_distribution<double>(0.0005, 0.01)(rng);
    const auto us = std::llround(clock * 1e6);
    return {us / 1000000, static_cast<std::int32_t>(us % 1000000)};
  }

  std::uint8_t ttl() {
    return static_cast<std::uint8_t>(std::uniform_int_distribution<int>(spec.ttl_min, spec.ttl_max)(rng));
  }
  std::uint16_t window() {
    return static_cast<std::uint16_t>(std::uniform_int_distribution<int>(spec.window_min, spec.window_max)(rng));
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(rng()); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(rng()); }
  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  TcpPacketSpec base(Ipv4Address src, Ipv4Address dst, std::uint16_t sport, std::uint16_t dport) {
    TcpPacketSpec s;
    s.src_ip = src;
    s.dst_ip = dst;
    s.src_port = sport;
    s.dst_port = dport;
    s.ttl = ttl();
    s.ip_id = u16();
    s.window = window();
    s.seq = u32();
    s.ack = u32();
    return s;
  }

  RawPacket emit(TcpPacketSpec s) {
    s.ts = tick();
    out.packets.push_back(build_packet(s));
    return out.packets.back();
  }

  void reply(const TcpPacketSpec& fwd, std::uint8_t flags, std::vector<std::uint8_t> payload) {
    if (!chance(spec.reply_fraction)) return;
    auto r = base(fwd.dst_ip, fwd.src_ip, fwd.dst_port, fwd.src_port);
    r.ip_flags = 0x40;
    r.tcp_flags = flags;
    r.payload = std::move(payload);
    emit(r);
  }

  Ipv4Address server() { return Ipv4Address{0x0A00010Au + static_cast<std::uint32_t>(uniform(0, 9))}; }

  std::vector<std::uint8_t> benign_payload() {
    const auto& t = benign_templates();
    std::discrete_distribution<std::size_t> pick{5, 2, 1, 1, 1};
    auto p = t[pick(rng)];
    while (p.size() < spec.margin) p.push_back('a');
    return p;
  }

  /// Returns the number of forward packets emitted.
  std::size_t benign_flow(std::size_t budget) {
    const Ipv4Address client{0xC0A80A00u + static_cast<std::uint32_t>(uniform(2, 250))};
    auto fwd = base(client, server(), next_port(), 80);
    fwd.ip_flags = 0x40;
    if (chance(spec.syn_fraction)) {
      fwd.tcp_flags = 0x02;
      fwd.ack = 0;
      fwd.options = {2, 4, 0x05, 0xB4, 1, 3, 3, 7};
      emit(fwd);
      reply(fwd, 0x12, {});
      return 1;
    }
    const auto n = std::min<std::size_t>(budget, static_cast<std::size_t>(uniform(1, 4)));
    for (std::size_t i = 0; i < n; ++i) {
      auto p = fwd;
      p.ttl = ttl();
      p.ip_id = u16();
      p.window = window();
      p.seq = u32();
      p.tcp_flags = 0x18;
      p.payload = benign_payload();
      emit(p);
      reply(p, 0x18, reply_body());
    }
    return n;
  }

  std::size_t attack_flow(AttackClass cls, std::size_t budget) {
    Ipv4Address attacker{0xAC100001u};
    int max_packets = 1;
    switch (cls) {
      case AttackClass::DoS: max_packets = 20; break;
      case AttackClass::DDoS: attacker = Ipv4Address{0xAC100100u + static_cast<std::uint32_t>(uniform(1, 254))}; max_packets = 5; break;
      case AttackClass::PortScan: attacker = Ipv4Address{0xAC100201u}; break;
      case AttackClass::WebAttack: attacker = Ipv4Address{0xAC100301u}; max_packets = 3; break;
      case AttackClass::Infiltration: attacker = Ipv4Address{0xAC100401u}; max_packets = 3; break;
      case AttackClass::Other: attacker = Ipv4Address{0xAC100501u}; max_packets = 3; break;
    }
    const std::uint16_t dport = cls == AttackClass::PortScan ? static_cast<std::uint16_t>(uniform(1, 1024)) : 80;
    auto fwd = base(attacker, server(), next_port(), dport);
    const auto n = std::min<std::size_t>(budget, static_cast<std::size_t>(uniform(1, max_packets)));
    const auto first = out.packets.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto p = fwd;
      p.ttl = ttl();
      p.ip_id = u16();
      p.window = window();
      p.seq = u32();
      switch (cls) {
        case AttackClass::DoS:
        case AttackClass::DDoS:
        case AttackClass::Other:
          p.ip_flags = 0x00;
          p.tcp_flags = 0x18;
          emit(p);
          reply(p, 0x10, {});
          break;
        case AttackClass::PortScan:
          p.ip_flags = 0x00;
          p.tcp_flags = 0x02;
          p.ack = 0;
          emit(p);
          reply(p, 0x14, {});
          break;
        case AttackClass::WebAttack: {
          const auto& t = attack_templates();
          p.ip_flags = 0x40;
          p.tcp_flags = 0x18;
          p.payload = t[static_cast<std::size_t>(uniform(0, static_cast<int>(t.size()) - 1))];
          emit(p);
          reply(p, 0x18, reply_body());
          break;
        }
        case AttackClass::Infiltration:
          p.ip_flags = 0x40;
          p.tcp_flags = 0x18;
          p.payload.resize(static_cast<std::size_t>(uniform(64, 200)));
          for (auto& b : p.payload) b = static_cast<std::uint8_t>(rng());
          emit(p);
          reply(p, 0x10, {});
          break;
      }
    }
    LabelRule rule;
    rule.key.src_ip = attacker;
    rule.key.dst_ip = fwd.dst_ip;
    rule.key.src_port = fwd.src_port;
    rule.key.dst_port = fwd.dst_port;
    rule.key.window_start = out.packets[first].ts.seconds();
    rule.key.window_end = out.packets.back().ts.seconds();
    rule.attack_class = cls;
    out.rules.push_back(rule);
    return n;
  }
};

}  // namespace

RawPacket build_packet(const TcpPacketSpec& s) {
  RawPacket p;
  p.link = {0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00};
  auto options = s.options;
  while (options.size() % 4) options.push_back(0);
  if (options.size() > 40) throw Error(ErrorCode::InvalidArgument, "TCP options exceed 40 bytes");
  const std::size_t tcp_len = 20 + options.size();
  const std::size_t total = 20 + tcp_len + s.payload.size();
  if (total > 65535) throw Error(ErrorCode::InvalidArgument, "packet exceeds the IPv4 length limit");
  const auto sa = s.src_ip.value, da = s.dst_ip.value;
  p.ip = {0x45,
          0x00,
          static_cast<std::uint8_t>(total >> 8),
          static_cast<std::uint8_t>(total),
          static_cast<std::uint8_t>(s.ip_id >> 8),
          static_cast<std::uint8_t>(s.ip_id),
          s.ip_flags,
          0x00,
          s.ttl,
          kProtocolTcp,
          0,
          0,
          static_cast<std::uint8_t>(sa >> 24),
          static_cast<std::uint8_t>(sa >> 16),
          static_cast<std::uint8_t>(sa >> 8),
          static_cast<std::uint8_t>(sa),
          static_cast<std::uint8_t>(da >> 24),
          static_cast<std::uint8_t>(da >> 16),
          static_cast<std::uint8_t>(da >> 8),
          static_cast<std::uint8_t>(da)};
  p.tcp = {static_cast<std::uint8_t>(s.src_port >> 8),
           static_cast<std::uint8_t>(s.src_port),
           static_cast<std::uint8_t>(s.dst_port >> 8),
           static_cast<std::uint8_t>(s.dst_port),
           static_cast<std::uint8_t>(s.seq >> 24),
           static_cast<std::uint8_t>(s.seq >> 16),
           static_cast<std::uint8_t>(s.seq >> 8),
           static_cast<std::uint8_t>(s.seq),
           static_cast<std::uint8_t>(s.ack >> 24),
           static_cast<std::uint8_t>(s.ack >> 16),
           static_cast<std::uint8_t>(s.ack >> 8),
           static_cast<std::uint8_t>(s.ack),
           static_cast<std::uint8_t>((tcp_len / 4) << 4),
           s.tcp_flags,
           static_cast<std::uint8_t>(s.window >> 8),
           static_cast<std::uint8_t>(s.window),
           0,
           0,
           0,
           0};
  p.tcp.insert(p.tcp.end(), options.begin(), options.end());
  p.payload = s.payload;
  const std::size_t used = kEthernetHeaderLen + total;
  p.trailer.assign(used < 60 ? 60 - used : 0, 0);
  p.ts = s.ts;
  recompute_checksums(p);
  p.orig_len = static_cast<std::uint32_t>(p.frame_size());
  return p;
}

const std::vector<std::vector<std::uint8_t>>& benign_templates() {
  static const std::vector<std::vector<std::uint8_t>> t{
      bytes_of("GET /index.html HTTP/1.1\r\nHost: www.example.com\r\nUser-Agent: Mozilla/5.0 (X11; Linux x86_64; "
               "rv:109.0) Gecko/20100101 Firefox/115.0\r\nAccept: text/html,application/xhtml+xml\r\n"
               "Accept-Language: en-US,en;q=0.5\r\nConnection: keep-alive\r\n\r\n"),
      bytes_of("GET /images/logo.png HTTP/1.1\r\nHost: www.example.com\r\nAccept: image/avif,image/webp,*/*\r\n"
               "Referer: http://www.example.com/index.html\r\n\r\n"),
      bytes_of("POST /api/v1/session HTTP/1.1\r\nHost: app.example.com\r\nContent-Type: application/json\r\n"
               "Content-Length: 27\r\n\r\n{\"user\":\"alice\",\"ttl\":3600}"),
      bytes_of("GET /news/today HTTP/1.1\r\nHost: news.example.org\r\nCookie: sid=4f2a9c\r\n\r\n"),
      bytes_of("GET /favicon.ico HTTP/1.1\r\nHost: www.example.com\r\n\r\n"),
  };
  return t;
}

SyntheticCapture generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.margin > 1400) throw Error(ErrorCode::Config, "synthetic margin exceeds the payload room of one packet");
  if (spec.ttl_min < 1 || spec.ttl_min > spec.ttl_max || spec.window_min < 1 || spec.window_min > spec.window_max) {
    throw Error(ErrorCode::Config, "synthetic TTL/window ranges are empty or include zero");
  }
  Generator g{spec, Rng(seed), 1.7e9, 20000, {}};
  std::vector<std::pair<std::optional<AttackClass>, std::size_t>> remaining;
  remaining.push_back({std::nullopt, spec.benign_packets});
  for (auto [cls, n] : spec.attack_packets) remaining.push_back({cls, n});

  for (;;) {
    std::vector<double> weights;
    double total = 0.0;
    for (auto& r : remaining) {
      weights.push_back(static_cast<double>(r.second));
      total += static_cast<double>(r.second);
    }
    if (total == 0.0) break;
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    auto& slot = remaining[pick(g.rng)];
    slot.second -= slot.first ? g.attack_flow(*slot.first, slot.second) : g.benign_flow(slot.second);
  }
  return std::move(g.out);
}

void write_synthetic(const SyntheticCapture& capture, const std::filesystem::path& pcap_path,
                     const std::filesystem::path& rules_path) {
  write_pcap(pcap_path, capture.packets);
  std::ofstream out(rules_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write rules: " + rules_path.string());
  write_rules(out, capture.rules);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + rules_path.string());
}

}  // namespace packgen
