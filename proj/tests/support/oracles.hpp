#pragma once

// Reference implementations used as test oracles. Nothing here calls into the
// library; frames are assembled byte by byte from the protocol layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Bytes = std::vector<std::uint8_t>;
using Rng = std::mt19937_64;

inline std::uint16_t rd16(const Bytes& b, std::size_t at) {
  return static_cast<std::uint16_t>((b.at(at) << 8) | b.at(at + 1));
}
inline std::uint32_t rd32(const Bytes& b, std::size_t at) {
  return (static_cast<std::uint32_t>(rd16(b, at)) << 16) | rd16(b, at + 2);
}
inline void wr16(Bytes& b, std::size_t at, std::uint16_t v) {
  b.at(at) = static_cast<std::uint8_t>(v >> 8);
  b.at(at + 1) = static_cast<std::uint8_t>(v & 0xFF);
}

/// Plain RFC 1071: 32-bit accumulation of big-endian words, end-around carry,
/// complement. Odd tail padded with zero.
inline std::uint16_t rfc1071(const Bytes& data) {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const std::uint64_t hi = data[i];
    const std::uint64_t lo = i + 1 < data.size() ? data[i + 1] : 0;
    sum += (hi << 8) | lo;
  }
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum & 0xFFFF);
}

/// Checksum of an IPv4 header with its checksum field treated as zero.
inline std::uint16_t ip_checksum(Bytes ip) {
  ip.at(10) = ip.at(11) = 0;
  return rfc1071(ip);
}

/// TCP checksum with its checksum field treated as zero.
inline std::uint16_t tcp_checksum(const Bytes& ip, Bytes segment) {
  segment.at(16) = segment.at(17) = 0;
  Bytes pseudo(ip.begin() + 12, ip.begin() + 20);
  pseudo.push_back(0);
  pseudo.push_back(6);
  pseudo.push_back(static_cast<std::uint8_t>(segment.size() >> 8));
  pseudo.push_back(static_cast<std::uint8_t>(segment.size() & 0xFF));
  pseudo.insert(pseudo.end(), segment.begin(), segment.end());
  return rfc1071(pseudo);
}

/// Independent field dissection of an Ethernet/IPv4/TCP frame.
struct Dissected {
  bool ok = false;
  std::size_t ihl = 0, doff = 0, total_length = 0;
  Bytes ip, tcp, payload;
  std::uint32_t src = 0, dst = 0, seq = 0, ack = 0;
  std::uint16_t sport = 0, dport = 0, ip_id = 0, window = 0, frag_word = 0;
  std::uint8_t ttl = 0, tos = 0, protocol = 0, tcp_flags = 0;
  bool ip_checksum_ok = false, tcp_checksum_ok = false;
  std::vector<std::pair<std::uint8_t, Bytes>> options;  // kind, option bytes (without kind/len)
  bool options_ok = true;
};

inline Dissected dissect(const Bytes& frame) {
  Dissected d;
  if (frame.size() < 14 + 20 || rd16(frame, 12) != 0x0800) return d;
  const Bytes ip_all(frame.begin() + 14, frame.end());
  if ((ip_all[0] >> 4) != 4) return d;
  d.ihl = static_cast<std::size_t>(ip_all[0] & 0x0F) * 4;
  d.total_length = rd16(ip_all, 2);
  if (d.ihl < 20 || d.total_length < d.ihl + 20 || d.total_length > ip_all.size()) return d;
  d.ip.assign(ip_all.begin(), ip_all.begin() + static_cast<std::ptrdiff_t>(d.ihl));
  d.tos = d.ip[1];
  d.ip_id = rd16(d.ip, 4);
  d.frag_word = rd16(d.ip, 6);
  d.ttl = d.ip[8];
  d.protocol = d.ip[9];
  d.src = rd32(d.ip, 12);
  d.dst = rd32(d.ip, 16);
  const Bytes seg(ip_all.begin() + static_cast<std::ptrdiff_t>(d.ihl),
                  ip_all.begin() + static_cast<std::ptrdiff_t>(d.total_length));
  d.doff = static_cast<std::size_t>(seg.at(12) >> 4) * 4;
  if (d.doff < 20 || d.doff > seg.size()) return d;
  d.tcp.assign(seg.begin(), seg.begin() + static_cast<std::ptrdiff_t>(d.doff));
  d.payload.assign(seg.begin() + static_cast<std::ptrdiff_t>(d.doff), seg.end());
  d.sport = rd16(d.tcp, 0);
  d.dport = rd16(d.tcp, 2);
  d.seq = rd32(d.tcp, 4);
  d.ack = rd32(d.tcp, 8);
  d.tcp_flags = d.tcp[13];
  d.window = rd16(d.tcp, 14);
  d.ip_checksum_ok = rfc1071(d.ip) == 0;
  d.tcp_checksum_ok = tcp_checksum(d.ip, seg) == rd16(seg, 16);
  for (std::size_t i = 20; i < d.doff;) {
    const std::uint8_t kind = d.tcp[i];
    if (kind == 0) break;
    if (kind == 1) {
      d.options.push_back({1, {}});
      ++i;
      continue;
    }
    if (i + 1 >= d.doff || d.tcp[i + 1] < 2 || i + d.tcp[i + 1] > d.doff) {
      d.options_ok = false;
      break;
    }
    d.options.push_back({kind, Bytes(d.tcp.begin() + static_cast<std::ptrdiff_t>(i + 2),
                                     d.tcp.begin() + static_cast<std::ptrdiff_t>(i + d.tcp[i + 1]))});
    i += d.tcp[i + 1];
  }
  d.ok = true;
  return d;
}

struct FrameParams {
  std::size_t max_payload = 200;
  double syn_probability = 0.3;
  double ip_option_probability = 0.15;
  double tcp_option_probability = 0.6;
};

/// Random well-formed Ethernet/IPv4/TCP frame with correct checksums, first
/// fragment only, padded to the 60-byte Ethernet minimum.
inline Bytes random_frame(Rng& rng, const FrameParams& p = {}) {
  auto u8 = [&] { return static_cast<std::uint8_t>(rng() & 0xFF); };
  auto chance = [&](double q) { return std::uniform_real_distribution<double>(0, 1)(rng) < q; };
  const bool syn = chance(p.syn_probability);

  Bytes ip_opts;
  if (chance(p.ip_option_probability)) {
    const std::size_t words = 1 + rng() % 4;
    ip_opts.assign(words * 4, 1);  // NOPs
    ip_opts.back() = 0;
  }
  Bytes tcp_opts;
  if (chance(p.tcp_option_probability)) {
    if (syn && chance(0.7)) tcp_opts.insert(tcp_opts.end(), {2, 4, u8(), u8()});
    if (chance(0.3)) tcp_opts.insert(tcp_opts.end(), {1, 1, 8, 10, u8(), u8(), u8(), u8(), u8(), u8(), u8(), u8()});
    if (syn && chance(0.5)) tcp_opts.insert(tcp_opts.end(), {4, 2});
    if (syn && chance(0.6)) tcp_opts.insert(tcp_opts.end(), {1, 3, 3, static_cast<std::uint8_t>(rng() % 15)});
    while (tcp_opts.size() % 4) tcp_opts.push_back(0);
  }
  std::size_t payload_len = syn ? 0 : rng() % (p.max_payload + 1);
  Bytes payload(payload_len);
  for (auto& b : payload) b = u8();

  Bytes ip(20 + ip_opts.size());
  ip[0] = static_cast<std::uint8_t>(0x40 | (ip.size() / 4));
  ip[1] = u8();
  wr16(ip, 2, static_cast<std::uint16_t>(ip.size() + 20 + tcp_opts.size() + payload.size()));
  wr16(ip, 4, static_cast<std::uint16_t>(rng()));
  const std::uint8_t fragbits[] = {0x00, 0x40, 0x20};
  ip[6] = fragbits[rng() % 3];
  ip[7] = 0;
  ip[8] = static_cast<std::uint8_t>(1 + rng() % 255);
  ip[9] = 6;
  for (int i = 12; i < 20; ++i) ip[i] = u8();
  std::copy(ip_opts.begin(), ip_opts.end(), ip.begin() + 20);
  wr16(ip, 10, ip_checksum(ip));

  Bytes tcp(20 + tcp_opts.size());
  for (int i = 0; i < 12; ++i) tcp[i] = u8();
  tcp[12] = static_cast<std::uint8_t>((tcp.size() / 4) << 4);
  tcp[13] = syn ? static_cast<std::uint8_t>(chance(0.5) ? 0x02 : 0x12) : static_cast<std::uint8_t>(u8() & ~0x02);
  tcp[14] = u8();
  tcp[15] = u8();
  tcp[18] = tcp[19] = 0;
  std::copy(tcp_opts.begin(), tcp_opts.end(), tcp.begin() + 20);
  Bytes seg = tcp;
  seg.insert(seg.end(), payload.begin(), payload.end());
  wr16(seg, 16, tcp_checksum(ip, seg));

  Bytes frame{0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00};
  frame.insert(frame.end(), ip.begin(), ip.end());
  frame.insert(frame.end(), seg.begin(), seg.end());
  while (frame.size() < 60) frame.push_back(0);
  return frame;
}

/// Hand-assembled 60-byte SYN: 10.0.0.5:4444 -> 10.0.0.9:80, TTL 64, DF,
/// MSS 1460, no payload, 2 bytes of Ethernet padding.
inline Bytes syn_fixture() {
  Bytes f{
      // Ethernet: dst, src, type IPv4
      0x00, 0x0c, 0x29, 0x3e, 0x5b, 0x01, 0x00, 0x50, 0x56, 0xc0, 0x00, 0x08, 0x08, 0x00,
      // IPv4: ver/ihl, tos, total 44, id 0x1c46, DF, ttl 64, tcp, checksum (filled), src, dst
      0x45, 0x00, 0x00, 0x2c, 0x1c, 0x46, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00, 0x0a, 0x00, 0x00, 0x05, 0x0a, 0x00,
      0x00, 0x09,
      // TCP: 4444 -> 80, seq 0x01020304, ack 0, doff 6, SYN, window 64240, checksum (filled), urg 0
      0x11, 0x5c, 0x00, 0x50, 0x01, 0x02, 0x03, 0x04, 0x00, 0x00, 0x00, 0x00, 0x60, 0x02, 0xfa, 0xf0, 0x00, 0x00,
      0x00, 0x00,
      // MSS 1460
      0x02, 0x04, 0x05, 0xb4,
      // Ethernet trailer
      0x00, 0x00};
  Bytes ip(f.begin() + 14, f.begin() + 34);
  const auto ipc = ip_checksum(ip);
  wr16(f, 24, ipc);
  ip[10] = static_cast<std::uint8_t>(ipc >> 8);
  ip[11] = static_cast<std::uint8_t>(ipc & 0xFF);
  Bytes seg(f.begin() + 34, f.begin() + 58);
  wr16(f, 50, tcp_checksum(ip, seg));
  return f;
}

/// Minimal UDP frame (10.0.0.1:53 -> 10.0.0.2:5353, 4 bytes of payload).
inline Bytes udp_fixture() {
  Bytes f{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0x08, 0x00, 0x45, 0x00, 0x00, 0x20, 0x00, 0x01, 0x00, 0x00, 0x40,
          0x11, 0x00, 0x00, 10,   0,    0,    1,    10,   0,    0,    2,    0x00, 0x35, 0x14, 0xe9, 0x00, 0x0c,
          0x00, 0x00, 'a',  'b',  'c',  'd'};
  Bytes ip(f.begin() + 14, f.begin() + 34);
  wr16(f, 24, ip_checksum(ip));
  while (f.size() < 60) f.push_back(0);
  return f;
}

struct PcapRecord {
  std::uint32_t sec = 0, frac = 0;
  Bytes frame;
  std::uint32_t orig_len = 0;  // 0 = frame size
  std::uint32_t incl_len_override = 0;
};

/// Classic PCAP writer: little or big endian, micro- or nanosecond magic.
inline Bytes pcap_file(const std::vector<PcapRecord>& records, bool big_endian = false, bool nanos = false,
                       std::uint32_t linktype = 1) {
  Bytes out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      const int shift = big_endian ? 24 - 8 * i : 8 * i;
      out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
    }
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(big_endian ? v >> 8 : v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(big_endian ? v & 0xFF : v >> 8));
  };
  put32(nanos ? 0xa1b23c4d : 0xa1b2c3d4);
  put16(2);
  put16(4);
  put32(0);
  put32(0);
  put32(65535);
  put32(linktype);
  for (const auto& r : records) {
    put32(r.sec);
    put32(r.frac);
    put32(r.incl_len_override ? r.incl_len_override : static_cast<std::uint32_t>(r.frame.size()));
    put32(r.orig_len ? r.orig_len : static_cast<std::uint32_t>(r.frame.size()));
    out.insert(out.end(), r.frame.begin(), r.frame.end());
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// D by evaluating both eCDFs at every observed point.
inline double ks_brute(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> pts = x;
  pts.insert(pts.end(), y.begin(), y.end());
  double d = 0.0;
  for (double t : pts) {
    const double fx = static_cast<double>(std::count_if(x.begin(), x.end(), [&](double v) { return v <= t; })) /
                      static_cast<double>(x.size());
    const double fy = static_cast<double>(std::count_if(y.begin(), y.end(), [&](double v) { return v <= t; })) /
                      static_cast<double>(y.size());
    d = std::max(d, std::abs(fx - fy));
  }
  return d;
}

/// Central finite-difference gradient of f at params.
template <typename F>
std::vector<double> numeric_gradient(F&& f, std::vector<double> params, double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f(params);
    params[i] = keep - h;
    const double down = f(params);
    params[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i| + |n_i|, floor)
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "packgen") {
    std::string pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
