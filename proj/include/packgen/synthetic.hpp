#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "packgen/labeling.hpp"
#include "packgen/pcap.hpp"

namespace packgen {

/// Field values for a single Ethernet/IPv4/TCP frame.
struct TcpPacketSpec {
  Ipv4Address src_ip;
  Ipv4Address dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t ttl = 64;
  std::uint16_t ip_id = 0;
  std::uint8_t ip_flags = 0x40;  // high byte of the flags/fragment word
  std::uint8_t tcp_flags = 0x18;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint16_t window = 65535;
  std::vector<std::uint8_t> options;  // padded with EOL to a 4-byte multiple
  std::vector<std::uint8_t> payload;
  Timestamp ts;
};

/// Builds a frame with valid checksums, padded to the 60-byte Ethernet minimum.
RawPacket build_packet(const TcpPacketSpec& spec);

/// Desk-scale traffic generator. Benign clients send HTTP-like requests with
/// the don't-fragment bit set; attack traffic differs in flag patterns and
/// payload presence. TTL and window come from the same ranges in every class.
struct SyntheticSpec {
  std::size_t benign_packets = 3000;                       // forward benign packets
  std::map<AttackClass, std::size_t> attack_packets{{AttackClass::DoS, 2000}};  // forward packets per class
  std::size_t margin = 16;          // minimum benign payload length; attack floods carry none
  double reply_fraction = 0.5;      // chance that a forward packet gets a reply
  double syn_fraction = 0.1;        // share of benign forward packets that are SYNs with options
  std::uint8_t ttl_min = 40, ttl_max = 128;
  std::uint16_t window_min = 1024, window_max = 65535;
};

struct SyntheticCapture {
  std::vector<RawPacket> packets;  // capture order
  std::vector<LabelRule> rules;    // one rule per attack flow
};

/// Deterministic for a given (spec, seed). Throws Error(Config) for a margin
/// that no request template can honour.
SyntheticCapture generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Request bodies used for benign payloads; index 0 is the most frequent.
const std::vector<std::vector<std::uint8_t>>& benign_templates();

void write_synthetic(const SyntheticCapture& capture, const std::filesystem::path& pcap_path,
                     const std::filesystem::path& rules_path);

}  // namespace packgen
