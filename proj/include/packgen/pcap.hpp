#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packgen/error.hpp"

namespace packgen {

inline constexpr std::size_t kEthernetHeaderLen = 14;
inline constexpr std::size_t kMinHeaderLen = 20;
inline constexpr std::size_t kMaxHeaderLen = 60;
inline constexpr std::uint8_t kProtocolTcp = 6;

struct Timestamp {
  std::int64_t sec = 0;
  std::int32_t usec = 0;

  double seconds() const { return static_cast<double>(sec) + usec * 1e-6; }
  auto operator<=>(const Timestamp&) const = default;
};

struct Ipv4Address {
  std::uint32_t value = 0;  // host order

  static Ipv4Address from_bytes(std::span<const std::uint8_t, 4> b);
  /// Parses dotted-quad text; throws Error(InvalidArgument) on bad input.
  static Ipv4Address parse(std::string_view text);
  std::string to_string() const;
  auto operator<=>(const Ipv4Address&) const = default;
};

/// One Ethernet/IPv4/TCP frame split into its layers.
///
/// The layer buffers are stored verbatim so that serialize() reproduces the
/// captured frame byte-for-byte (including any Ethernet trailer padding).
struct RawPacket {
  std::vector<std::uint8_t> link;     // Ethernet header, 14 bytes
  std::vector<std::uint8_t> ip;       // 4 * IHL bytes
  std::vector<std::uint8_t> tcp;      // 4 * data offset bytes
  std::vector<std::uint8_t> payload;  // TCP payload
  std::vector<std::uint8_t> trailer;  // link-layer padding past IP total length
  Timestamp ts;
  std::uint32_t orig_len = 0;
  /// Set at parse time when a stored checksum did not verify (offload
  /// artifacts); such packets are still ingested.
  bool checksum_flagged = false;

  Ipv4Address src_ip() const;
  Ipv4Address dst_ip() const;
  std::uint16_t src_port() const;
  std::uint16_t dst_port() const;
  std::uint8_t ttl() const { return ip.at(8); }
  std::uint8_t tcp_flags() const { return tcp.at(13); }
  std::uint16_t ip_total_length() const;
  std::uint16_t window() const;
  std::size_t ihl_bytes() const { return static_cast<std::size_t>(ip.at(0) & 0x0F) * 4; }
  std::size_t data_offset_bytes() const { return static_cast<std::size_t>(tcp.at(12) >> 4) * 4; }
  bool is_syn() const { return (tcp_flags() & 0x02) != 0; }

  bool ip_checksum_ok() const;
  bool tcp_checksum_ok() const;

  std::vector<std::uint8_t> serialize() const;
  std::size_t frame_size() const;

  bool operator==(const RawPacket&) const = default;
};

struct ParseStats {
  std::size_t records = 0;
  std::size_t accepted = 0;
  std::size_t skipped_non_tcp = 0;
  std::size_t skipped_truncated = 0;
  std::size_t skipped_malformed = 0;
  std::size_t checksum_flagged = 0;

  std::size_t skipped() const { return skipped_non_tcp + skipped_truncated + skipped_malformed; }
};

enum class FrameStatus { Accepted, NonTcp, Truncated, Malformed };

/// Splits one Ethernet frame. On anything but Accepted, `out` is untouched.
FrameStatus parse_frame(std::span<const std::uint8_t> frame, RawPacket& out);

/// Streaming reader for classic (libpcap) capture files.
class PcapReader {
 public:
  /// Throws Error(Io) if the file cannot be opened and
  /// Error(UnsupportedFormat) for pcapng, unknown magic or non-Ethernet link
  /// types.
  explicit PcapReader(const std::filesystem::path& path);

  /// Next accepted TCP/IPv4 packet in capture order; skipped records only bump
  /// the counters.
  std::optional<RawPacket> next();

  const ParseStats& stats() const { return stats_; }
  bool nanosecond_resolution() const { return nanos_; }

 private:
  bool read_record(std::vector<std::uint8_t>& frame, Timestamp& ts, std::uint32_t& orig_len);
  std::uint32_t u32(const std::uint8_t* p) const;

  std::ifstream in_;
  bool swapped_ = false;
  bool nanos_ = false;
  bool done_ = false;
  ParseStats stats_;
};

struct PcapContents {
  std::vector<RawPacket> packets;
  ParseStats stats;
};

PcapContents parse_pcap(const std::filesystem::path& path);

/// Writes microsecond-resolution little-endian classic PCAP, Ethernet link type.
class PcapWriter {
 public:
  explicit PcapWriter(const std::filesystem::path& path);
  void write(const RawPacket& packet);
  void close();

 private:
  std::ofstream out_;
};

void write_pcap(const std::filesystem::path& path, std::span<const RawPacket> packets);

}  // namespace packgen
