#include "packgen/pcap.hpp"

#include <array>
#include <charconv>

#include "packgen/checksum.hpp"

namespace packgen {

namespace {

constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4;
constexpr std::uint32_t kMagicMicroSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kMagicNano = 0xa1b23c4d;
constexpr std::uint32_t kMagicNanoSwapped = 0x4d3cb2a1;
constexpr std::uint32_t kMagicPcapng = 0x0a0d0d0a;
constexpr std::uint32_t kLinkTypeEthernet = 1;
constexpr std::uint32_t kMaxRecordLen = 262144;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

void put_le32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

Ipv4Address Ipv4Address::from_bytes(std::span<const std::uint8_t, 4> b) {
  return {static_cast<std::uint32_t>(b[0]) << 24 | static_cast<std::uint32_t>(b[1]) << 16 |
          static_cast<std::uint32_t>(b[2]) << 8 | b[3]};
}

Ipv4Address Ipv4Address::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || part > 255 || next == p) {
      throw Error(ErrorCode::InvalidArgument, "bad IPv4 address: " + std::string(text));
    }
    value = value << 8 | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') throw Error(ErrorCode::InvalidArgument, "bad IPv4 address: " + std::string(text));
      ++p;
    }
  }
  if (p != end) throw Error(ErrorCode::InvalidArgument, "bad IPv4 address: " + std::string(text));
  return {value};
}

std::string Ipv4Address::to_string() const {
  return std::to_string(value >> 24) + '.' + std::to_string((value >> 16) & 0xFF) + '.' +
         std::to_string((value >> 8) & 0xFF) + '.' + std::to_string(value & 0xFF);
}

Ipv4Address RawPacket::src_ip() const { return Ipv4Address::from_bytes(std::span<const std::uint8_t, 4>(ip.data() + 12, 4)); }
Ipv4Address RawPacket::dst_ip() const { return Ipv4Address::from_bytes(std::span<const std::uint8_t, 4>(ip.data() + 16, 4)); }
std::uint16_t RawPacket::src_port() const { return be16(tcp.data()); }
std::uint16_t RawPacket::dst_port() const { return be16(tcp.data() + 2); }
std::uint16_t RawPacket::ip_total_length() const { return be16(ip.data() + 2); }
std::uint16_t RawPacket::window() const { return be16(tcp.data() + 14); }

bool RawPacket::ip_checksum_ok() const { return ip.size() >= kMinHeaderLen && checksum16(ip) == 0; }

bool RawPacket::tcp_checksum_ok() const {
  if (ip.size() < kMinHeaderLen || tcp.size() < kMinHeaderLen) return false;
  return tcp_checksum(std::span<const std::uint8_t, 4>(ip.data() + 12, 4),
                      std::span<const std::uint8_t, 4>(ip.data() + 16, 4), tcp, payload) == 0;
}

std::size_t RawPacket::frame_size() const {
  return link.size() + ip.size() + tcp.size() + payload.size() + trailer.size();
}

std::vector<std::uint8_t> RawPacket::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(frame_size());
  out.insert(out.end(), link.begin(), link.end());
  out.insert(out.end(), ip.begin(), ip.end());
  out.insert(out.end(), tcp.begin(), tcp.end());
  out.insert(out.end(), payload.begin(), payload.end());
  out.insert(out.end(), trailer.begin(), trailer.end());
  return out;
}

FrameStatus parse_frame(std::span<const std::uint8_t> frame, RawPacket& out) {
  if (frame.size() < kEthernetHeaderLen) return FrameStatus::Truncated;
  if (be16(frame.data() + 12) != 0x0800) return FrameStatus::NonTcp;
  auto ip = frame.subspan(kEthernetHeaderLen);
  if (ip.size() < kMinHeaderLen) return FrameStatus::Truncated;
  if ((ip[0] >> 4) != 4) return FrameStatus::NonTcp;
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  if (ihl < kMinHeaderLen) return FrameStatus::Malformed;
  if (ip.size() < ihl) return FrameStatus::Truncated;
  if (ip[9] != kProtocolTcp) return FrameStatus::NonTcp;
  // Non-first fragments carry no TCP header.
  if ((be16(ip.data() + 6) & 0x1FFF) != 0) return FrameStatus::NonTcp;
  const std::size_t total = be16(ip.data() + 2);
  if (total < ihl + kMinHeaderLen) return FrameStatus::Malformed;
  if (ip.size() < total) return FrameStatus::Truncated;
  auto seg = ip.subspan(ihl, total - ihl);
  const std::size_t doff = static_cast<std::size_t>(seg[12] >> 4) * 4;
  if (doff < kMinHeaderLen || doff > seg.size()) return FrameStatus::Malformed;

  out.link.assign(frame.begin(), frame.begin() + kEthernetHeaderLen);
  out.ip.assign(ip.begin(), ip.begin() + static_cast<std::ptrdiff_t>(ihl));
  out.tcp.assign(seg.begin(), seg.begin() + static_cast<std::ptrdiff_t>(doff));
  out.payload.assign(seg.begin() + static_cast<std::ptrdiff_t>(doff), seg.end());
  out.trailer.assign(ip.begin() + static_cast<std::ptrdiff_t>(total), ip.end());
  out.checksum_flagged = !(out.ip_checksum_ok() && out.tcp_checksum_ok());
  return FrameStatus::Accepted;
}

PcapReader::PcapReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorCode::Io, "cannot open capture: " + path.string());
  std::array<std::uint8_t, 24> header{};
  if (!in_.read(reinterpret_cast<char*>(header.data()), header.size())) {
    throw Error(ErrorCode::UnsupportedFormat, "file too short for a pcap global header: " + path.string());
  }
  const std::uint32_t le = header[0] | header[1] << 8 | header[2] << 16 | static_cast<std::uint32_t>(header[3]) << 24;
  switch (le) {
    case kMagicMicro: break;
    case kMagicMicroSwapped: swapped_ = true; break;
    case kMagicNano: nanos_ = true; break;
    case kMagicNanoSwapped: swapped_ = true; nanos_ = true; break;
    case kMagicPcapng:
      throw Error(ErrorCode::UnsupportedFormat, "pcapng is not supported, convert to classic pcap: " + path.string());
    default:
      throw Error(ErrorCode::UnsupportedFormat, "unknown capture magic in " + path.string());
  }
  const std::uint32_t linktype = u32(header.data() + 20) & 0x0FFFFFFF;
  if (linktype != kLinkTypeEthernet) {
    throw Error(ErrorCode::UnsupportedFormat,
                "unsupported link type " + std::to_string(linktype) + " in " + path.string());
  }
}

std::uint32_t PcapReader::u32(const std::uint8_t* p) const {
  // Files are little-endian unless the magic came out byte swapped.
  if (swapped_) return static_cast<std::uint32_t>(p[0]) << 24 | p[1] << 16 | p[2] << 8 | p[3];
  return p[0] | p[1] << 8 | p[2] << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

bool PcapReader::read_record(std::vector<std::uint8_t>& frame, Timestamp& ts, std::uint32_t& orig_len) {
  if (done_) return false;
  std::array<std::uint8_t, 16> rec{};
  in_.read(reinterpret_cast<char*>(rec.data()), rec.size());
  if (in_.gcount() == 0) {
    done_ = true;
    return false;
  }
  ++stats_.records;
  if (in_.gcount() != static_cast<std::streamsize>(rec.size())) {
    ++stats_.skipped_truncated;
    done_ = true;
    return false;
  }
  const std::uint32_t incl = u32(rec.data() + 8);
  if (incl > kMaxRecordLen) {
    // A corrupt length leaves no way to resynchronise.
    ++stats_.skipped_truncated;
    done_ = true;
    return false;
  }
  frame.resize(incl);
  in_.read(reinterpret_cast<char*>(frame.data()), incl);
  if (in_.gcount() != static_cast<std::streamsize>(incl)) {
    ++stats_.skipped_truncated;
    done_ = true;
    return false;
  }
  ts.sec = u32(rec.data());
  const std::uint32_t frac = u32(rec.data() + 4);
  ts.usec = static_cast<std::int32_t>(nanos_ ? frac / 1000 : frac);
  orig_len = u32(rec.data() + 12);
  return true;
}

std::optional<RawPacket> PcapReader::next() {
  std::vector<std::uint8_t> frame;
  Timestamp ts;
  std::uint32_t orig_len = 0;
  while (read_record(frame, ts, orig_len)) {
    RawPacket packet;
    switch (parse_frame(frame, packet)) {
      case FrameStatus::Accepted:
        packet.ts = ts;
        packet.orig_len = orig_len;
        ++stats_.accepted;
        if (packet.checksum_flagged) ++stats_.checksum_flagged;
        return packet;
      case FrameStatus::NonTcp: ++stats_.skipped_non_tcp; break;
      case FrameStatus::Truncated: ++stats_.skipped_truncated; break;
      case FrameStatus::Malformed: ++stats_.skipped_malformed; break;
    }
  }
  return std::nullopt;
}

PcapContents parse_pcap(const std::filesystem::path& path) {
  PcapReader reader(path);
  PcapContents out;
  while (auto p = reader.next()) out.packets.push_back(std::move(*p));
  out.stats = reader.stats();
  return out;
}

PcapWriter::PcapWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error(ErrorCode::Io, "cannot create capture: " + path.string());
  std::array<std::uint8_t, 24> header{};
  put_le32(header.data(), kMagicMicro);
  header[4] = 2;  // version 2.4
  header[6] = 4;
  put_le32(header.data() + 16, 65535);
  put_le32(header.data() + 20, kLinkTypeEthernet);
  out_.write(reinterpret_cast<const char*>(header.data()), header.size());
}

void PcapWriter::write(const RawPacket& packet) {
  const auto frame = packet.serialize();
  std::array<std::uint8_t, 16> rec{};
  put_le32(rec.data(), static_cast<std::uint32_t>(packet.ts.sec));
  put_le32(rec.data() + 4, static_cast<std::uint32_t>(packet.ts.usec));
  put_le32(rec.data() + 8, static_cast<std::uint32_t>(frame.size()));
  const auto orig = std::max<std::uint32_t>(packet.orig_len, static_cast<std::uint32_t>(frame.size()));
  put_le32(rec.data() + 12, orig);
  out_.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  if (!out_) throw Error(ErrorCode::Io, "write failed while emitting capture");
}

void PcapWriter::close() { out_.close(); }

void write_pcap(const std::filesystem::path& path, std::span<const RawPacket> packets) {
  PcapWriter writer(path);
  for (const auto& p : packets) writer.write(p);
  writer.close();
}

}  // namespace packgen
