#include "packgen/perturbation.hpp"

#include <algorithm>

#include "packgen/checksum.hpp"
#include "packgen/featurizer.hpp"

namespace packgen {

namespace {

constexpr std::array<std::string_view, kActionCount> kActionNames{
    "SetFragDF", "SetFragMF", "TtlInc",    "TtlDec",    "WinInc",    "WinDec",       "MssAdd",
    "MssInc",    "MssDec",    "WscaleAdd", "WscaleInc", "WscaleDec", "PayloadAppend",
};

constexpr std::uint8_t kOptEol = 0;
constexpr std::uint8_t kOptNop = 1;
constexpr std::uint8_t kOptMss = 2;
constexpr std::uint8_t kOptWscale = 3;
constexpr std::size_t kMinFrameLen = 60;

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] << 8 | b[off + 1]);
}

void put16(std::span<std::uint8_t> b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v & 0xFF);
}

void set_ip_checksum(RawPacket& p, std::uint16_t v) { put16(p.ip, 10, v); }
void set_tcp_checksum(RawPacket& p, std::uint16_t v) { put16(p.tcp, 16, v); }

std::uint16_t full_tcp_checksum(const RawPacket& p) {
  std::vector<std::uint8_t> hdr = p.tcp;
  hdr[16] = hdr[17] = 0;
  return tcp_checksum(std::span<const std::uint8_t, 4>(p.ip.data() + 12, 4),
                      std::span<const std::uint8_t, 4>(p.ip.data() + 16, 4), hdr, p.payload);
}

std::uint16_t full_ip_checksum(const RawPacket& p) {
  std::vector<std::uint8_t> hdr = p.ip;
  hdr[10] = hdr[11] = 0;
  return checksum16(hdr);
}

void fix_trailer(RawPacket& p) {
  const std::size_t used = p.link.size() + p.ip.size() + p.tcp.size() + p.payload.size();
  p.trailer.assign(used < kMinFrameLen ? kMinFrameLen - used : 0, 0);
}

std::vector<std::size_t> feature_diff(const RawPacket& a, const RawPacket& b) {
  auto fa = stripped_bytes(a);
  auto fb = stripped_bytes(b);
  fa.resize(kFeatureCount, 0);
  fb.resize(kFeatureCount, 0);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (fa[i] != fb[i]) out.push_back(i);
  return out;
}

ApplyResult unchanged(const RawPacket& p) { return {p, false, {}}; }

/// Finalises a fixed-length edit of `q` (derived from `p`).
ApplyResult finish_in_place(const RawPacket& p, RawPacket q) {
  const bool base_valid = p.ip_checksum_ok() && p.tcp_checksum_ok();
  if (base_valid) {
    if (p.ip != q.ip) set_ip_checksum(q, checksum_adjust(get16(p.ip, 10), p.ip, q.ip));
    if (p.tcp != q.tcp) set_tcp_checksum(q, checksum_adjust(get16(p.tcp, 16), p.tcp, q.tcp));
  } else {
    recompute_checksums(q);
  }
  q.checksum_flagged = false;
  auto touched = feature_diff(p, q);
  return {std::move(q), true, std::move(touched)};
}

/// Finalises an edit that changed header or segment lengths.
ApplyResult finish_resized(const RawPacket& p, RawPacket q) {
  fix_trailer(q);
  recompute_checksums(q);
  q.checksum_flagged = false;
  auto touched = feature_diff(p, q);
  return {std::move(q), true, std::move(touched)};
}

const TcpOption* find_option(const std::vector<TcpOption>& opts, std::uint8_t kind) {
  for (const auto& o : opts)
    if (o.kind == kind) return &o;
  return nullptr;
}

ApplyResult insert_option(const RawPacket& p, std::span<const std::uint8_t> option) {
  auto opts = parse_tcp_options(p.tcp);
  if (!opts) return unchanged(p);
  std::size_t used_end = kMinHeaderLen;
  for (const auto& o : *opts) {
    if (o.kind == kOptEol) break;
    used_end = o.offset + o.length;
  }
  const std::size_t needed = used_end + option.size();
  const std::size_t new_len = (needed + 3) / 4 * 4;
  if (new_len > kMaxHeaderLen) return unchanged(p);

  RawPacket q = p;
  q.tcp.resize(used_end);
  q.tcp.insert(q.tcp.end(), option.begin(), option.end());
  q.tcp.resize(new_len, kOptEol);
  q.tcp[12] = static_cast<std::uint8_t>((new_len / 4) << 4 | (q.tcp[12] & 0x0F));
  const std::size_t total = q.ip.size() + q.tcp.size() + q.payload.size();
  if (total > 0xFFFF) return unchanged(p);
  put16(q.ip, 2, static_cast<std::uint16_t>(total));
  return finish_resized(p, std::move(q));
}

ApplyResult step_mss(const RawPacket& p, int delta) {
  auto opts = parse_tcp_options(p.tcp);
  if (!opts) return unchanged(p);
  const auto* mss = find_option(*opts, kOptMss);
  if (!mss || mss->length != 4) return unchanged(p);
  const int value = get16(p.tcp, mss->offset + 2) + delta;
  if (value < 0 || value > 0xFFFF) return unchanged(p);
  RawPacket q = p;
  put16(q.tcp, mss->offset + 2, static_cast<std::uint16_t>(value));
  return finish_in_place(p, std::move(q));
}

ApplyResult step_wscale(const RawPacket& p, int delta) {
  auto opts = parse_tcp_options(p.tcp);
  if (!opts) return unchanged(p);
  const auto* ws = find_option(*opts, kOptWscale);
  if (!ws || ws->length != 3) return unchanged(p);
  const int value = p.tcp[ws->offset + 2] + delta;
  if (value < 0 || value > kMaxWscale) return unchanged(p);
  RawPacket q = p;
  q.tcp[ws->offset + 2] = static_cast<std::uint8_t>(value);
  return finish_in_place(p, std::move(q));
}

}  // namespace

std::string_view to_string(ActionKind a) noexcept { return kActionNames[static_cast<std::size_t>(a)]; }

std::optional<ActionKind> parse_action(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == name) return static_cast<ActionKind>(i);
  return std::nullopt;
}

std::optional<ActionKind> action_from_id(int id) noexcept {
  if (id < 0 || id >= static_cast<int>(kActionCount)) return std::nullopt;
  return static_cast<ActionKind>(id);
}

std::array<ActionKind, kActionCount> all_actions() {
  std::array<ActionKind, kActionCount> out{};
  for (std::size_t i = 0; i < kActionCount; ++i) out[i] = static_cast<ActionKind>(i);
  return out;
}

std::optional<std::vector<TcpOption>> parse_tcp_options(std::span<const std::uint8_t> tcp_header) {
  std::vector<TcpOption> out;
  if (tcp_header.size() < kMinHeaderLen) return std::nullopt;
  std::size_t i = kMinHeaderLen;
  while (i < tcp_header.size()) {
    const std::uint8_t kind = tcp_header[i];
    if (kind == kOptEol) {
      out.push_back({kind, i, 1});
      break;  // the rest is padding
    }
    if (kind == kOptNop) {
      out.push_back({kind, i, 1});
      ++i;
      continue;
    }
    if (i + 1 >= tcp_header.size()) return std::nullopt;
    const std::size_t len = tcp_header[i + 1];
    if (len < 2 || i + len > tcp_header.size()) return std::nullopt;
    if ((kind == kOptMss && len != 4) || (kind == kOptWscale && len != 3)) return std::nullopt;
    out.push_back({kind, i, len});
    i += len;
  }
  return out;
}

void recompute_checksums(RawPacket& p) {
  set_ip_checksum(p, full_ip_checksum(p));
  set_tcp_checksum(p, full_tcp_checksum(p));
}

ApplyResult append_payload(const RawPacket& p, AppendContext& ctx) {
  if (ctx.corpus.empty() || ctx.cursor >= ctx.corpus.size() || ctx.chunk == 0) return unchanged(p);
  const std::size_t stripped = p.ip.size() - 8 + p.tcp.size() - 4 + p.payload.size();
  if (stripped >= kFeatureCount) return unchanged(p);
  const std::size_t n = std::min({ctx.chunk, ctx.corpus.size() - ctx.cursor, kFeatureCount - stripped});
  const std::size_t total = p.ip.size() + p.tcp.size() + p.payload.size() + n;
  if (total > 0xFFFF) return unchanged(p);

  RawPacket q = p;
  auto first = ctx.corpus.begin() + static_cast<std::ptrdiff_t>(ctx.cursor);
  q.payload.insert(q.payload.end(), first, first + static_cast<std::ptrdiff_t>(n));
  put16(q.ip, 2, static_cast<std::uint16_t>(total));
  ctx.cursor += n;
  return finish_resized(p, std::move(q));
}

ApplyResult apply(const RawPacket& p, ActionKind a, AppendContext* append) {
  switch (a) {
    case ActionKind::SetFragDF: {
      // Only from "fragmentation off".
      if (p.ip[6] != 0x00) return unchanged(p);
      RawPacket q = p;
      q.ip[6] = kFlagsDontFragment;
      return finish_in_place(p, std::move(q));
    }
    case ActionKind::SetFragMF: {
      if (p.ip[6] != 0x00 && p.ip[6] != kFlagsDontFragment) return unchanged(p);
      RawPacket q = p;
      q.ip[6] = kFlagsMoreFragments;
      return finish_in_place(p, std::move(q));
    }
    case ActionKind::TtlInc:
    case ActionKind::TtlDec: {
      const int ttl = p.ttl() + (a == ActionKind::TtlInc ? 1 : -1);
      if (ttl < 1 || ttl > 255) return unchanged(p);
      RawPacket q = p;
      q.ip[8] = static_cast<std::uint8_t>(ttl);
      return finish_in_place(p, std::move(q));
    }
    case ActionKind::WinInc:
    case ActionKind::WinDec: {
      const int win = p.window() + (a == ActionKind::WinInc ? 1 : -1);
      if (win < 1 || win > 0xFFFF) return unchanged(p);
      RawPacket q = p;
      put16(q.tcp, 14, static_cast<std::uint16_t>(win));
      return finish_in_place(p, std::move(q));
    }
    case ActionKind::MssAdd: {
      if (!p.is_syn()) return unchanged(p);
      auto opts = parse_tcp_options(p.tcp);
      if (!opts || find_option(*opts, kOptMss)) return unchanged(p);
      const std::uint8_t option[] = {kOptMss, 4, kInsertedMss >> 8, kInsertedMss & 0xFF};
      return insert_option(p, option);
    }
    case ActionKind::MssInc:
    case ActionKind::MssDec:
      if (!p.is_syn()) return unchanged(p);
      return step_mss(p, a == ActionKind::MssInc ? 1 : -1);
    case ActionKind::WscaleAdd: {
      if (!p.is_syn()) return unchanged(p);
      auto opts = parse_tcp_options(p.tcp);
      if (!opts || find_option(*opts, kOptWscale)) return unchanged(p);
      const std::uint8_t option[] = {kOptNop, kOptWscale, 3, kInsertedWscale};
      return insert_option(p, option);
    }
    case ActionKind::WscaleInc:
    case ActionKind::WscaleDec:
      if (!p.is_syn()) return unchanged(p);
      return step_wscale(p, a == ActionKind::WscaleInc ? 1 : -1);
    case ActionKind::PayloadAppend:
      if (!append) return unchanged(p);
      return append_payload(p, *append);
  }
  return unchanged(p);
}

bool validate(const RawPacket& p) {
  if (p.link.size() != kEthernetHeaderLen || get16(p.link, 12) != 0x0800) return false;
  if (p.ip.size() < kMinHeaderLen || p.ip.size() > kMaxHeaderLen) return false;
  if ((p.ip[0] >> 4) != 4 || p.ihl_bytes() != p.ip.size()) return false;
  if (p.ip[9] != kProtocolTcp || p.ttl() == 0) return false;
  if ((get16(p.ip, 6) & 0x1FFF) != 0) return false;
  if (p.tcp.size() < kMinHeaderLen || p.tcp.size() > kMaxHeaderLen) return false;
  if (p.data_offset_bytes() != p.tcp.size()) return false;
  if (p.ip_total_length() != p.ip.size() + p.tcp.size() + p.payload.size()) return false;
  if (!parse_tcp_options(p.tcp)) return false;
  return p.ip_checksum_ok() && p.tcp_checksum_ok();
}

}  // namespace packgen
