#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "packgen/pcap.hpp"

namespace packgen {

/// Functionality-preserving mutations. Ids are the enumerator values and are
/// persisted with trained agents; do not reorder.
enum class ActionKind : std::uint8_t {
  SetFragDF = 0,
  SetFragMF,
  TtlInc,
  TtlDec,
  WinInc,
  WinDec,
  MssAdd,
  MssInc,
  MssDec,
  WscaleAdd,
  WscaleInc,
  WscaleDec,
  PayloadAppend,
};

inline constexpr std::size_t kActionCount = 13;

std::string_view to_string(ActionKind a) noexcept;
std::optional<ActionKind> parse_action(std::string_view name) noexcept;
std::optional<ActionKind> action_from_id(int id) noexcept;
inline int action_id(ActionKind a) { return static_cast<int>(a); }
std::array<ActionKind, kActionCount> all_actions();

inline constexpr std::uint8_t kFlagsDontFragment = 0x40;
inline constexpr std::uint8_t kFlagsMoreFragments = 0x20;
inline constexpr std::uint16_t kInsertedMss = 1460;
inline constexpr std::uint8_t kInsertedWscale = 7;
inline constexpr std::uint8_t kMaxWscale = 14;
inline constexpr std::size_t kDefaultPayloadChunk = 32;

struct ApplyResult {
  RawPacket packet;
  bool changed = false;
  /// Feature indices (within the 1525-wide vector) whose value differs
  /// between the input and output packet.
  std::vector<std::size_t> touched_features;
};

/// Benign payload bytes appended chunk by chunk during one episode.
struct AppendContext {
  std::span<const std::uint8_t> corpus;
  std::size_t chunk = kDefaultPayloadChunk;
  std::size_t cursor = 0;  // next corpus byte to append; reset per episode
};

struct TcpOption {
  std::uint8_t kind = 0;
  std::size_t offset = 0;  // offset of the kind byte within the TCP header
  std::size_t length = 1;
};

/// Parses the TCP option list; nullopt when it is malformed.
std::optional<std::vector<TcpOption>> parse_tcp_options(std::span<const std::uint8_t> tcp_header);

/// Applies one action. Inapplicable actions (out of range, wrong packet type,
/// no room for an option, payload cap reached) leave the packet unchanged and
/// report changed = false. IP and TCP checksums are kept valid; fixed-field
/// edits use incremental (RFC 1624) updates and structural edits recompute.
/// PayloadAppend needs `append`; without it the action is a no-op.
ApplyResult apply(const RawPacket& p, ActionKind a, AppendContext* append = nullptr);

ApplyResult append_payload(const RawPacket& p, AppendContext& ctx);

/// Lengths self-consistent, IHL/data offset in bounds, options well formed,
/// first fragment only, TTL >= 1 and both checksums verify.
bool validate(const RawPacket& p);

/// Rewrites both checksums from scratch.
void recompute_checksums(RawPacket& p);

}  // namespace packgen
