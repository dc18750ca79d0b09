#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "packgen/pcap.hpp"

namespace packgen {

enum class AttackClass { DoS, DDoS, PortScan, Infiltration, WebAttack, Other };

std::string_view to_string(AttackClass c) noexcept;
std::optional<AttackClass> parse_attack_class(std::string_view text) noexcept;

enum class Label : std::uint8_t { Benign = 0, Attack = 1 };
enum class Direction : std::uint8_t { Forward, Backward };

/// 6-tuple plus capture-time window identifying attack traffic.
struct FlowKey {
  Ipv4Address src_ip;
  Ipv4Address dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = kProtocolTcp;
  double window_start = 0.0;
  double window_end = 0.0;
};

struct LabelRule {
  FlowKey key;
  AttackClass attack_class = AttackClass::Other;
};

struct LabeledPacket {
  RawPacket packet;
  Label label = Label::Benign;
  std::optional<AttackClass> attack_class;  // present iff label == Attack
  Direction direction = Direction::Forward;
  std::uint64_t packet_id = 0;
};

/// Parses the rules text format: one rule per line,
/// `src_ip,dst_ip,src_port,dst_port,protocol,window_start,window_end,class`.
/// Blank lines, `#` comments and a leading header row are ignored.
std::vector<LabelRule> parse_rules(std::istream& in);
std::vector<LabelRule> load_rules(const std::filesystem::path& path);
void write_rules(std::ostream& out, const std::vector<LabelRule>& rules);

/// Assigns labels and directions. Attack packets match a rule on the exact
/// 6-tuple in either orientation with the capture time inside the window;
/// direction is forward iff the packet's source equals the rule's source.
/// Benign flows take the endpoint that sent the first packet seen as source.
class Labeler {
 public:
  /// Throws Error(Config) when two rules on the same tuple overlap in time
  /// but name different attack classes.
  explicit Labeler(std::vector<LabelRule> rules);

  LabeledPacket label(RawPacket packet, std::uint64_t packet_id);

 private:
  using Endpoint = std::pair<std::uint32_t, std::uint16_t>;
  using FlowId = std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>;

  static FlowId canonical(Endpoint a, Endpoint b);

  std::map<FlowId, std::vector<LabelRule>> rules_;
  std::map<FlowId, Endpoint> benign_source_;
};

/// Labels a capture-ordered stream; packet ids are assigned from `first_id`
/// upward in stream order.
std::vector<LabeledPacket> label_packets(std::vector<RawPacket> packets, const std::vector<LabelRule>& rules,
                                         std::uint64_t first_id = 0);

std::vector<LabeledPacket> filter_forward(std::vector<LabeledPacket> packets);

}  // namespace packgen
