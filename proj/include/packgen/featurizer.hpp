#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "packgen/labeling.hpp"

namespace packgen {

inline constexpr std::size_t kFeatureCount = 1525;
/// Features plus the classification-label channel seen by the agent.
inline constexpr std::size_t kStateDim = kFeatureCount + 1;

/// Fixed-width byte representation of one forward packet. Values are stored
/// as the raw bytes, so every feature is exactly k/255.
class FeatureVector {
 public:
  FeatureVector() : bytes_(kFeatureCount, 0) {}
  explicit FeatureVector(std::vector<std::uint8_t> bytes);

  double value(std::size_t i) const { return bytes_[i] / 255.0; }
  std::vector<double> values() const;
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  std::size_t size() const { return bytes_.size(); }

  int label = 0;  // 0 benign, 1 malicious
  std::optional<AttackClass> attack_class;
  std::uint64_t packet_id = 0;

  bool operator==(const FeatureVector&) const = default;

 private:
  std::vector<std::uint8_t> bytes_;
};

enum class ByteLayer : std::uint8_t { Ip, Tcp, Payload, Pad };

struct ByteOrigin {
  ByteLayer layer = ByteLayer::Pad;
  std::uint16_t offset = 0;  // offset within the layer
  bool operator==(const ByteOrigin&) const = default;
};

/// Per-packet mapping between feature indices and raw-packet byte offsets.
/// Layout: IP header without the address bytes (12..19), TCP header without
/// the port bytes (0..3), then payload; truncated or zero padded to 1525.
class ByteMap {
 public:
  static ByteMap for_packet(const RawPacket& p);

  ByteOrigin origin(std::size_t feature) const { return origins_.at(feature); }
  std::optional<std::size_t> feature_index(ByteLayer layer, std::size_t offset) const;
  std::size_t mapped_count() const { return mapped_; }

  /// Describes the layout rule; stored with every dataset.
  static nlohmann::json describe();

 private:
  std::vector<ByteOrigin> origins_;
  std::size_t mapped_ = 0;
};

bool excluded_ip_offset(std::size_t offset);
bool excluded_tcp_offset(std::size_t offset);

/// Header and payload bytes left after removing Ethernet, addresses and
/// ports. Not truncated.
std::vector<std::uint8_t> stripped_bytes(const RawPacket& p);

FeatureVector featurize(const LabeledPacket& p);
/// Re-featurizes a (possibly mutated) raw packet, keeping the caller's label.
FeatureVector defeaturize_sync(const RawPacket& p, int label = 1,
                               std::optional<AttackClass> attack_class = std::nullopt, std::uint64_t packet_id = 0);

/// Textual dataset: header row f0000..f1524,label,attack_class,packet_id.
void write_dataset_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows);
std::vector<FeatureVector> read_dataset_csv(const std::filesystem::path& path);

}  // namespace packgen
