#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace packgen {

/// Internet checksum (RFC 1071): ones' complement of the ones' complement sum
/// of big-endian 16-bit words. Odd-length input is padded with a zero byte.
std::uint16_t checksum16(std::span<const std::uint8_t> data);

/// Unfolded ones' complement accumulation; fold with fold_checksum().
std::uint32_t ones_sum(std::span<const std::uint8_t> data, std::uint32_t acc = 0);
std::uint16_t fold_checksum(std::uint32_t acc);

/// TCP checksum over the IPv4 pseudo-header plus `segment` (TCP header with its
/// checksum bytes as given, followed by payload).
std::uint16_t tcp_checksum(std::span<const std::uint8_t, 4> src, std::span<const std::uint8_t, 4> dst,
                           std::span<const std::uint8_t> tcp_header,
                           std::span<const std::uint8_t> payload);

/// RFC 1624 (eqn. 3) update of a stored checksum after one 16-bit word changed:
/// HC' = ~(~HC + ~m + m').
std::uint16_t checksum_adjust(std::uint16_t checksum, std::uint16_t old_word, std::uint16_t new_word);

/// Applies checksum_adjust for every word-aligned 16-bit word that differs
/// between `before` and `after` (equal-length buffers whose offset 0 is word
/// aligned with respect to the checksummed region).
std::uint16_t checksum_adjust(std::uint16_t checksum, std::span<const std::uint8_t> before,
                              std::span<const std::uint8_t> after);

}  // namespace packgen
