#include "packgen/checksum.hpp"

#include <cassert>

namespace packgen {

std::uint32_t ones_sum(std::span<const std::uint8_t> data, std::uint32_t acc) {
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) {
    acc += static_cast<std::uint32_t>(data[i]) << 8 | data[i + 1];
    acc = (acc & 0xFFFF) + (acc >> 16);
  }
  if (i < data.size()) {
    acc += static_cast<std::uint32_t>(data[i]) << 8;
    acc = (acc & 0xFFFF) + (acc >> 16);
  }
  return acc;
}

std::uint16_t fold_checksum(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc & 0xFFFF);
}

std::uint16_t checksum16(std::span<const std::uint8_t> data) { return fold_checksum(ones_sum(data)); }

std::uint16_t tcp_checksum(std::span<const std::uint8_t, 4> src, std::span<const std::uint8_t, 4> dst,
                           std::span<const std::uint8_t> tcp_header,
                           std::span<const std::uint8_t> payload) {
  const std::size_t seg_len = tcp_header.size() + payload.size();
  const std::uint8_t pseudo_tail[4] = {0, 6, static_cast<std::uint8_t>(seg_len >> 8),
                                       static_cast<std::uint8_t>(seg_len & 0xFF)};
  std::uint32_t acc = ones_sum(src);
  acc = ones_sum(dst, acc);
  acc = ones_sum(pseudo_tail, acc);
  acc = ones_sum(tcp_header, acc);
  // The header length is a multiple of four, so the payload starts word aligned.
  acc = ones_sum(payload, acc);
  return fold_checksum(acc);
}

std::uint16_t checksum_adjust(std::uint16_t checksum, std::uint16_t old_word, std::uint16_t new_word) {
  std::uint32_t acc = static_cast<std::uint16_t>(~checksum);
  acc += static_cast<std::uint16_t>(~old_word);
  acc += new_word;
  return fold_checksum(acc);
}

std::uint16_t checksum_adjust(std::uint16_t checksum, std::span<const std::uint8_t> before,
                              std::span<const std::uint8_t> after) {
  assert(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); i += 2) {
    const std::uint16_t hi_old = before[i], hi_new = after[i];
    const std::uint16_t lo_old = i + 1 < before.size() ? before[i + 1] : 0;
    const std::uint16_t lo_new = i + 1 < after.size() ? after[i + 1] : 0;
    const auto w_old = static_cast<std::uint16_t>(hi_old << 8 | lo_old);
    const auto w_new = static_cast<std::uint16_t>(hi_new << 8 | lo_new);
    if (w_old != w_new) checksum = checksum_adjust(checksum, w_old, w_new);
  }
  return checksum;
}

}  // namespace packgen
