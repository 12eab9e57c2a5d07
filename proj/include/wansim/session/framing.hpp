#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace wansim::session {

// Every session record on the transport byte stream is prefixed by this
// header: session id then session sequence number, both 64-bit big-endian.
inline constexpr std::size_t kFrameHeaderBytes = 16;

struct FrameHeader {
  std::uint64_t session_id = 0;
  std::uint64_t seq = 0;
  bool operator==(const FrameHeader&) const = default;
};

std::array<std::uint8_t, kFrameHeaderBytes> encode_frame_header(const FrameHeader& h);
// Throws std::invalid_argument when fewer than 16 bytes are supplied.
FrameHeader decode_frame_header(std::span<const std::uint8_t> bytes);

}  // namespace wansim::session
