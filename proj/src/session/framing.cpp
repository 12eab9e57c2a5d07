#include "wansim/session/framing.hpp"

#include <stdexcept>

namespace wansim::session {

namespace {

void put_be64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

std::uint64_t get_be64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[i];
  return v;
}

}  // namespace

std::array<std::uint8_t, kFrameHeaderBytes> encode_frame_header(const FrameHeader& h) {
  std::array<std::uint8_t, kFrameHeaderBytes> out{};
  put_be64(out.data(), h.session_id);
  put_be64(out.data() + 8, h.seq);
  return out;
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderBytes) throw std::invalid_argument("session frame header needs 16 bytes");
  return FrameHeader{get_be64(bytes.data()), get_be64(bytes.data() + 8)};
}

}  // namespace wansim::session
