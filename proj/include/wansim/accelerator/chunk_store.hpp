#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim::accel {

inline constexpr std::uint32_t kChunkBytes = 8192;
inline constexpr std::uint32_t kTokenBytes = 40;

using ChunkHash = std::array<std::uint8_t, 32>;

class AccelError : public SimError {
 public:
  using SimError::SimError;
};

// Parametric description of a payload: size, the fraction of chunks the
// stores already hold, and the size ratio of novel data after compression.
struct ContentDescriptor {
  std::uint64_t size_bytes = 0;
  double redundancy = 0.0;       // rho in [0, 1]
  double compressibility = 1.0;  // kappa in (0, 1]
  std::uint64_t content_id = 0;  // seeds synthetic chunk identities

  void validate() const;
  std::uint64_t chunk_count(std::uint32_t chunk = kChunkBytes) const;
  // Evenly spread redundancy: chunk i is a repeat iff
  // floor((i+1)*rho + 1/2) - floor(i*rho + 1/2) == 1.
  bool chunk_redundant(std::uint64_t index) const;
  // Hash standing in for the content of chunk `index`.
  ChunkHash chunk_hash(std::uint64_t index) const;
};

// Content-addressed chunk cache with FIFO eviction by byte capacity.
class ChunkStore {
 public:
  explicit ChunkStore(std::uint64_t capacity_bytes = 4ULL << 30, std::uint32_t chunk_bytes = kChunkBytes);

  std::uint32_t chunk_bytes() const { return chunk_bytes_; }
  std::uint64_t capacity_bytes() const { return capacity_; }

  // Looks the chunk up, counting a hit or a miss; misses are inserted.
  // Returns true on a hit.
  bool lookup_or_insert(const ChunkHash& h, std::uint32_t bytes);
  bool contains(const ChunkHash& h) const { return index_.count(h) > 0; }
  // Hit recorded without touching entries (descriptor-mode repeats whose
  // originals predate the store's observation window).
  void count_hit() { ++hits_; }

  std::size_t entries() const { return index_.size(); }
  std::uint64_t stored_bytes() const { return stored_; }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  double hit_ratio() const;
  // Sorted for equality comparison between stores.
  std::vector<ChunkHash> entry_set() const;

 private:
  std::uint64_t capacity_;
  std::uint32_t chunk_bytes_;
  std::map<ChunkHash, std::uint64_t> index_;  // hash -> chunk id
  std::deque<std::pair<ChunkHash, std::uint32_t>> fifo_;
  std::uint64_t stored_ = 0;
  std::uint64_t next_id_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// SHA-256 over fixed-size chunks; the last chunk may be short.
std::vector<ChunkHash> hash_chunks(std::span<const std::uint8_t> bytes, std::uint32_t chunk_bytes = kChunkBytes);

struct OptimizeResult {
  std::uint64_t wan_bytes = 0;
  std::uint64_t chunks = 0;
  std::uint64_t novel_chunks = 0;
  std::uint64_t token_bytes = 0;
};

// wan = ceil(size * (1 - rho) * kappa) + 40 * chunks. Novel chunk hashes are
// added to `store`.
OptimizeResult optimize_payload(const ContentDescriptor& d, ChunkStore& store);

// Byte-level counterpart: repeats are real store hits and only the bytes of
// novel chunks are compressed by `kappa`.
OptimizeResult optimize_bytes(std::span<const std::uint8_t> bytes, double kappa, ChunkStore& store);

// Cumulative WAN bytes for the first `offset` bytes of the payload. Equals
// optimize_payload's wan_bytes at offset == size, and is non-decreasing.
std::uint64_t wan_prefix_bytes(const ContentDescriptor& d, std::uint64_t offset);

}  // namespace wansim::accel
