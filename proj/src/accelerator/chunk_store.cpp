#include "wansim/accelerator/chunk_store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>

namespace wansim::accel {

namespace {

ChunkHash sha256(const std::uint8_t* data, std::size_t len) {
  ChunkHash out{};
  unsigned int n = 0;
  if (EVP_Digest(data, len, out.data(), &n, EVP_sha256(), nullptr) != 1 || n != out.size()) {
    throw AccelError("SHA-256 digest failed");
  }
  return out;
}

// ceil of a non-negative product; the small slack absorbs binary rounding so
// exact products such as 8192 * 1.0 do not round up to the next byte.
std::uint64_t ceil_bytes(long double x) {
  if (x <= 0) return 0;
  return static_cast<std::uint64_t>(std::ceil(x - 1e-6L));
}

}  // namespace

void ContentDescriptor::validate() const {
  if (size_bytes == 0) throw AccelError("descriptor size must be positive");
  if (!(redundancy >= 0.0 && redundancy <= 1.0)) throw AccelError("redundancy must lie in [0, 1]");
  if (!(compressibility > 0.0 && compressibility <= 1.0)) throw AccelError("compressibility must lie in (0, 1]");
}

std::uint64_t ContentDescriptor::chunk_count(std::uint32_t chunk) const { return (size_bytes + chunk - 1) / chunk; }

bool ContentDescriptor::chunk_redundant(std::uint64_t index) const {
  const long double r = redundancy;
  const auto a = std::floor(static_cast<long double>(index + 1) * r + 0.5L);
  const auto b = std::floor(static_cast<long double>(index) * r + 0.5L);
  return a - b >= 1.0L;
}

ChunkHash ContentDescriptor::chunk_hash(std::uint64_t index) const {
  std::array<std::uint8_t, 24> seed{'w', 'a', 'n', 's', 'i', 'm', 'd', 'c'};
  for (int i = 0; i < 8; ++i) {
    seed[8 + i] = static_cast<std::uint8_t>(content_id >> (56 - 8 * i));
    seed[16 + i] = static_cast<std::uint8_t>(index >> (56 - 8 * i));
  }
  return sha256(seed.data(), seed.size());
}

ChunkStore::ChunkStore(std::uint64_t capacity_bytes, std::uint32_t chunk_bytes)
    : capacity_(capacity_bytes), chunk_bytes_(chunk_bytes) {
  if (chunk_bytes == 0) throw AccelError("chunk size must be positive");
}

bool ChunkStore::lookup_or_insert(const ChunkHash& h, std::uint32_t bytes) {
  if (index_.count(h)) {
    ++hits_;
    return true;
  }
  ++misses_;
  if (bytes > capacity_) return false;
  while (stored_ + bytes > capacity_ && !fifo_.empty()) {
    stored_ -= fifo_.front().second;
    index_.erase(fifo_.front().first);
    fifo_.pop_front();
  }
  index_.emplace(h, next_id_++);
  fifo_.emplace_back(h, bytes);
  stored_ += bytes;
  return false;
}

double ChunkStore::hit_ratio() const {
  const std::uint64_t n = hits_ + misses_;
  return n == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(n);
}

std::vector<ChunkHash> ChunkStore::entry_set() const {
  std::vector<ChunkHash> out;
  out.reserve(index_.size());
  for (const auto& [h, id] : index_) out.push_back(h);
  return out;
}

std::vector<ChunkHash> hash_chunks(std::span<const std::uint8_t> bytes, std::uint32_t chunk_bytes) {
  if (chunk_bytes == 0) throw AccelError("chunk size must be positive");
  std::vector<ChunkHash> out;
  for (std::size_t off = 0; off < bytes.size(); off += chunk_bytes) {
    const std::size_t len = std::min<std::size_t>(chunk_bytes, bytes.size() - off);
    out.push_back(sha256(bytes.data() + off, len));
  }
  return out;
}

OptimizeResult optimize_payload(const ContentDescriptor& d, ChunkStore& store) {
  d.validate();
  OptimizeResult r;
  r.chunks = d.chunk_count(store.chunk_bytes());
  for (std::uint64_t i = 0; i < r.chunks; ++i) {
    if (d.chunk_redundant(i)) {
      store.count_hit();
      continue;
    }
    const auto len = static_cast<std::uint32_t>(
        std::min<std::uint64_t>(store.chunk_bytes(), d.size_bytes - i * store.chunk_bytes()));
    store.lookup_or_insert(d.chunk_hash(i), len);
    ++r.novel_chunks;
  }
  r.token_bytes = kTokenBytes * r.chunks;
  r.wan_bytes = wan_prefix_bytes(d, d.size_bytes);
  return r;
}

OptimizeResult optimize_bytes(std::span<const std::uint8_t> bytes, double kappa, ChunkStore& store) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw AccelError("compressibility must lie in (0, 1]");
  OptimizeResult r;
  const auto hashes = hash_chunks(bytes, store.chunk_bytes());
  std::uint64_t novel_bytes = 0;
  for (std::size_t i = 0; i < hashes.size(); ++i) {
    const auto len = static_cast<std::uint32_t>(
        std::min<std::size_t>(store.chunk_bytes(), bytes.size() - i * store.chunk_bytes()));
    if (!store.lookup_or_insert(hashes[i], len)) {
      ++r.novel_chunks;
      novel_bytes += len;
    }
  }
  r.chunks = hashes.size();
  r.token_bytes = kTokenBytes * r.chunks;
  r.wan_bytes = ceil_bytes(static_cast<long double>(novel_bytes) * kappa) + r.token_bytes;
  return r;
}

std::uint64_t wan_prefix_bytes(const ContentDescriptor& d, std::uint64_t offset) {
  offset = std::min(offset, d.size_bytes);
  const long double scale =
      (1.0L - static_cast<long double>(d.redundancy)) * static_cast<long double>(d.compressibility);
  const std::uint64_t chunks = (offset + kChunkBytes - 1) / kChunkBytes;
  return ceil_bytes(static_cast<long double>(offset) * scale) + kTokenBytes * chunks;
}

}  // namespace wansim::accel
