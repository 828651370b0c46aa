#pragma once

#include <cstdint>
#include <random>

namespace bbsi {

/// Addressable random stream.
///
/// A stream is identified by a (seed, substream_id) pair and carries no
/// mutable state: every consumer builds its own engine from the pair, so the
/// samples a task sees depend only on which stream it was handed, never on
/// the order or thread in which tasks run. Hierarchies of independent streams
/// are built with child().
class SeededStream {
 public:
  using engine_type = std::mt19937_64;

  constexpr SeededStream() = default;
  constexpr explicit SeededStream(std::uint64_t seed, std::uint64_t substream_id = 0)
      : seed_(seed), substream_id_(substream_id) {}

  constexpr std::uint64_t seed() const { return seed_; }
  constexpr std::uint64_t substream_id() const { return substream_id_; }

  /// Stream for sub-task `k`; distinct k give unrelated engines.
  constexpr SeededStream child(std::uint64_t k) const {
    return SeededStream(splitmix64(seed_ ^ splitmix64(substream_id_ + 0x632be59bd9b4e019ULL)), k);
  }

  engine_type engine() const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(substream_id_),
                      static_cast<std::uint32_t>(substream_id_ >> 32)};
    return engine_type(seq);
  }

  friend constexpr bool operator==(const SeededStream&, const SeededStream&) = default;

 private:
  static constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t substream_id_ = 0;
};

}  // namespace bbsi
