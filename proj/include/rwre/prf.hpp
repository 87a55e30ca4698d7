#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "rwre/grid.hpp"

namespace rwre {

// Philox4x64-10 block function. Counter-based: one call maps (key, counter)
// to four statistically independent 64-bit words, so any lattice site or
// replicate index can be turned into its own random stream with no stored
// state. Verified against an independent implementation's known-answer
// vectors in tests.
std::array<std::uint64_t, 4> philox4x64(const std::array<std::uint64_t, 2>& key,
                                        const std::array<std::uint64_t, 4>& ctr);

// Domain tags keep unrelated uses of the same seed decorrelated.
enum : std::uint64_t {
  kDomSite = 0x736974652d646f6dull,
  kDomWalk = 0x77616c6b2d646f6dull,
  kDomDerive = 0x6465726976652d64ull,
  kDomClassify = 0x636c61732d646f6dull,
};

// One 64-bit combine through the block function; used for hierarchical seed
// derivation (campaign -> experiment -> replicate all route through here).
std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag);
std::uint64_t mix64(std::uint64_t seed, std::string_view tag);

// Buffered word stream over an incrementing counter block.
class CounterStream {
 public:
  CounterStream(const std::array<std::uint64_t, 2>& key,
                const std::array<std::uint64_t, 4>& ctr)
      : key_(key), ctr_(ctr) {}

  std::uint64_t next_u64() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }
  // Uniform on [0,1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0,1]; safe as a log argument.
  double next_unit_pos() { return 1.0 - next_unit(); }
  // Standard normal via Box-Muller; second value cached.
  double next_gaussian();

 private:
  void refill();
  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> ctr_;
  std::array<std::uint64_t, 4> buf_{};
  int pos_ = 4;
  bool have_gauss_ = false;
  double gauss_ = 0;
};

// Stream of the i.i.d. variables attached to one lattice site. Pure in
// (seed, site): repeated calls rebuild the identical stream.
CounterStream site_stream(std::uint64_t seed, const Point& site);

// Per-replicate walk stream, independent of every site stream.
CounterStream walk_stream(std::uint64_t seed, std::uint64_t replicate);

// Generic tagged stream for everything else.
CounterStream tagged_stream(std::uint64_t seed, std::uint64_t domain,
                            std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace rwre
