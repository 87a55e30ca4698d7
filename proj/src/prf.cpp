#include "rwre/prf.hpp"

namespace rwre {
namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73Bull;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                    std::uint64_t& lo) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

inline std::array<std::uint64_t, 4> round_once(
    const std::array<std::uint64_t, 4>& c, const std::array<std::uint64_t, 2>& k) {
  std::uint64_t hi0, lo0, hi1, lo1;
  mulhilo(kM0, c[0], hi0, lo0);
  mulhilo(kM1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64(const std::array<std::uint64_t, 2>& key,
                                        const std::array<std::uint64_t, 4>& ctr) {
  std::array<std::uint64_t, 2> k = key;
  std::array<std::uint64_t, 4> c = round_once(ctr, k);
  for (int r = 1; r < 10; ++r) {
    k[0] += kW0;
    k[1] += kW1;
    c = round_once(c, k);
  }
  return c;
}

std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag) {
  return philox4x64({seed, kDomDerive}, {tag, 0, 0, 0})[0];
}

std::uint64_t mix64(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return mix64(seed, h);
}

void CounterStream::refill() {
  buf_ = philox4x64(key_, ctr_);
  ++ctr_[0];
  pos_ = 0;
}

double CounterStream::next_gaussian() {
  if (have_gauss_) {
    have_gauss_ = false;
    return gauss_;
  }
  double u1 = next_unit_pos();
  double u2 = next_unit();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  gauss_ = r * std::sin(a);
  have_gauss_ = true;
  return r * std::cos(a);
}

CounterStream site_stream(std::uint64_t seed, const Point& site) {
  // First three coordinates ride in the counter; higher dimensions fold into
  // the key so arbitrary d stays a pure function of (seed, site).
  std::uint64_t key1 = kDomSite;
  for (int i = 3; i < site.d; ++i) {
    key1 = philox4x64({key1, kDomSite ^ static_cast<std::uint64_t>(i)},
                      {static_cast<std::uint64_t>(site.c[i]), 0, 0, 0})[0];
  }
  std::array<std::uint64_t, 4> ctr = {0, 0, 0, 0};
  for (int i = 0; i < site.d && i < 3; ++i)
    ctr[i + 1] = static_cast<std::uint64_t>(site.c[i]);
  return CounterStream({seed, key1}, ctr);
}

CounterStream walk_stream(std::uint64_t seed, std::uint64_t replicate) {
  return CounterStream({seed, kDomWalk}, {0, replicate, 0, 0});
}

CounterStream tagged_stream(std::uint64_t seed, std::uint64_t domain,
                            std::uint64_t a, std::uint64_t b) {
  return CounterStream({seed, domain}, {0, a, b, 0});
}

}  // namespace rwre
