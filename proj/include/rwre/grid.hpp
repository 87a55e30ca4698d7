#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

namespace rwre {

// Lattice point in up to kMaxDim dimensions. Fixed capacity keeps hot walk
// loops allocation-free; d is carried per point and must agree between
// operands.
inline constexpr int kMaxDim = 8;

struct Point {
  std::array<std::int64_t, kMaxDim> c{};
  int d = 0;

  Point() = default;
  explicit Point(int dim) : d(dim) {}
  Point(std::initializer_list<std::int64_t> xs) {
    d = static_cast<int>(xs.size());
    int i = 0;
    for (auto x : xs) c[i++] = x;
  }

  std::int64_t operator[](int i) const { return c[i]; }
  std::int64_t& operator[](int i) { return c[i]; }

  friend Point operator+(Point a, const Point& b) {
    for (int i = 0; i < a.d; ++i) a.c[i] += b.c[i];
    return a;
  }
  friend Point operator-(Point a, const Point& b) {
    for (int i = 0; i < a.d; ++i) a.c[i] -= b.c[i];
    return a;
  }
  Point& operator+=(const Point& b) {
    for (int i = 0; i < d; ++i) c[i] += b.c[i];
    return *this;
  }
  friend bool operator==(const Point& a, const Point& b) {
    if (a.d != b.d) return false;
    for (int i = 0; i < a.d; ++i)
      if (a.c[i] != b.c[i]) return false;
    return true;
  }
  friend bool operator!=(const Point& a, const Point& b) { return !(a == b); }
  // Lexicographic, used for deterministic tie-breaks.
  friend bool operator<(const Point& a, const Point& b) {
    for (int i = 0; i < a.d; ++i) {
      if (a.c[i] != b.c[i]) return a.c[i] < b.c[i];
    }
    return false;
  }
};

inline Point zero_point(int d) { return Point(d); }

// Signed unit direction index: 2*axis for +e_{axis+1}, 2*axis+1 for -e_{axis+1}.
inline Point unit_step(int dir, int d) {
  Point p(d);
  p.c[dir / 2] = (dir % 2 == 0) ? 1 : -1;
  return p;
}
inline int step_axis(int dir) { return dir / 2; }
inline int step_sign(int dir) { return (dir % 2 == 0) ? 1 : -1; }

inline std::int64_t norm1(const Point& p) {
  std::int64_t s = 0;
  for (int i = 0; i < p.d; ++i) s += std::abs(p.c[i]);
  return s;
}
inline std::int64_t norm_inf(const Point& p) {
  std::int64_t m = 0;
  for (int i = 0; i < p.d; ++i) m = std::max(m, std::abs(p.c[i]));
  return m;
}
inline double dot(const Point& p, const std::vector<double>& v) {
  double s = 0;
  for (int i = 0; i < p.d; ++i) s += static_cast<double>(p.c[i]) * v[i];
  return s;
}

// Floor division, exact for negative numerators.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  std::int64_t r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) --q;
  return q;
}

struct PointHash {
  std::size_t operator()(const Point& p) const {
    // FNV-1a over the used coordinates.
    std::uint64_t h = 1469598103934665603ull;
    for (int i = 0; i < p.d; ++i) {
      std::uint64_t x = static_cast<std::uint64_t>(p.c[i]);
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xff;
        h *= 1099511628211ull;
      }
    }
    return static_cast<std::size_t>(h);
  }
};

std::string to_string(const Point& p);

// Euclidean-normalized direction vector; throws std::invalid_argument on zero.
std::vector<double> normalize_direction(std::vector<double> v);

inline std::vector<double> e1_direction(int d) {
  std::vector<double> v(d, 0.0);
  v[0] = 1.0;
  return v;
}

}  // namespace rwre
