#include "rwre/geom.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rwre/errors.hpp"

namespace rwre {

namespace {

// R_5 extended to N=2, where the formula also evaluates to 1.
std::int64_t r5(std::int64_t N) { return N >= 3 ? scale_R(5, N) : 1; }

std::int64_t ceil_div_pos(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// ceil(L^e) with integer snapping: pow results within a few thousand ulp of
// an integer are taken as that integer, so exact powers like (10^4)^(1/4)
// do not round up. The window is far below any genuine non-integer gap met
// here (e.g. ladder multipliers of the form 1 + 6e-10 must stay above 1).
std::int64_t ceil_pow(std::int64_t L, double e) {
  double v = std::pow(static_cast<double>(L), e);
  if (!(v < 9.0e18)) throw DomainError("scale size exceeds the integer range");
  double r = std::nearbyint(v);
  if (std::abs(v - r) <= 1e-12 * std::max(1.0, std::abs(r))) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(v));
}

}  // namespace

std::int64_t scale_R(int k, std::int64_t N) {
  if (N < 3) throw DomainError("scale_R needs N >= 3");
  if (k < 0) throw DomainError("scale_R needs k >= 0");
  double z = std::log(std::log(static_cast<double>(N)));
  double val = std::exp(std::pow(z, k + 1));
  if (!(val < 9.0e18)) throw DomainError("scale_R value exceeds the integer range");
  return static_cast<std::int64_t>(std::floor(val));
}

ScaleInequalityReport scale_inequality_report(double N) {
  if (!(N >= 3)) throw DomainError("scale report needs N >= 3");
  double z = std::log(std::log(N));
  ScaleInequalityReport rep;
  rep.n = N;
  rep.r1 = std::exp(z * z);
  rep.r2 = std::exp(z * z * z);
  rep.holds = rep.r1 * rep.r1 < rep.r2 && rep.r2 < N;
  return rep;
}

BlockSpec::BlockSpec(Point center, std::int64_t size, std::vector<double> direction)
    : z(center), N(size), theta(std::move(direction)) {
  if (N < 2) throw std::invalid_argument("block size must be at least 2");
  if (theta.size() != static_cast<size_t>(z.d))
    throw std::invalid_argument("direction dimension mismatch");
  theta = normalize_direction(theta);
  if (!(theta[0] > 0)) throw std::invalid_argument("block direction needs <theta,e_1> > 0");
}

std::int64_t BlockSpec::transverse_halfwidth() const { return N * r5(N); }

namespace {

// Max-axis distance from x to the theta line through z at x's e_1 layer.
double transverse_dist(const BlockSpec& b, const Point& x) {
  std::int64_t e1 = x.c[0] - b.z.c[0];
  double scale = static_cast<double>(e1) / b.theta[0];
  double dist = 0;
  for (int i = 1; i < b.dim(); ++i) {
    double u = static_cast<double>(b.z.c[static_cast<size_t>(i)]) + b.theta[static_cast<size_t>(i)] * scale;
    dist = std::max(dist, std::abs(static_cast<double>(x.c[static_cast<size_t>(i)]) - u));
  }
  return dist;
}

}  // namespace

bool block_contains(const BlockSpec& block, const Point& x) {
  std::int64_t e1 = x.c[0] - block.z.c[0];
  if (std::abs(e1) >= block.N * block.N) return false;
  return transverse_dist(block, x) < static_cast<double>(block.transverse_halfwidth());
}

bool middle_third_contains(const BlockSpec& block, const Point& x) {
  std::int64_t e1 = x.c[0] - block.z.c[0];
  if (3 * std::abs(e1) >= block.N * block.N) return false;
  return 3.0 * transverse_dist(block, x) < static_cast<double>(block.transverse_halfwidth());
}

BoundaryClass boundary_classify(const BlockSpec& block, const Point& x) {
  if (block_contains(block, x)) return BoundaryClass::kInterior;
  bool touches = false;
  for (int dir = 0; dir < 2 * block.dim(); ++dir) {
    if (block_contains(block, x + unit_step(dir, block.dim()))) {
      touches = true;
      break;
    }
  }
  if (!touches) return BoundaryClass::kExterior;
  return x.c[0] - block.z.c[0] == block.N * block.N ? BoundaryClass::kFrontBoundary
                                                    : BoundaryClass::kBoundary;
}

std::int64_t lattice_spacing(std::int64_t N) {
  return std::max<std::int64_t>(1, N * r5(N) / 4);
}

bool on_lattice(const Point& z, std::int64_t N) {
  if (z.c[0] % (N * N) != 0) return false;
  std::int64_t s = lattice_spacing(N);
  for (int i = 1; i < z.d; ++i)
    if (z.c[static_cast<size_t>(i)] % s != 0) return false;
  return true;
}

Point lattice_cover(const Point& x, std::int64_t N) {
  if (x.c[0] % (N * N) != 0) throw NotOnLayer("point is not on an e_1 layer");
  std::int64_t s = lattice_spacing(N);
  int d = x.d;
  Point best;
  std::int64_t best_dist = std::numeric_limits<std::int64_t>::max();
  int t = d - 1;
  for (int mask = 0; mask < (1 << t); ++mask) {
    Point z;
    z.d = d;
    z.c[0] = x.c[0];
    std::int64_t dist = 0;
    for (int i = 1; i < d; ++i) {
      std::int64_t lo = floor_div(x.c[static_cast<size_t>(i)], s) * s;
      std::int64_t zi = (mask >> (i - 1)) & 1 ? lo + s : lo;
      z.c[static_cast<size_t>(i)] = zi;
      dist = std::max(dist, std::abs(x.c[static_cast<size_t>(i)] - zi));
    }
    if (dist < best_dist || (dist == best_dist && z < best)) {
      best = z;
      best_dist = dist;
    }
  }
  return best;
}

std::int64_t SublatticeDecomposition::num_classes() const {
  std::int64_t n = e1_modulus;
  for (int i = 1; i < d; ++i) n *= transverse_modulus;
  return n;
}

std::int64_t SublatticeDecomposition::class_of(const Point& z) const {
  if (z.d != d || !on_lattice(z, N)) throw std::invalid_argument("not an anchor lattice point");
  std::int64_t s = lattice_spacing(N);
  auto residue = [](std::int64_t v, std::int64_t m) { return ((v % m) + m) % m; };
  std::int64_t id = residue(z.c[0] / (N * N), e1_modulus);
  std::int64_t base = e1_modulus;
  for (int i = 1; i < d; ++i) {
    id += base * residue(z.c[static_cast<size_t>(i)] / s, transverse_modulus);
    base *= transverse_modulus;
  }
  return id;
}

SublatticeDecomposition sublattice_decomposition(int d, std::int64_t N) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("dimension out of range");
  if (N < 2) throw std::invalid_argument("block size must be at least 2");
  SublatticeDecomposition dec;
  dec.d = d;
  dec.N = N;
  // Same-class anchors must differ by at least the full block extent.
  std::int64_t needed = 2 * N * r5(N);
  std::int64_t m = std::max<std::int64_t>(9, ceil_div_pos(needed, lattice_spacing(N)));
  dec.transverse_modulus = m;
  dec.widened = m > 9;
  return dec;
}

Constants choose_constants(double alpha, int d, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (d < 2) throw InfeasibleConstants("strict constants need d >= 2");
  if (alpha >= d) throw InfeasibleConstants("strict constants need alpha < d");
  Constants c;
  c.alpha = alpha;
  c.gamma = gamma;
  c.d = d;
  c.epsilon = (d - alpha) / (4.0 * d);
  c.psi = gamma * c.epsilon / (30.0 * d);
  c.chi = 0.9 * (c.psi * c.psi / 2.0) * (d - 1) / (2.0 * (d + 1));
  return c;
}

Constants choose_constants_relaxed(double alpha, int d, double gamma,
                                   const ConstantOverrides& overrides) {
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
  if (d < 1) throw std::invalid_argument("dimension out of range");
  Constants c;
  c.alpha = alpha;
  c.gamma = gamma;
  c.d = d;
  c.relaxed = true;
  if (overrides.epsilon) c.epsilon = *overrides.epsilon;
  else if (alpha < d) c.epsilon = (d - alpha) / (4.0 * d);
  else throw InfeasibleConstants("epsilon needs an override when alpha >= d");
  c.psi = overrides.psi ? *overrides.psi : gamma * c.epsilon / (30.0 * d);
  c.chi = overrides.chi ? *overrides.chi
                        : 0.9 * (c.psi * c.psi / 2.0) * (d - 1) / (2.0 * (d + 1));
  if (!(c.epsilon > 0) || !(c.psi > 0) || !(c.chi > 0))
    throw InfeasibleConstants("constants must be positive");
  return c;
}

bool constants_feasible(const Constants& c) {
  return 2 * c.d * c.epsilon < c.d - c.alpha && c.psi <= c.gamma * c.epsilon / (30.0 * c.d) &&
         c.chi < (c.psi * c.psi / 2.0) * (c.d - 1) / (2.0 * (c.d + 1));
}

ScaleLadder build_ladder(std::int64_t L, const Constants& constants) {
  if (L < 2) throw std::invalid_argument("ladder needs L >= 2");
  ScaleLadder ladder;
  ladder.L = L;
  ladder.constants = constants;
  std::int64_t n1 = ceil_pow(L, constants.psi);
  if (static_cast<__int128>(n1) * n1 >= 2 * static_cast<__int128>(L))
    throw DegenerateLadder("N_1^2 >= 2L leaves no usable scale");
  ladder.sizes.push_back(n1);
  ladder.near_degenerate = n1 <= 2;
  for (int k = 1;; ++k) {
    double rho = constants.chi / 2.0 + constants.chi / std::pow(2.0, k);
    std::int64_t mult = ceil_pow(L, rho);
    if (mult < 2) throw DegenerateLadder("scale multiplier underflows to 1");
    std::int64_t next = ladder.sizes.back() * mult;
    if (static_cast<__int128>(next) * next >= 2 * static_cast<__int128>(L)) break;
    ladder.rhos.push_back(rho);
    ladder.sizes.push_back(next);
  }
  ladder.iota = static_cast<int>(ladder.sizes.size());
  return ladder;
}

bool SlowdownBox::contains(const Point& x) const {
  if (std::abs(x.c[0]) > L) return false;
  for (int i = 1; i < d; ++i)
    if (std::abs(x.c[static_cast<size_t>(i)]) > L * L) return false;
  return true;
}

bool SlowdownBox::strictly_inside(const Point& x) const {
  if (std::abs(x.c[0]) >= L) return false;
  for (int i = 1; i < d; ++i)
    if (std::abs(x.c[static_cast<size_t>(i)]) >= L * L) return false;
  return true;
}

}  // namespace rwre
