#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "rwre/errors.hpp"
#include "rwre/exitstats.hpp"

namespace rwre {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kGridCellLimit = 4e7;
constexpr double kTableCellLimit = 1.6e7;

struct StepInfo {
  Pmf atoms;
  int d = 1;
  std::array<std::int64_t, kMaxDim> lo{};
  std::array<std::int64_t, kMaxDim> hi{};
  std::int64_t r_max = 0;
};

StepInfo validate_step(const Pmf& law, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  StepInfo info;
  info.atoms = pmf_clean(law);
  if (info.atoms.empty()) throw std::invalid_argument("empty step law");
  info.d = info.atoms.front().first.d;
  double total = 0;
  for (const auto& [x, w] : info.atoms) {
    total += w;
    for (int j = 0; j < info.d; ++j) {
      info.lo[static_cast<size_t>(j)] = std::min(info.lo[static_cast<size_t>(j)], x[j]);
      info.hi[static_cast<size_t>(j)] = std::max(info.hi[static_cast<size_t>(j)], x[j]);
      info.r_max = std::max(info.r_max, std::abs(x[j]));
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("step law must sum to one");
  return info;
}

// Uniform grid sums of |chi|^k (k even) against the weights 1 and
// 2(1 - cos t_j) per axis, normalized to averages over [-pi, pi)^d. For even
// k the integrands are trigonometric polynomials, so any grid finer than
// their degree sums them exactly.
struct GridSums {
  double plain = 0;
  std::array<double, kMaxDim> sec{};
};

GridSums grid_pass(const StepInfo& s, std::int64_t k, std::int64_t M) {
  double cells = std::pow(static_cast<double>(M), s.d);
  if (cells > kGridCellLimit) throw QuadratureFailure("quadrature grid too large");
  std::vector<double> ts(static_cast<size_t>(M));
  std::vector<double> sec_w(static_cast<size_t>(M));
  for (std::int64_t i = 0; i < M; ++i) {
    double t = -kPi + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(M);
    ts[static_cast<size_t>(i)] = t;
    sec_w[static_cast<size_t>(i)] = 2.0 * (1.0 - std::cos(t));
  }
  GridSums sums;
  std::vector<std::int64_t> idx(static_cast<size_t>(s.d), 0);
  const double half_k = static_cast<double>(k) / 2.0;
  while (true) {
    double re = 0, im = 0;
    for (const auto& [a, w] : s.atoms) {
      double ang = 0;
      for (int j = 0; j < s.d; ++j)
        ang += static_cast<double>(a[j]) * ts[static_cast<size_t>(idx[static_cast<size_t>(j)])];
      re += w * std::cos(ang);
      im += w * std::sin(ang);
    }
    double mod2 = re * re + im * im;
    double p = k == 0 ? 1.0 : std::pow(mod2, half_k);
    sums.plain += p;
    for (int j = 0; j < s.d; ++j)
      sums.sec[static_cast<size_t>(j)] +=
          sec_w[static_cast<size_t>(idx[static_cast<size_t>(j)])] * p;
    int j = 0;
    while (j < s.d && ++idx[static_cast<size_t>(j)] == M) idx[static_cast<size_t>(j++)] = 0;
    if (j == s.d) break;
  }
  double norm = 1.0;
  for (int j = 0; j < s.d; ++j) norm /= static_cast<double>(M);
  sums.plain *= norm;
  for (int j = 0; j < s.d; ++j) sums.sec[static_cast<size_t>(j)] *= norm;
  return sums;
}

// Grid average of |chi|^k with a doubled-grid discrepancy estimate.
GridSums checked_pass(const StepInfo& s, std::int64_t k, double& err) {
  std::int64_t M = std::max<std::int64_t>(16, k * s.r_max + 8);
  GridSums coarse = grid_pass(s, k, M);
  GridSums fine = grid_pass(s, k, 2 * M);
  err = std::max(err, std::abs(coarse.plain - fine.plain));
  for (int j = 0; j < s.d; ++j)
    err = std::max(err, std::abs(coarse.sec[static_cast<size_t>(j)] -
                                 fine.sec[static_cast<size_t>(j)]));
  return fine;
}

std::complex<double> cpow_int(std::complex<double> base, std::int64_t e) {
  std::complex<double> acc(1.0, 0.0);
  while (e > 0) {
    if (e & 1) acc *= base;
    base *= base;
    e >>= 1;
  }
  return acc;
}

struct TableScans {
  double sup = 0;
  double first = 0;
  double second = 0;
  double mixed = 0;
};

TableScans scan_table(const std::map<Point, double>& table, int d) {
  TableScans sc;
  auto value = [&](const Point& y) {
    auto it = table.find(y);
    return it == table.end() ? 0.0 : it->second;
  };
  for (const auto& [x, m] : table) {
    sc.sup = std::max(sc.sup, m);
    for (int j = 0; j < d; ++j) {
      for (int sgn : {-1, 1}) {
        Point y = x;
        y[j] += sgn;
        sc.first = std::max(sc.first, std::abs(m - value(y)));
      }
      for (int off = -1; off <= 1; ++off) {
        Point c = x;
        c[j] += off;
        Point lo = c, hi = c;
        lo[j] -= 1;
        hi[j] += 1;
        sc.second = std::max(sc.second, std::abs(value(hi) - 2 * value(c) + value(lo)));
      }
    }
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        for (int oi = -1; oi <= 0; ++oi) {
          for (int oj = -1; oj <= 0; ++oj) {
            Point c = x;
            c[i] += oi;
            c[j] += oj;
            Point ci = c, cj = c, cij = c;
            ci[i] += 1;
            cj[j] += 1;
            cij[i] += 1;
            cij[j] += 1;
            sc.mixed = std::max(
                sc.mixed, std::abs(value(cij) - value(ci) - value(cj) + value(c)));
          }
        }
      }
    }
  }
  return sc;
}

}  // namespace

std::map<Point, double> llt_convolution_table(const Pmf& step_law, std::int64_t n) {
  StepInfo s = validate_step(step_law, n);
  if (s.atoms.size() > 10000) throw RegionTooLarge("step support exceeds 1e4 points");
  // The box [min(0, n*lo), max(0, n*hi)] contains every partial sum, so the
  // stepwise update never writes outside it.
  std::array<std::int64_t, kMaxDim> lo{}, dims{};
  double cells_d = 1;
  for (int j = 0; j < s.d; ++j) {
    lo[static_cast<size_t>(j)] = std::min<std::int64_t>(0, n * s.lo[static_cast<size_t>(j)]);
    std::int64_t hi = std::max<std::int64_t>(0, n * s.hi[static_cast<size_t>(j)]);
    dims[static_cast<size_t>(j)] = hi - lo[static_cast<size_t>(j)] + 1;
    cells_d *= static_cast<double>(dims[static_cast<size_t>(j)]);
  }
  if (cells_d > kTableCellLimit) throw RegionTooLarge("convolution table exceeds the cell budget");
  const auto cells = static_cast<std::size_t>(cells_d);
  std::array<std::int64_t, kMaxDim> stride{};
  stride[0] = 1;
  for (int j = 1; j < s.d; ++j)
    stride[static_cast<size_t>(j)] =
        stride[static_cast<size_t>(j - 1)] * dims[static_cast<size_t>(j - 1)];
  auto index_of = [&](const Point& x) {
    std::int64_t i = 0;
    for (int j = 0; j < s.d; ++j)
      i += (x[j] - lo[static_cast<size_t>(j)]) * stride[static_cast<size_t>(j)];
    return static_cast<std::size_t>(i);
  };
  std::vector<std::int64_t> atom_delta;
  atom_delta.reserve(s.atoms.size());
  for (const auto& [a, w] : s.atoms) {
    std::int64_t delta = 0;
    for (int j = 0; j < s.d; ++j) delta += a[j] * stride[static_cast<size_t>(j)];
    atom_delta.push_back(delta);
  }

  std::vector<double> cur(cells, 0.0), next(cells, 0.0);
  cur[index_of(Point(s.d))] = 1.0;
  for (std::int64_t t = 0; t < n; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
      double m = cur[i];
      if (m == 0) continue;
      for (size_t ai = 0; ai < s.atoms.size(); ++ai)
        next[i + static_cast<std::size_t>(atom_delta[ai])] += m * s.atoms[ai].second;
    }
    cur.swap(next);
  }

  std::map<Point, double> out;
  for (std::size_t i = 0; i < cells; ++i) {
    if (cur[i] == 0) continue;
    Point x(s.d);
    std::size_t rest = i;
    for (int j = s.d - 1; j >= 0; --j) {
      auto st = static_cast<std::size_t>(stride[static_cast<size_t>(j)]);
      x[j] = static_cast<std::int64_t>(rest / st) + lo[static_cast<size_t>(j)];
      rest %= st;
    }
    out[x] = cur[i];
  }
  return out;
}

double llt_point_mass(const Pmf& step_law, std::int64_t n, const Point& x) {
  StepInfo s = validate_step(step_law, n);
  if (x.d != s.d) throw std::invalid_argument("point dimension mismatch");
  // chi^n e^{-i<x,t>} is a trigonometric polynomial; a grid beyond its degree
  // sums the inversion integral exactly.
  std::int64_t M = std::max<std::int64_t>(8, n * s.r_max + norm_inf(x) + 2);
  double cells = std::pow(static_cast<double>(M), s.d);
  if (cells > kGridCellLimit) throw QuadratureFailure("inversion grid too large");
  std::vector<double> ts(static_cast<size_t>(M));
  for (std::int64_t i = 0; i < M; ++i)
    ts[static_cast<size_t>(i)] = -kPi + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(M);
  std::vector<std::int64_t> idx(static_cast<size_t>(s.d), 0);
  double acc = 0;
  while (true) {
    double re = 0, im = 0, xang = 0;
    for (int j = 0; j < s.d; ++j) {
      double t = ts[static_cast<size_t>(idx[static_cast<size_t>(j)])];
      xang += static_cast<double>(x[j]) * t;
    }
    for (const auto& [a, w] : s.atoms) {
      double ang = 0;
      for (int j = 0; j < s.d; ++j)
        ang += static_cast<double>(a[j]) * ts[static_cast<size_t>(idx[static_cast<size_t>(j)])];
      re += w * std::cos(ang);
      im += w * std::sin(ang);
    }
    std::complex<double> term = cpow_int({re, im}, n) * std::polar(1.0, -xang);
    acc += term.real();
    int j = 0;
    while (j < s.d && ++idx[static_cast<size_t>(j)] == M) idx[static_cast<size_t>(j++)] = 0;
    if (j == s.d) break;
  }
  for (int j = 0; j < s.d; ++j) acc /= static_cast<double>(M);
  return acc;
}

LltBounds llt_bounds(const Pmf& step_law, std::int64_t n) {
  StepInfo s = validate_step(step_law, n);
  LltBounds out;
  out.n = n;

  // Even powers integrate exactly on the grid; odd powers are sandwiched by
  // Cauchy-Schwarz between the adjacent even powers, which keeps every
  // reported number a true upper bound.
  double err = 0;
  double e_plain;
  std::array<double, kMaxDim> e_sec{};
  if (n % 2 == 0) {
    GridSums g = checked_pass(s, n, err);
    e_plain = g.plain;
    e_sec = g.sec;
  } else {
    GridSums ga = checked_pass(s, n - 1, err);
    GridSums gb = checked_pass(s, n + 1, err);
    e_plain = std::sqrt(ga.plain * gb.plain);
    for (int j = 0; j < s.d; ++j)
      e_sec[static_cast<size_t>(j)] = std::sqrt(ga.sec[static_cast<size_t>(j)] *
                                                gb.sec[static_cast<size_t>(j)]);
  }
  out.quadrature_error = err;
  if (err > 1e-8) throw QuadratureFailure("quadrature discrepancy above 1e-8");

  out.sup_bound = e_plain;
  for (int j = 0; j < s.d; ++j) {
    double sj = e_sec[static_cast<size_t>(j)];
    out.second_bound = std::max(out.second_bound, sj);
    out.first_bound = std::max(out.first_bound, std::sqrt(sj * e_plain));
    for (int i = 0; i < j; ++i)
      out.mixed_bound =
          std::max(out.mixed_bound, std::sqrt(e_sec[static_cast<size_t>(i)] * sj));
  }

  try {
    auto table = llt_convolution_table(step_law, n);
    TableScans sc = scan_table(table, s.d);
    out.exact_available = true;
    out.sup_exact = sc.sup;
    out.first_exact = sc.first;
    out.second_exact = sc.second;
    out.mixed_exact = sc.mixed;
  } catch (const RegionTooLarge&) {
    out.exact_available = false;
  }
  return out;
}

}  // namespace rwre
