#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/exitstats.hpp"
#include "rwre/prf.hpp"
#include "rwre/regen.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

std::vector<Point> box2(int radius) {
  std::vector<Point> sites;
  for (std::int64_t x = -radius; x <= radius; ++x)
    for (std::int64_t y = -radius; y <= radius; ++y) sites.push_back(Point{x, y});
  return sites;
}

EnvironmentLaw strong_drift2() {
  return EnvironmentLaw::fixed_drift(2, 0.05, make_kernel(2, {0.7, 0.05, 0.125, 0.125}));
}

// Drift heavy enough that an N=5 block front catches nearly every path.
EnvironmentLaw drift91() {
  return EnvironmentLaw::fixed_drift(2, 0.02, make_kernel(2, {0.91, 0.03, 0.03, 0.03}));
}

EnvironmentLaw mixture2() {
  return EnvironmentLaw::finite_mixture(
      2, 0.05,
      {make_kernel(2, {0.4, 0.1, 0.25, 0.25}), make_kernel(2, {0.1, 0.4, 0.25, 0.25})},
      {0.5, 0.5});
}

double fitted_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  auto n = static_cast<double>(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Point draw_pmf(const Pmf& table, CounterStream& stream) {
  double u = stream.next_unit();
  double acc = 0;
  Point out = table.back().first;
  for (const auto& [x, w] : table) {
    acc += w;
    if (u < acc) return x;
  }
  return out;
}

}  // namespace

TEST_CASE("pmf helpers merge, convolve, and measure") {
  Pmf raw{{Point{1, 0}, 0.3}, {Point{1, 0}, 0.2}, {Point{0, 1}, 0.5}};
  Pmf clean = pmf_clean(raw);
  REQUIRE(clean.size() == 2);
  CHECK(clean[0].first == Point{0, 1});
  CHECK(clean[0].second == doctest::Approx(0.5));
  CHECK(clean[1].second == doctest::Approx(0.5));
  CHECK_THROWS_AS(pmf_clean(Pmf{{Point{0}, -0.1}}), std::invalid_argument);

  Pmf a{{Point{1, 0}, 1.0}};
  Pmf b{{Point{2, 3}, 1.0}};
  Pmf c = convolve_pmf(a, b);
  REQUIRE(c.size() == 1);
  CHECK(c[0].first == Point{3, 3});

  Pmf srw1{{Point{-1}, 0.5}, {Point{1}, 0.5}};
  Pmf two = convolve_pmf(srw1, srw1);
  REQUIRE(two.size() == 3);
  CHECK(two[1].first == Point{0});
  CHECK(two[1].second == doctest::Approx(0.5));

  CHECK(total_variation(srw1, srw1) == doctest::Approx(0.0));
  CHECK(total_variation(a, b) == doctest::Approx(1.0));

  Pmf skew{{Point{0}, 0.5}, {Point{2}, 0.5}};
  CHECK(pmf_mean(skew)[0] == doctest::Approx(1.0));
  CHECK(pmf_l1_variance(skew) == doctest::Approx(1.0));
}

TEST_CASE("exact exit reproduces the d=1 ruin probabilities") {
  Environment env{EnvironmentLaw::srw(1), 1};
  std::vector<Point> interior{Point{1}, Point{2}, Point{3}, Point{4}};
  ExitDistribution dist = exact_exit(env, interior, Point{2});
  REQUIRE(dist.mass.size() == 2);
  CHECK(dist.mass.at(Point{0}) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(dist.mass.at(Point{5}) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(dist.total == doctest::Approx(1.0).epsilon(1e-12));

  Environment biased{EnvironmentLaw::fixed_drift(1, 0.3, make_kernel(1, {0.6, 0.4})), 4};
  std::vector<Point> line;
  for (std::int64_t x = -4; x <= 4; ++x) line.push_back(Point{x});
  ExitDistribution bd = exact_exit(biased, line, Point{0});
  double rho5 = std::pow(2.0 / 3.0, 5);
  CHECK(bd.mass.at(Point{-5}) == doctest::Approx(rho5 / (1 + rho5)).epsilon(1e-12));
}

TEST_CASE("exact exit of the centered srw box is dihedral-symmetric") {
  Environment env{EnvironmentLaw::srw(2), 3};
  ExitDistribution dist = exact_exit(env, box2(3), Point{0, 0});
  CHECK(dist.total == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& [p, m] : dist.mass) {
    std::vector<Point> images{Point{-p[0], p[1]}, Point{p[0], -p[1]}, Point{-p[0], -p[1]},
                              Point{p[1], p[0]},  Point{-p[1], p[0]}, Point{p[1], -p[0]},
                              Point{-p[1], -p[0]}};
    for (const auto& q : images) {
      REQUIRE(dist.mass.count(q) == 1);
      CHECK(dist.mass.at(q) == doctest::Approx(m).epsilon(1e-11));
    }
  }
}

TEST_CASE("region estimator matches the exact law site by site") {
  Environment env{EnvironmentLaw::srw(2), 3};
  auto interior = box2(2);
  ExitDistribution dist = exact_exit(env, interior, Point{0, 0});
  const std::int64_t n = 100000;
  ExitHistogram hist = estimate_region_exit(env, interior, Point{0, 0}, n, 901, 5000);
  CHECK(hist.budget_exhausted == 0);
  CHECK(hist.total == n);
  for (const auto& [x, p] : dist.mass) {
    double phat = static_cast<double>(hist.counts.count(x) ? hist.counts.at(x) : 0) /
                  static_cast<double>(n);
    double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(phat - p) <= 4.0 * sigma + 1e-9);
  }
}

TEST_CASE("mixture box estimate converges to the exact law in total variation") {
  Environment env{mixture2(), 7};
  auto interior = box2(4);
  ExitDistribution dist = exact_exit(env, interior, Point{0, 0});
  Pmf exact = exit_pmf(dist);

  ExitHistogram hist = estimate_region_exit(env, interior, Point{0, 0}, 100000, 11, 5000);
  CHECK(total_variation(hist.to_pmf(), exact) < 0.02);

  // 1/sqrt(samples) decay of the estimation error.
  std::vector<double> lx, ly;
  for (std::int64_t n : {2000, 8000, 32000, 128000}) {
    ExitHistogram h = estimate_region_exit(env, interior, Point{0, 0}, n,
                                           mix64(77, static_cast<std::uint64_t>(n)), 5000);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(total_variation(h.to_pmf(), exact)));
  }
  double slope = fitted_slope(lx, ly);
  CHECK(slope > -0.6);
  CHECK(slope < -0.4);
}

TEST_CASE("budget-starved runs are reported, not silently dropped") {
  Environment env = plant_naive_trap(Environment{drift91(), 3}, Point{0, 0}, 2);
  ExitHistogram hist = estimate_region_exit(env, box2(4), Point{0, 0}, 500, 19, 50);
  CHECK(hist.total + hist.budget_exhausted == 500);
  CHECK(hist.budget_exhausted >= 450);
  CHECK_THROWS_AS(
      (void)ExitHistogram{}.to_pmf(), AllZeroCounts);
}

TEST_CASE("block estimates demand a middle-third start and stay worker-stable") {
  BlockSpec block(Point{0, 0}, 4, e1_direction(2));
  Environment env{EnvironmentLaw::srw(2), 12};
  CHECK_THROWS_AS(estimate_exit(env, block, Point{14, 0}, 10, 1, 0, 1), std::invalid_argument);

  ExitHistogram h1 = estimate_exit(env, block, Point{0, 0}, 4000, 33, 0, 1);
  ExitHistogram h4 = estimate_exit(env, block, Point{0, 0}, 4000, 33, 0, 4);
  CHECK(h1.counts == h4.counts);
  CHECK(h1.total == h4.total);
  CHECK(h1.front_total == h4.front_total);

  ExitHistogram a1 = estimate_exit(env.law, block, Point{0, 0}, 4000, 34, 0, 1);
  ExitHistogram a4 = estimate_exit(env.law, block, Point{0, 0}, 4000, 34, 0, 4);
  CHECK(a1.counts == a4.counts);
}

TEST_CASE("oversized regions are refused") {
  CHECK_THROWS_AS(block_interior(BlockSpec(Point{0, 0}, 40, e1_direction(2))), RegionTooLarge);
  std::vector<Point> big;
  for (std::int64_t x = 0; x < 100001; ++x) big.push_back(Point{x, 0});
  Environment env{EnvironmentLaw::srw(2), 1};
  CHECK_THROWS_AS(exact_exit(env, big, Point{0, 0}), RegionTooLarge);
}

TEST_CASE("derivative profile on hand-built front laws") {
  BlockSpec block(Point{0, 0}, 4, e1_direction(2));

  ExitDistribution unit;
  unit.block = block;
  unit.start = Point{0, 0};
  unit.mass[Point{16, 0}] = 1.0;
  unit.total = 1.0;
  DerivativeProfile prof = derivative_profile(unit);
  CHECK(prof.sup_mass == doctest::Approx(1.0));
  CHECK(prof.max_first_diff == doctest::Approx(1.0));
  CHECK(prof.max_second_diff == doctest::Approx(2.0));
  CHECK(prof.max_mixed_diff == doctest::Approx(0.0));
  CHECK(prof.max_second_diff <= 4.0 * prof.sup_mass);

  ExitDistribution uniform;
  uniform.block = block;
  uniform.start = Point{0, 0};
  for (std::int64_t y = -3; y <= 3; ++y) uniform.mass[Point{16, y}] = 1.0 / 7.0;
  uniform.total = 1.0;
  DerivativeProfile flat = derivative_profile(uniform);
  CHECK(flat.sup_mass == doctest::Approx(1.0 / 7.0));
  CHECK(flat.max_first_diff == doctest::Approx(0.0));
  CHECK(flat.max_second_diff == doctest::Approx(0.0));

  ExitDistribution backwall;
  backwall.block = block;
  backwall.start = Point{0, 0};
  backwall.mass[Point{-16, 0}] = 1.0;
  backwall.total = 1.0;
  CHECK_THROWS_AS(derivative_profile(backwall), EmptyFront);
}

TEST_CASE("exact drifted front profiles scale like 1/N and stay symmetric") {
  EnvironmentLaw law = strong_drift2();
  std::vector<double> lx, ly;
  for (std::int64_t N : {6, 8, 10, 12}) {
    Environment env{law, 5};
    BlockSpec block(Point{0, 0}, N, e1_direction(2));
    ExitDistribution dist = exact_exit(env, block, Point{0, 0});
    DerivativeProfile prof = derivative_profile(dist);
    CHECK(prof.front_sites > 0);
    CHECK(prof.max_second_diff <= 4.0 * prof.sup_mass + 1e-15);
    lx.push_back(std::log(static_cast<double>(N)));
    ly.push_back(std::log(prof.sup_mass));
    if (N == 8) {
      // Transverse mirror symmetry of the law carries to the exact exit mass.
      for (const auto& [x, m] : dist.mass) {
        Point mirror{x[0], -x[1]};
        REQUIRE(dist.mass.count(mirror) == 1);
        CHECK(std::abs(dist.mass.at(mirror) - m) <= 1e-12);
      }
      double up = dist.mass.count(Point{64, 1}) ? dist.mass.at(Point{64, 1}) : 0.0;
      double dn = dist.mass.count(Point{64, -1}) ? dist.mass.at(Point{64, -1}) : 0.0;
      CHECK(std::abs(up - dn) <= 1e-12);
    }
  }
  double slope = fitted_slope(lx, ly);
  CHECK(slope > -1.45);
  CHECK(slope < -0.55);
}

TEST_CASE("histogram-based profiles agree with exact ones at scale") {
  EnvironmentLaw law = strong_drift2();
  Environment env{law, 21};
  BlockSpec block(Point{0, 0}, 6, e1_direction(2));
  ExitHistogram hist = estimate_exit(env, block, Point{0, 0}, 20000, 55);
  DerivativeProfile mc = derivative_profile(hist);
  DerivativeProfile ex = derivative_profile(exact_exit(env, block, Point{0, 0}));
  CHECK(mc.front_sites > 0);
  CHECK(std::abs(mc.sup_mass - ex.sup_mass) < 0.02);
}

TEST_CASE("front conditioning needs front mass") {
  BlockSpec block(Point{0, 0}, 4, e1_direction(2));
  ExitDistribution side;
  side.block = block;
  side.mass[Point{-16, 0}] = 1.0;
  side.total = 1.0;
  CHECK_THROWS_AS(front_conditioned_pmf(side), EmptyFront);
  ExitDistribution no_block;
  no_block.mass[Point{1, 0}] = 1.0;
  CHECK_THROWS_AS(front_conditioned_pmf(no_block), std::invalid_argument);
}

TEST_CASE("binomial point masses come out of both the grid and the table") {
  Pmf srw1{{Point{-1}, 0.5}, {Point{1}, 0.5}};
  auto table = llt_convolution_table(srw1, 10);
  REQUIRE(table.count(Point{0}) == 1);
  CHECK(table.at(Point{0}) == doctest::Approx(252.0 / 1024.0).epsilon(1e-14));
  CHECK(llt_point_mass(srw1, 10, Point{0}) == doctest::Approx(252.0 / 1024.0).epsilon(1e-10));
  CHECK(std::abs(llt_point_mass(srw1, 10, Point{1})) < 1e-12);
  CHECK(table.count(Point{1}) == 0);
  double sum = 0;
  for (const auto& [x, m] : table) sum += m;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one-step bounds sit above the exact maxima") {
  Pmf law{{Point{1, 0}, 0.5}, {Point{-1, 0}, 0.3}, {Point{0, 1}, 0.2}};
  LltBounds b = llt_bounds(law, 1);
  REQUIRE(b.exact_available);
  CHECK(b.sup_exact == doctest::Approx(0.5));
  CHECK(b.first_exact == doctest::Approx(0.5));
  CHECK(b.sup_bound >= b.sup_exact - 1e-12);
  CHECK(b.quadrature_error < 1e-8);
}

TEST_CASE("quadrature bounds dominate convolution exact values") {
  Pmf srw1{{Point{-1}, 0.5}, {Point{1}, 0.5}};
  Pmf srw2{{Point{1, 0}, 0.25}, {Point{-1, 0}, 0.25}, {Point{0, 1}, 0.25}, {Point{0, -1}, 0.25}};
  Pmf drift{{Point{1, 0}, 0.55}, {Point{-1, 0}, 0.15}, {Point{0, 1}, 0.15}, {Point{0, -1}, 0.15}};
  Pmf asym{{Point{-1}, 0.2}, {Point{0}, 0.3}, {Point{2}, 0.5}};
  for (const Pmf& law : {srw1, srw2, drift, asym}) {
    for (std::int64_t n : {3, 9, 24}) {
      LltBounds b = llt_bounds(law, n);
      REQUIRE(b.exact_available);
      CHECK(b.sup_bound + 1e-12 >= b.sup_exact);
      CHECK(b.first_bound + 1e-12 >= b.first_exact);
      CHECK(b.second_bound + 1e-12 >= b.second_exact);
      CHECK(b.mixed_bound + 1e-12 >= b.mixed_exact);
    }
  }
}

TEST_CASE("planar srw mass peaks decay like 1/n") {
  Pmf srw2{{Point{1, 0}, 0.25}, {Point{-1, 0}, 0.25}, {Point{0, 1}, 0.25}, {Point{0, -1}, 0.25}};
  std::vector<double> lx, ly;
  for (std::int64_t n : {16, 32, 64, 128, 256}) {
    LltBounds b = llt_bounds(srw2, n);
    REQUIRE(b.exact_available);
    CHECK(b.sup_bound + 1e-12 >= b.sup_exact);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(b.sup_exact));
  }
  double slope = fitted_slope(lx, ly);
  CHECK(slope > -1.05);
  CHECK(slope < -0.95);
}

TEST_CASE("grid inversion agrees with direct convolution to 1e-10") {
  Pmf wide;
  double total = 0;
  for (std::int64_t i = -50; i < 50; ++i) {
    double w = static_cast<double>((i + 51) % 17 + 1);
    wide.emplace_back(Point{i}, w);
    total += w;
  }
  for (auto& [x, w] : wide) w /= total;
  auto table = llt_convolution_table(wide, 256);
  for (const Point& probe : {Point{0}, Point{1}, Point{-17}, Point{50}, Point{200}, Point{5000}}) {
    double exact = table.count(probe) ? table.at(probe) : 0.0;
    CHECK(std::abs(llt_point_mass(wide, 256, probe) - exact) < 1e-10);
  }

  Pmf plane;
  total = 0;
  for (std::int64_t x = -1; x <= 1; ++x)
    for (std::int64_t y = -1; y <= 1; ++y) {
      double w = static_cast<double>(3 + x + 2 * y + 3 * ((x + y + 4) % 2));
      plane.emplace_back(Point{x, y}, w);
      total += w;
    }
  for (auto& [x, w] : plane) w /= total;
  auto table2 = llt_convolution_table(plane, 64);
  for (const Point& probe : {Point{0, 0}, Point{3, -2}, Point{10, 0}, Point{64, 64}}) {
    double exact = table2.count(probe) ? table2.at(probe) : 0.0;
    CHECK(std::abs(llt_point_mass(plane, 64, probe) - exact) < 1e-10);
  }
}

TEST_CASE("llt guards its grids and inputs") {
  Pmf srw3{{Point{1, 0, 0}, 1.0 / 6}, {Point{-1, 0, 0}, 1.0 / 6}, {Point{0, 1, 0}, 1.0 / 6},
           {Point{0, -1, 0}, 1.0 / 6}, {Point{0, 0, 1}, 1.0 / 6}, {Point{0, 0, -1}, 1.0 / 6}};
  CHECK_THROWS_AS(llt_bounds(srw3, 2000), QuadratureFailure);
  Pmf defective{{Point{0}, 0.9}};
  CHECK_THROWS_AS(llt_bounds(defective, 3), std::invalid_argument);
  Pmf srw1{{Point{-1}, 0.5}, {Point{1}, 0.5}};
  CHECK_THROWS_AS(llt_bounds(srw1, 0), std::invalid_argument);
}

TEST_CASE("identical laws certify at zero budget") {
  Pmf mu{{Point{1, 0}, 0.25}, {Point{-1, 0}, 0.25}, {Point{0, 1}, 0.25}, {Point{0, -1}, 0.25}};
  ClosenessCertificate cert = check_closeness(mu, mu, 0.0, 0);
  CHECK(cert.certified);
  CHECK(cert.violated_clause == 0);
  CHECK(cert.measured_lambda <= 1e-12);
  CHECK(cert.max_displacement == 0);
  CHECK(cert.mean_residual <= 1e-12);
  CHECK(total_variation(cert.z0_law, mu) <= 1e-12);
}

TEST_CASE("a lattice shift recenters exactly inside K=2") {
  Pmf mu1{{Point{0, 0}, 0.25}, {Point{1, 0}, 0.25}, {Point{0, 1}, 0.25}, {Point{1, 1}, 0.25}};
  Pmf mu2;
  for (const auto& [x, w] : mu1) mu2.emplace_back(x + Point{1, 0}, w);
  ClosenessCertificate cert = check_closeness(mu1, mu2, 0.0, 2);
  CHECK(cert.certified);
  CHECK(cert.measured_lambda <= 1e-12);
  CHECK(cert.max_displacement == 1);
  CHECK_THROWS_AS(check_closeness(mu1, mu2, 0.5, 1), InfeasibleCoupling);
  CHECK_THROWS_AS(check_closeness(mu1, mu2, 0.5, 0), InfeasibleCoupling);
}

TEST_CASE("inflated far mass is refused on the second-moment clause") {
  Pmf mu1{{Point{0, 0}, 0.6}, {Point{1, 0}, 0.1}, {Point{-1, 0}, 0.1},
          {Point{0, 1}, 0.1},  {Point{0, -1}, 0.1}};
  const double eps = 2e-3;
  Pmf mu2 = mu1;
  mu2[0].second -= 2 * eps;
  mu2.emplace_back(Point{25, 0}, eps);
  mu2.emplace_back(Point{-25, 0}, eps);
  ClosenessCertificate cert = check_closeness(mu1, mu2, 0.01, 6);
  CHECK_FALSE(cert.certified);
  CHECK(cert.violated_clause == 5);
  CHECK(cert.measured_lambda <= 0.01 + 1e-12);
  CHECK(cert.second_moment_lhs > cert.second_moment_rhs);
}

TEST_CASE("issued certificates satisfy the exact clauses under fuzzing") {
  const std::vector<Point> bumps{Point{1, 0}, Point{0, 1}, Point{-1, 0}, Point{0, -1}};
  int issued = 0;
  for (std::uint64_t trial = 0; trial < 24; ++trial) {
    CounterStream stream = tagged_stream(mix64(2024, trial), kDomDerive);
    Pmf mu1;
    double total = 0;
    int atoms = 5 + static_cast<int>(trial % 5);
    for (int i = 0; i < atoms; ++i) {
      Point p{static_cast<std::int64_t>(stream.next_u64() % 7) - 3,
              static_cast<std::int64_t>(stream.next_u64() % 7) - 3};
      double w = stream.next_unit_pos();
      mu1.emplace_back(p, w);
      total += w;
    }
    for (auto& [x, w] : mu1) w /= total;
    mu1 = pmf_clean(std::move(mu1));

    // mu2 leaks a small fraction of mu1 one lattice step sideways.
    double beta = 0.05 + 0.05 * static_cast<double>(trial % 3);
    Point v = bumps[trial % bumps.size()];
    Pmf mu2;
    for (const auto& [x, w] : mu1) {
      mu2.emplace_back(x, (1 - beta) * w);
      mu2.emplace_back(x + v, beta * w);
    }
    mu2 = pmf_clean(std::move(mu2));

    for (std::int64_t K : {2, 4, 8, 16}) {
      ClosenessCertificate cert;
      try {
        cert = check_closeness(mu1, mu2, 0.7, K);
      } catch (const InfeasibleCoupling&) {
        continue;
      }
      if (!cert.certified) continue;
      ++issued;
      CHECK(cert.mean_residual <= 1e-9);
      CHECK(cert.max_displacement <= std::max<std::int64_t>(K - 1, 0));
      CHECK(cert.measured_lambda <= 0.7 + 1e-12);
      CHECK(cert.second_moment_lhs <= cert.second_moment_rhs + 1e-12);
      CHECK(std::abs(pmf_total(cert.z0_law) - 1.0) <= 1e-9);
    }
  }
  CHECK(issued >= 10);
}

TEST_CASE("closeness rejects malformed inputs") {
  Pmf mu{{Point{0}, 1.0}};
  CHECK_THROWS_AS(check_closeness(mu, mu, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(check_closeness(mu, mu, 0.1, -1), std::invalid_argument);
  Pmf bad{{Point{0}, 0.7}};
  CHECK_THROWS_AS(check_closeness(mu, bad, 0.1, 2), std::invalid_argument);
}

TEST_CASE("companion of an exact match is the identity") {
  Pmf mu{{Point{0, 0}, 0.4}, {Point{2, 1}, 0.35}, {Point{-1, 3}, 0.25}};
  CompanionSampler sampler = companion_sampler(mu, mu, 0.0);
  CHECK(sampler.cert.K == 0);
  CounterStream stream = tagged_stream(7, kDomDerive);
  for (const auto& [x, w] : mu)
    for (int rep = 0; rep < 20; ++rep) CHECK(sampler(x, stream) == x);
}

TEST_CASE("companion of a shifted law stays within the certificate displacement") {
  Pmf mu1{{Point{0, 0}, 0.25}, {Point{1, 0}, 0.25}, {Point{0, 1}, 0.25}, {Point{1, 1}, 0.25}};
  Pmf mu2;
  for (const auto& [x, w] : mu1) mu2.emplace_back(x + Point{1, 0}, w);
  CompanionSampler sampler = companion_sampler(mu1, mu2, 0.1);
  CHECK(sampler.cert.K == 2);
  CounterStream stream = tagged_stream(8, kDomDerive);
  for (const auto& [x, w] : mu2) {
    for (int rep = 0; rep < 20; ++rep) {
      Point y = sampler(x, stream);
      CHECK(norm_inf(y - x) < 2);
      bool in_support = false;
      for (const auto& [s, ws] : mu1) in_support = in_support || s == y;
      CHECK(in_support);
    }
  }
}

TEST_CASE("companion marginal matches its certificate empirically") {
  Pmf target{{Point{0, 0}, 0.6}, {Point{1, 0}, 0.1}, {Point{-1, 0}, 0.1},
             {Point{0, 1}, 0.1},  {Point{0, -1}, 0.1}};
  Pmf x_law{{Point{0, 0}, 0.5}, {Point{1, 0}, 0.2}, {Point{-1, 0}, 0.1},
            {Point{0, 1}, 0.1},  {Point{0, -1}, 0.1}};
  CompanionSampler sampler = companion_sampler(target, x_law, 0.5, 16);
  const int n = 100000;
  CounterStream stream = tagged_stream(99, kDomDerive);
  std::map<Point, std::int64_t> empirical;
  std::int64_t max_disp = 0;
  for (int i = 0; i < n; ++i) {
    Point x = draw_pmf(x_law, stream);
    Point y = sampler(x, stream);
    ++empirical[y];
    max_disp = std::max(max_disp, norm_inf(y - x));
  }
  CHECK(max_disp <= sampler.cert.max_displacement);
  for (const auto& [site, w] : sampler.cert.z0_law) {
    double phat = static_cast<double>(empirical.count(site) ? empirical.at(site) : 0) /
                  static_cast<double>(n);
    double sigma = std::sqrt(w * (1 - w) / static_cast<double>(n));
    CHECK(std::abs(phat - w) <= 4.0 * sigma + 1e-9);
  }
}

TEST_CASE("cube discrepancy threshold has the stated closed form") {
  CHECK(cube_discrepancy_bound(0.5, 5, 100) ==
        doctest::Approx(std::pow(100.0, -7.0 / 3.0)).epsilon(1e-12));
  CHECK(cube_discrepancy_bound(0.5, 5, 100) == doctest::Approx(2.1544e-5).epsilon(1e-3));
}

TEST_CASE("a strongly drifted block classifies good and stays good with more data") {
  EnvironmentLaw law = drift91();
  Environment env{law, 41};
  BlockSpec block(Point{0, 0}, 5, e1_direction(2));
  ClassifyReport rep = classify_block(env, block, 0.5, 400, 1001);
  CHECK(rep.good);
  CHECK(rep.front_margin > 0);
  CHECK(rep.mean_margin > 0);
  CHECK(rep.cube_margin > 0);
  CHECK(rep.failures.empty());

  ClassifyReport rep2 = classify_block(env, block, 0.5, 1600, 1001);
  CHECK(rep2.good);
}

TEST_CASE("a planted trap flips the block to bad through the front criterion") {
  Environment env = plant_naive_trap(Environment{drift91(), 43}, Point{0, 0}, 2);
  BlockSpec block(Point{0, 0}, 5, e1_direction(2));
  ClassifyConfig cfg;
  cfg.step_budget = 1200;
  ClassifyReport rep = classify_block(env, block, 0.5, 250, 77, cfg);
  CHECK_FALSE(rep.good);
  CHECK(rep.front_margin < 0);
  bool front_failure = false;
  for (const auto& f : rep.failures)
    front_failure = front_failure || f.find("front exit frequency") != std::string::npos;
  CHECK(front_failure);
}

TEST_CASE("classification covers configured sub-blocks and rejects bad input") {
  EnvironmentLaw law = drift91();
  Environment env{law, 47};
  BlockSpec block(Point{0, 0}, 6, e1_direction(2));
  ClassifyConfig cfg;
  cfg.sub_sizes = {4};
  ClassifyReport rep = classify_block(env, block, 0.5, 300, 555, cfg);
  CHECK(rep.good);

  CHECK_THROWS_AS(classify_block(env, block, 0.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(classify_block(env, block, 1.5, 100, 1), std::invalid_argument);
  ClassifyConfig bad;
  bad.sub_sizes = {2};
  CHECK_THROWS_AS(classify_block(env, block, 0.5, 100, 1, bad), std::invalid_argument);
}

TEST_CASE("single-summand ladder check reduces to a plain certificate") {
  SumLadderReport rep = sum_ladder_check(strong_drift2(), 10, 1, 0.2, 12, 314);
  CHECK(rep.ladder_factor == 1);
  CHECK(rep.certified);
  CHECK(rep.cert.measured_lambda <= 1e-12);
}

TEST_CASE("four-summand ladder check certifies within the inflated budget") {
  SumLadderReport rep =
      sum_ladder_check(strong_drift2(), 10, 4, 0.2, 12, 314, SummandMode::kExact, 30000);
  CHECK(rep.budget_lambda == doctest::Approx(0.2));
  CHECK(rep.budget_K == 96);
  CHECK(rep.certified);
  CHECK(rep.slack_lambda > 0);
  CHECK(rep.cert.mean_residual <= 1e-9);
  CHECK(rep.cert.max_displacement <= 95);
}

TEST_CASE("adversarial summands stay inside their own and the inflated budget") {
  SumLadderReport rep =
      sum_ladder_check(strong_drift2(), 10, 4, 0.2, 12, 314, SummandMode::kAdversarial, 30000);
  CHECK(rep.summands_certified);
  CHECK(rep.certified);
}

TEST_CASE("ladder check enforces the summand-count bound") {
  CHECK_THROWS_AS(sum_ladder_check(strong_drift2(), 10, 5, 0.2, 12, 1), std::invalid_argument);
}

TEST_CASE("single-scale decomposition is the identity") {
  EnvironmentLaw law =
      EnvironmentLaw::fixed_drift(2, 0.02, make_kernel(2, {0.93, 0.03, 0.02, 0.02}));
  DecompositionReport rep = convolution_decomposition_check(law, 10, 1, 200, 2717);
  CHECK(rep.identity);
  CHECK(rep.samples == 200);
  CHECK(rep.median_residual == doctest::Approx(0.0));
  REQUIRE(rep.residual_tail.size() >= 2);
  CHECK(rep.residual_tail[0].second == doctest::Approx(1.0));
  CHECK(rep.residual_tail[1].second == doctest::Approx(0.0));
}

TEST_CASE("two-scale decomposition has a monotone residual tail at slab scale") {
  EnvironmentLaw law =
      EnvironmentLaw::fixed_drift(2, 0.02, make_kernel(2, {0.93, 0.03, 0.02, 0.02}));
  DecompositionReport rep = convolution_decomposition_check(law, 12, 2, 300, 2719);
  CHECK(rep.samples >= 290);
  CHECK(rep.skipped <= 10);
  for (size_t i = 1; i < rep.residual_tail.size(); ++i)
    CHECK(rep.residual_tail[i].second <= rep.residual_tail[i - 1].second + 1e-12);
  CHECK(rep.max_slab_radius >= 1);
  CHECK(rep.median_residual <= static_cast<double>(rep.max_slab_radius));
}

TEST_CASE("ellipsoid floor reports the deterministic and degenerate cases") {
  Environment det{
      EnvironmentLaw::fixed_drift(2, 1e-9, make_kernel(2, {1 - 3e-9, 1e-9, 1e-9, 1e-9})), 3};
  BlockSpec block(Point{0, 0}, 4, e1_direction(2));
  ExitDistribution dist = exact_exit(det, block, Point{0, 0});
  REQUIRE(dist.mass.count(Point{16, 0}) == 1);
  CHECK(dist.mass.at(Point{16, 0}) > 1 - 1e-6);

  RegenerationSummary degenerate;
  degenerate.mean_displacement = {1.0, 0.0};
  degenerate.displacement_covariance = {{0.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(lower_bound_check(dist, degenerate, 2.0), SingularCovariance);

  RegenerationSummary unit;
  unit.mean_displacement = {1.0, 0.0};
  unit.displacement_covariance = {{1.0, 0.0}, {0.0, 1.0}};
  // a = 0.05 keeps only the center front site inside the ellipsoid.
  LowerBoundReport rep = lower_bound_check(dist, unit, 0.05);
  CHECK(rep.threshold == doctest::Approx(0.8));
  CHECK(rep.sites_in_ellipsoid == 1);
  CHECK(rep.min_mass > 1 - 1e-6);
  CHECK(rep.implied_c == doctest::Approx(4.0 * std::exp(0.15)).epsilon(1e-6));

  RegenerationSummary no_drift;
  no_drift.mean_displacement = {0.0, 0.0};
  no_drift.displacement_covariance = {{1.0, 0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(lower_bound_check(dist, no_drift, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(lower_bound_check(dist, unit, 0.0), std::invalid_argument);
}

TEST_CASE("ellipsoid floor is positive for a drifted law and shrinks with a") {
  EnvironmentLaw law = strong_drift2();
  Environment env{law, 63};
  BlockSpec block(Point{0, 0}, 6, e1_direction(2));
  ExitDistribution dist = exact_exit(env, block, Point{0, 0});

  StopRule stop = StopRule::budget_only(200000);
  RunResult run = run_quenched(env, Point{0, 0}, stop, 864, 0);
  auto records = detect_regenerations(run.traj, e1_direction(2));
  RegenerationSummary summary = summarize(records, 0.5);
  REQUIRE(summary.count > 100);

  LowerBoundReport rep = lower_bound_check(dist, summary, 1.0);
  CHECK(rep.sites_in_ellipsoid >= 1);
  CHECK(rep.min_mass > 0);
  CHECK(rep.implied_c > 0);

  LowerBoundReport tiny = lower_bound_check(dist, summary, 1e-9);
  CHECK(tiny.sites_in_ellipsoid <= 1);
}
