#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rwre/env.hpp"
#include "rwre/errors.hpp"
#include "rwre/prf.hpp"
#include "rwre/regen.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

// Triple-loop checker applying the three regeneration conditions literally.
std::vector<RegenerationRecord> brute_regenerations(const Trajectory& traj,
                                                    std::vector<double> ell) {
  ell = normalize_direction(ell);
  const auto& pos = traj.positions;
  const auto n = static_cast<std::int64_t>(pos.size()) - 1;
  std::vector<double> p(pos.size());
  for (size_t i = 0; i < pos.size(); ++i) p[i] = dot(pos[i], ell);

  std::vector<RegenerationRecord> out;
  std::int64_t prev = 0;
  for (std::int64_t t = 0; t < n; ++t) {
    bool ok = true;
    for (std::int64_t s = 0; s < t && ok; ++s)
      if (p[static_cast<size_t>(s)] >= p[static_cast<size_t>(t)]) ok = false;
    if (!ok || p[static_cast<size_t>(t) + 1] <= p[static_cast<size_t>(t)]) continue;
    for (std::int64_t s = t + 2; s <= n && ok; ++s)
      if (p[static_cast<size_t>(s)] <= p[static_cast<size_t>(t) + 1]) ok = false;
    if (!ok) continue;
    RegenerationRecord r;
    r.tau = t;
    r.position = pos[static_cast<size_t>(t)];
    r.slab_duration = t - prev;
    r.slab_displacement = pos[static_cast<size_t>(t)] - pos[static_cast<size_t>(prev)];
    std::int64_t rad = 0;
    for (std::int64_t s = prev; s <= t; ++s)
      rad = std::max(rad, norm_inf(pos[static_cast<size_t>(s)] -
                                   pos[static_cast<size_t>(prev)]));
    r.radius = rad;
    r.certified_margin =
        t + 2 > n ? 0.0 : p[static_cast<size_t>(n)] - p[static_cast<size_t>(t) + 1];
    out.push_back(r);
    prev = t;
  }
  return out;
}

Trajectory path_1d(const std::vector<std::int64_t>& levels) {
  Trajectory traj;
  traj.start = Point{levels.at(0)};
  for (auto v : levels) traj.positions.push_back(Point{v});
  for (size_t i = 1; i < levels.size(); ++i)
    traj.steps.push_back(levels[i] > levels[i - 1] ? 0 : 1);
  return traj;
}

bool same_records(const std::vector<RegenerationRecord>& a,
                  const std::vector<RegenerationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].tau != b[i].tau || !(a[i].position == b[i].position) ||
        a[i].slab_duration != b[i].slab_duration ||
        !(a[i].slab_displacement == b[i].slab_displacement) ||
        a[i].radius != b[i].radius ||
        a[i].certified_margin != b[i].certified_margin)
      return false;
  }
  return true;
}

EnvironmentLaw drifted2() {
  return EnvironmentLaw::fixed_drift(2, 0.1, make_kernel(2, {0.4, 0.1, 0.25, 0.25}));
}

std::vector<RegenerationRecord> synthetic_iid_records(std::uint64_t seed, int n) {
  auto stream = tagged_stream(mix64(seed, "synthetic-slabs"), kDomDerive);
  std::vector<RegenerationRecord> recs;
  std::int64_t tau = 0;
  Point pos{0, 0};
  for (int k = 0; k < n; ++k) {
    auto dur = 1 + static_cast<std::int64_t>(stream.next_u64() % 9);
    std::int64_t forward = 1 + static_cast<std::int64_t>(stream.next_u64() % dur);
    std::int64_t side = static_cast<std::int64_t>(stream.next_u64() % 5) - 2;
    tau += dur;
    pos = pos + Point{forward, side};
    RegenerationRecord r;
    r.tau = tau;
    r.position = pos;
    r.slab_duration = dur;
    r.slab_displacement = Point{forward, side};
    r.radius = std::max(forward, std::abs(side));
    r.certified_margin = 5;
    recs.push_back(r);
  }
  return recs;
}

}  // namespace

TEST_CASE("monotone path certifies every interior time") {
  auto traj = path_1d({0, 1, 2, 3, 4});
  auto recs = detect_regenerations(traj, {1.0});
  REQUIRE(recs.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(recs[i].tau == static_cast<std::int64_t>(i));
  CHECK(recs[0].certified_margin == 3.0);
  CHECK(recs[1].certified_margin == 2.0);
  CHECK(recs[2].certified_margin == 1.0);
  CHECK(recs[3].certified_margin == 0.0);  // empty observed future
  CHECK(recs[0].slab_duration == 0);
  CHECK(recs[1].slab_duration == 1);
}

TEST_CASE("single regeneration after an early dip") {
  auto traj = path_1d({0, 1, 0, 1, 2, 3});
  auto recs = detect_regenerations(traj, {1.0});
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].tau == 4);
  CHECK(recs[0].certified_margin == 0.0);
  CHECK(recs[0].slab_duration == 4);
  CHECK(recs[0].slab_displacement == Point{2});
  CHECK(recs[0].radius == 2);
}

TEST_CASE("radius measures the whole slab, not the endpoint") {
  // dips to -2 before climbing; the revisit of level 0 disqualifies t=4
  auto traj = path_1d({0, -1, -2, -1, 0, 1, 2, 3});
  auto recs = detect_regenerations(traj, {1.0});
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].tau == 5);
  CHECK(recs[0].radius == 2);  // max deviation from the start, not the net move
  CHECK(recs[0].slab_displacement == Point{1});
  CHECK(recs[0].certified_margin == 1.0);
  CHECK(recs[1].tau == 6);
  CHECK(recs[1].slab_duration == 1);
  CHECK(recs[1].radius == 1);
  CHECK(recs[1].certified_margin == 0.0);
}

TEST_CASE("detector equals the brute-force checker on random paths") {
  int n_paths = 1000;
  for (int trial = 0; trial < n_paths; ++trial) {
    auto stream = tagged_stream(mix64(505, "regen-fuzz"), kDomDerive);
    for (int skip = 0; skip < trial; ++skip) stream.next_u64();
    std::uint64_t walk_seed = stream.next_u64();
    int d = 1 + static_cast<int>(walk_seed % 3);
    std::int64_t len = 20 + static_cast<std::int64_t>(mix64(walk_seed, 1) % 980);

    EnvironmentLaw law = trial % 3 == 0 ? EnvironmentLaw::srw(d) : [&] {
      std::vector<double> w(static_cast<size_t>(2 * d), 1.0 / (2 * d));
      w[0] += 0.3 / (2 * d);
      w[1] -= 0.3 / (2 * d);
      return EnvironmentLaw::fixed_drift(d, 0.1 / d, make_kernel(d, w));
    }();
    Environment env{law, mix64(walk_seed, 2)};
    Point origin;
    origin.d = d;
    auto res = run_quenched(env, origin, StopRule::budget_only(len), walk_seed, 0);

    std::vector<double> ell(static_cast<size_t>(d), 0.0);
    if (trial % 2 == 0) {
      ell[0] = 1.0;
    } else {
      for (int i = 0; i < d; ++i)
        ell[static_cast<size_t>(i)] = stream.next_gaussian();
      ell[0] = std::abs(ell[0]) + 0.1;
    }
    auto fast = detect_regenerations(res.traj, ell);
    auto brute = brute_regenerations(res.traj, ell);
    REQUIRE(same_records(fast, brute));
  }
}

TEST_CASE("summarize on a deterministic-right walk") {
  double eta = 1e-9;
  Environment env{EnvironmentLaw::fixed_drift(1, eta, make_kernel(1, {1 - eta, eta})), 1};
  auto res = run_quenched(env, Point{0}, StopRule::budget_only(100), 3);
  auto recs = detect_regenerations(res.traj, {1.0});
  REQUIRE(recs.size() == 100);
  auto s = summarize(recs, 0.5);
  CHECK(s.count == 98);  // 99 certifying records, 98 slabs between them
  CHECK(s.mean_duration == 1.0);
  CHECK(s.velocity[0] == 1.0);
  CHECK(s.direction[0] == 1.0);
  CHECK(s.displacement_covariance[0][0] == 0.0);
}

TEST_CASE("summarize on synthetic records") {
  std::vector<RegenerationRecord> recs;
  for (int k = 0; k < 3; ++k) {
    RegenerationRecord r;
    r.tau = 2 * k;
    r.position = Point{2 * k, 0};
    r.slab_duration = 2;
    r.slab_displacement = Point{2, 0};
    r.certified_margin = 1;
    recs.push_back(r);
  }
  auto s = summarize(recs, 0.0);
  CHECK(s.count == 2);
  CHECK(s.mean_duration == 2.0);
  CHECK(s.velocity[0] == 1.0);
  CHECK(s.velocity[1] == 0.0);
  CHECK(s.displacement_covariance[0][0] == 0.0);
  CHECK(s.displacement_covariance[0][1] == 0.0);

  CHECK_THROWS_AS(summarize(recs, 2.0), InsufficientData);
  CHECK_THROWS_AS(summarize({recs[0]}, 0.0), InsufficientData);
}

TEST_CASE("raising the margin threshold never adds slabs") {
  Environment env{drifted2(), 77};
  auto res = run_quenched(env, Point{0, 0}, StopRule::budget_only(20000), 9);
  auto recs = detect_regenerations(res.traj, {1.0, 0.0});
  REQUIRE(recs.size() > 100);
  std::int64_t last = std::numeric_limits<std::int64_t>::max();
  for (double margin : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    std::int64_t usable = 0;
    for (const auto& r : recs)
      if (r.certified_margin >= margin) ++usable;
    CHECK(usable <= last);
    last = usable;
  }
}

TEST_CASE("slab velocity matches the long-run displacement rate") {
  Environment env{drifted2(), 41};
  std::int64_t n = 200000;
  auto res = run_quenched(env, Point{0, 0}, StopRule::budget_only(n), 10);
  auto recs = detect_regenerations(res.traj, {1.0, 0.0});
  auto s = summarize(recs, 1.0);
  REQUIRE(s.count > 1000);
  for (int i = 0; i < 2; ++i) {
    double direct = static_cast<double>(res.traj.back().c[static_cast<size_t>(i)]) /
                    static_cast<double>(n);
    CHECK(std::abs(s.velocity[static_cast<size_t>(i)] - direct) < 0.006);
  }
  CHECK(dot(Point{1, 0}, s.velocity) > 0);

  // covariance symmetric and nonnegative on random quadratic forms
  CHECK(s.displacement_covariance[0][1] == s.displacement_covariance[1][0]);
  auto stream = tagged_stream(mix64(7, "psd-probe"), kDomDerive);
  for (int probe = 0; probe < 20; ++probe) {
    double x0 = stream.next_gaussian(), x1 = stream.next_gaussian();
    double q = x0 * x0 * s.displacement_covariance[0][0] +
               2 * x0 * x1 * s.displacement_covariance[0][1] +
               x1 * x1 * s.displacement_covariance[1][1];
    CHECK(q >= -1e-9);
  }
}

TEST_CASE("certified regeneration count grows linearly with trajectory length") {
  std::vector<double> xs, ys;
  for (std::int64_t len = 1000; len <= 8000; len += 1000) {
    for (int rep = 0; rep < 5; ++rep) {
      Environment env{drifted2(), mix64(600, static_cast<std::uint64_t>(len + rep))};
      auto res = run_quenched(env, Point{0, 0}, StopRule::budget_only(len), 88,
                              static_cast<std::uint64_t>(rep));
      auto recs = detect_regenerations(res.traj, {1.0, 0.0});
      std::int64_t certified = 0;
      for (const auto& r : recs)
        if (r.certified_margin >= 1.0) ++certified;
      xs.push_back(static_cast<double>(len));
      ys.push_back(static_cast<double>(certified));
    }
  }
  auto n = static_cast<double>(xs.size());
  double xm = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - xm) * (xs[i] - xm);
    sxy += (xs[i] - xm) * (ys[i] - ym);
  }
  double slope = sxy / sxx;
  double rss = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - ym - slope * (xs[i] - xm);
    rss += r * r;
  }
  double se = std::sqrt(rss / (n - 2) / sxx);
  CHECK(slope > 0);
  CHECK(slope / se > 1.69);  // one-sided 95% with 38 df
}

TEST_CASE("event A_N") {
  auto rec = [](std::int64_t radius) {
    RegenerationRecord r;
    r.radius = radius;
    return r;
  };
  std::vector<RegenerationRecord> small = {rec(1), rec(2), rec(3)};
  CHECK_FALSE(event_A_N(small, 3));  // R_1(3) = 1
  CHECK(event_A_N(small, 0));
  CHECK_THROWS_AS(event_A_N(small, 4), InsufficientData);
  CHECK_THROWS_AS(event_A_N(small, -1), std::invalid_argument);
  CHECK_THROWS_AS(event_A_N(small, 2), DomainError);  // R_1(2) undefined

  std::vector<RegenerationRecord> big(1000000, rec(1));
  CHECK(event_A_N(big, 1000000));  // R_1(10^6) = 987
  big[500000].radius = 987;
  CHECK_FALSE(event_A_N(big, 1000000));
  big[500000].radius = 986;
  CHECK(event_A_N(big, 1000000));
}

TEST_CASE("iid diagnostics pass on synthetic i.i.d. slabs") {
  auto recs = synthetic_iid_records(2024, 10000);
  auto rep = iid_diagnostics(recs, {1.0, 0.0});
  CHECK(std::abs(rep.autocorr_duration) < 0.02);
  CHECK(std::abs(rep.autocorr_projection) < 0.02);
  CHECK(rep.pass);
  CHECK(rep.count == 9999);
}

TEST_CASE("iid diagnostics fail on periodic slabs") {
  std::vector<RegenerationRecord> recs;
  std::int64_t tau = 0;
  Point pos{0, 0};
  for (int k = 0; k < 1000; ++k) {
    std::int64_t dur = k % 2 == 0 ? 1 : 9;
    tau += dur;
    pos = pos + Point{1, 0};
    RegenerationRecord r;
    r.tau = tau;
    r.position = pos;
    r.certified_margin = 5;
    recs.push_back(r);
  }
  auto rep = iid_diagnostics(recs, {1.0, 0.0});
  CHECK(rep.autocorr_duration < -0.9);
  CHECK_FALSE(rep.pass_autocorr_duration);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("iid diagnostics are stable under shuffling") {
  auto recs = synthetic_iid_records(99, 5000);
  auto base = iid_diagnostics(recs, {1.0, 0.0});
  REQUIRE(base.pass);

  // rebuild records from a deterministically shuffled slab sequence
  std::vector<std::pair<std::int64_t, Point>> slabs;
  for (size_t k = 1; k < recs.size(); ++k)
    slabs.push_back({recs[k].tau - recs[k - 1].tau,
                     recs[k].position - recs[k - 1].position});
  auto stream = tagged_stream(mix64(4, "shuffle"), kDomDerive);
  for (size_t i = slabs.size(); i > 1; --i)
    std::swap(slabs[i - 1], slabs[stream.next_u64() % i]);
  std::vector<RegenerationRecord> shuffled;
  std::int64_t tau = recs[0].tau;
  Point pos = recs[0].position;
  shuffled.push_back(recs[0]);
  for (const auto& [dur, disp] : slabs) {
    tau += dur;
    pos = pos + disp;
    RegenerationRecord r;
    r.tau = tau;
    r.position = pos;
    r.certified_margin = 5;
    shuffled.push_back(r);
  }
  auto rep = iid_diagnostics(shuffled, {1.0, 0.0});
  CHECK(rep.pass);
}

TEST_CASE("iid diagnostics guard rails") {
  auto recs = synthetic_iid_records(1, 50);
  CHECK_THROWS_AS(iid_diagnostics(recs, {1.0, 0.0}), InsufficientData);
  auto enough = synthetic_iid_records(1, 200);
  CHECK_THROWS_AS(iid_diagnostics(enough, {1.0, 0.0}, 0.02), std::invalid_argument);
}

TEST_CASE("tau1 tail of a deterministic-right walk is all zeros") {
  double eta = 1e-9;
  auto law = EnvironmentLaw::fixed_drift(1, eta, make_kernel(1, {1 - eta, eta}));
  auto rows = tau1_tail(law, {1.0}, {0, 1, 2, 5}, 200, 11);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.survival == 0.0);
    CHECK(row.censored_frac == 0.0);
  }
}

TEST_CASE("tau1 tail with no drift censors everything") {
  auto rows = tau1_tail(EnvironmentLaw::srw(1), {1.0}, {1, 10, 100}, 200, 12);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.survival == 1.0);
    CHECK(row.censored_frac == 1.0);
  }
}

TEST_CASE("tau1 tail of a drifted law is a proper survival curve") {
  auto rows = tau1_tail(drifted2(), {1.0, 0.0}, {1, 2, 5, 10, 20, 50}, 2000, 13);
  REQUIRE(rows.size() == 6);
  double prev = 1.0;
  for (const auto& row : rows) {
    CHECK(row.survival <= prev);
    CHECK(row.survival >= 0.0);
    CHECK(row.censored_frac < 0.05);
    CHECK(row.std_error < 0.02);
    prev = row.survival;
  }
  CHECK(rows[0].survival < 1.0);
  CHECK(rows[0].survival > 0.0);

  CHECK_THROWS_AS(tau1_tail(drifted2(), {1.0, 0.0}, {5, 5}, 10, 1),
                  std::invalid_argument);
}
