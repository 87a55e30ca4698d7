#include "rwre/regen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rwre/errors.hpp"
#include "rwre/prf.hpp"

namespace rwre {

namespace {

struct Slab {
  std::int64_t duration;
  Point displacement;
};

std::vector<Slab> consecutive_slabs(const std::vector<const RegenerationRecord*>& recs) {
  std::vector<Slab> slabs;
  slabs.reserve(recs.size() - 1);
  for (size_t k = 1; k < recs.size(); ++k)
    slabs.push_back({recs[k]->tau - recs[k - 1]->tau,
                     recs[k]->position - recs[k - 1]->position});
  return slabs;
}

double lag1_autocorr(const std::vector<double>& x) {
  size_t n = x.size();
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double num = 0, den = 0;
  for (size_t i = 0; i < n; ++i) {
    double c = x[i] - mean;
    den += c * c;
    if (i + 1 < n) num += c * (x[i + 1] - mean);
  }
  return den > 0 ? num / den : 0.0;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    double fa = static_cast<double>(i) / static_cast<double>(a.size());
    double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

std::vector<RegenerationRecord> detect_regenerations(const Trajectory& traj,
                                                     std::vector<double> ell) {
  ell = normalize_direction(ell);
  const auto& pos = traj.positions;
  if (pos.empty()) throw std::invalid_argument("empty trajectory");
  const auto n = static_cast<std::int64_t>(pos.size()) - 1;

  std::vector<double> p(pos.size());
  for (size_t i = 0; i < pos.size(); ++i) p[i] = dot(pos[i], ell);

  // suffmin[k] = min of p over [k, n]
  std::vector<double> suffmin(pos.size() + 1,
                              std::numeric_limits<double>::infinity());
  for (std::int64_t k = n; k >= 0; --k)
    suffmin[static_cast<size_t>(k)] =
        std::min(p[static_cast<size_t>(k)], suffmin[static_cast<size_t>(k) + 1]);

  std::vector<std::int64_t> taus;
  double prefix_max = -std::numeric_limits<double>::infinity();
  for (std::int64_t t = 0; t < n; ++t) {
    auto ut = static_cast<size_t>(t);
    bool strict_record = t == 0 || p[ut] > prefix_max;
    if (strict_record && p[ut + 1] > p[ut] &&
        (t + 2 > n || suffmin[ut + 2] > p[ut + 1]))
      taus.push_back(t);
    prefix_max = std::max(prefix_max, p[ut]);
  }

  std::vector<RegenerationRecord> out;
  out.reserve(taus.size());
  std::int64_t prev = 0;
  for (std::int64_t t : taus) {
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

RegenerationSummary summarize(const std::vector<RegenerationRecord>& records,
                              double min_margin) {
  std::vector<const RegenerationRecord*> usable;
  for (const auto& r : records)
    if (r.certified_margin >= min_margin) usable.push_back(&r);
  if (usable.size() < 2)
    throw InsufficientData("summarize needs at least 2 records clearing the margin");

  int d = usable.front()->position.d;
  auto slabs = consecutive_slabs(usable);
  auto m = static_cast<double>(slabs.size());

  RegenerationSummary s;
  s.count = static_cast<std::int64_t>(slabs.size());
  s.mean_displacement.assign(static_cast<size_t>(d), 0.0);
  double total_duration = 0;
  for (const auto& slab : slabs) {
    total_duration += static_cast<double>(slab.duration);
    for (int i = 0; i < d; ++i)
      s.mean_displacement[static_cast<size_t>(i)] +=
          static_cast<double>(slab.displacement.c[static_cast<size_t>(i)]);
  }
  s.mean_duration = total_duration / m;
  for (auto& v : s.mean_displacement) v /= m;

  s.displacement_covariance.assign(static_cast<size_t>(d),
                                   std::vector<double>(static_cast<size_t>(d), 0.0));
  for (const auto& slab : slabs)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        s.displacement_covariance[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            (static_cast<double>(slab.displacement.c[static_cast<size_t>(i)]) -
             s.mean_displacement[static_cast<size_t>(i)]) *
            (static_cast<double>(slab.displacement.c[static_cast<size_t>(j)]) -
             s.mean_displacement[static_cast<size_t>(j)]);
  for (auto& row : s.displacement_covariance)
    for (auto& v : row) v /= m;

  s.velocity.resize(static_cast<size_t>(d));
  double norm2 = 0;
  for (int i = 0; i < d; ++i) {
    s.velocity[static_cast<size_t>(i)] =
        s.mean_displacement[static_cast<size_t>(i)] / s.mean_duration;
    norm2 += s.velocity[static_cast<size_t>(i)] * s.velocity[static_cast<size_t>(i)];
  }
  norm2 = std::sqrt(norm2);
  s.direction.assign(static_cast<size_t>(d), 0.0);
  if (norm2 > 0)
    for (int i = 0; i < d; ++i)
      s.direction[static_cast<size_t>(i)] = s.velocity[static_cast<size_t>(i)] / norm2;
  return s;
}

bool event_A_N(const std::vector<RegenerationRecord>& records, std::int64_t N) {
  if (N < 0) throw std::invalid_argument("N must be nonnegative");
  if (N == 0) return true;
  if (static_cast<std::int64_t>(records.size()) < N)
    throw InsufficientData("fewer records than requested prefix length");
  std::int64_t bound = scale_R(1, N);
  for (std::int64_t i = 0; i < N; ++i)
    if (records[static_cast<size_t>(i)].radius >= bound) return false;
  return true;
}

IidReport iid_diagnostics(const std::vector<RegenerationRecord>& records,
                          std::vector<double> ell, double significance) {
  double z, ks_c;
  if (std::abs(significance - 0.10) < 1e-12) {
    z = 1.645;
    ks_c = 1.224;
  } else if (std::abs(significance - 0.05) < 1e-12) {
    z = 1.960;
    ks_c = 1.358;
  } else if (std::abs(significance - 0.01) < 1e-12) {
    z = 2.576;
    ks_c = 1.628;
  } else {
    throw std::invalid_argument("significance must be one of 0.1, 0.05, 0.01");
  }
  if (records.size() < 100)
    throw InsufficientData("iid diagnostics need at least 100 records");
  ell = normalize_direction(ell);

  std::vector<const RegenerationRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  auto slabs = consecutive_slabs(ptrs);

  std::vector<double> durations, projections;
  durations.reserve(slabs.size());
  projections.reserve(slabs.size());
  for (const auto& slab : slabs) {
    durations.push_back(static_cast<double>(slab.duration));
    projections.push_back(dot(slab.displacement, ell));
  }

  IidReport rep;
  rep.count = static_cast<std::int64_t>(slabs.size());
  rep.autocorr_duration = lag1_autocorr(durations);
  rep.autocorr_projection = lag1_autocorr(projections);
  size_t half = durations.size() / 2;
  std::vector<double> first(durations.begin(),
                            durations.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<double> second(durations.begin() + static_cast<std::ptrdiff_t>(half),
                             durations.end());
  rep.half_split_ks = two_sample_ks(first, second);

  auto m = static_cast<double>(slabs.size());
  rep.autocorr_threshold = z / std::sqrt(m);
  auto n1 = static_cast<double>(first.size());
  auto n2 = static_cast<double>(second.size());
  rep.ks_threshold = ks_c * std::sqrt((n1 + n2) / (n1 * n2));
  rep.pass_autocorr_duration = std::abs(rep.autocorr_duration) < rep.autocorr_threshold;
  rep.pass_autocorr_projection =
      std::abs(rep.autocorr_projection) < rep.autocorr_threshold;
  rep.pass_half_split = rep.half_split_ks < rep.ks_threshold;
  rep.pass = rep.pass_autocorr_duration && rep.pass_autocorr_projection &&
             rep.pass_half_split;
  return rep;
}

std::vector<Tau1Row> tau1_tail(const EnvironmentLaw& law, std::vector<double> ell,
                               const std::vector<double>& u_grid,
                               std::int64_t n_samples, std::uint64_t seed,
                               std::int64_t step_budget) {
  if (u_grid.empty()) throw std::invalid_argument("empty u grid");
  for (size_t i = 1; i < u_grid.size(); ++i)
    if (u_grid[i] <= u_grid[i - 1])
      throw std::invalid_argument("u grid must be strictly increasing");
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  ell = normalize_direction(ell);

  std::int64_t budget = step_budget > 0
                            ? step_budget
                            : 4 * static_cast<std::int64_t>(std::ceil(u_grid.back())) + 1000;
  Point origin;
  origin.d = law.d;
  StopRule stop = StopRule::budget_only(budget);

  // Certification is only sound for a transient projection, so gate on a
  // pilot drift estimate; without clear positive drift every sample is
  // censored conservatively.
  std::int64_t n_pilot = std::min<std::int64_t>(n_samples, 64);
  double dsum = 0, dsum2 = 0;
  for (std::int64_t r = 0; r < n_pilot; ++r) {
    auto res = run_annealed(law, origin, stop, mix64(seed, "tau1-pilot"),
                            static_cast<std::uint64_t>(r));
    double v = dot(res.traj.back() - origin, ell) /
               static_cast<double>(std::max<std::int64_t>(res.traj.length(), 1));
    dsum += v;
    dsum2 += v * v;
  }
  double dmean = dsum / static_cast<double>(n_pilot);
  double dvar = std::max(dsum2 / static_cast<double>(n_pilot) - dmean * dmean, 0.0);
  double dse = std::sqrt(dvar / static_cast<double>(n_pilot));
  bool drift_positive = dse > 0 ? dmean > 3 * dse : dmean > 0;

  std::vector<Tau1Row> rows;
  rows.reserve(u_grid.size());
  if (!drift_positive) {
    for (double u : u_grid) rows.push_back({u, 1.0, 0.0, 1.0});
    return rows;
  }

  std::vector<double> tau1s;
  std::int64_t censored = 0;
  for (std::int64_t r = 0; r < n_samples; ++r) {
    auto res = run_annealed(law, origin, stop, mix64(seed, "tau1-main"),
                            static_cast<std::uint64_t>(r));
    auto recs = detect_regenerations(res.traj, ell);
    bool found = false;
    for (const auto& rec : recs)
      if (rec.certified_margin > 0) {
        tau1s.push_back(static_cast<double>(rec.tau));
        found = true;
        break;
      }
    if (!found) ++censored;
  }

  auto n = static_cast<double>(n_samples);
  double cens_frac = static_cast<double>(censored) / n;
  for (double u : u_grid) {
    std::int64_t above = censored;  // censored counted as tau_1 > max(u_grid)
    for (double t : tau1s)
      if (t > u) ++above;
    double p = static_cast<double>(above) / n;
    rows.push_back({u, p, std::sqrt(p * (1 - p) / n), cens_frac});
  }
  return rows;
}

}  // namespace rwre
