#include "rwre/conc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "rwre/errors.hpp"
#include "rwre/parallel.hpp"
#include "rwre/scales.hpp"
#include "rwre/walk.hpp"

namespace rwre {

namespace {

constexpr std::uint64_t kDomMartingale = 0x6d6172742d646f6dull;
constexpr std::uint64_t kDomPairEnv = 0x70656e762d646f6dull;
constexpr std::uint64_t kDomPairCtl = 0x7063746c2d646f6dull;
constexpr std::uint64_t kDomPairA = 0x70616972612d646full;
constexpr std::uint64_t kDomPairB = 0x70616972622d646full;

std::int64_t r1_scale(std::int64_t N) { return N >= 3 ? scale_R(1, N) : 1; }
std::int64_t r2_scale(std::int64_t N) { return N >= 3 ? scale_R(2, N) : 1; }

std::int64_t default_gate_budget(std::int64_t N) { return 100 * N * N + 1000; }

using SiteSet = std::unordered_set<Point, PointHash>;

// One gated walk: the in-block visit set plus the scale-gate verdict.
struct GatedVisits {
  SiteSet sites;
  bool gate = false;
};

GatedVisits gated_visits(const Environment& env, const Point& start, const BlockSpec& block,
                         std::uint64_t walk_seed, std::int64_t budget) {
  StopRule stop = StopRule::budget_only(budget);
  RunResult run = run_quenched(env, start, stop, walk_seed, 0);
  GatedVisits out;
  for (const auto& x : run.traj.positions)
    if (block_contains(block, x)) out.sites.insert(x);
  out.gate = regularity_gate(detect_regenerations(run.traj, block.theta), block.N);
  return out;
}

std::int64_t set_intersection_size(const SiteSet& a, const SiteSet& b) {
  const SiteSet& small = a.size() <= b.size() ? a : b;
  const SiteSet& large = a.size() <= b.size() ? b : a;
  std::int64_t n = 0;
  for (const auto& x : small) n += large.count(x) ? 1 : 0;
  return n;
}

struct PairAcc {
  std::vector<std::int64_t> counts;
  std::vector<std::int64_t> control;
  std::int64_t gated_pairs = 0;
};

IntersectionTailReport tail_from_samples(const BlockSpec& block, std::int64_t n_pairs,
                                         std::vector<PairAcc> accs, bool has_control) {
  std::vector<std::int64_t> counts, control;
  std::int64_t gated = 0;
  for (auto& acc : accs) {
    counts.insert(counts.end(), acc.counts.begin(), acc.counts.end());
    control.insert(control.end(), acc.control.begin(), acc.control.end());
    gated += acc.gated_pairs;
  }

  IntersectionTailReport rep;
  rep.N = block.N;
  rep.pairs = n_pairs;
  rep.gate_rate = static_cast<double>(gated) / static_cast<double>(n_pairs);
  double sum = 0;
  std::int64_t max_count = 0;
  for (auto c : counts) {
    sum += static_cast<double>(c);
    max_count = std::max(max_count, c);
  }
  rep.mean_count = sum / static_cast<double>(n_pairs);
  if (has_control) {
    double csum = 0;
    for (auto c : control) csum += static_cast<double>(c);
    rep.control_mean = csum / static_cast<double>(n_pairs);
  } else {
    rep.control_mean = std::numeric_limits<double>::quiet_NaN();
  }
  rep.expectation_bound = static_cast<double>(r2_scale(block.N));
  rep.mean_within_bound = rep.mean_count <= rep.expectation_bound;

  double unit = std::pow(static_cast<double>(r1_scale(block.N)), block.theta.size());
  std::int64_t max_n =
      static_cast<std::int64_t>(std::floor(static_cast<double>(max_count) / unit)) + 1;
  for (std::int64_t n = 0; n <= max_n; ++n) {
    double threshold = static_cast<double>(n) * unit;
    std::int64_t over = 0;
    for (auto c : counts) over += static_cast<double>(c) > threshold ? 1 : 0;
    rep.survival.emplace_back(n, static_cast<double>(over) / static_cast<double>(n_pairs));
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::int64_t pts = 0;
  for (const auto& [n, s] : rep.survival) {
    if (s <= 0) continue;
    double x = static_cast<double>(n), y = std::log(s);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++pts;
  }
  double den = static_cast<double>(pts) * sxx - sx * sx;
  if (pts >= 2 && den > 0) {
    rep.fit_rate = -((static_cast<double>(pts) * sxy - sx * sy) / den);
    rep.fit_valid = rep.fit_rate > 0;
  }
  rep.regime = block.theta.size() >= 4 ? "d>=4" : "d<4";
  return rep;
}

}  // namespace

double azuma_bound(double essential_variance, double K) {
  if (!(essential_variance > 0)) throw DomainError("essential variance must be positive");
  return 2.0 * std::exp(-K * K / (2.0 * essential_variance));
}

MartingaleAudit martingale_tail_audit(const MartingaleSpec& spec,
                                      const std::vector<double>& K_grid, std::int64_t n_runs,
                                      std::uint64_t seed, int workers) {
  if (spec.n < 1) throw std::invalid_argument("horizon must be at least 1");
  if (static_cast<std::int64_t>(spec.U.size()) != spec.n)
    throw std::invalid_argument("one essential bound per step is required");
  if (!spec.increment) throw std::invalid_argument("increment sampler is required");
  for (double u : spec.U)
    if (u < 0) throw std::invalid_argument("essential bounds must be nonnegative");
  if (n_runs < 1) throw std::invalid_argument("need at least one run");

  MartingaleAudit audit;
  for (double u : spec.U) audit.essential_variance += u * u;

  const auto n_steps = static_cast<size_t>(spec.n);
  struct Acc {
    std::vector<std::int64_t> tails;
    std::vector<double> sum, sumsq;
    double worst_ratio = 0;
    std::int64_t worst_step = -1;
  };
  auto accs = chunked_map<Acc>(n_runs, workers, [&](std::int64_t i, Acc& acc) {
    if (acc.sum.empty()) {
      acc.tails.assign(K_grid.size(), 0);
      acc.sum.assign(n_steps, 0.0);
      acc.sumsq.assign(n_steps, 0.0);
    }
    CounterStream stream = tagged_stream(seed, kDomMartingale, static_cast<std::uint64_t>(i));
    double m = 0;
    for (std::int64_t k = 1; k <= spec.n; ++k) {
      double d = spec.increment(k, m, stream);
      auto uk = static_cast<size_t>(k - 1);
      double bound = spec.U[uk];
      double ratio = bound > 0 ? std::abs(d) / bound
                               : (std::abs(d) > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      if (ratio > acc.worst_ratio) {
        acc.worst_ratio = ratio;
        acc.worst_step = k;
      }
      acc.sum[uk] += d;
      acc.sumsq[uk] += d * d;
      m += d;
    }
    for (size_t j = 0; j < K_grid.size(); ++j)
      if (std::abs(m) > K_grid[j]) ++acc.tails[j];
  });

  std::vector<std::int64_t> tails(K_grid.size(), 0);
  std::vector<double> sum(n_steps, 0.0), sumsq(n_steps, 0.0);
  double worst_ratio = 0;
  std::int64_t worst_step = -1;
  for (const auto& acc : accs) {
    if (acc.sum.empty()) continue;
    for (size_t j = 0; j < K_grid.size(); ++j) tails[j] += acc.tails[j];
    for (size_t j = 0; j < n_steps; ++j) {
      sum[j] += acc.sum[j];
      sumsq[j] += acc.sumsq[j];
    }
    if (acc.worst_ratio > worst_ratio) {
      worst_ratio = acc.worst_ratio;
      worst_step = acc.worst_step;
    }
  }

  audit.increments_bounded = worst_ratio <= 1.0 + 1e-9;
  if (!audit.increments_bounded)
    audit.failure = "increment bound violated at step " + std::to_string(worst_step);

  auto runs = static_cast<double>(n_runs);
  for (size_t j = 0; j < n_steps; ++j) {
    double mean = sum[j] / runs;
    double var = std::max(sumsq[j] / runs - mean * mean, 0.0);
    double se = std::sqrt(var / runs);
    double z = se > 0 ? std::abs(mean) / se : (std::abs(mean) > 1e-12 ? 1e18 : 0.0);
    audit.worst_mean_z = std::max(audit.worst_mean_z, z);
    if (z > 4.0 && audit.failure.empty())
      audit.failure = "conditional mean off at step " + std::to_string(j + 1);
  }
  audit.means_centered = audit.worst_mean_z <= 4.0;

  bool tails_ok = true;
  for (size_t j = 0; j < K_grid.size(); ++j) {
    MartingaleAudit::Entry e;
    e.K = K_grid[j];
    e.empirical = static_cast<double>(tails[j]) / runs;
    // Degenerate all-zero-bound martingales: the limit of the bound.
    e.bound = audit.essential_variance > 0 ? azuma_bound(audit.essential_variance, e.K)
                                           : (e.K > 0 ? 0.0 : 2.0);
    e.sigma = std::sqrt(std::max(e.empirical * (1 - e.empirical), 0.0) / runs);
    e.pass = e.empirical <= e.bound + 3.0 * e.sigma + 1e-12;
    if (!e.pass && audit.failure.empty()) {
      std::string k_text = std::to_string(e.K);
      audit.failure = "tail above bound at K=" + k_text;
    }
    tails_ok = tails_ok && e.pass;
    audit.entries.push_back(e);
  }

  audit.pass = tails_ok && audit.increments_bounded && audit.means_centered;
  return audit;
}

bool regularity_gate(const std::vector<RegenerationRecord>& records, std::int64_t N) {
  if (N < 1) throw std::invalid_argument("scale must be at least 1");
  if (static_cast<std::int64_t>(records.size()) < N) return false;
  std::int64_t bound = r1_scale(N);
  for (std::int64_t i = 0; i < N; ++i) {
    const auto& r = records[static_cast<size_t>(i)];
    if (r.certified_margin < static_cast<double>(bound)) return false;
    if (r.radius > bound) return false;
  }
  return true;
}

IntersectionSample intersection_count(const Environment& env, const Point& start,
                                      const BlockSpec& block,
                                      std::pair<std::uint64_t, std::uint64_t> seed_pair,
                                      std::int64_t step_budget) {
  if (!middle_third_contains(block, start))
    throw std::invalid_argument("start must lie in the middle third of the block");
  std::int64_t budget = step_budget > 0 ? step_budget : default_gate_budget(block.N);

  GatedVisits a = gated_visits(env, start, block, seed_pair.first, budget);
  GatedVisits b = gated_visits(env, start, block, seed_pair.second, budget);

  IntersectionSample out;
  out.gate1 = a.gate;
  out.gate2 = b.gate;
  out.visited1 = static_cast<std::int64_t>(a.sites.size());
  out.visited2 = static_cast<std::int64_t>(b.sites.size());
  out.count = (a.gate && b.gate) ? set_intersection_size(a.sites, b.sites) : 0;
  return out;
}

IntersectionTailReport intersection_tail(const EnvironmentLaw& law, const BlockSpec& block,
                                         std::int64_t n_pairs, std::uint64_t seed,
                                         std::int64_t step_budget, int workers) {
  if (n_pairs < 1) throw std::invalid_argument("need at least one pair");
  std::int64_t budget = step_budget > 0 ? step_budget : default_gate_budget(block.N);

  auto accs = chunked_map<PairAcc>(n_pairs, workers, [&](std::int64_t i, PairAcc& acc) {
    auto ui = static_cast<std::uint64_t>(i);
    Environment shared{law, mix64(mix64(seed, kDomPairEnv), ui)};
    std::uint64_t sa = mix64(mix64(seed, kDomPairA), ui);
    std::uint64_t sb = mix64(mix64(seed, kDomPairB), ui);

    GatedVisits a = gated_visits(shared, block.z, block, sa, budget);
    GatedVisits b = gated_visits(shared, block.z, block, sb, budget);
    bool gate = a.gate && b.gate;
    acc.counts.push_back(gate ? set_intersection_size(a.sites, b.sites) : 0);
    acc.gated_pairs += gate ? 1 : 0;

    // Control: the second walk re-runs with the same seed in a fresh
    // environment, breaking the shared-randomness coupling only.
    Environment other{law, mix64(mix64(seed, kDomPairCtl), ui)};
    GatedVisits c = gated_visits(other, block.z, block, sb, budget);
    acc.control.push_back(a.gate && c.gate ? set_intersection_size(a.sites, c.sites) : 0);
  });
  return tail_from_samples(block, n_pairs, std::move(accs), true);
}

IntersectionTailReport intersection_tail(const Environment& env, const BlockSpec& block,
                                         std::int64_t n_pairs, std::uint64_t seed,
                                         std::int64_t step_budget, int workers) {
  if (n_pairs < 1) throw std::invalid_argument("need at least one pair");
  std::int64_t budget = step_budget > 0 ? step_budget : default_gate_budget(block.N);

  auto accs = chunked_map<PairAcc>(n_pairs, workers, [&](std::int64_t i, PairAcc& acc) {
    auto ui = static_cast<std::uint64_t>(i);
    std::uint64_t sa = mix64(mix64(seed, kDomPairA), ui);
    std::uint64_t sb = mix64(mix64(seed, kDomPairB), ui);
    GatedVisits a = gated_visits(env, block.z, block, sa, budget);
    GatedVisits b = gated_visits(env, block.z, block, sb, budget);
    bool gate = a.gate && b.gate;
    acc.counts.push_back(gate ? set_intersection_size(a.sites, b.sites) : 0);
    acc.gated_pairs += gate ? 1 : 0;
  });
  return tail_from_samples(block, n_pairs, std::move(accs), false);
}

HittingField hitting_field(const Environment& env, const BlockSpec& block, const Point& start,
                           std::int64_t n_samples, std::uint64_t seed,
                           std::int64_t step_budget, int workers) {
  if (!middle_third_contains(block, start))
    throw std::invalid_argument("start must lie in the middle third of the block");
  if (n_samples < 0) throw std::invalid_argument("sample count must be nonnegative");
  std::int64_t budget = step_budget > 0 ? step_budget : default_gate_budget(block.N);

  struct Acc {
    std::unordered_map<Point, std::int64_t, PointHash> counts;
    std::int64_t gated = 0;
  };
  auto accs = chunked_map<Acc>(n_samples, workers, [&](std::int64_t i, Acc& acc) {
    StopRule stop = StopRule::budget_only(budget);
    RunResult run = run_quenched(env, start, stop, seed, static_cast<std::uint64_t>(i));
    auto records = detect_regenerations(run.traj, block.theta);
    if (!regularity_gate(records, block.N)) return;
    ++acc.gated;
    SiteSet seen;
    for (const auto& x : run.traj.positions)
      if (block_contains(block, x) && seen.insert(x).second) ++acc.counts[x];
  });

  HittingField out;
  out.block = block;
  out.expectation_bound = static_cast<double>(r2_scale(block.N));
  std::unordered_map<Point, std::int64_t, PointHash> counts;
  std::int64_t gated = 0;
  for (const auto& acc : accs) {
    for (const auto& [x, c] : acc.counts) counts[x] += c;
    gated += acc.gated;
  }
  if (n_samples == 0) return out;
  out.gate_rate = static_cast<double>(gated) / static_cast<double>(n_samples);
  for (const auto& [x, c] : counts) {
    double h = static_cast<double>(c) / static_cast<double>(n_samples);
    out.field[x] = h;
    out.sum += h;
    out.sum_of_squares += h * h;
  }
  return out;
}

bool taylor_check(const SignedMeasure& mu, const std::function<double(const Point&)>& f,
                  double m, double k, double L, double J, const Point& rho) {
  if (!f) throw std::invalid_argument("site function is required");
  if (m < 0 || k < 0 || L < 0 || J < 0)
    throw std::invalid_argument("threshold constants must be nonnegative");
  int d = rho.d;
  std::map<Point, double> weights;
  for (const auto& [x, w] : mu) {
    if (x.d != d) throw std::invalid_argument("measure sites must match rho's dimension");
    weights[x] += w;
  }

  Point lo = rho, hi = rho;
  for (const auto& [x, w] : weights)
    for (int j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], x[j]);
      hi[j] = std::max(hi[j], x[j]);
    }
  for (int j = 0; j < d; ++j) {
    lo[j] -= 1;
    hi[j] += 1;
  }
  double cells = 1;
  for (int j = 0; j < d; ++j) cells *= static_cast<double>(hi[j] - lo[j] + 1);
  if (cells > 2e6) throw RegionTooLarge("hypothesis audit box exceeds the site budget");

  // Strict thresholds, read as exact equality (within rounding) at zero.
  auto within = [](double value, double bound) {
    return bound == 0 ? value <= 1e-9 : value < bound;
  };

  std::vector<Point> box;
  box.reserve(static_cast<size_t>(cells));
  Point x = lo;
  for (;;) {
    box.push_back(x);
    int j = 0;
    while (j < d) {
      if (++x[j] <= hi[j]) break;
      x[j] = lo[j];
      ++j;
    }
    if (j == d) break;
  }

  std::unordered_map<Point, double, PointHash> fv;
  fv.reserve(box.size());
  for (const auto& p : box) fv[p] = f(p);
  auto in_box = [&](const Point& p) {
    for (int j = 0; j < d; ++j)
      if (p[j] < lo[j] || p[j] > hi[j]) return false;
    return true;
  };

  for (const auto& p : box)
    for (int i = 0; i < d; ++i) {
      Point q = p + unit_step(2 * i, d);
      if (!in_box(q)) continue;
      double diff = std::abs(fv.at(p) - fv.at(q));
      if (!within(diff, m))
        throw HypothesisViolated("hypothesis 1: neighbor increment " + std::to_string(diff) +
                                 " reaches the bound " + std::to_string(m));
    }

  for (const auto& p : box)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        Point pi = p + unit_step(2 * i, d);
        Point pj = p + unit_step(2 * j, d);
        Point pij = pi + unit_step(2 * j, d);
        if (!in_box(pi) || !in_box(pj) || !in_box(pij)) continue;
        double diff = std::abs(fv.at(p) + fv.at(pij) - fv.at(pi) - fv.at(pj));
        if (!within(diff, k))
          throw HypothesisViolated("hypothesis 2: second difference " + std::to_string(diff) +
                                   " reaches the bound " + std::to_string(k));
      }

  double total = 0;
  for (const auto& [p, w] : weights) total += w;
  if (std::abs(total) > 1e-9)
    throw HypothesisViolated("hypothesis 3: total mass " + std::to_string(total) +
                             " is not zero");

  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (const auto& [p, w] : weights)
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += static_cast<double>(p[j]) * w;
  double mean_l1 = 0;
  for (double v : mean) mean_l1 += std::abs(v);
  if (!within(mean_l1, L))
    throw HypothesisViolated("hypothesis 4: mean l1 norm " + std::to_string(mean_l1) +
                             " reaches the bound " + std::to_string(L));

  double second = 0;
  for (const auto& [p, w] : weights) {
    auto dist = static_cast<double>(norm1(p - rho));
    second += dist * dist * std::abs(w);
  }
  if (!within(second, J))
    throw HypothesisViolated("hypothesis 5: centered second moment " + std::to_string(second) +
                             " reaches the bound " + std::to_string(J));

  double pairing = 0;
  for (const auto& [p, w] : weights) pairing += w * f(p);
  return std::abs(pairing) <= L * m + 0.5 * J * k + 1e-9;
}

}  // namespace rwre
