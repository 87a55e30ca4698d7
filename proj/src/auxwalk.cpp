#include "rwre/auxwalk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "rwre/errors.hpp"
#include "rwre/parallel.hpp"
#include "rwre/prf.hpp"
#include "rwre/scales.hpp"

namespace rwre {

namespace {

enum : std::uint64_t {
  kDomAuxRun = 0x6175782d72756e00ull,
  kDomAuxStretch = 0x6175782d73747200ull,
  kDomAuxBeta = 0x6175782d62657400ull,
  kDomAuxReplay = 0x6175782d72706c00ull,
  kDomAuxDn = 0x6175782d646e0000ull,
};

std::uint64_t anchor_seed(std::uint64_t seed, const Point& z, int k) {
  std::uint64_t h = mix64(seed, kDomClassify);
  h = mix64(h, static_cast<std::uint64_t>(k));
  for (int i = 0; i < z.d; ++i) h = mix64(h, static_cast<std::uint64_t>(z[i]));
  return h;
}

struct Offsets {
  std::int64_t M = 0;
  std::vector<std::int64_t> A;
  bool feasible = true;
};

// A_1 = 1; each later A_k is the least integer pushing its first tracked
// layer past the previous scale's last one.
Offsets layer_offsets(const ScaleLadder& ladder, double u) {
  if (!(u > 1.0)) throw DomainError("u must exceed 1");
  Offsets off;
  double eps = ladder.constants.epsilon;
  off.M = static_cast<std::int64_t>(std::floor(std::pow(std::log(u), 1.0 - eps)));
  off.A.assign(ladder.sizes.size(), 1);
  for (size_t k = 1; k < ladder.sizes.size(); ++k) {
    std::int64_t prev_sq = ladder.sizes[k - 1] * ladder.sizes[k - 1];
    std::int64_t cur_sq = ladder.sizes[k] * ladder.sizes[k];
    off.A[k] = floor_div((off.M + off.A[k - 1]) * prev_sq, cur_sq) + 1;
  }
  for (std::int64_t a : off.A)
    if (a > off.M) off.feasible = false;
  return off;
}

Pmf front_law_of(const EnvironmentLaw& law, std::int64_t N, std::uint64_t seed,
                 std::int64_t samples) {
  Point origin(law.d);
  BlockSpec block(origin, N, e1_direction(law.d));
  if (law.family == LawFamily::kSrw || law.family == LawFamily::kFixedDrift) {
    try {
      Environment env{law, mix64(seed, "aux-dn-env")};
      return front_conditioned_pmf(exact_exit(env, block, origin));
    } catch (const RegionTooLarge&) {
    }
  }
  ExitHistogram hist = estimate_exit(law, block, origin, samples, mix64(seed, "aux-dn-mc"));
  if (hist.front_total == 0) throw EmptyFront("no front exits at scale " + std::to_string(N));
  Pmf out;
  for (const auto& [x, c] : hist.counts) {
    if (boundary_classify(block, x) != BoundaryClass::kFrontBoundary) continue;
    out.emplace_back(x, static_cast<double>(c) / static_cast<double>(hist.front_total));
  }
  return pmf_clean(std::move(out));
}

std::int64_t default_attempt_budget(std::int64_t N) { return 50 * N * N * N * N; }

ConditionedSegment sample_front_exit(const Environment& env, const BlockSpec& block,
                                     const Point& start, std::uint64_t seed,
                                     std::int64_t max_retries, std::int64_t step_budget) {
  if (!middle_third_contains(block, start))
    throw std::invalid_argument("start must lie in the block's middle third");
  std::int64_t budget = step_budget > 0 ? step_budget : default_attempt_budget(block.N);
  StopRule stop = StopRule::block_boundary(block, budget);
  for (std::int64_t r = 0; r < max_retries; ++r) {
    RunResult res = run_quenched(env, start, stop, seed, static_cast<std::uint64_t>(r));
    if (res.cause == StopCause::kRuleSatisfied &&
        boundary_classify(block, res.traj.back()) == BoundaryClass::kFrontBoundary)
      return {std::move(res.traj), r};
  }
  throw ConditioningTooRare("no front exit in " + std::to_string(max_retries) + " attempts");
}

// One construction pass, used for the real run and for the replays that
// tabulate a stretch's displacement law. A replay starts at a corrected
// anchor, runs the identical recursion in the same environment with fresh
// step randomness, and ends at the first hit of its target layer, so the
// sampled displacements follow the conditional law given that anchor.
struct Engine {
  const Environment& env;
  const AuxConfig& cfg;
  std::map<std::pair<int, Point>, CompanionSampler>& samplers;
  std::uint64_t seed;
  int depth;

  int d;
  std::int64_t n1sq;
  double l4psi;
  std::int64_t max_k_budget;
  std::int64_t budget;
  std::uint64_t event = 0;

  std::int64_t goal = 0;  // main: e1 level to reach; replay: exact target layer
  bool replay = false;
  bool pending_ray = false;
  bool done = false;

  Trajectory traj;
  std::vector<std::int64_t> zetas, zeta_primes;
  std::vector<Point> raw_anchors, anchors;
  std::vector<StretchInfo> stretches;
  std::vector<BetaEntry> betas;
  std::map<std::int64_t, std::int64_t> stop_at_layer;

  Engine(const Environment& e, const AuxConfig& c,
         std::map<std::pair<int, Point>, CompanionSampler>& smps, std::uint64_t sd, int dep)
      : env(e), cfg(c), samplers(smps), seed(sd), depth(dep) {
    d = cfg.ladder.constants.d;
    n1sq = cfg.ladder.sizes[0] * cfg.ladder.sizes[0];
    l4psi = std::pow(static_cast<double>(cfg.ladder.L), 4.0 * cfg.ladder.constants.psi);
    max_k_budget = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(l4psi)) - 1);
    std::int64_t ni = cfg.ladder.sizes.back();
    budget = cfg.step_budget > 0 ? cfg.step_budget : 100 * cfg.ladder.L * ni * ni;
  }

  void init(const Point& start, std::int64_t goal_level, bool as_replay) {
    goal = goal_level;
    replay = as_replay;
    traj.start = start;
    traj.positions.push_back(start);
    zetas.push_back(0);
    zeta_primes.push_back(0);
    raw_anchors.push_back(start);
    anchors.push_back(start);
    stop_at_layer.emplace(start[0], 0);
    pending_ray = start == zero_point(d);
  }

  void append(int dir) {
    if (budget-- <= 0) throw BudgetExhausted("auxiliary run exceeded its step budget");
    traj.steps.push_back(static_cast<std::uint8_t>(dir));
    Point next = traj.positions.back() + unit_step(dir, d);
    if (!replay && next == zero_point(d))
      throw DomainError("construction revisited the origin");
    traj.positions.push_back(next);
    if (replay ? next[0] == goal : next[0] >= goal) done = true;
  }

  std::uint64_t next_event_seed(std::uint64_t domain) {
    return mix64(seed, mix64(domain, event++));
  }

  const Pmf& target_law(int k) const { return cfg.dn->front_law[static_cast<size_t>(k - 1)]; }

  // Companion of a deterministic displacement: an exact draw of the target,
  // coupled trivially. Feasible only while the target's spread stays under
  // the correction budget.
  Point delta_companion(int k, const Point& x) {
    const Pmf& law = target_law(k);
    for (const auto& [y, w] : law)
      if (static_cast<double>(norm_inf(y - x)) >= l4psi)
        throw InfeasibleCoupling("front-law spread exceeds the correction budget at scale " +
                                 std::to_string(k));
    CounterStream stream = tagged_stream(next_event_seed(kDomAuxBeta), kDomAuxBeta);
    double u = stream.next_unit();
    double acc = 0;
    Point pick = law.back().first;
    for (const auto& [y, w] : law) {
      acc += w;
      if (u < acc) {
        pick = y;
        break;
      }
    }
    return pick;
  }

  Pmf tabulate_stretch_law(int k, const Point& from, std::int64_t target_layer) {
    std::int64_t samples =
        std::max<std::int64_t>(20, cfg.companion_samples >> (2 * std::min(depth, 15)));
    std::uint64_t tab_seed = next_event_seed(kDomAuxReplay);
    Pmf out;
    out.reserve(static_cast<size_t>(samples));
    for (std::int64_t r = 0; r < samples; ++r) {
      Engine sub(env, cfg, samplers, mix64(tab_seed, static_cast<std::uint64_t>(r)), depth + 1);
      sub.init(from, target_layer, true);
      out.emplace_back(sub.run_replay(k), 1.0 / static_cast<double>(samples));
    }
    return pmf_clean(std::move(out));
  }

  const CompanionSampler& sampler_for(int k, const Point& from, std::int64_t target_layer) {
    auto key = std::make_pair(k, from);
    auto it = samplers.find(key);
    if (it != samplers.end()) return it->second;
    Pmf x_law = tabulate_stretch_law(k, from, target_layer);
    double lam = std::min(cfg.lambda[static_cast<size_t>(k - 1)], 1.0 - 1e-9);
    CompanionSampler smp = companion_sampler(target_law(k), x_law, lam, max_k_budget);
    return samplers.emplace(key, std::move(smp)).first->second;
  }

  std::optional<Point> compute_beta(int k, std::int64_t j, const Point& lower_sum) {
    const std::int64_t nk = cfg.ladder.sizes[static_cast<size_t>(k - 1)];
    const std::int64_t nk2 = nk * nk;
    Point zhat(d);
    Point x_realized(d);
    if (k == 1 && j == 1) {
      x_realized[0] = n1sq;
      zhat = delta_companion(1, x_realized);
    } else {
      auto it = stop_at_layer.find(j * nk2 - nk2);
      if (it == stop_at_layer.end()) return std::nullopt;
      const Point& x_def = anchors[static_cast<size_t>(it->second)];
      if (cfg.classifier->good(lattice_cover(x_def, nk), k)) return std::nullopt;
      x_realized = traj.positions.back() - x_def + lower_sum;
      if (k == 1) {
        // A computable scale-1 correction follows a forced ray, so its raw
        // displacement is the deterministic layer step.
        if (x_realized[0] != n1sq) throw DomainError("scale-1 correction off its forced ray");
        zhat = delta_companion(1, x_realized);
      } else {
        const CompanionSampler& smp = sampler_for(k, x_def, j * nk2);
        CounterStream stream = tagged_stream(next_event_seed(kDomAuxBeta), kDomAuxBeta);
        zhat = smp(x_realized, stream);
      }
    }
    Point beta = zhat - x_realized;
    if (beta[0] != 0) throw DomainError("correction left the e1 layer");
    if (static_cast<double>(norm_inf(beta)) >= l4psi)
      throw DomainError("correction exceeded the size budget");
    return beta;
  }

  // Corrections for every scale whose grid holds this layer, bottom up; each
  // scale's realized displacement folds in the lower scales' corrections.
  Point beta_pass(std::int64_t layer, int max_scale) {
    Point corr(d);
    for (int k = 1; k <= max_scale; ++k) {
      std::int64_t nk = cfg.ladder.sizes[static_cast<size_t>(k - 1)];
      if (layer % (nk * nk) != 0) break;
      std::optional<Point> beta = compute_beta(k, layer / (nk * nk), corr);
      if (beta) {
        betas.push_back({k, layer / (nk * nk), *beta});
        corr += *beta;
      }
    }
    return corr;
  }

  void do_stop() {
    Point xp = traj.positions.back();
    std::int64_t t_stop = traj.length();

    Point corr = beta_pass(xp[0], cfg.ladder.iota);
    Point x = xp + corr;
    for (int axis = 1; axis < d; ++axis) {
      std::int64_t delta = x[axis] - xp[axis];
      int dir = delta > 0 ? 2 * axis : 2 * axis + 1;
      for (std::int64_t i = 0; i < std::llabs(delta); ++i) append(dir);
    }
    append(0);
    if (done) return;  // the forward bump reached the goal; the stop stays unrecorded
    append(1);

    stop_at_layer.emplace(xp[0], static_cast<std::int64_t>(zetas.size()));
    zetas.push_back(t_stop);
    raw_anchors.push_back(xp);
    zeta_primes.push_back(traj.length());
    anchors.push_back(traj.positions.back());
  }

  void run_stretch() {
    Point x = anchors.back();
    std::int64_t from = traj.length();
    std::int64_t retries = 0;
    int level;
    if (pending_ray) {
      pending_ray = false;
      level = 0;
      for (std::int64_t i = 0; i < n1sq && !done; ++i) append(0);
    } else {
      level = level_of(x, cfg.ladder, *cfg.classifier);
      if (level > 0) {
        std::int64_t nk = cfg.ladder.sizes[static_cast<size_t>(level - 1)];
        BlockSpec block(lattice_cover(x, nk), nk, e1_direction(d));
        ConditionedSegment seg = sample_front_exit(env, block, x,
                                                   next_event_seed(kDomAuxStretch),
                                                   cfg.max_retries, 0);
        retries = seg.retries;
        for (std::int64_t t = 0; t < seg.traj.length() && !done; ++t)
          append(seg.traj.steps[static_cast<size_t>(t)]);
      } else {
        for (std::int64_t i = 0; i < n1sq && !done; ++i) append(0);
      }
    }
    stretches.push_back({level, from, traj.length(), x, retries});
  }

  void run_main() {
    while (!done) {
      run_stretch();
      if (!done) do_stop();
    }
  }

  Point run_replay(int top_scale) {
    while (!done) {
      run_stretch();
      if (!done) do_stop();
    }
    Point corr = beta_pass(goal, top_scale - 1);
    return traj.positions.back() - traj.start + corr;
  }
};

std::vector<std::int64_t> count_bad_blocks(const Trajectory& traj, const ScaleLadder& ladder,
                                           const BlockClassifier& cls) {
  std::unordered_set<Point, PointHash> visited(traj.positions.begin(), traj.positions.end());
  std::vector<std::int64_t> q(ladder.sizes.size(), 0);
  int d = ladder.constants.d;
  for (size_t ki = 0; ki < ladder.sizes.size(); ++ki) {
    std::int64_t nk = ladder.sizes[ki];
    std::int64_t nk2 = nk * nk;
    std::int64_t hw = BlockSpec(Point(d), nk, e1_direction(d)).transverse_halfwidth();
    std::int64_t s = lattice_spacing(nk);
    std::set<Point> bad;
    for (const Point& p : visited) {
      std::int64_t t0 = floor_div(p[0], nk2);
      for (std::int64_t t = t0; t <= t0 + 1; ++t) {
        if (std::llabs(p[0] - t * nk2) >= nk2) continue;
        Point z(d);
        z[0] = t * nk2;
        if (d == 1) {
          if (!cls.good(z, static_cast<int>(ki) + 1)) bad.insert(z);
          continue;
        }
        // Anchor coordinates q*s with |p - q*s| < hw, per transverse axis.
        std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
        bool empty = false;
        for (int axis = 1; axis < d; ++axis) {
          std::int64_t lo = floor_div(p[axis] - hw, s) + 1;
          std::int64_t hi = floor_div(p[axis] + hw - 1, s);
          if (lo > hi) empty = true;
          ranges.emplace_back(lo, hi);
        }
        if (empty) continue;
        std::vector<std::int64_t> idx;
        for (auto& [lo, hi] : ranges) idx.push_back(lo);
        bool more = true;
        while (more) {
          for (int axis = 1; axis < d; ++axis) z[axis] = idx[static_cast<size_t>(axis - 1)] * s;
          if (!cls.good(z, static_cast<int>(ki) + 1)) bad.insert(z);
          int axis = 0;
          while (axis < d - 1) {
            if (++idx[static_cast<size_t>(axis)] <= ranges[static_cast<size_t>(axis)].second)
              break;
            idx[static_cast<size_t>(axis)] = ranges[static_cast<size_t>(axis)].first;
            ++axis;
          }
          if (axis == d - 1) more = false;
        }
      }
    }
    q[ki] = static_cast<std::int64_t>(bad.size());
  }
  return q;
}

}  // namespace

BlockClassifier::BlockClassifier(std::function<bool(const Point&, int)> judge)
    : judge_(std::move(judge)) {
  if (!judge_) throw std::invalid_argument("classifier needs a judge");
}

bool BlockClassifier::good(const Point& z, int k) const {
  auto key = std::make_pair(z, k);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  bool verdict = judge_(z, k);
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(key, verdict).first->second;
}

std::shared_ptr<BlockClassifier> evidence_classifier(const Environment& env,
                                                     const ScaleLadder& ladder, double theta,
                                                     std::int64_t n_samples, std::uint64_t seed,
                                                     ClassifyConfig cfg) {
  auto sizes = ladder.sizes;
  return std::make_shared<BlockClassifier>([=](const Point& z, int k) {
    if (k < 1 || k > static_cast<int>(sizes.size()))
      throw DomainError("scale index outside the ladder");
    BlockSpec block(z, sizes[static_cast<size_t>(k - 1)], e1_direction(z.d));
    return classify_block(env, block, theta, n_samples, anchor_seed(seed, z, k), cfg).good;
  });
}

AuxConfig make_aux_config(const ScaleLadder& ladder, const EnvironmentLaw& law,
                          std::vector<double> w, double u, std::uint64_t seed,
                          std::int64_t dn_samples) {
  if (ladder.iota < 1 || ladder.sizes.empty()) throw std::invalid_argument("ladder is empty");
  if (law.d != ladder.constants.d) throw std::invalid_argument("dimension mismatch");
  if (static_cast<int>(w.size()) != law.d - 1)
    throw std::invalid_argument("w needs one entry per transverse axis");
  for (double wi : w)
    if (!(wi >= -1.0 && wi <= 1.0)) throw std::invalid_argument("w entries must be in [-1,1]");

  AuxConfig cfg;
  cfg.ladder = ladder;
  cfg.w = std::move(w);
  cfg.u = u;
  Offsets off = layer_offsets(ladder, u);
  cfg.M = off.M;
  cfg.A = off.A;
  cfg.offsets_feasible = off.feasible;

  double l = static_cast<double>(ladder.L);
  cfg.lambda.reserve(ladder.sizes.size());
  for (size_t k = 1; k <= ladder.sizes.size(); ++k)
    cfg.lambda.push_back(std::pow(l, -ladder.constants.chi) *
                         static_cast<double>(scale_R(static_cast<int>(k) + 5, ladder.L)));

  cfg.dn = std::make_shared<ScaleLawCache>();
  for (size_t k = 0; k < ladder.sizes.size(); ++k) {
    cfg.dn->front_law.push_back(front_law_of(
        law, ladder.sizes[k], mix64(seed, mix64(kDomAuxDn, static_cast<std::uint64_t>(k))),
        dn_samples));
    cfg.E.push_back(pmf_mean(cfg.dn->front_law.back()));
  }
  return cfg;
}

int level_of(const Point& x, const ScaleLadder& ladder, const BlockClassifier& cls) {
  for (int k = ladder.iota; k >= 1; --k) {
    std::int64_t nk = ladder.sizes[static_cast<size_t>(k - 1)];
    if (x[0] % (nk * nk) != 0) continue;
    if (cls.good(lattice_cover(x, nk), k)) return k;
  }
  return 0;
}

ConditionedSegment conditioned_front_exit(const Environment& env, const BlockSpec& block,
                                          const Point& start, std::uint64_t seed,
                                          std::int64_t max_retries, std::int64_t step_budget) {
  if (max_retries < 1) throw std::invalid_argument("max_retries must be positive");
  return sample_front_exit(env, block, start, seed, max_retries, step_budget);
}

AuxRun run_aux(const Environment& env, const AuxConfig& cfg, double u, std::uint64_t seed) {
  if (!cfg.classifier) throw std::invalid_argument("config has no classifier attached");
  if (!cfg.dn || cfg.dn->front_law.size() != cfg.ladder.sizes.size())
    throw std::invalid_argument("config has no front-law cache");
  if (env.law.d != cfg.ladder.constants.d) throw std::invalid_argument("dimension mismatch");
  Offsets off = layer_offsets(cfg.ladder, u);

  std::map<std::pair<int, Point>, CompanionSampler> samplers;
  Engine eng(env, cfg, samplers, mix64(seed, kDomAuxRun), 0);
  eng.init(zero_point(cfg.ladder.constants.d), 2 * cfg.ladder.L, false);
  eng.run_main();

  AuxRun run;
  run.traj = std::move(eng.traj);
  run.zetas = std::move(eng.zetas);
  run.zeta_primes = std::move(eng.zeta_primes);
  run.raw_anchors = std::move(eng.raw_anchors);
  run.anchors = std::move(eng.anchors);
  run.stretches = std::move(eng.stretches);
  run.betas = std::move(eng.betas);
  run.reached_goal = true;
  run.stops = static_cast<std::int64_t>(run.zetas.size()) - 1;

  for (const BetaEntry& b : run.betas) {
    if (b.beta[0] != 0) throw DomainError("correction left the e1 layer");
    if (static_cast<double>(norm_inf(b.beta)) >= eng.l4psi)
      throw DomainError("correction exceeded the size budget");
  }
  for (size_t n = 0; n < run.anchors.size(); ++n) {
    if (run.anchors[n][0] % eng.n1sq != 0 || run.raw_anchors[n][0] % eng.n1sq != 0)
      throw DomainError("anchor off the layer grid");
  }

  run.Q = count_bad_blocks(run.traj, cfg.ladder, *cfg.classifier);
  std::int64_t q_sum = 0;
  for (std::int64_t q : run.Q) q_sum += q;
  run.stop_bound = std::pow(static_cast<double>(cfg.ladder.L), 2.0 * cfg.ladder.constants.chi) *
                   static_cast<double>(cfg.ladder.iota + 2 + q_sum);
  if (static_cast<double>(run.stops) > run.stop_bound)
    throw DomainError("stop count exceeded the bad-block budget");

  std::int64_t horizon = 0;
  for (size_t k = 0; k < cfg.ladder.sizes.size(); ++k)
    horizon = std::max(horizon,
                       (off.A[k] + off.M) * cfg.ladder.sizes[k] * cfg.ladder.sizes[k]);
  run.layers_covered = horizon <= 2 * cfg.ladder.L;
  return run;
}

WEventReport w_event(const AuxRun& run, const AuxConfig& cfg) {
  const ScaleLadder& ladder = cfg.ladder;
  int d = ladder.constants.d;
  WEventReport rep;
  rep.all = true;

  // T' per layer: the corrected stop time when the layer held a stop, the
  // raw first hit otherwise.
  std::map<std::int64_t, std::int64_t> stop_of;
  for (size_t n = 0; n < run.raw_anchors.size(); ++n)
    stop_of.emplace(run.raw_anchors[n][0], static_cast<std::int64_t>(n));
  auto t_prime_position = [&](std::int64_t layer) -> std::optional<Point> {
    auto it = stop_of.find(layer);
    if (it != stop_of.end())
      return run.traj.at(run.zeta_primes[static_cast<size_t>(it->second)]);
    for (std::int64_t t = 0; t <= run.traj.length(); ++t)
      if (run.traj.at(t)[0] == layer) return run.traj.at(t);
    return std::nullopt;
  };

  for (size_t ki = 0; ki < ladder.sizes.size(); ++ki) {
    std::int64_t nk = ladder.sizes[ki];
    std::int64_t nk2 = nk * nk;
    std::int64_t a = cfg.A[ki];
    std::vector<std::uint8_t> row;
    auto base = t_prime_position(a * nk2);
    if (!base && cfg.M > 0)
      throw IncompleteRun("run never reached layer " + std::to_string(a * nk2));
    bool scale_ok = true;
    for (std::int64_t j = a + 1; j <= a + cfg.M; ++j) {
      auto pos = t_prime_position(j * nk2);
      if (!pos) throw IncompleteRun("run never reached layer " + std::to_string(j * nk2));
      double worst = 0;
      for (int axis = 0; axis < d; ++axis) {
        double expect = static_cast<double>((*base)[axis]) +
                        static_cast<double>(j - a) * cfg.E[ki][static_cast<size_t>(axis)];
        if (axis > 0)
          expect += static_cast<double>(j - a) * static_cast<double>(nk) *
                    cfg.w[static_cast<size_t>(axis - 1)];
        worst = std::max(worst, std::abs(static_cast<double>((*pos)[axis]) - expect));
      }
      bool ok = worst < static_cast<double>(nk);
      row.push_back(ok ? 1 : 0);
      scale_ok = scale_ok && ok;
    }
    rep.layer_pass.push_back(std::move(row));
    rep.scale_pass.push_back(scale_ok ? 1 : 0);
    rep.all = rep.all && scale_ok;
  }
  return rep;
}

WProbabilityTable estimate_w_probability(const Environment& env, const AuxConfig& cfg,
                                         const std::vector<std::vector<double>>& w_grid,
                                         std::int64_t n_runs, std::uint64_t seed, int workers) {
  if (n_runs < 1) throw std::invalid_argument("need at least one run");
  std::vector<AuxConfig> variants;
  variants.reserve(w_grid.size());
  for (const auto& w : w_grid) {
    if (static_cast<int>(w.size()) != cfg.ladder.constants.d - 1)
      throw std::invalid_argument("w needs one entry per transverse axis");
    AuxConfig v = cfg;
    v.w = w;
    variants.push_back(std::move(v));
  }

  struct Acc {
    std::vector<std::int64_t> hits;
    std::int64_t runs = 0;
  };
  auto accs = chunked_map<Acc>(n_runs, workers, [&](std::int64_t i, Acc& acc) {
    if (acc.hits.size() != variants.size()) acc.hits.assign(variants.size(), 0);
    AuxRun run = run_aux(env, cfg, cfg.u, mix64(seed, static_cast<std::uint64_t>(i)));
    for (size_t v = 0; v < variants.size(); ++v)
      if (w_event(run, variants[v]).all) ++acc.hits[v];
    ++acc.runs;
  });

  std::vector<std::int64_t> hits(variants.size(), 0);
  std::int64_t total = 0;
  for (const Acc& acc : accs) {
    total += acc.runs;
    for (size_t v = 0; v < acc.hits.size(); ++v) hits[v] += acc.hits[v];
  }

  WProbabilityTable table;
  table.n_runs = total;
  table.bound = std::pow(cfg.u, cfg.ladder.constants.epsilon - 0.5);
  for (size_t v = 0; v < variants.size(); ++v) {
    WProbabilityEntry entry;
    entry.w = w_grid[v];
    entry.p_hat = static_cast<double>(hits[v]) / static_cast<double>(total);
    entry.stderr_ = std::sqrt(entry.p_hat * (1.0 - entry.p_hat) / static_cast<double>(total));
    entry.flagged = entry.p_hat > 0 && entry.p_hat + 3.0 * entry.stderr_ < table.bound;
    table.entries.push_back(std::move(entry));
  }
  return table;
}

BadVisitReport bad_visit_counts(const AuxRun& run) {
  BadVisitReport rep;
  rep.Q = run.Q;
  rep.stops = run.stops;
  rep.bound = run.stop_bound;
  rep.pass = static_cast<double>(run.stops) <= run.stop_bound;
  return rep;
}

LikelihoodReport likelihood_floor(const AuxRun& run, const AuxConfig& cfg,
                                  const Environment& env, double eta, bool audit) {
  if (!(eta > 0) || eta >= 1) throw std::invalid_argument("eta must be in (0,1)");
  const ScaleLadder& ladder = cfg.ladder;
  double l4psi = std::pow(static_cast<double>(ladder.L), 4.0 * ladder.constants.psi);

  LikelihoodReport rep;
  rep.q_upsilon = run.stop_bound;
  rep.log_bound = std::log(0.5) + rep.q_upsilon * (l4psi + 2.0) * std::log(eta);
  rep.bound = std::exp(rep.log_bound);
  if (!audit) return rep;
  if (run.traj.length() > 10000)
    throw AuditTooLong("path has " + std::to_string(run.traj.length()) + " steps");

  double log_x = 0;
  for (std::int64_t t = 0; t < run.traj.length(); ++t)
    log_x += std::log(env.kernel_at(run.traj.at(t))[run.traj.steps[static_cast<size_t>(t)]]);

  // The construction's probability of the same path, bounded above: each
  // front-conditioned crossing contributes its kernel product divided by
  // the exact front-exit probability; every deterministic piece and every
  // correction draw contributes at most one.
  double log_y = 0;
  for (const StretchInfo& s : run.stretches) {
    if (s.level == 0) continue;
    std::int64_t nk = ladder.sizes[static_cast<size_t>(s.level - 1)];
    for (std::int64_t t = s.from; t < s.to; ++t)
      log_y += std::log(env.kernel_at(run.traj.at(t))[run.traj.steps[static_cast<size_t>(t)]]);
    BlockSpec block(lattice_cover(s.anchor, nk), nk, e1_direction(s.anchor.d));
    ExitDistribution dist = exact_exit(env, block, s.anchor);
    if (!(dist.front_mass > 0)) throw EmptyFront("conditioned block has no front mass");
    log_y -= std::log(dist.front_mass);
  }

  rep.audited = true;
  rep.log_x_prob = log_x;
  rep.log_y_upper = log_y;
  rep.log_ratio_lower = log_x - log_y;
  rep.pass = rep.log_ratio_lower >= rep.log_bound - 1e-9;
  return rep;
}

}  // namespace rwre
