#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/exitstats.hpp"
#include "rwre/geom.hpp"
#include "rwre/grid.hpp"
#include "rwre/walk.hpp"

namespace rwre {

// Memoized good/bad verdicts for anchored blocks, keyed by (anchor, scale
// index). The judge must be deterministic; the cache only avoids repeat
// work, so verdicts are independent of query order.
class BlockClassifier {
 public:
  explicit BlockClassifier(std::function<bool(const Point& z, int k)> judge);

  bool good(const Point& z, int k) const;

 private:
  std::function<bool(const Point&, int)> judge_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<Point, int>, bool> cache_;
};

// Classifier backed by Monte Carlo block classification of the environment.
// Each block gets a seed derived from its anchor, so verdicts are stable
// across runs and processes.
std::shared_ptr<BlockClassifier> evidence_classifier(const Environment& env,
                                                     const ScaleLadder& ladder, double theta,
                                                     std::int64_t n_samples, std::uint64_t seed,
                                                     ClassifyConfig cfg = {});

// Front-conditioned annealed exit law per ladder scale, tabulated once and
// shared by every run built from the same config.
struct ScaleLawCache {
  std::vector<Pmf> front_law;  // index k-1, displacement law on the front face
};

// Everything a forced-run construction needs: the ladder, per-scale coupling
// budgets, the probe direction w acting on transverse axes, the layer-count
// horizon M with per-scale offsets A_k, and the annealed per-scale mean
// front-exit displacement E_k.
struct AuxConfig {
  ScaleLadder ladder;
  std::vector<double> lambda;          // per scale: L^-chi * R_{5+k}(L)
  std::vector<double> w;               // d-1 entries in [-1,1]
  double u = 0;
  std::int64_t M = 0;                  // floor((ln u)^(1-epsilon))
  std::vector<std::int64_t> A;         // A_1 = 1; A_k minimal with
                                       // A_k N_k^2 > (M + A_{k-1}) N_{k-1}^2
  bool offsets_feasible = true;        // every A_k <= M
  std::vector<std::vector<double>> E;  // per-scale mean of the front law
  std::shared_ptr<BlockClassifier> classifier;
  std::shared_ptr<ScaleLawCache> dn;
  std::int64_t step_budget = 0;        // whole-run cap; 0 picks a default
  std::int64_t max_retries = 10000;    // conditioned-exit rejection cap
  std::int64_t companion_samples = 400;  // stretch-law tabulation size
};

// Builds budgets, M, offsets, and the per-scale front laws (by annealed
// Monte Carlo with dn_samples runs per scale). The classifier member is left
// null; callers attach one before running.
AuxConfig make_aux_config(const ScaleLadder& ladder, const EnvironmentLaw& law,
                          std::vector<double> w, double u, std::uint64_t seed,
                          std::int64_t dn_samples = 4000);

// Largest scale k whose layer grid contains <x,e1> and whose covering block
// is classified good; 0 when no scale qualifies.
int level_of(const Point& x, const ScaleLadder& ladder, const BlockClassifier& cls);

struct ConditionedSegment {
  Trajectory traj;  // start site through the front exit site inclusive
  std::int64_t retries = 0;
};

// Rejection-sampled quenched run from start, accepted when the block exit is
// through the front face. Start must lie in the middle third. Throws
// ConditioningTooRare once max_retries attempts all exited elsewhere.
ConditionedSegment conditioned_front_exit(const Environment& env, const BlockSpec& block,
                                          const Point& start, std::uint64_t seed,
                                          std::int64_t max_retries,
                                          std::int64_t step_budget = 0);

struct BetaEntry {
  int k = 0;
  std::int64_t j = 0;
  Point beta;  // companion minus raw displacement; e1 component is 0
};

struct StretchInfo {
  int level = 0;             // scale governing the stretch; 0 is a forced ray
  std::int64_t from = 0;     // trajectory index of the corrected anchor
  std::int64_t to = 0;       // trajectory index of the stretch end
  Point anchor;              // position at from
  std::int64_t retries = 0;  // conditioned-exit rejections
};

struct AuxRun {
  Trajectory traj;
  std::vector<std::int64_t> zetas;        // stop times, zetas[0] = 0
  std::vector<std::int64_t> zeta_primes;  // correction-end times, aligned
  std::vector<Point> raw_anchors;         // position at each stop
  std::vector<Point> anchors;             // position after the correction
  std::vector<StretchInfo> stretches;
  std::vector<BetaEntry> betas;     // every computed correction, zeros included
  std::vector<std::int64_t> Q;      // per scale: distinct bad blocks touched
  std::int64_t stops = 0;           // stop count past the initial ray
  double stop_bound = 0;            // L^2chi * (iota + 2 + sum Q)
  bool reached_goal = false;        // e1 coordinate reached 2L
  bool layers_covered = false;      // every (A_k + M) N_k^2 layer was reached
};

// The forced run: an initial layer-length ray of +e1 steps, then repeated
// rounds of correction staircase (accumulated companion corrections applied
// along an axis-ordered shortest path, a +e1 step, and a step back), followed
// by a front-conditioned block crossing at the largest good scale, or a
// forced ray when no covering block is good. Terminates on reaching the e1
// level 2L. u sets the layer horizon reported in layers_covered; the walk
// itself does not depend on it.
AuxRun run_aux(const Environment& env, const AuxConfig& cfg, double u, std::uint64_t seed);

struct WEventReport {
  std::vector<std::vector<std::uint8_t>> layer_pass;  // [k-1][j - A_k - 1]
  std::vector<std::uint8_t> scale_pass;
  bool all = false;
};

// Per-layer direction test: at each scale k and layer offset j in
// (A_k, A_k + M], the displacement since layer A_k must stay within N_k
// (sup norm) of (j - A_k) * (E_k + N_k w). Front exits are enforced by the
// construction itself, so only the displacement clause is evaluated. Throws
// IncompleteRun when the run ends before the last required layer.
WEventReport w_event(const AuxRun& run, const AuxConfig& cfg);

struct WProbabilityEntry {
  std::vector<double> w;
  double p_hat = 0;
  double stderr_ = 0;
  bool flagged = false;  // estimate beyond 3 sigma below the bound
};

struct WProbabilityTable {
  std::int64_t n_runs = 0;
  double bound = 0;  // u^(epsilon - 1/2)
  std::vector<WProbabilityEntry> entries;
};

// Shares one batch of runs across the whole w grid: the walk law does not
// depend on w, only the event does. Zero-hit entries are reported without a
// flag; an empty cell at desk scale refutes nothing.
WProbabilityTable estimate_w_probability(const Environment& env, const AuxConfig& cfg,
                                         const std::vector<std::vector<double>>& w_grid,
                                         std::int64_t n_runs, std::uint64_t seed,
                                         int workers = 1);

struct BadVisitReport {
  std::vector<std::int64_t> Q;
  std::int64_t stops = 0;
  double bound = 0;
  bool pass = false;
};

BadVisitReport bad_visit_counts(const AuxRun& run);

struct LikelihoodReport {
  double q_upsilon = 0;  // L^2chi * (iota + 2 + sum Q)
  double log_bound = 0;  // ln(1/2) + q * (L^4psi + 2) * ln(eta)
  double bound = 0;      // exp(log_bound), may underflow to 0
  bool audited = false;
  double log_x_prob = 0;       // exact step-kernel probability of the path
  double log_y_upper = 0;      // conditioned-segment probability product
  double log_ratio_lower = 0;  // log_x_prob - log_y_upper
  bool pass = true;            // audited ratio respects the bound
};

// Floor on the ratio of quenched path probability to the construction's path
// probability. The audit multiplies per-step kernel probabilities for the
// whole path, divides out each conditioned segment's probability (its kernel
// product over the segment divided by the exact front-exit probability from
// its anchor), and checks the ratio against the bound. Throws AuditTooLong
// past 10^4 steps.
LikelihoodReport likelihood_floor(const AuxRun& run, const AuxConfig& cfg,
                                  const Environment& env, double eta, bool audit = true);

}  // namespace rwre
