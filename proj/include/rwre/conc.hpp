#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/geom.hpp"
#include "rwre/grid.hpp"
#include "rwre/prf.hpp"
#include "rwre/regen.hpp"

namespace rwre {

// Tail bound 2*exp(-K^2 / (2*essential_variance)) for a zero-mean martingale
// whose per-step increments have summed squared essential bounds equal to
// essential_variance. Vacuous (value 2) at K = 0.
double azuma_bound(double essential_variance, double K);

// Martingale path generator: increment(k, m_prev, stream) draws D_k for
// k = 1..n given M_{k-1}. U[k-1] must dominate |D_k| surely and the
// conditional mean of D_k must vanish; both are audited by sampling.
struct MartingaleSpec {
  std::int64_t n = 0;
  std::vector<double> U;
  std::function<double(std::int64_t, double, CounterStream&)> increment;
};

struct MartingaleAudit {
  struct Entry {
    double K = 0;
    double empirical = 0;  // P(|M_n| > K) over the sampled paths
    double bound = 0;
    double sigma = 0;  // binomial standard error of the empirical tail
    bool pass = false;
  };
  double essential_variance = 0;
  std::vector<Entry> entries;
  bool increments_bounded = true;
  double worst_mean_z = 0;  // max over steps of |mean D_k| in standard errors
  bool means_centered = true;
  bool pass = false;
  std::string failure;
};

// Samples n_runs paths and compares the empirical tail at every K against
// azuma_bound plus 3 standard errors; also audits the spec invariants
// (|D_k| <= U_k surely, conditional mean zero within 4 standard errors).
MartingaleAudit martingale_tail_audit(const MartingaleSpec& spec,
                                      const std::vector<double>& K_grid, std::int64_t n_runs,
                                      std::uint64_t seed, int workers = 1);

// Finite-scale regularity gate on a walk's regeneration records: at least N
// records, the first N of which are certified with margin >= R_1(N) and have
// slab radius <= R_1(N). The radius comparison is non-strict: every
// completed slab has radius >= 1, so a strict bound would be unsatisfiable
// at the small scales where R_1(N) = 1.
bool regularity_gate(const std::vector<RegenerationRecord>& records, std::int64_t N);

struct IntersectionSample {
  std::int64_t count = 0;  // shared in-block sites; 0 unless both gates pass
  bool gate1 = false;
  bool gate2 = false;
  std::int64_t visited1 = 0;  // distinct in-block sites of each walk alone
  std::int64_t visited2 = 0;
};

// Two independent walks in the same environment from the same middle-third
// start, each run on a fixed step budget (default 100*N^2 + 1000). The count
// is the exact size of the intersection of their in-block visit sets, gated
// by regularity_gate per walk.
IntersectionSample intersection_count(const Environment& env, const Point& start,
                                      const BlockSpec& block,
                                      std::pair<std::uint64_t, std::uint64_t> seed_pair,
                                      std::int64_t step_budget = 0);

struct IntersectionTailReport {
  std::int64_t N = 0;
  std::int64_t pairs = 0;
  double gate_rate = 0;   // fraction of pairs with both gates passing
  double mean_count = 0;  // gated mean over all pairs
  double control_mean = 0;  // same-seed pairs in independent environments; NaN if unavailable
  double expectation_bound = 0;  // R_2(N), reported not asserted
  bool mean_within_bound = false;
  std::vector<std::pair<std::int64_t, double>> survival;  // (n, P(count > n*R_1(N)^d))
  double fit_rate = 0;  // exponential decay rate of the survival curve
  bool fit_valid = false;
  std::string regime;  // "d>=4" inside the supported range, "d<4" otherwise
};

// Survival curve of the gated intersection count in units of R_1(N)^d over
// n_pairs environment/walk draws, with an exponential fit and the
// quenched-expectation comparison against R_2(N). The law overload draws a
// fresh environment per pair and adds an independent-environment control;
// the fixed-environment overload varies only the walks.
IntersectionTailReport intersection_tail(const EnvironmentLaw& law, const BlockSpec& block,
                                         std::int64_t n_pairs, std::uint64_t seed,
                                         std::int64_t step_budget = 0, int workers = 1);
IntersectionTailReport intersection_tail(const Environment& env, const BlockSpec& block,
                                         std::int64_t n_pairs, std::uint64_t seed,
                                         std::int64_t step_budget = 0, int workers = 1);

struct HittingField {
  BlockSpec block;
  std::unordered_map<Point, double, PointHash> field;  // site -> gated visit frequency
  double sum = 0;             // expected gated distinct-visit count
  double sum_of_squares = 0;  // compared against expectation_bound
  double gate_rate = 0;
  double expectation_bound = 0;  // R_2(N)
};

// Per-site frequency of {site visited and the walk passes the scale gate}
// from n_samples quenched runs. Values lie in [0,1].
HittingField hitting_field(const Environment& env, const BlockSpec& block, const Point& start,
                           std::int64_t n_samples, std::uint64_t seed,
                           std::int64_t step_budget = 0, int workers = 1);

using SignedMeasure = std::vector<std::pair<Point, double>>;

// Second-order transfer bound: audits, on the inflated bounding box of the
// support and rho, that neighbor increments of f stay below m, that all
// discrete second differences (pure and mixed) stay below k, that mu has
// zero total mass, l1-mean below L, and rho-centered l1 second moment below
// J; then checks |sum mu(x) f(x)| <= L*m + J*k/2. Zero thresholds are read
// as exact-equality constraints (a strict bound below zero is unsatisfiable).
// Throws HypothesisViolated naming the first failed hypothesis.
bool taylor_check(const SignedMeasure& mu, const std::function<double(const Point&)>& f,
                  double m, double k, double L, double J, const Point& rho);

}  // namespace rwre
