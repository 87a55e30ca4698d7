#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/geom.hpp"
#include "rwre/grid.hpp"
#include "rwre/prf.hpp"
#include "rwre/regen.hpp"
#include "rwre/walk.hpp"

namespace rwre {

// Finite lattice distribution as sorted (site, weight) atoms. Weights are
// nonnegative; they need not sum to one (sub-probability tables arise from
// budget-censored estimates).
using Pmf = std::vector<std::pair<Point, double>>;

// Sorts by site, merges duplicates, drops zero atoms; throws on negative
// weight or mixed dimensions.
Pmf pmf_clean(Pmf table);
double pmf_total(const Pmf& table);
std::vector<double> pmf_mean(const Pmf& table);  // normalized by total mass
// Sum of weight * |x - mean|_1^2, normalized by total mass.
double pmf_l1_variance(const Pmf& table);
Pmf convolve_pmf(const Pmf& a, const Pmf& b);
// 0.5 * sum |a - b| over the union support; inputs need not be cleaned.
double total_variation(const Pmf& a, const Pmf& b);

enum class ExitMode { kQuenched, kAnnealed };

struct ExitHistogram {
  ExitMode mode = ExitMode::kQuenched;
  std::optional<BlockSpec> block;
  Point start;
  std::map<Point, std::int64_t> counts;  // exit site -> hits
  std::int64_t total = 0;                // runs that exited
  std::int64_t front_total = 0;
  std::int64_t budget_exhausted = 0;     // runs absorbed by the step budget
  std::int64_t step_budget = 0;

  Pmf to_pmf() const;  // counts / total
};

// Monte Carlo exit histogram over a block; the start must lie in the middle
// third. step_budget 0 picks 50*N^4, a diffusive e_1 crossing time with
// headroom; runs that never exit are tallied separately, not as exits.
// Chunk boundaries depend only on n_samples, so any worker count gives
// bit-identical histograms.
ExitHistogram estimate_exit(const Environment& env, const BlockSpec& block, const Point& start,
                            std::int64_t n_samples, std::uint64_t seed,
                            std::int64_t step_budget = 0, int workers = 1);
ExitHistogram estimate_exit(const EnvironmentLaw& law, const BlockSpec& block, const Point& start,
                            std::int64_t n_samples, std::uint64_t seed,
                            std::int64_t step_budget = 0, int workers = 1);

// Same estimator over an explicit interior site list (stops on first step
// outside). No middle-third requirement; front counts need classify_block set.
ExitHistogram estimate_region_exit(const Environment& env, const std::vector<Point>& interior,
                                   const Point& start, std::int64_t n_samples, std::uint64_t seed,
                                   std::int64_t step_budget,
                                   const std::optional<BlockSpec>& classify_block = {},
                                   int workers = 1);
ExitHistogram estimate_region_exit(const EnvironmentLaw& law, const std::vector<Point>& interior,
                                   const Point& start, std::int64_t n_samples, std::uint64_t seed,
                                   std::int64_t step_budget,
                                   const std::optional<BlockSpec>& classify_block = {},
                                   int workers = 1);

struct ExitDistribution {
  std::optional<BlockSpec> block;
  Point start;
  std::map<Point, double> mass;
  double front_mass = 0;
  double total = 0;  // solver residual check: 1 within 1e-10
};

// Interior sites of a block in deterministic order; throws RegionTooLarge
// past max_sites.
std::vector<Point> block_interior(const BlockSpec& block, std::int64_t max_sites = 100000);

// Exact exit law of the quenched chain via the adjoint linear system for
// expected visit counts. Limits: 1e5 interior sites (RegionTooLarge).
ExitDistribution exact_exit(const Environment& env, const BlockSpec& block, const Point& start);
ExitDistribution exact_exit(const Environment& env, const std::vector<Point>& interior,
                            const Point& start,
                            const std::optional<BlockSpec>& classify_block = {});

Pmf exit_pmf(const ExitDistribution& dist);
// Mass restricted to the front face, renormalized; throws EmptyFront.
Pmf front_conditioned_pmf(const ExitDistribution& dist);

// Max point mass and discrete difference magnitudes over the front face.
// Stencils stay entirely on the face, so only transverse axes contribute;
// max_mixed_diff needs two distinct transverse axes and is 0 for d <= 2.
struct DerivativeProfile {
  std::int64_t N = 0;
  double sup_mass = 0;
  double max_first_diff = 0;
  double max_second_diff = 0;
  double max_mixed_diff = 0;
  std::int64_t front_sites = 0;  // support points on the face
};

DerivativeProfile derivative_profile(const ExitDistribution& dist);
DerivativeProfile derivative_profile(const ExitHistogram& hist);

// n-step i.i.d.-sum bounds from the characteristic function. Upper bounds
// come from grid quadrature of |chi|^n against difference weights; even
// powers make the integrand a trigonometric polynomial, which the grid sums
// exactly, and odd powers are bounded through Cauchy-Schwarz between the
// adjacent even powers. The doubled-grid discrepancy is reported and must
// stay below 1e-8 (QuadratureFailure otherwise). Exact values come from the
// dense n-fold convolution table when it fits in memory.
struct LltBounds {
  std::int64_t n = 0;
  double sup_bound = 0;
  double first_bound = 0;   // worst axis
  double second_bound = 0;  // worst axis
  double mixed_bound = 0;   // worst axis pair, 0 for d = 1
  double quadrature_error = 0;
  bool exact_available = false;
  double sup_exact = 0;
  double first_exact = 0;
  double second_exact = 0;
  double mixed_exact = 0;
};

LltBounds llt_bounds(const Pmf& step_law, std::int64_t n);
// P(S_n = x) by exact discrete Fourier inversion (chi^n is a trigonometric
// polynomial for every n, so a large enough grid sums it exactly).
double llt_point_mass(const Pmf& step_law, std::int64_t n, const Point& x);
// Dense n-fold convolution; throws RegionTooLarge when the bounding box
// exceeds the cell budget.
std::map<Point, double> llt_convolution_table(const Pmf& step_law, std::int64_t n);

// Coupling certificate for closeness of mu2 to mu1: a triple
// (Z1 ~ mu1, Z0, Z2 ~ mu2) built by cube matching. Z2 = X is resampled
// within its side-cube_side cube to Y' ~ mu1 conditioned on the cube
// (Y' = X where mu1 gives the cube no mass), then recentered by an
// independent two-point-per-axis offset U chosen so E(Z0) = E(mu1) exactly.
// Checked clauses:
//   (2) P(Z1 != Z0) <= lambda under the optimal pointwise coupling,
//   (3) |Z0 - Z2|_inf < K always (read as = 0 when K = 0),
//   (4) E(Z1) - E(Z0) = 0 within 1e-9 per axis,
//   (5) sum |mu1 - law(Z0)| * |x - E(mu1)|_1^2 <= lambda * Var_l1(mu1).
// Construction failure (the recentering offset cannot fit in K) throws
// InfeasibleCoupling; a constructible coupling that violates a clause comes
// back uncertified with the first violated clause number.
struct ClosenessCertificate {
  double lambda = 0;
  std::int64_t K = 0;
  bool certified = false;
  int violated_clause = 0;
  double measured_lambda = 0;         // clause 2 value: TV(law(Z0), mu1)
  std::int64_t max_displacement = 0;  // clause 3 value: max |Z0 - Z2|_inf
  double mean_residual = 0;           // clause 4 value: worst axis
  double second_moment_lhs = 0;       // clause 5 left side
  double second_moment_rhs = 0;       // clause 5 right side
  std::int64_t cube_side = 1;
  Pmf shift;   // law of U
  Pmf z0_law;  // law of Z0 = Y' + U
};

ClosenessCertificate check_closeness(const Pmf& mu1, const Pmf& mu2, double lambda,
                                     std::int64_t K);

// Deterministic sampler for the companion Z0 given Z2 = x, built at the
// smallest K whose certificate passes; law(Z0) is then (lambda, 0)-close to
// the target. Throws InfeasibleCoupling when no K up to max_K certifies.
struct CompanionSampler {
  ClosenessCertificate cert;
  int d = 1;
  std::int64_t cube_side = 1;
  std::map<Point, Pmf> cube_conditionals;  // cube corner -> mu1 | cube
  Pmf shift;

  Point operator()(const Point& x, CounterStream& stream) const;
};

CompanionSampler companion_sampler(const Pmf& target, const Pmf& x_law, double lambda,
                                   std::int64_t max_K = 64);

// Cube discrepancy threshold N^((theta-1)(d-1) - theta(d-1)/(d+1)).
double cube_discrepancy_bound(double theta, int d, std::int64_t N);

struct CubeCheck {
  Point corner;  // transverse cube corner in block coordinates
  double quenched = 0;
  double annealed = 0;
  double gap = 0;
  double allowance = 0;  // bound + sampling slack
};

// Evidence-backed block classification. good means every probe passed all
// three checks: front exits dominate (frequency >= 1 - delta_exit, budget
// burnouts count against), the quenched mean exit stays within R_3(N) of the
// annealed mean, and per-cube front masses on side-floor(N^theta) transverse
// cubes stay within cube_discrepancy_bound of annealed. Sampling slack of
// three standard errors is added to every threshold; margins are reported
// so callers can see how close the call was.
struct ClassifyReport {
  bool good = true;
  std::int64_t N = 0;
  double theta = 0;
  std::int64_t samples_per_probe = 0;
  double front_freq = 1;       // worst probe
  double front_threshold = 0;  // 1 - delta_exit
  double front_margin = 0;
  double mean_gap = 0;  // worst probe, worst axis
  double mean_allowance = 0;
  double mean_margin = 0;
  double cube_gap = 0;  // worst probe, worst cube
  double cube_allowance = 0;
  double cube_margin = 0;
  std::vector<CubeCheck> worst_cubes;
  std::vector<std::string> failures;
};

struct ClassifyConfig {
  std::vector<Point> probes;             // empty: block center plus 2d axis offsets
  std::vector<std::int64_t> sub_sizes;   // extra sub-block sizes to audit; empty: {N}
  double delta_exit = 0.05;
  std::int64_t step_budget = 0;          // 0: estimate_exit default
  int workers = 1;
};

ClassifyReport classify_block(const Environment& env, const BlockSpec& block, double theta,
                              std::int64_t n_samples, std::uint64_t seed,
                              const ClassifyConfig& cfg = {});

// Sum-of-summands closeness audit at ladder budgets. The scale-N front exit
// law D(N) is tabulated (exactly for deterministic-environment laws, by
// Monte Carlo otherwise), summed n-fold by exact convolution, and compared
// against D(N*sqrt(n)) under the inflated budget
// (lambda * R_6(N), 2 n K R_6(N)). N*sqrt(n) should be an integer so the
// two front planes coincide. Adversarial mode perturbs each summand to the
// edge of its own (lambda, K) budget first (d >= 2: a transverse shift of
// lambda mass by min(K-1, 3)).
enum class SummandMode { kExact, kAdversarial };

struct SumLadderReport {
  std::int64_t N = 0;
  std::int64_t n = 0;
  std::int64_t ladder_factor = 1;  // R_6(N)
  double budget_lambda = 0;
  std::int64_t budget_K = 0;
  bool summands_certified = true;  // adversarial mode: perturbed summand vs D(N)
  ClosenessCertificate cert;
  bool certified = false;
  double slack_lambda = 0;  // budget_lambda - measured
};

SumLadderReport sum_ladder_check(const EnvironmentLaw& law, std::int64_t N, std::int64_t n,
                                 double lambda, std::int64_t K, std::uint64_t seed,
                                 SummandMode mode = SummandMode::kExact,
                                 std::int64_t mc_samples = 200000);

// Residual of the two-stage exit decomposition: a front-conditioned exit U
// of the scale-N*sqrt(j) block against X_A + X_B, where X_A reuses the same
// environment and step stream inside the scale-N*sqrt(j-1) block (a shared
// path prefix) and X_B is an independent scale-N front exit. j = 1 makes the
// pair literally the same run, so the residual is identically zero.
struct DecompositionReport {
  std::int64_t N = 0;
  std::int64_t j = 0;
  std::int64_t samples = 0;
  std::int64_t skipped = 0;           // conditioning failures (capped rejection)
  std::int64_t nonfront_prefix = 0;   // shared-prefix runs exiting off the front
  std::vector<std::pair<std::int64_t, double>> residual_tail;  // (k, P(|U'| >= k))
  double median_residual = 0;
  std::int64_t max_slab_radius = 0;   // from the long runs' regeneration slabs
  double fit_log_c = 0;               // survival ~ exp(-c k^gamma) tail fit
  double fit_gamma = 0;
  bool fit_valid = false;
  bool identity = false;
};

DecompositionReport convolution_decomposition_check(const EnvironmentLaw& law, std::int64_t N,
                                                    std::int64_t j, std::int64_t n_samples,
                                                    std::uint64_t seed,
                                                    std::int64_t step_budget = 0);

// Mass floor over the covariance ellipsoid: front sites x with
// (x - xbar)' Sigma^-1 (x - xbar) < a N^2 / <U, e_1>, where xbar is the mean
// exit point, U the mean slab displacement, and Sigma the slab displacement
// covariance. implied_c calibrates the observed floor against N^(1-d) e^(-3a).
struct LowerBoundReport {
  double a = 0;
  double threshold = 0;
  std::int64_t sites_in_ellipsoid = 0;
  double min_mass = 0;
  double mean_mass = 0;
  double reference_scale = 0;
  double implied_c = 0;
};

LowerBoundReport lower_bound_check(const ExitDistribution& dist,
                                   const RegenerationSummary& summary, double a);

}  // namespace rwre
