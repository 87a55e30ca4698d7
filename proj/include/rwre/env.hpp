#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rwre/grid.hpp"
#include "rwre/prf.hpp"

namespace rwre {

// Nearest-neighbor transition kernel at one site. Direction indexing matches
// unit_step: entry 2i is +e_{i+1}, entry 2i+1 is -e_{i+1}.
struct TransitionKernel {
  int d = 0;
  std::array<double, 2 * kMaxDim> p{};

  double operator[](int dir) const { return p[static_cast<size_t>(dir)]; }
  double& operator[](int dir) { return p[static_cast<size_t>(dir)]; }
  int num_dirs() const { return 2 * d; }

  // Sum-to-one within 1e-12 and min entry >= eta.
  void check(double eta) const;
  bool operator==(const TransitionKernel& o) const;
};

TransitionKernel uniform_kernel(int d);
TransitionKernel make_kernel(int d, const std::vector<double>& probs);

// Mean step: sum over directions of prob * signed unit vector.
std::vector<double> local_drift(const TransitionKernel& k);

enum class LawFamily { kSrw, kFixedDrift, kFiniteMixture, kDirichletPerturbed };

enum class NestlingClass { kPlainNestling, kMarginallyNestling, kNonNestling };
std::string to_string(NestlingClass c);

// Single-site kernel distribution plus the global ellipticity floor.
struct EnvironmentLaw {
  int d = 1;
  double eta = 0.0;
  LawFamily family = LawFamily::kSrw;
  std::vector<TransitionKernel> kernels;  // fixed-drift: 1, mixture: >=1, dirichlet: base
  std::vector<double> weights;            // mixture only, sums to 1
  double concentration = 0.0;             // dirichlet only, > 0

  static EnvironmentLaw srw(int d);
  static EnvironmentLaw fixed_drift(int d, double eta, TransitionKernel k);
  static EnvironmentLaw finite_mixture(int d, double eta,
                                       std::vector<TransitionKernel> kernels,
                                       std::vector<double> weights);
  static EnvironmentLaw dirichlet_perturbed(int d, double eta, TransitionKernel base,
                                            double concentration);

  void validate() const;  // throws std::invalid_argument

  // One draw from the law using the given stream. Pure in the stream state.
  TransitionKernel sample_kernel(CounterStream& stream) const;
};

// Classification of the origin against the convex hull of the support drifts,
// taking the interior in the ambient space: degenerate hulls containing 0 are
// marginal. Continuous-support families are rejected with UnsupportedLaw.
NestlingClass classify_nestling(const EnvironmentLaw& law);

// Site-keyed i.i.d. environment. kernel_at is a pure function of
// (env_seed, site, law, overlays); nothing is stored per site.
struct Environment {
  EnvironmentLaw law;
  std::uint64_t env_seed = 0;
  std::map<Point, TransitionKernel> overlays;

  TransitionKernel kernel_at(const Point& site) const;
};

// Overlay every site of the closed l-inf ball with an inward-drift kernel:
// mass 1-(2d-1)*eta on the axis of largest offset from the center (lowest
// axis on ties), eta elsewhere. The center itself drifts along -e_1. The
// hold strength inherits the law's eta; at eta = 1/(2d) the overlay is
// uniform and traps nothing.
Environment plant_naive_trap(const Environment& env, const Point& center, int radius);

// log of prod over the (2r+1)^d ball sites of per_site_prob.
double trap_match_log_prob(int d, int radius, double per_site_prob);

// Small-LP hull queries, exposed for oracle tests.
// hull_contains: is x a convex combination of the given points.
// hull_reach: largest t >= 0 with t*direction in the hull (hull must contain 0).
bool hull_contains(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& x);
double hull_reach(const std::vector<std::vector<double>>& points,
                  const std::vector<double>& direction);

}  // namespace rwre
