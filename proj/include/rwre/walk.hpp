#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/geom.hpp"
#include "rwre/grid.hpp"

namespace rwre {

// Nearest-neighbor path with every position cached; steps hold direction
// indices, positions[t+1] = positions[t] + unit_step(steps[t]).
struct Trajectory {
  Point start;
  std::vector<std::uint8_t> steps;
  std::vector<Point> positions;
  std::uint64_t walk_seed = 0;

  std::int64_t length() const { return static_cast<std::int64_t>(steps.size()); }
  const Point& at(std::int64_t t) const { return positions[static_cast<size_t>(t)]; }
  const Point& back() const { return positions.back(); }
};

// Spatial stop condition plus a mandatory step budget. Budget 0 stops before
// the first step.
struct StopRule {
  enum class Kind { kHalfspace, kSiteSet, kBlockBoundary, kRegionExit, kBudgetOnly };

  Kind kind = Kind::kBudgetOnly;
  std::vector<double> ell;  // halfspace: unit direction
  double level = 0;         // halfspace: stop once <x, ell> >= level
  std::set<Point> sites;    // site set, or region interior for kRegionExit
  std::optional<BlockSpec> block;  // stop on leaving the block
  std::int64_t step_budget = 1;

  static StopRule halfspace(std::vector<double> direction, double level,
                            std::int64_t budget);
  static StopRule site_set(std::vector<Point> stop_sites, std::int64_t budget);
  static StopRule block_boundary(BlockSpec block, std::int64_t budget);
  static StopRule region_exit(std::vector<Point> interior, std::int64_t budget);
  static StopRule budget_only(std::int64_t budget);

  bool triggered(const Point& x) const;
};

enum class StopCause { kRuleSatisfied, kBudgetExhausted };

struct RunResult {
  Trajectory traj;
  StopCause cause = StopCause::kBudgetExhausted;
};

// One trajectory in a fixed environment. The step stream is
// walk_stream(walk_seed, replicate); identical inputs give bit-identical
// paths. Kernels are cached per run, so revisits do not re-query the site
// randomness.
RunResult run_quenched(const Environment& env, const Point& start, const StopRule& stop,
                       std::uint64_t walk_seed, std::uint64_t replicate = 0);

// One trajectory with a fresh environment drawn per replicate.
RunResult run_annealed(const EnvironmentLaw& law, const Point& start, const StopRule& stop,
                       std::uint64_t seed, std::uint64_t replicate = 0);

// Smallest t with rule satisfied at positions[t], scanning the whole path.
std::optional<std::int64_t> first_hit_time(const Trajectory& traj, const StopRule& stop);

// Time of the k-th visit to site strictly after time 0.
std::optional<std::int64_t> kth_return_time(const Trajectory& traj, const Point& site, int k);

}  // namespace rwre
