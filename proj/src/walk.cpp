#include "rwre/walk.hpp"

#include <stdexcept>
#include <unordered_map>

#include "rwre/prf.hpp"

namespace rwre {

StopRule StopRule::halfspace(std::vector<double> direction, double level,
                             std::int64_t budget) {
  StopRule r;
  r.kind = Kind::kHalfspace;
  r.ell = normalize_direction(std::move(direction));
  r.level = level;
  r.step_budget = budget;
  return r;
}

StopRule StopRule::site_set(std::vector<Point> stop_sites, std::int64_t budget) {
  StopRule r;
  r.kind = Kind::kSiteSet;
  r.sites.insert(stop_sites.begin(), stop_sites.end());
  r.step_budget = budget;
  return r;
}

StopRule StopRule::block_boundary(BlockSpec block, std::int64_t budget) {
  StopRule r;
  r.kind = Kind::kBlockBoundary;
  r.block = std::move(block);
  r.step_budget = budget;
  return r;
}

StopRule StopRule::region_exit(std::vector<Point> interior, std::int64_t budget) {
  StopRule r;
  r.kind = Kind::kRegionExit;
  r.sites.insert(interior.begin(), interior.end());
  r.step_budget = budget;
  return r;
}

StopRule StopRule::budget_only(std::int64_t budget) {
  StopRule r;
  r.kind = Kind::kBudgetOnly;
  r.step_budget = budget;
  return r;
}

bool StopRule::triggered(const Point& x) const {
  switch (kind) {
    case Kind::kHalfspace:
      return dot(x, ell) >= level;
    case Kind::kSiteSet:
      return sites.count(x) > 0;
    case Kind::kBlockBoundary:
      return !block_contains(*block, x);
    case Kind::kRegionExit:
      return sites.count(x) == 0;
    case Kind::kBudgetOnly:
      return false;
  }
  return false;
}

namespace {

RunResult run_with(const Environment& env, const Point& start, const StopRule& stop,
                   std::uint64_t walk_seed, std::uint64_t replicate) {
  if (stop.step_budget < 0) throw std::invalid_argument("step budget must be nonnegative");
  RunResult res;
  Trajectory& traj = res.traj;
  traj.start = start;
  traj.walk_seed = walk_seed;
  traj.positions.push_back(start);
  if (stop.triggered(start)) {
    res.cause = StopCause::kRuleSatisfied;
    return res;
  }
  CounterStream stream = walk_stream(walk_seed, replicate);
  std::unordered_map<Point, TransitionKernel, PointHash> cache;
  const bool constant_law =
      (env.law.family == LawFamily::kSrw || env.law.family == LawFamily::kFixedDrift) &&
      env.overlays.empty();
  const TransitionKernel constant = constant_law ? env.kernel_at(start) : TransitionKernel{};
  Point pos = start;
  int ndirs = 2 * env.law.d;
  traj.steps.reserve(static_cast<size_t>(std::min<std::int64_t>(stop.step_budget, 1 << 20)));
  for (std::int64_t t = 0; t < stop.step_budget; ++t) {
    const TransitionKernel* kernel;
    if (constant_law) {
      kernel = &constant;
    } else {
      auto it = cache.find(pos);
      if (it == cache.end()) it = cache.emplace(pos, env.kernel_at(pos)).first;
      kernel = &it->second;
    }
    double u = stream.next_unit();
    double acc = 0;
    int dir = ndirs - 1;
    for (int i = 0; i < ndirs; ++i) {
      acc += (*kernel)[i];
      if (u < acc) {
        dir = i;
        break;
      }
    }
    pos += unit_step(dir, env.law.d);
    traj.steps.push_back(static_cast<std::uint8_t>(dir));
    traj.positions.push_back(pos);
    if (stop.triggered(pos)) {
      res.cause = StopCause::kRuleSatisfied;
      return res;
    }
  }
  res.cause = StopCause::kBudgetExhausted;
  return res;
}

}  // namespace

RunResult run_quenched(const Environment& env, const Point& start, const StopRule& stop,
                       std::uint64_t walk_seed, std::uint64_t replicate) {
  return run_with(env, start, stop, walk_seed, replicate);
}

RunResult run_annealed(const EnvironmentLaw& law, const Point& start, const StopRule& stop,
                       std::uint64_t seed, std::uint64_t replicate) {
  Environment env{law, mix64(mix64(seed, "annealed-env"), replicate)};
  return run_with(env, start, stop, seed, replicate);
}

std::optional<std::int64_t> first_hit_time(const Trajectory& traj, const StopRule& stop) {
  for (size_t t = 0; t < traj.positions.size(); ++t)
    if (stop.triggered(traj.positions[t])) return static_cast<std::int64_t>(t);
  return std::nullopt;
}

std::optional<std::int64_t> kth_return_time(const Trajectory& traj, const Point& site, int k) {
  if (k < 1) throw std::invalid_argument("visit count must be at least 1");
  int seen = 0;
  for (size_t t = 1; t < traj.positions.size(); ++t) {
    if (traj.positions[t] == site && ++seen == k) return static_cast<std::int64_t>(t);
  }
  return std::nullopt;
}

}  // namespace rwre
