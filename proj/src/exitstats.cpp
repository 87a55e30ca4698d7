#include "rwre/exitstats.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "rwre/errors.hpp"
#include "rwre/parallel.hpp"

namespace rwre {

Pmf pmf_clean(Pmf table) {
  if (table.empty()) return table;
  int d = table.front().first.d;
  for (const auto& [x, w] : table) {
    if (x.d != d) throw std::invalid_argument("mixed dimensions in distribution table");
    if (!(w >= 0)) throw std::invalid_argument("negative weight in distribution table");
  }
  std::sort(table.begin(), table.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Pmf out;
  out.reserve(table.size());
  for (const auto& [x, w] : table) {
    if (!out.empty() && out.back().first == x)
      out.back().second += w;
    else
      out.emplace_back(x, w);
  }
  out.erase(std::remove_if(out.begin(), out.end(), [](const auto& a) { return a.second == 0; }),
            out.end());
  return out;
}

double pmf_total(const Pmf& table) {
  double s = 0;
  for (const auto& [x, w] : table) s += w;
  return s;
}

std::vector<double> pmf_mean(const Pmf& table) {
  if (table.empty()) throw std::invalid_argument("empty distribution table");
  int d = table.front().first.d;
  std::vector<double> m(static_cast<size_t>(d), 0.0);
  double total = 0;
  for (const auto& [x, w] : table) {
    total += w;
    for (int i = 0; i < d; ++i) m[static_cast<size_t>(i)] += w * static_cast<double>(x[i]);
  }
  if (total <= 0) throw std::invalid_argument("zero-mass distribution table");
  for (auto& v : m) v /= total;
  return m;
}

double pmf_l1_variance(const Pmf& table) {
  auto m = pmf_mean(table);
  int d = table.front().first.d;
  double s = 0, total = 0;
  for (const auto& [x, w] : table) {
    double l1 = 0;
    for (int i = 0; i < d; ++i) l1 += std::abs(static_cast<double>(x[i]) - m[static_cast<size_t>(i)]);
    s += w * l1 * l1;
    total += w;
  }
  return s / total;
}

Pmf convolve_pmf(const Pmf& a, const Pmf& b) {
  std::unordered_map<Point, double, PointHash> acc;
  acc.reserve(a.size() * 2);
  for (const auto& [x, wx] : a)
    for (const auto& [y, wy] : b) acc[x + y] += wx * wy;
  Pmf out(acc.begin(), acc.end());
  return pmf_clean(std::move(out));
}

double total_variation(const Pmf& a, const Pmf& b) {
  std::unordered_map<Point, double, PointHash> diff;
  diff.reserve(a.size() + b.size());
  for (const auto& [x, w] : a) diff[x] += w;
  for (const auto& [x, w] : b) diff[x] -= w;
  double s = 0;
  for (const auto& [x, v] : diff) s += std::abs(v);
  return 0.5 * s;
}

Pmf ExitHistogram::to_pmf() const {
  if (total == 0) throw AllZeroCounts("histogram has no recorded exits");
  Pmf out;
  out.reserve(counts.size());
  for (const auto& [x, c] : counts)
    out.emplace_back(x, static_cast<double>(c) / static_cast<double>(total));
  return out;
}

namespace {

std::int64_t default_block_budget(const BlockSpec& block) {
  std::int64_t n2 = block.N * block.N;
  return 50 * n2 * n2;
}

struct TallyAcc {
  std::map<Point, std::int64_t> counts;
  std::int64_t total = 0;
  std::int64_t front = 0;
  std::int64_t exhausted = 0;
};

template <class RunFn>
ExitHistogram tally_exits(RunFn run, const std::optional<BlockSpec>& block, const Point& start,
                          std::int64_t n_samples, std::int64_t budget, int workers,
                          ExitMode mode) {
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  auto accs = chunked_map<TallyAcc>(n_samples, workers, [&](std::int64_t i, TallyAcc& acc) {
    RunResult res = run(static_cast<std::uint64_t>(i));
    if (res.cause == StopCause::kBudgetExhausted) {
      ++acc.exhausted;
      return;
    }
    const Point& exit = res.traj.back();
    ++acc.counts[exit];
    ++acc.total;
    if (block && boundary_classify(*block, exit) == BoundaryClass::kFrontBoundary) ++acc.front;
  });
  ExitHistogram hist;
  hist.mode = mode;
  hist.block = block;
  hist.start = start;
  hist.step_budget = budget;
  for (const auto& acc : accs) {
    for (const auto& [x, c] : acc.counts) hist.counts[x] += c;
    hist.total += acc.total;
    hist.front_total += acc.front;
    hist.budget_exhausted += acc.exhausted;
  }
  return hist;
}

}  // namespace

ExitHistogram estimate_exit(const Environment& env, const BlockSpec& block, const Point& start,
                            std::int64_t n_samples, std::uint64_t seed, std::int64_t step_budget,
                            int workers) {
  if (!middle_third_contains(block, start))
    throw std::invalid_argument("start must lie in the middle third of the block");
  std::int64_t budget = step_budget > 0 ? step_budget : default_block_budget(block);
  StopRule stop = StopRule::block_boundary(block, budget);
  return tally_exits(
      [&](std::uint64_t i) { return run_quenched(env, start, stop, seed, i); }, block, start,
      n_samples, budget, workers, ExitMode::kQuenched);
}

ExitHistogram estimate_exit(const EnvironmentLaw& law, const BlockSpec& block, const Point& start,
                            std::int64_t n_samples, std::uint64_t seed, std::int64_t step_budget,
                            int workers) {
  if (!middle_third_contains(block, start))
    throw std::invalid_argument("start must lie in the middle third of the block");
  std::int64_t budget = step_budget > 0 ? step_budget : default_block_budget(block);
  StopRule stop = StopRule::block_boundary(block, budget);
  return tally_exits(
      [&](std::uint64_t i) { return run_annealed(law, start, stop, seed, i); }, block, start,
      n_samples, budget, workers, ExitMode::kAnnealed);
}

namespace {

std::int64_t default_region_budget(const std::vector<Point>& interior) {
  std::int64_t radius = 1;
  for (const auto& x : interior) radius = std::max(radius, norm_inf(x));
  return 50 * radius * radius + 1000;
}

void check_region_start(const std::vector<Point>& interior, const Point& start) {
  if (interior.empty()) throw std::invalid_argument("empty interior");
  if (std::find(interior.begin(), interior.end(), start) == interior.end())
    throw std::invalid_argument("start must be an interior site");
}

}  // namespace

ExitHistogram estimate_region_exit(const Environment& env, const std::vector<Point>& interior,
                                   const Point& start, std::int64_t n_samples, std::uint64_t seed,
                                   std::int64_t step_budget,
                                   const std::optional<BlockSpec>& classify_block, int workers) {
  check_region_start(interior, start);
  std::int64_t budget = step_budget > 0 ? step_budget : default_region_budget(interior);
  StopRule stop = StopRule::region_exit(interior, budget);
  return tally_exits(
      [&](std::uint64_t i) { return run_quenched(env, start, stop, seed, i); }, classify_block,
      start, n_samples, budget, workers, ExitMode::kQuenched);
}

ExitHistogram estimate_region_exit(const EnvironmentLaw& law, const std::vector<Point>& interior,
                                   const Point& start, std::int64_t n_samples, std::uint64_t seed,
                                   std::int64_t step_budget,
                                   const std::optional<BlockSpec>& classify_block, int workers) {
  check_region_start(interior, start);
  std::int64_t budget = step_budget > 0 ? step_budget : default_region_budget(interior);
  StopRule stop = StopRule::region_exit(interior, budget);
  return tally_exits(
      [&](std::uint64_t i) { return run_annealed(law, start, stop, seed, i); }, classify_block,
      start, n_samples, budget, workers, ExitMode::kAnnealed);
}

std::vector<Point> block_interior(const BlockSpec& block, std::int64_t max_sites) {
  const int d = block.dim();
  const std::int64_t n2 = block.N * block.N;
  const double hw = static_cast<double>(block.transverse_halfwidth());
  std::vector<Point> sites;
  Point x(d);
  // Transverse windows are centered on the block axis, which shifts with the
  // e_1 offset when theta is tilted.
  for (std::int64_t off = -n2 + 1; off <= n2 - 1; ++off) {
    x[0] = block.z[0] + off;
    double scale = static_cast<double>(off) / block.theta[0];
    std::vector<std::pair<std::int64_t, std::int64_t>> windows;
    windows.reserve(static_cast<size_t>(d - 1));
    for (int j = 1; j < d; ++j) {
      double center = static_cast<double>(block.z[j]) + block.theta[static_cast<size_t>(j)] * scale;
      auto lo = static_cast<std::int64_t>(std::floor(center - hw)) + 1;
      auto hi = static_cast<std::int64_t>(std::ceil(center + hw)) - 1;
      windows.emplace_back(lo, hi);
    }
    std::vector<std::int64_t> cur(static_cast<size_t>(d > 1 ? d - 1 : 1), 0);
    // Odometer over the transverse box; block_contains re-checks the strict
    // inequalities so edge rounding cannot admit outside sites.
    bool done = false;
    for (size_t j = 0; j + 1 < static_cast<size_t>(d); ++j) cur[j] = windows[j].first;
    while (!done) {
      for (int j = 1; j < d; ++j) x[j] = cur[static_cast<size_t>(j - 1)];
      if (block_contains(block, x)) {
        sites.push_back(x);
        if (static_cast<std::int64_t>(sites.size()) > max_sites)
          throw RegionTooLarge("block interior exceeds the site budget");
      }
      if (d == 1) break;
      int j = 0;
      while (j < d - 1) {
        if (++cur[static_cast<size_t>(j)] <= windows[static_cast<size_t>(j)].second) break;
        cur[static_cast<size_t>(j)] = windows[static_cast<size_t>(j)].first;
        ++j;
      }
      done = (j == d - 1);
    }
  }
  return sites;
}

ExitDistribution exact_exit(const Environment& env, const std::vector<Point>& interior,
                            const Point& start, const std::optional<BlockSpec>& classify_block) {
  if (interior.empty()) throw std::invalid_argument("empty interior");
  if (static_cast<std::int64_t>(interior.size()) > 100000)
    throw RegionTooLarge("interior exceeds the 1e5 site limit");
  const int d = start.d;
  std::unordered_map<Point, int, PointHash> idx;
  idx.reserve(interior.size() * 2);
  for (size_t i = 0; i < interior.size(); ++i) idx.emplace(interior[i], static_cast<int>(i));
  auto it_start = idx.find(start);
  if (it_start == idx.end()) throw std::invalid_argument("start must be an interior site");

  const int n = static_cast<int>(interior.size());
  std::vector<TransitionKernel> kernels;
  kernels.reserve(interior.size());
  for (const auto& x : interior) kernels.push_back(env.kernel_at(x));

  // Expected visit counts solve (I - Q^T) v = e_start; exit mass then flows
  // through the one-step probabilities into each exterior neighbor.
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(n) * (2 * static_cast<size_t>(d) + 1));
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, i, 1.0);
    for (int dir = 0; dir < 2 * d; ++dir) {
      Point y = interior[static_cast<size_t>(i)] + unit_step(dir, d);
      auto it = idx.find(y);
      if (it != idx.end()) trips.emplace_back(it->second, i, -kernels[static_cast<size_t>(i)][dir]);
    }
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw std::runtime_error("visit-count factorization failed");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[it_start->second] = 1.0;
  Eigen::VectorXd v = lu.solve(b);
  Eigen::VectorXd r = b - A * v;
  if (r.lpNorm<Eigen::Infinity>() > 1e-12) v += lu.solve(r);

  ExitDistribution dist;
  dist.block = classify_block;
  dist.start = start;
  for (int i = 0; i < n; ++i) {
    for (int dir = 0; dir < 2 * d; ++dir) {
      Point y = interior[static_cast<size_t>(i)] + unit_step(dir, d);
      if (idx.count(y)) continue;
      double m = v[i] * kernels[static_cast<size_t>(i)][dir];
      if (m == 0) continue;
      dist.mass[y] += m;
    }
  }
  for (const auto& [x, m] : dist.mass) {
    dist.total += m;
    if (classify_block && boundary_classify(*classify_block, x) == BoundaryClass::kFrontBoundary)
      dist.front_mass += m;
  }
  if (std::abs(dist.total - 1.0) > 1e-10)
    throw std::runtime_error("exit mass failed to sum to one");
  return dist;
}

ExitDistribution exact_exit(const Environment& env, const BlockSpec& block, const Point& start) {
  if (!block_contains(block, start)) throw std::invalid_argument("start must lie in the block");
  return exact_exit(env, block_interior(block), start, block);
}

Pmf exit_pmf(const ExitDistribution& dist) {
  Pmf out;
  out.reserve(dist.mass.size());
  for (const auto& [x, m] : dist.mass) out.emplace_back(x, m);
  return out;
}

Pmf front_conditioned_pmf(const ExitDistribution& dist) {
  if (!dist.block) throw std::invalid_argument("front face undefined without a block");
  Pmf out;
  double total = 0;
  for (const auto& [x, m] : dist.mass) {
    if (boundary_classify(*dist.block, x) != BoundaryClass::kFrontBoundary) continue;
    out.emplace_back(x, m);
    total += m;
  }
  if (total <= 0) throw EmptyFront("no mass on the front face");
  for (auto& [x, m] : out) m /= total;
  return out;
}

namespace {

DerivativeProfile profile_from_front(const BlockSpec& block,
                                     const std::unordered_map<Point, double, PointHash>& mass) {
  const int d = block.dim();
  auto on_face = [&](const Point& y) {
    return boundary_classify(block, y) == BoundaryClass::kFrontBoundary;
  };
  auto value = [&](const Point& y) {
    auto it = mass.find(y);
    return it == mass.end() ? 0.0 : it->second;
  };
  DerivativeProfile prof;
  prof.N = block.N;
  prof.front_sites = static_cast<std::int64_t>(mass.size());
  for (const auto& [x, m] : mass) prof.sup_mass = std::max(prof.sup_mass, m);
  for (const auto& [x, m] : mass) {
    for (int j = 1; j < d; ++j) {
      for (int sgn : {-1, 1}) {
        Point y = x;
        y[j] += sgn;
        if (on_face(y))
          prof.max_first_diff = std::max(prof.max_first_diff, std::abs(m - value(y)));
      }
      // A nonzero second difference always has a support point somewhere in
      // its stencil, so centering the stencil on each support offset in turn
      // covers every candidate.
      for (int off = -1; off <= 1; ++off) {
        Point c = x;
        c[j] += off;
        Point lo = c, hi = c;
        lo[j] -= 1;
        hi[j] += 1;
        if (on_face(lo) && on_face(c) && on_face(hi)) {
          double v = std::abs(value(hi) - 2 * value(c) + value(lo));
          prof.max_second_diff = std::max(prof.max_second_diff, v);
        }
      }
    }
    for (int i = 1; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        for (int oi = -1; oi <= 0; ++oi) {
          for (int oj = -1; oj <= 0; ++oj) {
            Point c = x;
            c[i] += oi;
            c[j] += oj;
            Point ci = c, cj = c, cij = c;
            ci[i] += 1;
            cj[j] += 1;
            cij[i] += 1;
            cij[j] += 1;
            if (on_face(c) && on_face(ci) && on_face(cj) && on_face(cij)) {
              double v = std::abs(value(cij) - value(ci) - value(cj) + value(c));
              prof.max_mixed_diff = std::max(prof.max_mixed_diff, v);
            }
          }
        }
      }
    }
  }
  return prof;
}

}  // namespace

DerivativeProfile derivative_profile(const ExitDistribution& dist) {
  if (!dist.block) throw std::invalid_argument("front face undefined without a block");
  std::unordered_map<Point, double, PointHash> mass;
  for (const auto& [x, m] : dist.mass)
    if (boundary_classify(*dist.block, x) == BoundaryClass::kFrontBoundary) mass[x] = m;
  if (mass.empty()) throw EmptyFront("no mass on the front face");
  return profile_from_front(*dist.block, mass);
}

DerivativeProfile derivative_profile(const ExitHistogram& hist) {
  if (!hist.block) throw std::invalid_argument("front face undefined without a block");
  if (hist.front_total == 0) throw EmptyFront("no front exits recorded");
  std::unordered_map<Point, double, PointHash> mass;
  for (const auto& [x, c] : hist.counts)
    if (boundary_classify(*hist.block, x) == BoundaryClass::kFrontBoundary)
      mass[x] = static_cast<double>(c) / static_cast<double>(hist.total);
  return profile_from_front(*hist.block, mass);
}

double cube_discrepancy_bound(double theta, int d, std::int64_t N) {
  double dd = static_cast<double>(d);
  double exponent = (theta - 1.0) * (dd - 1.0) - theta * (dd - 1.0) / (dd + 1.0);
  return std::pow(static_cast<double>(N), exponent);
}

namespace {

struct ProbeStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::int64_t count = 0;
};

ProbeStats exit_moments(const ExitHistogram& hist) {
  ProbeStats st;
  const int d = hist.start.d;
  st.mean.assign(static_cast<size_t>(d), 0.0);
  st.var.assign(static_cast<size_t>(d), 0.0);
  st.count = hist.total;
  if (hist.total == 0) return st;
  for (const auto& [x, c] : hist.counts)
    for (int j = 0; j < d; ++j)
      st.mean[static_cast<size_t>(j)] += static_cast<double>(c) * static_cast<double>(x[j]);
  for (auto& v : st.mean) v /= static_cast<double>(hist.total);
  for (const auto& [x, c] : hist.counts)
    for (int j = 0; j < d; ++j) {
      double dev = static_cast<double>(x[j]) - st.mean[static_cast<size_t>(j)];
      st.var[static_cast<size_t>(j)] += static_cast<double>(c) * dev * dev;
    }
  for (auto& v : st.var) v /= static_cast<double>(hist.total);
  return st;
}

std::map<Point, std::int64_t> cube_front_counts(const ExitHistogram& hist, const BlockSpec& block,
                                                std::int64_t side) {
  std::map<Point, std::int64_t> cubes;
  const int d = block.dim();
  for (const auto& [x, c] : hist.counts) {
    if (boundary_classify(block, x) != BoundaryClass::kFrontBoundary) continue;
    Point corner(d);
    for (int j = 1; j < d; ++j) corner[j] = floor_div(x[j] - block.z[j], side) * side;
    cubes[corner] += c;
  }
  return cubes;
}

}  // namespace

namespace {

std::vector<Point> default_probes(const BlockSpec& block) {
  std::vector<Point> probes;
  probes.push_back(block.z);
  std::int64_t off1 = std::max<std::int64_t>(1, block.N * block.N / 6);
  std::int64_t offt = std::max<std::int64_t>(1, block.transverse_halfwidth() / 6);
  for (int j = 0; j < block.dim(); ++j) {
    std::int64_t off = (j == 0) ? off1 : offt;
    for (int sgn : {1, -1}) {
      Point p = block.z;
      p[j] += sgn * off;
      probes.push_back(p);
    }
  }
  return probes;
}

}  // namespace

ClassifyReport classify_block(const Environment& env, const BlockSpec& block, double theta,
                              std::int64_t n_samples, std::uint64_t seed,
                              const ClassifyConfig& cfg) {
  if (!(theta > 0.0) || theta > 1.0) throw std::invalid_argument("theta must be in (0, 1]");
  if (n_samples < 2) throw std::invalid_argument("need at least two samples per probe");
  const int d = block.dim();

  std::vector<std::int64_t> sizes = cfg.sub_sizes;
  sizes.push_back(block.N);
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  for (auto m : sizes)
    if (m < 3 || m > block.N) throw std::invalid_argument("sub-block sizes must be in [3, N]");

  ClassifyReport rep;
  rep.N = block.N;
  rep.theta = theta;
  rep.samples_per_probe = n_samples;
  rep.front_threshold = 1.0 - cfg.delta_exit;
  rep.mean_allowance = std::numeric_limits<double>::infinity();
  rep.cube_allowance = std::numeric_limits<double>::infinity();
  rep.front_margin = std::numeric_limits<double>::infinity();
  rep.mean_margin = std::numeric_limits<double>::infinity();
  rep.cube_margin = std::numeric_limits<double>::infinity();

  for (std::int64_t M : sizes) {
    BlockSpec sub(block.z, M, block.theta);
    const double mean_bound = static_cast<double>(scale_R(3, M));
    const double cube_bound = cube_discrepancy_bound(theta, d, M);
    const std::int64_t side = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(M), theta))));

    std::vector<Point> probes = cfg.probes.empty() ? default_probes(sub) : cfg.probes;
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    probes.erase(std::remove_if(probes.begin(), probes.end(),
                                [&](const Point& p) { return !middle_third_contains(sub, p); }),
                 probes.end());
    if (probes.empty()) throw std::invalid_argument("no probe lies in the middle third");

    std::string scale_tag = sizes.size() > 1 ? "size " + std::to_string(M) + " " : "";
    for (size_t pi = 0; pi < probes.size(); ++pi) {
      const Point& probe = probes[pi];
      std::uint64_t sq = mix64(mix64(mix64(seed, "classify-quenched"),
                                     static_cast<std::uint64_t>(M)),
                               static_cast<std::uint64_t>(pi));
      std::uint64_t sa = mix64(mix64(mix64(seed, "classify-annealed"),
                                     static_cast<std::uint64_t>(M)),
                               static_cast<std::uint64_t>(pi));
      ExitHistogram q = estimate_exit(env, sub, probe, n_samples, sq, cfg.step_budget, cfg.workers);
      ExitHistogram a =
          estimate_exit(env.law, sub, probe, n_samples, sa, cfg.step_budget, cfg.workers);

      double freq = static_cast<double>(q.front_total) / static_cast<double>(n_samples);
      double fmargin = freq - rep.front_threshold;
      if (fmargin < rep.front_margin) {
        rep.front_margin = fmargin;
        rep.front_freq = freq;
      }
      if (fmargin < 0)
        rep.failures.push_back(scale_tag + "probe " + to_string(probe) +
                               ": front exit frequency " + std::to_string(freq) + " below " +
                               std::to_string(rep.front_threshold));

      if (q.total == 0 || a.total == 0) {
        if (q.total == 0)
          rep.failures.push_back(scale_tag + "probe " + to_string(probe) + ": no exits recorded");
        rep.good = false;
        continue;
      }

      ProbeStats qs = exit_moments(q);
      ProbeStats as = exit_moments(a);
      for (int j = 0; j < d; ++j) {
        double gap = std::abs(qs.mean[static_cast<size_t>(j)] - as.mean[static_cast<size_t>(j)]);
        double se = std::sqrt(qs.var[static_cast<size_t>(j)] / static_cast<double>(qs.count) +
                              as.var[static_cast<size_t>(j)] / static_cast<double>(as.count));
        double allowance = mean_bound + 3.0 * se;
        double margin = allowance - gap;
        if (margin < rep.mean_margin) {
          rep.mean_margin = margin;
          rep.mean_gap = gap;
          rep.mean_allowance = allowance;
        }
        if (margin < 0)
          rep.failures.push_back(scale_tag + "probe " + to_string(probe) + ": axis " +
                                 std::to_string(j + 1) + " mean exit gap " + std::to_string(gap) +
                                 " exceeds " + std::to_string(allowance));
      }

      auto qc = cube_front_counts(q, sub, side);
      auto ac = cube_front_counts(a, sub, side);
      std::map<Point, std::pair<std::int64_t, std::int64_t>> cubes;
      for (const auto& [corner, c] : qc) cubes[corner].first = c;
      for (const auto& [corner, c] : ac) cubes[corner].second = c;
      for (const auto& [corner, counts] : cubes) {
        double pq = static_cast<double>(counts.first) / static_cast<double>(n_samples);
        double pa = static_cast<double>(counts.second) / static_cast<double>(n_samples);
        double gap = std::abs(pq - pa);
        double pooled = 0.5 * (pq + pa);
        double se = std::sqrt(std::max(pooled * (1.0 - pooled), 0.0) * 2.0 /
                              static_cast<double>(n_samples));
        double allowance = cube_bound + 3.0 * se;
        double margin = allowance - gap;
        if (margin < rep.cube_margin) {
          rep.cube_margin = margin;
          rep.cube_gap = gap;
          rep.cube_allowance = allowance;
        }
        CubeCheck check{corner, pq, pa, gap, allowance};
        rep.worst_cubes.push_back(check);
        if (margin < 0)
          rep.failures.push_back(scale_tag + "probe " + to_string(probe) + ": cube " +
                                 to_string(corner) + " front mass gap " + std::to_string(gap) +
                                 " exceeds " + std::to_string(allowance));
      }
    }
  }

  std::sort(rep.worst_cubes.begin(), rep.worst_cubes.end(),
            [](const CubeCheck& x, const CubeCheck& y) {
              return (x.allowance - x.gap) < (y.allowance - y.gap);
            });
  if (rep.worst_cubes.size() > 8) rep.worst_cubes.resize(8);
  rep.good = rep.good && rep.failures.empty();
  return rep;
}

LowerBoundReport lower_bound_check(const ExitDistribution& dist,
                                   const RegenerationSummary& summary, double a) {
  if (!(a > 0)) throw std::invalid_argument("a must be positive");
  if (!dist.block) throw std::invalid_argument("ellipsoid check needs a block");
  const int d = dist.block->dim();
  if (static_cast<int>(summary.mean_displacement.size()) != d)
    throw std::invalid_argument("summary dimension mismatch");
  double u1 = summary.mean_displacement[0];
  if (!(u1 > 0)) throw std::invalid_argument("mean slab displacement must advance along e_1");

  Eigen::MatrixXd sigma(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      sigma(i, j) = summary.displacement_covariance[static_cast<size_t>(i)][static_cast<size_t>(j)];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
  if (!lu.isInvertible()) throw SingularCovariance("slab displacement covariance is singular");
  Eigen::MatrixXd prec = lu.inverse();

  LowerBoundReport rep;
  rep.a = a;
  const std::int64_t N = dist.block->N;
  rep.threshold = a * static_cast<double>(N) * static_cast<double>(N) / u1;
  rep.reference_scale = std::pow(static_cast<double>(N), 1.0 - d) * std::exp(-3.0 * a);

  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(d);
  double total = 0;
  for (const auto& [x, m] : dist.mass) {
    total += m;
    for (int i = 0; i < d; ++i) xbar[i] += m * static_cast<double>(x[i]);
  }
  xbar /= total;

  double min_mass = std::numeric_limits<double>::infinity();
  double sum_mass = 0;
  for (const auto& [x, m] : dist.mass) {
    if (boundary_classify(*dist.block, x) != BoundaryClass::kFrontBoundary) continue;
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = static_cast<double>(x[i]) - xbar[i];
    double q = v.dot(prec * v);
    if (q < rep.threshold) {
      ++rep.sites_in_ellipsoid;
      min_mass = std::min(min_mass, m);
      sum_mass += m;
    }
  }
  if (rep.sites_in_ellipsoid == 0) {
    rep.min_mass = std::numeric_limits<double>::quiet_NaN();
    rep.mean_mass = std::numeric_limits<double>::quiet_NaN();
    rep.implied_c = std::numeric_limits<double>::quiet_NaN();
  } else {
    rep.min_mass = min_mass;
    rep.mean_mass = sum_mass / static_cast<double>(rep.sites_in_ellipsoid);
    rep.implied_c = min_mass / rep.reference_scale;
  }
  return rep;
}

}  // namespace rwre
