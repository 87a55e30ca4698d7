#include "rwre/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "rwre/errors.hpp"

namespace rwre {

namespace {

constexpr double kSumTol = 1e-12;

// Dense two-phase simplex for the tiny hull LPs (rows <= kMaxDim+1).
// Maximizes c.x subject to A x = b, x >= 0. Bland's rule, so it terminates.
struct LpResult {
  bool feasible = false;
  bool bounded = true;
  double value = 0.0;
};

class Simplex {
 public:
  Simplex(std::vector<std::vector<double>> a, std::vector<double> b)
      : m_(static_cast<int>(a.size())), n_(static_cast<int>(a[0].size())) {
    for (int i = 0; i < m_; ++i)
      if (b[i] < 0) {
        for (double& v : a[i]) v = -v;
        b[i] = -b[i];
      }
    rows_.assign(m_, std::vector<double>(n_ + m_ + 1, 0.0));
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      std::copy(a[i].begin(), a[i].end(), rows_[i].begin());
      rows_[i][n_ + i] = 1.0;
      rows_[i].back() = b[i];
      basis_[i] = n_ + i;
    }
  }

  LpResult solve(const std::vector<double>& c) {
    LpResult r;
    std::vector<double> phase1(n_ + m_, 0.0);
    for (int j = n_; j < n_ + m_; ++j) phase1[j] = -1.0;
    double v1 = 0;
    run(phase1, n_ + m_, &v1);
    if (v1 < -1e-9) return r;  // infeasible
    drop_artificials();
    r.feasible = true;
    std::vector<double> cost(c);
    cost.resize(n_, 0.0);
    r.bounded = run(cost, n_, &r.value);
    return r;
  }

 private:
  // Maximize cost over the first ncols columns. False if unbounded.
  bool run(const std::vector<double>& cost, int ncols, double* value) {
    const double tol = 1e-11;
    for (;;) {
      int enter = -1;
      for (int j = 0; j < ncols; ++j) {
        double z = 0;
        for (int i = 0; i < m_; ++i) z += cost[static_cast<size_t>(basis_[i])] * rows_[i][j];
        if (cost[static_cast<size_t>(j)] - z > tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) break;
      int leave = -1;
      double best = 0;
      for (int i = 0; i < m_; ++i) {
        if (rows_[i][enter] > tol) {
          double ratio = rows_[i].back() / rows_[i][enter];
          if (leave < 0 || ratio < best - 1e-15 ||
              (std::abs(ratio - best) <= 1e-15 && basis_[i] < basis_[leave])) {
            leave = i;
            best = ratio;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    double v = 0;
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < static_cast<int>(cost.size())) v += cost[static_cast<size_t>(basis_[i])] * rows_[i].back();
    *value = v;
    return true;
  }

  void pivot(int leave, int enter) {
    double piv = rows_[leave][enter];
    for (double& v : rows_[leave]) v /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == leave) continue;
      double f = rows_[i][enter];
      if (f == 0) continue;
      for (size_t j = 0; j < rows_[i].size(); ++j) rows_[i][j] -= f * rows_[leave][j];
    }
    basis_[leave] = enter;
  }

  // After phase 1 every artificial basis variable sits at zero; pivot each
  // onto a real column, or drop its row as redundant.
  void drop_artificials() {
    for (int i = 0; i < m_;) {
      if (basis_[i] < n_) {
        ++i;
        continue;
      }
      int col = -1;
      for (int j = 0; j < n_; ++j)
        if (std::abs(rows_[i][j]) > 1e-9) {
          col = j;
          break;
        }
      if (col >= 0) {
        pivot(i, col);
        ++i;
      } else {
        rows_.erase(rows_.begin() + i);
        basis_.erase(basis_.begin() + i);
        --m_;
      }
    }
  }

  int m_, n_;
  std::vector<std::vector<double>> rows_;
  std::vector<int> basis_;
};

// Rejection-free Marsaglia-Tsang for alpha >= 1, boosted for alpha < 1.
// Draws a deterministic function of the stream state.
double sample_gamma(CounterStream& s, double alpha) {
  if (alpha <= 0) return 0.0;
  if (alpha < 1) {
    double u = s.next_unit_pos();
    return sample_gamma(s, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = s.next_gaussian();
    double v = 1.0 + c * x;
    if (v <= 0) continue;
    v = v * v * v;
    double u = s.next_unit_pos();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<std::vector<double>> support_drifts(const EnvironmentLaw& law) {
  std::vector<std::vector<double>> pts;
  switch (law.family) {
    case LawFamily::kSrw:
      pts.push_back(std::vector<double>(static_cast<size_t>(law.d), 0.0));
      break;
    case LawFamily::kFixedDrift:
      pts.push_back(local_drift(law.kernels[0]));
      break;
    case LawFamily::kFiniteMixture:
      for (size_t i = 0; i < law.kernels.size(); ++i)
        if (law.weights[i] > 0) pts.push_back(local_drift(law.kernels[i]));
      break;
    case LawFamily::kDirichletPerturbed:
      throw UnsupportedLaw("nestling classification needs a finite-support law");
  }
  return pts;
}

}  // namespace

void TransitionKernel::check(double eta) const {
  double sum = 0;
  for (int i = 0; i < num_dirs(); ++i) {
    if (p[static_cast<size_t>(i)] < eta - 1e-15)
      throw std::invalid_argument("kernel entry below ellipticity floor");
    sum += p[static_cast<size_t>(i)];
  }
  if (std::abs(sum - 1.0) > kSumTol) throw std::invalid_argument("kernel mass not 1");
}

bool TransitionKernel::operator==(const TransitionKernel& o) const {
  if (d != o.d) return false;
  for (int i = 0; i < num_dirs(); ++i)
    if (p[static_cast<size_t>(i)] != o.p[static_cast<size_t>(i)]) return false;
  return true;
}

TransitionKernel uniform_kernel(int d) {
  TransitionKernel k;
  k.d = d;
  for (int i = 0; i < 2 * d; ++i) k[i] = 1.0 / (2 * d);
  return k;
}

TransitionKernel make_kernel(int d, const std::vector<double>& probs) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("dimension out of range");
  if (probs.size() != static_cast<size_t>(2 * d))
    throw std::invalid_argument("kernel needs 2d entries");
  TransitionKernel k;
  k.d = d;
  for (int i = 0; i < 2 * d; ++i) k[i] = probs[static_cast<size_t>(i)];
  k.check(0.0);
  return k;
}

std::vector<double> local_drift(const TransitionKernel& k) {
  std::vector<double> drift(static_cast<size_t>(k.d), 0.0);
  for (int dir = 0; dir < k.num_dirs(); ++dir)
    drift[static_cast<size_t>(step_axis(dir))] += step_sign(dir) * k[dir];
  return drift;
}

std::string to_string(NestlingClass c) {
  switch (c) {
    case NestlingClass::kPlainNestling: return "plain_nestling";
    case NestlingClass::kMarginallyNestling: return "marginally_nestling";
    case NestlingClass::kNonNestling: return "non_nestling";
  }
  std::abort();
}

EnvironmentLaw EnvironmentLaw::srw(int d) {
  EnvironmentLaw law;
  law.d = d;
  law.eta = 1.0 / (2 * d);
  law.family = LawFamily::kSrw;
  law.validate();
  return law;
}

EnvironmentLaw EnvironmentLaw::fixed_drift(int d, double eta, TransitionKernel k) {
  EnvironmentLaw law;
  law.d = d;
  law.eta = eta;
  law.family = LawFamily::kFixedDrift;
  law.kernels.push_back(k);
  law.validate();
  return law;
}

EnvironmentLaw EnvironmentLaw::finite_mixture(int d, double eta,
                                              std::vector<TransitionKernel> kernels,
                                              std::vector<double> weights) {
  EnvironmentLaw law;
  law.d = d;
  law.eta = eta;
  law.family = LawFamily::kFiniteMixture;
  law.kernels = std::move(kernels);
  law.weights = std::move(weights);
  law.validate();
  return law;
}

EnvironmentLaw EnvironmentLaw::dirichlet_perturbed(int d, double eta, TransitionKernel base,
                                                   double concentration) {
  EnvironmentLaw law;
  law.d = d;
  law.eta = eta;
  law.family = LawFamily::kDirichletPerturbed;
  law.kernels.push_back(base);
  law.concentration = concentration;
  law.validate();
  return law;
}

void EnvironmentLaw::validate() const {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("dimension out of range");
  if (!(eta > 0) || eta > 1.0 / (2 * d) + 1e-15)
    throw std::invalid_argument("eta must lie in (0, 1/(2d)]");
  switch (family) {
    case LawFamily::kSrw:
      break;
    case LawFamily::kFixedDrift:
      if (kernels.size() != 1) throw std::invalid_argument("fixed drift takes one kernel");
      break;
    case LawFamily::kFiniteMixture: {
      if (kernels.empty() || kernels.size() != weights.size())
        throw std::invalid_argument("mixture kernels and weights must pair up");
      double sum = 0;
      for (double w : weights) {
        if (w < 0) throw std::invalid_argument("negative mixture weight");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
      break;
    }
    case LawFamily::kDirichletPerturbed:
      if (kernels.size() != 1) throw std::invalid_argument("dirichlet takes one base kernel");
      if (!(concentration > 0)) throw std::invalid_argument("concentration must be positive");
      break;
  }
  for (const auto& k : kernels) {
    if (k.d != d) throw std::invalid_argument("kernel dimension mismatch");
    k.check(eta);
  }
}

TransitionKernel EnvironmentLaw::sample_kernel(CounterStream& stream) const {
  switch (family) {
    case LawFamily::kSrw:
      return uniform_kernel(d);
    case LawFamily::kFixedDrift:
      return kernels[0];
    case LawFamily::kFiniteMixture: {
      double u = stream.next_unit();
      double acc = 0;
      for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return kernels[i];
      }
      return kernels.back();
    }
    case LawFamily::kDirichletPerturbed: {
      double free_mass = 1.0 - 2 * d * eta;
      if (free_mass <= 1e-15) return uniform_kernel(d);
      TransitionKernel k;
      k.d = d;
      std::array<double, 2 * kMaxDim> g{};
      double total = 0;
      for (int i = 0; i < 2 * d; ++i) {
        double alpha = concentration * (kernels[0][i] - eta) / free_mass;
        g[static_cast<size_t>(i)] = sample_gamma(stream, alpha);
        total += g[static_cast<size_t>(i)];
      }
      for (int i = 0; i < 2 * d; ++i)
        k[i] = eta + free_mass * (total > 0 ? g[static_cast<size_t>(i)] / total : 1.0 / (2 * d));
      return k;
    }
  }
  std::abort();
}

bool hull_contains(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& x) {
  if (points.empty()) return false;
  size_t d = x.size();
  size_t n = points.size();
  std::vector<std::vector<double>> a(d + 1, std::vector<double>(n, 0.0));
  std::vector<double> b(d + 1, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < n; ++j) a[i][j] = points[j][i];
    b[i] = x[i];
  }
  for (size_t j = 0; j < n; ++j) a[d][j] = 1.0;
  b[d] = 1.0;
  Simplex lp(std::move(a), std::move(b));
  return lp.solve(std::vector<double>(n, 0.0)).feasible;
}

double hull_reach(const std::vector<std::vector<double>>& points,
                  const std::vector<double>& direction) {
  size_t d = direction.size();
  size_t n = points.size();
  // Variables: lambda_1..n, t. Constraints: sum lambda v - t u = 0, sum lambda = 1.
  std::vector<std::vector<double>> a(d + 1, std::vector<double>(n + 1, 0.0));
  std::vector<double> b(d + 1, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < n; ++j) a[i][j] = points[j][i];
    a[i][n] = -direction[i];
  }
  for (size_t j = 0; j < n; ++j) a[d][j] = 1.0;
  b[d] = 1.0;
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  Simplex lp(std::move(a), std::move(b));
  LpResult r = lp.solve(c);
  if (!r.feasible) return 0.0;
  if (!r.bounded) throw std::invalid_argument("hull_reach needs a nonzero direction");
  return r.value;
}

NestlingClass classify_nestling(const EnvironmentLaw& law) {
  law.validate();
  auto pts = support_drifts(law);
  size_t d = static_cast<size_t>(law.d);
  if (!hull_contains(pts, std::vector<double>(d, 0.0))) return NestlingClass::kNonNestling;
  double scale = 0;
  for (const auto& p : pts)
    for (double v : p) scale = std::max(scale, std::abs(v));
  double tol = scale * 1e-9 + 1e-12;
  for (size_t axis = 0; axis < d; ++axis) {
    for (double sign : {1.0, -1.0}) {
      std::vector<double> u(d, 0.0);
      u[axis] = sign;
      if (hull_reach(pts, u) <= tol) return NestlingClass::kMarginallyNestling;
    }
  }
  return NestlingClass::kPlainNestling;
}

TransitionKernel Environment::kernel_at(const Point& site) const {
  if (!overlays.empty()) {
    auto it = overlays.find(site);
    if (it != overlays.end()) return it->second;
  }
  // Constant-support families never touch the stream.
  if (law.family == LawFamily::kSrw) return uniform_kernel(law.d);
  if (law.family == LawFamily::kFixedDrift) return law.kernels[0];
  CounterStream s = site_stream(env_seed, site);
  return law.sample_kernel(s);
}

Environment plant_naive_trap(const Environment& env, const Point& center, int radius) {
  if (radius < 1) throw InvalidRadius("trap radius must be at least 1");
  int d = env.law.d;
  double eta = env.law.eta;
  Environment out = env;

  auto inward_kernel = [&](int dir) {
    TransitionKernel k;
    k.d = d;
    for (int i = 0; i < 2 * d; ++i) k[i] = eta;
    k[dir] = 1.0 - (2 * d - 1) * eta;
    return k;
  };

  std::vector<int64_t> off(static_cast<size_t>(d), -radius);
  for (;;) {
    Point site = center;
    int axis = 0;
    int64_t largest = 0;
    for (int i = 0; i < d; ++i) {
      site.c[static_cast<size_t>(i)] += off[static_cast<size_t>(i)];
      if (std::abs(off[static_cast<size_t>(i)]) > largest) {
        largest = std::abs(off[static_cast<size_t>(i)]);
        axis = i;
      }
    }
    int dir;
    if (largest == 0)
      dir = 1;  // center: drift along -e_1
    else
      dir = off[static_cast<size_t>(axis)] > 0 ? 2 * axis + 1 : 2 * axis;
    out.overlays[site] = inward_kernel(dir);

    int i = 0;
    while (i < d && ++off[static_cast<size_t>(i)] > radius) {
      off[static_cast<size_t>(i)] = -radius;
      ++i;
    }
    if (i == d) break;
  }
  return out;
}

double trap_match_log_prob(int d, int radius, double per_site_prob) {
  if (radius < 1) throw InvalidRadius("trap radius must be at least 1");
  if (!(per_site_prob > 0) || per_site_prob > 1)
    throw std::invalid_argument("per-site probability must lie in (0, 1]");
  return std::pow(2.0 * radius + 1.0, d) * std::log(per_site_prob);
}

}  // namespace rwre
