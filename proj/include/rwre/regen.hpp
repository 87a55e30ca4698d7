#pragma once

#include <cstdint>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/grid.hpp"
#include "rwre/scales.hpp"
#include "rwre/walk.hpp"

namespace rwre {

// A time t certifies as a regeneration over the observed horizon when the
// projection onto ell is a strict running record at t, strictly increases at
// t+1, and every later observed projection stays strictly above the t+1 level.
// certified_margin is the final observed clearance above that level: how much
// projected backtracking an unobserved continuation would need before it
// could break the record. A record whose future is empty gets margin 0 and
// is still reported.
struct RegenerationRecord {
  std::int64_t tau = 0;
  Point position;
  // Slab k spans (tau_{k-1}, tau_k]; the first slab starts at the walk start,
  // so its duration is tau_1 and can be 0 when the start itself regenerates.
  std::int64_t slab_duration = 0;
  Point slab_displacement;
  std::int64_t radius = 0;  // max l-infinity deviation from the slab's start
  double certified_margin = 0;
};

struct RegenerationSummary {
  double mean_duration = 0;
  std::vector<double> mean_displacement;
  std::vector<std::vector<double>> displacement_covariance;
  std::vector<double> velocity;   // mean_displacement / mean_duration
  std::vector<double> direction;  // velocity / |velocity|_2
  std::int64_t count = 0;         // slabs entering the moments
};

std::vector<RegenerationRecord> detect_regenerations(const Trajectory& traj,
                                                     std::vector<double> ell);

// Moments over the slabs between consecutive records whose margin clears
// min_margin; the stretch before the first such record is dropped.
RegenerationSummary summarize(const std::vector<RegenerationRecord>& records,
                              double min_margin);

// True iff the radii of the first N records are all strictly below R_1(N).
bool event_A_N(const std::vector<RegenerationRecord>& records, std::int64_t N);

struct IidReport {
  std::int64_t count = 0;  // slab series length
  double autocorr_duration = 0;
  double autocorr_projection = 0;
  double half_split_ks = 0;
  double autocorr_threshold = 0;
  double ks_threshold = 0;
  bool pass_autocorr_duration = false;
  bool pass_autocorr_projection = false;
  bool pass_half_split = false;
  bool pass = false;
};

// Lag-1 autocorrelations of slab durations and of slab displacement projected
// onto ell, plus a two-sample KS statistic between the first and second half
// of the durations. significance must be one of 0.1, 0.05, 0.01.
IidReport iid_diagnostics(const std::vector<RegenerationRecord>& records,
                          std::vector<double> ell, double significance = 0.01);

struct Tau1Row {
  double u = 0;
  double survival = 0;
  double std_error = 0;
  double censored_frac = 0;
};

// Empirical upper tail of the first certified regeneration time under the
// averaged law. Samples with no positively-certified record within the budget
// are counted as tau_1 > max(u_grid) and reported through censored_frac; if a
// pilot batch shows no significantly positive drift along ell, certification
// is unsound and every sample is censored.
std::vector<Tau1Row> tau1_tail(const EnvironmentLaw& law, std::vector<double> ell,
                               const std::vector<double>& u_grid,
                               std::int64_t n_samples, std::uint64_t seed,
                               std::int64_t step_budget = 0);

}  // namespace rwre
