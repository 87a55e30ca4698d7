#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rwre/grid.hpp"
#include "rwre/scales.hpp"

namespace rwre {

// Box elongated along e_1, transversally confined around the line through z
// in direction theta: |<x-z,e_1>| < N^2 and ||x - u(z,x)||_inf < N*R_5(N),
// where u(z,x) = z + theta * <x-z,e_1>/<theta,e_1>.
struct BlockSpec {
  Point z;
  std::int64_t N = 2;
  std::vector<double> theta;  // Euclidean unit vector, <theta,e_1> > 0

  BlockSpec() = default;
  BlockSpec(Point center, std::int64_t size, std::vector<double> direction);

  int dim() const { return z.d; }
  std::int64_t transverse_halfwidth() const;  // N * R_5(N)
};

bool block_contains(const BlockSpec& block, const Point& x);
bool middle_third_contains(const BlockSpec& block, const Point& x);

enum class BoundaryClass { kInterior, kBoundary, kFrontBoundary, kExterior };

// front_boundary: outside with an l1-neighbor inside and e_1 offset exactly
// N^2. boundary: any other outside site with an l1-neighbor inside.
BoundaryClass boundary_classify(const BlockSpec& block, const Point& x);

// Anchor lattice: e_1 layers N^2 apart, transverse spacing
// max(1, floor(N*R_5(N)/4)).
std::int64_t lattice_spacing(std::int64_t N);
bool on_lattice(const Point& z, std::int64_t N);

// Nearest lattice point covering x (min l-inf distance, lexicographic
// tie-break). Requires <x,e_1> divisible by N^2; throws NotOnLayer.
Point lattice_cover(const Point& x, std::int64_t N);

// Residue classes of the anchor lattice spaced so same-class blocks are
// disjoint. Stride 9 suffices except at a few small N where the floored
// spacing is too tight; there the transverse stride widens and the
// decomposition is flagged.
struct SublatticeDecomposition {
  int d = 1;
  std::int64_t N = 2;
  std::int64_t e1_modulus = 9;
  std::int64_t transverse_modulus = 9;
  bool widened = false;

  std::int64_t num_classes() const;
  std::int64_t class_of(const Point& z) const;  // z must lie on the lattice
};

SublatticeDecomposition sublattice_decomposition(int d, std::int64_t N);

struct Constants {
  double alpha = 0;
  double gamma = 0;
  int d = 2;
  double epsilon = 0;
  double psi = 0;
  double chi = 0;
  bool relaxed = false;
};

struct ConstantOverrides {
  std::optional<double> epsilon;
  std::optional<double> psi;
  std::optional<double> chi;
};

// Strict mode picks interior points of the feasible region:
// epsilon = (d-alpha)/(4d), psi = gamma*epsilon/(30d),
// chi = 0.9 * (psi^2/2) * (d-1)/(2(d+1)).
Constants choose_constants(double alpha, int d, double gamma);
Constants choose_constants_relaxed(double alpha, int d, double gamma,
                                   const ConstantOverrides& overrides);

// The three feasibility inequalities; always true for strict-mode output.
bool constants_feasible(const Constants& c);

struct ScaleLadder {
  std::int64_t L = 0;
  Constants constants;
  std::vector<std::int64_t> sizes;  // N_1..N_iota
  std::vector<double> rhos;         // rho_1..rho_{iota-1}
  int iota = 0;
  bool near_degenerate = false;  // N_1 <= 2
};

// N_1 = ceil(L^psi), N_{k+1} = N_k * ceil(L^{rho_k}) with
// rho_k = chi/2 + chi/2^k, stopping at the last N_k with N_k^2 < 2L.
// Throws DegenerateLadder when N_1^2 >= 2L.
ScaleLadder build_ladder(std::int64_t L, const Constants& constants);

// [-L,L] x [-L^2,L^2]^{d-1}.
struct SlowdownBox {
  std::int64_t L = 1;
  int d = 1;

  bool contains(const Point& x) const;         // closed box
  bool strictly_inside(const Point& x) const;  // open box
  bool on_boundary(const Point& x) const { return contains(x) && !strictly_inside(x); }
};

}  // namespace rwre
