#pragma once

#include <cstdint>

namespace rwre {

// Iterated-log scale family: floor(exp((ln ln N)^(k+1))), natural log.
// k=0 reduces to floor(ln N). Throws DomainError for N < 3 or when the
// value exceeds the int64 range.
std::int64_t scale_R(int k, std::int64_t N);

// Asymptotic ordering R_1(N)^2 < R_2(N) < N, evaluated in floating point for
// astronomically large N. Reported, never asserted: the ordering only sets in
// around N ~ e^94.
struct ScaleInequalityReport {
  double n = 0;
  double r1 = 0;
  double r2 = 0;
  bool holds = false;
};
ScaleInequalityReport scale_inequality_report(double N);

}  // namespace rwre
