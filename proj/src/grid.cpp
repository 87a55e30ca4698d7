#include "rwre/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace rwre {

std::string to_string(const Point& p) {
  std::string s = "(";
  for (int i = 0; i < p.d; ++i) {
    if (i) s += ",";
    s += std::to_string(p.c[i]);
  }
  s += ")";
  return s;
}

std::vector<double> normalize_direction(std::vector<double> v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  if (n2 <= 0) throw std::invalid_argument("direction must be nonzero");
  double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace rwre
