#include "clinloop/rng.hpp"

#include <cmath>

namespace clinloop {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller. u clamped away from 0 so log() is finite.
  double u = u01();
  if (u < 1e-300) u = 1e-300;
  const double v = u01();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * 3.14159265358979323846 * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    double prod = u01();
    int n = 0;
    while (prod > limit) {
      prod *= u01();
      ++n;
    }
    return n;
  }
  // Normal approximation for large rates; adequate for simulation use.
  const double v = std::round(lambda + std::sqrt(lambda) * normal());
  return v < 0.0 ? 0 : static_cast<int>(v);
}

}  // namespace clinloop
