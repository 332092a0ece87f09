#include "cobra/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cobra {

MeanCi mean_ci(std::span<const double> samples, double level) {
  MeanCi r;
  r.n = samples.size();
  if (r.n == 0) {
    r.mean = std::numeric_limits<double>::quiet_NaN();
    r.half_width = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double sum = 0.0;
  for (double s : samples) sum += s;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n < 2) {
    r.half_width = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double ss = 0.0;
  for (double s : samples) {
    double d = s - r.mean;
    ss += d * d;
  }
  double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  boost::math::students_t dist(static_cast<double>(r.n - 1));
  double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  r.half_width = t * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

double geo_mean(std::span<const double> factors) {
  if (factors.empty()) throw std::invalid_argument("geo_mean of an empty set");
  double acc = 0.0;
  for (double f : factors) {
    if (!(f > 0.0)) throw std::invalid_argument("geo_mean requires positive factors");
    acc += std::log(f);
  }
  return std::exp(acc / static_cast<double>(factors.size()));
}

double checkpoint_model(uint64_t n_failures) {
  return 1.0 + static_cast<double>(n_failures) / 2.0;
}

}  // namespace cobra
