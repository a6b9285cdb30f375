#pragma once

// Discretization grid over response-probability values.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace deconvht {

// Strictly increasing probability values in (0, 1] used as the support of the
// discretized mixing distribution.
class Grid {
 public:
  explicit Grid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("Grid: no points");
    double prev = 0.0;
    for (double p : points_) {
      if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("Grid: points must lie in (0, 1]");
      if (p <= prev) throw std::invalid_argument("Grid: points must be strictly increasing");
      prev = p;
    }
  }

  // Evenly spaced grid start, start+step, ..., end.  The final point is
  // snapped exactly to `end` so that e.g. 0.1 + 45*0.02 lands on 1.0.
  static Grid linspace(double start, double step, double end) {
    if (!(step > 0.0) || !(end > start))
      throw std::invalid_argument("Grid: need step > 0 and end > start");
    double n_real = (end - start) / step;
    auto n = static_cast<std::size_t>(std::llround(n_real));
    if (std::fabs(n_real - static_cast<double>(n)) > 1e-9)
      throw std::invalid_argument("Grid: (end - start) must be a multiple of step");
    std::vector<double> pts(n + 1);
    for (std::size_t k = 0; k <= n; ++k) pts[k] = start + static_cast<double>(k) * step;
    pts[n] = end;
    return Grid(std::move(pts));
  }

  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }
  const std::vector<double>& points() const { return points_; }

 private:
  std::vector<double> points_;
};

}  // namespace deconvht
