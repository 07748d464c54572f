#pragma once

#include <cmath>
#include <span>

namespace dissipwave {

/// Neumaier-compensated accumulator. Reductions over millions of cells stay
/// reproducible to ~1e-15 relative regardless of traversal order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }

  void merge(const CompensatedSum& other) {
    add(other.sum_);
    add(other.comp_);
  }

  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

}  // namespace dissipwave
