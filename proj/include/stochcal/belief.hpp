#pragma once

#include "stochcal/types.hpp"

namespace stochcal {

/// Gaussian belief N(mean, cov) over the (augmented) state. Fixed-size
/// instantiations are used inside the filter; the dynamic one at API edges.
template <int N = Eigen::Dynamic>
struct GaussianBelief {
  using MeanType = Eigen::Matrix<double, N, 1>;
  using CovType = Eigen::Matrix<double, N, N>;

  MeanType mean;
  CovType cov;

  Eigen::Index dim() const { return mean.size(); }

  template <int M>
  GaussianBelief<M> cast() const {
    return GaussianBelief<M>{mean, cov};
  }

  double stddev(Eigen::Index slot) const { return std::sqrt(std::max(0.0, cov(slot, slot))); }

  bool finite() const { return mean.allFinite() && cov.allFinite(); }

  void symmetrize() { cov = (0.5 * (cov + cov.transpose())).eval(); }
};

}  // namespace stochcal
