#pragma once

#include <cmath>
#include <random>

#include "dissflow/measures.hpp"

namespace testing {

inline dissflow::ParticleEnsemble random_ensemble(const dissflow::BoxDomain& dom, Eigen::Index n, std::mt19937_64& g) {
  dissflow::Points p(n, dom.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < dom.dim(); ++k) p(i, k) = std::uniform_real_distribution<double>(dom.lower(k), dom.upper(k))(g);
  return {dom, p};
}

inline dissflow::ParticleEnsemble line(std::initializer_list<double> xs, double lo = -10.0, double hi = 10.0) {
  dissflow::Points p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) p(i++, 0) = x;
  return {dissflow::BoxDomain::cube(1, lo, hi), p};
}

inline bool near_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

}  // namespace testing
