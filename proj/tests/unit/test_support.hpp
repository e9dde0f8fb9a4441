#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pmat/mlp.hpp"
#include "pmat/rng.hpp"

namespace pmat::testing {

// Central differences, independent of the reverse pass under test.
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::vector<double> at, double h = 1e-5) {
  std::vector<double> grad(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double saved = at[k];
    at[k] = saved + h;
    const double up = f(at);
    at[k] = saved - h;
    const double down = f(at);
    at[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Largest entrywise |a - b| / max(|a|, |b|, floor). The floor keeps entries
// whose true value is ~0 from dividing roundoff by roundoff.
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double scale = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
  }
  return worst;
}

inline std::vector<double> random_vector(Engine& engine, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(engine, lo, hi);
  return v;
}

// Smallest |pre-activation| over hidden layers; FD checks skip draws that
// sit within a finite-difference step of a ReLU kink.
inline double min_hidden_preactivation(const ModelParams& params, std::span<const double> x) {
  const ForwardTape tape = forward_recorded(params, x);
  double m = 1e300;
  for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l) {
    for (double z : tape.pre[l]) m = std::min(m, std::abs(z));
  }
  return m;
}

}  // namespace pmat::testing
