#pragma once

// Central finite differences against analytic gradients. Test-only.

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace protfuse::testing {

struct GradCheckResult {
  std::string worst_name;
  double worst_relative_error = 0;
  std::size_t checked = 0;
};

/// sum(z .* w) as a tape node; a scalar probe with non-degenerate gradients.
template <typename Scalar>
Var<Scalar> weighted_sum(const Var<Scalar>& z, const Matrix<Scalar>& w) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = (z.value().array() * w.array()).sum();
  return z.tape()->record(std::move(out), {z}, [iz = z.id(), w](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(iz, w * g(0, 0));
  });
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal(rng));
  return m;
}

/// Adds N(0, sd) noise to every entry, so zero-initialised biases and unit
/// gains carry non-trivial gradients.
template <typename Scalar>
void jitter(ParamSet<Scalar>& params, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sd);
  for (auto& e : params.entries()) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] += static_cast<Scalar>(noise(rng));
  }
}

/// For every array in `params`, perturbs up to `samples` entries by ±step and
/// compares (f(+) - f(-)) / 2step with `analytic`. The relative error of an
/// array is ||a - n|| / max(||a|| + ||n||, floor) over its sampled entries;
/// the floor keeps arrays whose true gradient is zero (attention key biases)
/// from dividing rounding noise by rounding noise.
inline GradCheckResult check_gradients(ParamSet<double>& params, const ParamSet<double>& analytic,
                                       const std::function<double()>& loss, std::size_t samples = 12,
                                       double step = 1e-5, std::uint64_t seed = 7, double floor = 1e-4) {
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto& value = params.entries()[a].value;
    const auto& grad = analytic.entries()[a].value;
    std::vector<Eigen::Index> picks(static_cast<std::size_t>(value.size()));
    for (Eigen::Index i = 0; i < value.size(); ++i) picks[static_cast<std::size_t>(i)] = i;
    std::shuffle(picks.begin(), picks.end(), rng);
    if (picks.size() > samples) picks.resize(samples);
    double diff = 0, na = 0, nn = 0;
    for (Eigen::Index i : picks) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = loss();
      value.data()[i] = saved - step;
      const double down = loss();
      value.data()[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double an = grad.data()[i];
      diff += (an - numeric) * (an - numeric);
      na += an * an;
      nn += numeric * numeric;
      ++result.checked;
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    const double rel = std::sqrt(diff) / std::max(denom, floor);
    if (rel > result.worst_relative_error) {
      result.worst_relative_error = rel;
      result.worst_name = params.entries()[a].name;
    }
  }
  return result;
}

}  // namespace protfuse::testing
