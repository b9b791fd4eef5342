// Copyright 2026 The errcalc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "errcalc/process_models.hpp"

#include <algorithm>
#include <cmath>

#include "errcalc/clusters.hpp"
#include "errcalc/errors.hpp"

namespace errcalc::process {

namespace {

constexpr std::uint64_t kSharpStream = 0xb81d9eULL;
constexpr std::uint64_t kWalkStream = 0xd0b5cbULL;
constexpr std::size_t kMinSamples = 10000;

void require_unit_time(double t, const char* name) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValidationError(std::string(name) + " must lie in [0, 1], got " + std::to_string(t));
  }
}

void require_steps(int k) {
  if (k < 2) throw ValidationError("the walk needs K >= 2 steps, got " + std::to_string(k));
}

// Number of grid points t_k = k / K with t_k < t.
int steps_before(const DiscretizedWienerStructure& w, double t) {
  int n = 0;
  while (n < w.steps && w.time(n) < t) ++n;
  return n;
}

}  // namespace

DiscretizedWienerStructure::DiscretizedWienerStructure(int k) : steps(k) { require_steps(k); }

Eigen::VectorXd DiscretizedWienerStructure::walk(double t) const {
  require_unit_time(t, "t");
  const double scale = 1.0 / std::sqrt(static_cast<double>(steps));
  Eigen::VectorXd c(steps);
  for (int k = 0; k < steps; ++k) c(k) = time(k) < t ? scale : 0.0;
  return c;
}

Eigen::VectorXd DiscretizedWienerStructure::bridge(double s) const {
  require_unit_time(s, "s");
  const double scale = 1.0 / std::sqrt(static_cast<double>(steps));
  Eigen::VectorXd c(steps);
  for (int k = 0; k < steps; ++k) c(k) = ((time(k) < s ? 1.0 : 0.0) - s) * scale;
  return c;
}

double DiscretizedWienerStructure::gamma(const Eigen::VectorXd& c, const Eigen::VectorXd& d) {
  if (c.size() != d.size()) throw DimensionError("functionals live on different grids");
  return c.dot(d);
}

double bridge_gamma_analytic(double s, double t, int k) {
  const DiscretizedWienerStructure w(k);
  require_unit_time(s, "s");
  require_unit_time(t, "t");
  if (s > t) std::swap(s, t);
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    sum += ((w.time(j) < s ? 1.0 : 0.0) - s) * ((w.time(j) < t ? 1.0 : 0.0) - t);
  }
  return sum / k;
}

double bridge_gamma_continuum(double s, double t) {
  require_unit_time(s, "s");
  require_unit_time(t, "t");
  return std::min(s, t) - s * t;
}

double bridge_gamma_combination(double a, double s, double b, double t, int k) {
  const DiscretizedWienerStructure w(k);
  const Eigen::VectorXd c = a * w.bridge(s) + b * w.bridge(t);
  return DiscretizedWienerStructure::gamma(c, c);
}

std::string to_string(BridgeMethod m) {
  return m == BridgeMethod::kSharpSampling ? "sharp-sampling" : "cluster";
}

BridgeMethod parse_bridge_method(const std::string& name) {
  if (name == "sharp-sampling" || name == "sharp") return BridgeMethod::kSharpSampling;
  if (name == "cluster") return BridgeMethod::kCluster;
  throw ValidationError("unknown bridge method '" + name +
                        "' (expected sharp-sampling or cluster)");
}

mc::Estimate bridge_gamma_estimated(double s, double t, int k, BridgeMethod method,
                                    std::size_t samples, std::uint64_t seed) {
  const DiscretizedWienerStructure w(k);
  if (samples < kMinSamples) {
    throw ValidationError("bridge estimation needs at least 10000 samples");
  }
  if (s > t) std::swap(s, t);
  const Eigen::VectorXd cs = w.bridge(s);
  const Eigen::VectorXd ct = w.bridge(t);

  if (method == BridgeMethod::kSharpSampling) {
    // X# = c . xi' with xi' an independent copy of the increments.
    const auto partial = mc::run_indexed(mc::block_count(samples), [&](std::size_t b) {
      mc::Rng rng = mc::substream(seed, kSharpStream, b);
      const std::size_t end = std::min(samples, (b + 1) * mc::kBlockSize);
      Eigen::VectorXd xi(k);
      mc::Moments m;
      for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
        mc::fill_normal(rng, std::span<double>(xi.data(), static_cast<std::size_t>(k)));
        m.add(cs.dot(xi) * ct.dot(xi));
      }
      return m;
    });
    return mc::pairwise_sum(partial).estimate();
  }

  clusters::BlackBox box;
  box.input_dimension = k;
  box.output_dimension = 2;
  box.evaluate = [&cs, &ct](const Eigen::VectorXd& p) {
    Eigen::VectorXd v(2);
    v << cs.dot(p), ct.dot(p);
    return v;
  };
  const auto cfg = clusters::ClusterConfig::scaled(Eigen::VectorXd::Zero(k),
                                                   Eigen::MatrixXd::Identity(k, k), 1.0,
                                                   samples, seed);
  const auto e = clusters::run_cluster(box, cfg);
  return {e.gamma_hat(0, 1), e.gamma_se(0, 1)};
}

BridgeComparison compare_bridge_methods(double s, double t, int k, std::size_t samples,
                                        std::uint64_t seed) {
  BridgeComparison out;
  out.analytic = bridge_gamma_analytic(s, t, k);
  out.sharp = bridge_gamma_estimated(s, t, k, BridgeMethod::kSharpSampling, samples, seed);
  out.cluster = bridge_gamma_estimated(s, t, k, BridgeMethod::kCluster, samples, seed);
  const double se = std::hypot(out.sharp.standard_error, out.cluster.standard_error);
  if (std::abs(out.sharp.value - out.cluster.value) > 5.0 * se) {
    throw NumericalError("sharp-sampling and cluster estimates of the bridge Gamma differ by " +
                         std::to_string(std::abs(out.sharp.value - out.cluster.value)) +
                         ", beyond 5 standard errors (" + std::to_string(se) + ")");
  }
  return out;
}

void StringModel::validate() const {
  if (!(length > 0.0) || !(tension > 0.0) || !(temperature > 0.0)) {
    throw ValidationError("string length, tension and temperature must be positive");
  }
  if (!(x > 0.0 && x < length)) {
    throw ValidationError("observation point must satisfy 0 < x < length");
  }
}

StringDeflection string_mean_square_deflection(const StringModel& m, int k) {
  m.validate();
  StringDeflection out;
  out.steps = k;
  const double u = m.x / m.length;
  const double factor = m.temperature * m.length / m.tension;
  out.closed_form = m.temperature / (m.tension * m.length) * m.x * (m.length - m.x);
  out.bridge_value = factor * bridge_gamma_analytic(u, u, k);
  out.tolerance = factor * 2.0 / k;
  if (std::abs(out.closed_form - out.bridge_value) > out.tolerance) {
    throw NumericalError("string deflection and rescaled bridge Gamma disagree beyond 2/K");
  }
  return out;
}

DonskerEstimate donsker_erroneous_walk(int k, const std::vector<double>& times,
                                       std::size_t samples, std::uint64_t seed,
                                       std::vector<double> eps) {
  const DiscretizedWienerStructure w(k);
  if (times.empty()) throw ValidationError("no observation times");
  if (samples < kMinSamples) throw ValidationError("the walk needs at least 10000 samples");
  for (double t : times) require_unit_time(t, "t");
  for (double e : eps) {
    if (!(e > 0.0 && e < 1.0)) throw ValidationError("eps values must lie in (0, 1)");
  }
  const mc::LinearExtrapolation fit(eps);
  const std::size_t nt = times.size();
  const std::size_t ne = eps.size();

  std::vector<int> index(nt);
  for (std::size_t i = 0; i < nt; ++i) index[i] = steps_before(w, times[i]);
  std::vector<double> shrink(ne), spread(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    shrink[e] = std::sqrt(1.0 - eps[e]) - 1.0;
    spread[e] = std::sqrt(eps[e]);
  }
  const double root_k = std::sqrt(static_cast<double>(k));

  const auto partial = mc::run_indexed(mc::block_count(samples), [&](std::size_t b) {
    mc::Rng rng = mc::substream(seed, kWalkStream, b);
    const std::size_t end = std::min(samples, (b + 1) * mc::kBlockSize);
    std::vector<mc::Moments> m(nt * nt);
    Eigen::VectorXd xi(k), xi2(k);
    Eigen::VectorXd prefix(k + 1), prefix2(k + 1);
    std::vector<double> a(nt), a2(nt), y(ne);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
      mc::fill_normal(rng, std::span<double>(xi.data(), static_cast<std::size_t>(k)));
      mc::fill_normal(rng, std::span<double>(xi2.data(), static_cast<std::size_t>(k)));
      prefix(0) = prefix2(0) = 0.0;
      for (int j = 0; j < k; ++j) {
        prefix(j + 1) = prefix(j) + xi(j);
        prefix2(j + 1) = prefix2(j) + xi2(j);
      }
      for (std::size_t p = 0; p < nt; ++p) {
        a[p] = prefix(index[p]) / root_k;
        a2[p] = prefix2(index[p]) / root_k;
      }
      for (std::size_t p = 0; p < nt; ++p) {
        for (std::size_t q = p; q < nt; ++q) {
          for (std::size_t e = 0; e < ne; ++e) {
            // Antithetic pair +-xi' cancels the odd powers of sqrt(eps).
            const double up = (shrink[e] * a[p] + spread[e] * a2[p]) *
                              (shrink[e] * a[q] + spread[e] * a2[q]);
            const double down = (shrink[e] * a[p] - spread[e] * a2[p]) *
                                (shrink[e] * a[q] - spread[e] * a2[q]);
            y[e] = 0.5 * (up + down) / eps[e];
          }
          m[p * nt + q].add(fit.intercept(y));
        }
      }
    }
    return m;
  });

  std::vector<mc::Moments> total(nt * nt);
  for (std::size_t c = 0; c < nt * nt; ++c) {
    std::vector<mc::Moments> column(partial.size());
    for (std::size_t b = 0; b < partial.size(); ++b) column[b] = partial[b][c];
    total[c] = mc::pairwise_sum(column);
  }

  DonskerEstimate out;
  out.times = times;
  out.eps = eps;
  const auto n = static_cast<Eigen::Index>(nt);
  out.gamma.resize(n, n);
  out.standard_error.resize(n, n);
  out.discrete.resize(n, n);
  out.continuum.resize(n, n);
  for (std::size_t p = 0; p < nt; ++p) {
    for (std::size_t q = p; q < nt; ++q) {
      const mc::Estimate est = total[p * nt + q].estimate();
      const auto i = static_cast<Eigen::Index>(p);
      const auto j = static_cast<Eigen::Index>(q);
      out.gamma(i, j) = out.gamma(j, i) = est.value;
      out.standard_error(i, j) = out.standard_error(j, i) = est.standard_error;
      out.discrete(i, j) = out.discrete(j, i) =
          static_cast<double>(std::min(index[p], index[q])) / k;
      out.continuum(i, j) = out.continuum(j, i) = std::min(times[p], times[q]);
    }
  }
  return out;
}

}  // namespace errcalc::process
