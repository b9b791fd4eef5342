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

#include "errcalc/clusters.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "errcalc/expr.hpp"
#include "errcalc/montecarlo.hpp"

namespace errcalc::clusters {

namespace {

constexpr std::uint64_t kCloudStream = 0xc105e5ULL;
constexpr std::uint64_t kStudyStream = 0x5747d9ULL;

std::string format_point(const Eigen::VectorXd& p) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p(i);
  os << ')';
  return os.str();
}

// Sample covariance of the columns of `x` (rows are coordinates), two-pass,
// with per-block partial sums reduced pairwise.
struct ColumnMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  // Jackknife spread of the centered products, sum_j (p_j - mean p)^2 for
  // p_j = d_jk d_jl.
  Eigen::MatrixXd product_spread;
};

ColumnMoments column_moments(const Eigen::MatrixXd& x, bool with_spread) {
  const Eigen::Index rows = x.rows();
  const std::size_t n = static_cast<std::size_t>(x.cols());
  const std::size_t blocks = mc::block_count(n);
  auto range = [n](std::size_t b) {
    const std::size_t begin = b * mc::kBlockSize;
    return std::pair{static_cast<Eigen::Index>(begin),
                     static_cast<Eigen::Index>(std::min(n, begin + mc::kBlockSize) - begin)};
  };

  const auto sums = mc::run_indexed(blocks, [&](std::size_t b) {
    const auto [begin, len] = range(b);
    Eigen::VectorXd s = x.middleCols(begin, len).rowwise().sum();
    return s;
  });
  ColumnMoments out;
  out.mean = mc::pairwise_sum(sums) / static_cast<double>(n);

  const auto products = mc::run_indexed(blocks, [&](std::size_t b) {
    const auto [begin, len] = range(b);
    const Eigen::MatrixXd d = x.middleCols(begin, len).colwise() - out.mean;
    Eigen::MatrixXd p = d * d.transpose();
    return p;
  });
  const Eigen::MatrixXd scatter = mc::pairwise_sum(products);
  out.covariance = scatter / static_cast<double>(n - 1);
  // Exact symmetry regardless of how the product was accumulated.
  out.covariance = (0.5 * (out.covariance + out.covariance.transpose())).eval();

  if (with_spread) {
    const Eigen::MatrixXd pbar = scatter / static_cast<double>(n);
    const auto spread = mc::run_indexed(blocks, [&](std::size_t b) {
      const auto [begin, len] = range(b);
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(rows, rows);
      for (Eigen::Index j = begin; j < begin + len; ++j) {
        const Eigen::VectorXd d = x.col(j) - out.mean;
        for (Eigen::Index k = 0; k < rows; ++k) {
          for (Eigen::Index l = k; l < rows; ++l) {
            const double e = d(k) * d(l) - pbar(k, l);
            s(k, l) += e * e;
          }
        }
      }
      return s;
    });
    out.product_spread = mc::pairwise_sum(spread);
    out.product_spread.triangularView<Eigen::StrictlyLower>() =
        out.product_spread.transpose().triangularView<Eigen::StrictlyLower>();
  }
  return out;
}

bool is_diagonal(const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

// Cloud moments about the known cloud mean, accumulated while sampling.
// Dimensions above kFullDiagnostics keep only the diagonal.
struct CloudSums {
  double n = 0.0;
  Eigen::VectorXd sum;
  Eigen::MatrixXd scatter;
  Eigen::VectorXd squares;

  CloudSums() = default;
  CloudSums(Eigen::Index d, bool full)
      : sum(Eigen::VectorXd::Zero(d)),
        scatter(full ? Eigen::MatrixXd::Zero(d, d) : Eigen::MatrixXd()),
        squares(Eigen::VectorXd::Zero(d)) {}

  void add(const Eigen::VectorXd& dev) {
    n += 1.0;
    sum += dev;
    squares += dev.cwiseAbs2();
    if (scatter.size() > 0) scatter.selfadjointView<Eigen::Lower>().rankUpdate(dev);
  }

  CloudSums operator+(const CloudSums& o) const {
    CloudSums r = *this;
    r.n += o.n;
    r.sum += o.sum;
    r.squares += o.squares;
    if (scatter.size() > 0) r.scatter += o.scatter;
    return r;
  }

  CloudDiagnostics diagnostics(const Eigen::MatrixXd& dispersion, double s) const {
    CloudDiagnostics out;
    const Eigen::VectorXd mean = sum / n;
    if (scatter.size() > 0) {
      Eigen::MatrixXd cov = scatter.selfadjointView<Eigen::Lower>();
      cov = (cov - n * mean * mean.transpose()) / (n - 1.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov / s, Eigen::EigenvaluesOnly);
      out.min_eigenvalue = es.eigenvalues().minCoeff();
      out.max_eigenvalue = es.eigenvalues().maxCoeff();
      out.dispersion_error = ((cov - dispersion) / s).cwiseAbs().maxCoeff();
    } else {
      const Eigen::VectorXd var = (squares - n * mean.cwiseAbs2()) / (n - 1.0);
      out.min_eigenvalue = var.minCoeff() / s;
      out.max_eigenvalue = var.maxCoeff() / s;
      out.dispersion_error = ((var - dispersion.diagonal()) / s).cwiseAbs().maxCoeff();
      out.full = false;
    }
    out.condition_number = out.min_eigenvalue > 0.0
                               ? out.max_eigenvalue / out.min_eigenvalue
                               : std::numeric_limits<double>::infinity();
    return out;
  }
};

Eigen::VectorXd unit_ball_point(mc::Rng& rng, Eigen::Index d) {
  Eigen::VectorXd v(d);
  mc::fill_normal(rng, std::span<double>(v.data(), static_cast<std::size_t>(d)));
  const double norm = v.norm();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double radius = std::pow(u01(rng), 1.0 / static_cast<double>(d));
  return v * (radius / norm);
}

ClusterEstimate combine(const ClusterEstimate& a, const ClusterEstimate& b) {
  ClusterEstimate out = a;
  out.gamma_hat = a.gamma_hat + b.gamma_hat;
  out.gamma_se = (a.gamma_se.array().square() + b.gamma_se.array().square()).sqrt();
  out.bias_hat = a.bias_hat + b.bias_hat;
  out.bias_se = (a.bias_se.array().square() + b.bias_se.array().square()).sqrt();
  out.points = a.points + b.points;
  out.small_cluster = a.small_cluster || b.small_cluster;
  if (b.cloud.condition_number > a.cloud.condition_number) out.cloud = b.cloud;
  return out;
}

}  // namespace

std::string to_string(CloudDistribution d) {
  return d == CloudDistribution::kGaussian ? "gaussian" : "uniform-ellipsoid";
}

CloudDistribution parse_distribution(const std::string& name) {
  if (name == "gaussian") return CloudDistribution::kGaussian;
  if (name == "uniform-ellipsoid") return CloudDistribution::kUniformEllipsoid;
  throw ValidationError("unknown cloud distribution '" + name +
                        "' (expected gaussian or uniform-ellipsoid)");
}

ClusterConfig ClusterConfig::scaled(Eigen::VectorXd center, const Eigen::MatrixXd& shape,
                                    double s, std::size_t points, std::uint64_t seed,
                                    CloudDistribution distribution) {
  ClusterConfig cfg;
  cfg.center = std::move(center);
  cfg.dispersion = s * shape;
  cfg.scale = s;
  cfg.points = points;
  cfg.seed = seed;
  cfg.distribution = distribution;
  return cfg;
}

void ClusterConfig::validate() const {
  const Eigen::Index d = center.size();
  if (d == 0) throw ValidationError("cluster center is empty");
  if (!center.allFinite()) throw ValidationError("cluster center has non-finite entries");
  if (dispersion.rows() != d || dispersion.cols() != d) {
    throw DimensionError("dispersion must be " + std::to_string(d) + "x" +
                         std::to_string(d));
  }
  if (points < static_cast<std::size_t>(d) + 2) {
    throw ValidationError("cluster size " + std::to_string(points) +
                          " is below d + 2 = " + std::to_string(d + 2));
  }
  if (drift.size() != 0 && drift.size() != d) {
    throw DimensionError("drift must have dimension " + std::to_string(d));
  }
  if (drift.size() != 0 && !drift.allFinite()) {
    throw ValidationError("drift has non-finite entries");
  }
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw ValidationError("scale must be finite and >= 0");
  }
  if (!dispersion.allFinite()) throw ValidationError("dispersion has non-finite entries");
  double norm = 0.0;
  if (is_diagonal(dispersion)) {
    if (dispersion.diagonal().minCoeff() < 0.0) {
      throw ValidationError("dispersion is not PSD: eigenvalue " +
                            std::to_string(dispersion.diagonal().minCoeff()));
    }
    norm = dispersion.diagonal().maxCoeff();
  } else {
    norm = check_spectrum(repair_psd(dispersion)).max_eigenvalue;
  }
  if (!(norm > 0.0)) throw ValidationError("dispersion has zero spectral norm");
}

double ClusterConfig::effective_scale() const {
  if (scale > 0.0) return scale;
  if (is_diagonal(dispersion)) return dispersion.diagonal().maxCoeff();
  return check_spectrum(dispersion).max_eigenvalue;
}

BlackBox BlackBox::from_map(const SmoothMap& map) {
  BlackBox box;
  box.input_dimension = map.input_dimension();
  box.output_dimension = map.output_dimension();
  if (const auto* exprs = map.expressions()) {
    auto compiled = std::make_shared<std::vector<CompiledExpression>>();
    for (const auto& e : *exprs) compiled->emplace_back(e);
    box.evaluate = [compiled](const Eigen::VectorXd& p) {
      Eigen::VectorXd out(static_cast<Eigen::Index>(compiled->size()));
      for (std::size_t k = 0; k < compiled->size(); ++k) {
        out(static_cast<Eigen::Index>(k)) = (*compiled)[k](p);
      }
      return out;
    };
  } else {
    box.evaluate = [map](const Eigen::VectorXd& p) { return map.evaluate(p); };
  }
  return box;
}

ClusterEvaluationError::ClusterEvaluationError(std::size_t index, Eigen::VectorXd point,
                                               const std::string& reason)
    : NumericalError("model evaluation failed at cloud point " + std::to_string(index) +
                     " " + format_point(point) + ": " + reason),
      index_(index),
      point_(std::move(point)) {}

ClusterEstimate run_cluster(const BlackBox& model, const ClusterConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.center.size();
  if (model.input_dimension != d) {
    throw DimensionError("model expects " + std::to_string(model.input_dimension) +
                         " inputs, cluster center has " + std::to_string(d));
  }
  const Eigen::Index m = model.output_dimension;
  const std::size_t M = cfg.points;
  const double s = cfg.effective_scale();

  Eigen::VectorXd center_value;
  try {
    center_value = model.evaluate(cfg.center);
  } catch (const std::exception& e) {
    throw NumericalError("model evaluation failed at the cluster center " +
                         format_point(cfg.center) + ": " + e.what());
  }
  if (center_value.size() != m) throw DimensionError("model returned the wrong output size");
  if (!center_value.allFinite()) {
    throw NumericalError("model is not finite at the cluster center " +
                         format_point(cfg.center));
  }

  // Diagonal dispersions (large discretized structures) scale coordinatewise.
  const bool diagonal = is_diagonal(cfg.dispersion);
  const double ball = cfg.distribution == CloudDistribution::kUniformEllipsoid
                          ? std::sqrt(static_cast<double>(d + 2))
                          : 1.0;
  const Eigen::VectorXd root_diag = ball * cfg.dispersion.diagonal().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root =
      diagonal ? Eigen::MatrixXd() : (ball * psd_sqrt(repair_psd(cfg.dispersion))).eval();
  Eigen::VectorXd mean = cfg.center;
  if (cfg.drift.size() == d) mean += s * cfg.drift;
  const bool full = d <= kFullDiagnostics;

  Eigen::MatrixXd values(m, static_cast<Eigen::Index>(M));
  const auto partial = mc::run_indexed(mc::block_count(M), [&](std::size_t b) {
    mc::Rng rng = mc::substream(cfg.seed, kCloudStream, b);
    const std::size_t end = std::min(M, (b + 1) * mc::kBlockSize);
    CloudSums sums(d, full);
    Eigen::VectorXd xi(d);
    Eigen::VectorXd point(d);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
      if (cfg.distribution == CloudDistribution::kGaussian) {
        mc::fill_normal(rng, std::span<double>(xi.data(), static_cast<std::size_t>(d)));
      } else {
        xi = unit_ball_point(rng, d);
      }
      if (diagonal) {
        point = mean + root_diag.cwiseProduct(xi);
      } else {
        point = mean + root * xi;
      }
      sums.add(point - mean);
      Eigen::VectorXd v;
      try {
        v = model.evaluate(point);
      } catch (const std::exception& e) {
        throw ClusterEvaluationError(i, point, e.what());
      }
      if (v.size() != m) throw DimensionError("model returned the wrong output size");
      if (!v.allFinite()) throw ClusterEvaluationError(i, point, "non-finite value");
      values.col(static_cast<Eigen::Index>(i)) = v;
    }
    return sums;
  });

  ClusterEstimate out;
  out.points = M;
  out.scale = s;
  out.center_value = center_value;
  out.small_cluster = M < kSmallCluster;
  out.cloud = mc::pairwise_sum(partial).diagnostics(cfg.dispersion, s);
  if (!(out.cloud.max_eigenvalue > 0.0)) {
    throw NumericalError("singular cloud: all " + std::to_string(M) +
                         " cluster points coincide");
  }

  const ColumnMoments vm = column_moments(values, true);
  const double n = static_cast<double>(M);
  out.gamma_hat = vm.covariance / s;
  // Leave-one-out covariances are affine in d_j d_j^T, so the jackknife
  // variance reduces to the spread of the centered products.
  const double loo = n / ((n - 1.0) * (n - 2.0));
  out.gamma_se = (((n - 1.0) / n) * loo * loo * vm.product_spread).cwiseSqrt() / s;
  out.bias_hat = (vm.mean - center_value) / (0.5 * s);
  out.bias_se = (vm.covariance.diagonal() / n).cwiseSqrt() / (0.5 * s);
  return out;
}

ClusterEstimate run_cluster(const SmoothMap& model, const ClusterConfig& cfg) {
  return run_cluster(BlackBox::from_map(model), cfg);
}

ClusterEstimate run_cluster_erroneous_model(const BlackBox& model,
                                            const ClusterConfig& omega,
                                            const ClusterConfig& lambda) {
  const Eigen::Index dw = omega.center.size();
  const Eigen::Index dl = lambda.center.size();
  if (model.input_dimension != dw + dl) {
    throw DimensionError("model expects " + std::to_string(model.input_dimension) +
                         " inputs, clouds cover " + std::to_string(dw + dl));
  }
  auto active = [](const ClusterConfig& c) {
    return c.center.size() > 0 && c.dispersion.size() > 0 && c.dispersion.cwiseAbs().maxCoeff() > 0.0;
  };
  const bool use_w = active(omega);
  const bool use_l = active(lambda);
  if (!use_w && !use_l) throw ValidationError("both clouds have zero dispersion");
  if (use_w && use_l && omega.seed == lambda.seed) {
    throw ValidationError("the omega and lambda clouds need independent seeds");
  }

  Eigen::VectorXd full(dw + dl);
  full << omega.center, lambda.center;

  auto restricted = [&](Eigen::Index offset, Eigen::Index dim) {
    BlackBox box;
    box.input_dimension = dim;
    box.output_dimension = model.output_dimension;
    box.evaluate = [&model, full, offset, dim](const Eigen::VectorXd& p) {
      Eigen::VectorXd x = full;
      x.segment(offset, dim) = p;
      return model.evaluate(x);
    };
    return box;
  };

  std::optional<ClusterEstimate> est;
  if (use_w) est = run_cluster(restricted(0, dw), omega);
  if (use_l) {
    ClusterEstimate e = run_cluster(restricted(dw, dl), lambda);
    est = est ? combine(*est, e) : e;
  }
  // Each term is already per unit of its own scale.
  if (use_w && use_l) est->scale = 1.0;
  return *est;
}

PowerLaw fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("power-law fit needs at least two (x, y) pairs");
  }
  const auto k = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(k, 2);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (!(x[u] > 0.0)) throw ValidationError("power-law abscissae must be positive");
    design(i, 0) = 1.0;
    design(i, 1) = std::log(x[u]);
    rhs(i) = std::log(std::max(y[u], std::numeric_limits<double>::min()));
  }
  const Eigen::Vector2d c = design.colPivHouseholderQr().solve(rhs);
  return {c(1), c(0)};
}

ConvergenceStudy convergence_study(const BlackBox& model,
                                   const ErroneousQuantity& reference_input,
                                   const ErroneousQuantity& reference,
                                   const ConvergenceOptions& options) {
  if (options.point_counts.empty() || options.scales.empty() || options.replicates == 0) {
    throw ValidationError("convergence study needs point counts, scales and replicates");
  }
  if (reference.dimension() != model.output_dimension) {
    throw DimensionError("reference does not match the model outputs");
  }
  const std::size_t nm = options.point_counts.size();
  const std::size_t ns = options.scales.size();
  const double m = static_cast<double>(model.output_dimension);

  ConvergenceStudy out;
  out.table.resize(nm * ns);
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t j = 0; j < ns; ++j) {
      const double s = options.scales[j];
      double g2 = 0.0;
      double b2 = 0.0;
      for (std::size_t r = 0; r < options.replicates; ++r, ++run) {
        ClusterConfig cfg = ClusterConfig::scaled(
            reference_input.value(), reference_input.gamma(), s, options.point_counts[i],
            mc::substream(options.seed, kStudyStream, run)(), options.distribution);
        cfg.drift = reference_input.bias();
        const ClusterEstimate e = run_cluster(model, cfg);
        g2 += (e.gamma_hat - reference.gamma()).squaredNorm();
        b2 += (e.bias() - reference.bias()).squaredNorm();
      }
      const double reps = static_cast<double>(options.replicates);
      out.table[i * ns + j] = {options.point_counts[i], s, std::sqrt(g2 / (reps * m * m)),
                               std::sqrt(b2 / (reps * m))};
    }
  }

  if (nm >= 2) {
    for (std::size_t j = 0; j < ns; ++j) {
      std::vector<double> x, g, b;
      for (std::size_t i = 0; i < nm; ++i) {
        const auto& p = out.table[i * ns + j];
        x.push_back(static_cast<double>(p.points));
        g.push_back(p.gamma_rms);
        b.push_back(p.bias_rms);
      }
      out.gamma_vs_points.push_back(fit_power_law(x, g));
      out.bias_vs_points.push_back(fit_power_law(x, b));
    }
  }
  for (std::size_t i = 0; i < nm; ++i) {
    std::vector<double> g, b;
    std::size_t best = 0;
    for (std::size_t j = 0; j < ns; ++j) {
      const auto& p = out.table[i * ns + j];
      g.push_back(p.gamma_rms);
      b.push_back(p.bias_rms);
      const auto& q = out.table[i * ns + best];
      if (p.gamma_rms + p.bias_rms < q.gamma_rms + q.bias_rms) best = j;
    }
    if (ns >= 2) {
      out.gamma_vs_scale.push_back(fit_power_law(options.scales, g));
      out.bias_vs_scale.push_back(fit_power_law(options.scales, b));
    }
    out.best_scale.push_back(options.scales[best]);
  }
  return out;
}

}  // namespace errcalc::clusters
