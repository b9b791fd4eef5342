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

#include "errcalc/error_core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "errcalc/errors.hpp"

namespace errcalc {

namespace {

void require_scalar(const SmoothMap& f, const char* what) {
  if (f.output_dimension() != 1) {
    throw DimensionError(std::string(what) + " needs a scalar map, got " +
                         std::to_string(f.output_dimension()) + " outputs");
  }
}

void require_inputs(const SmoothMap& f, Eigen::Index n) {
  if (f.input_dimension() != n) {
    throw DimensionError("map expects " + std::to_string(f.input_dimension()) +
                         " inputs, quantity has dimension " + std::to_string(n));
  }
}

}  // namespace

bool SpectrumCheck::within_tolerance() const {
  return symmetric && min_eigenvalue >= -kPsdTolerance * std::max(0.0, max_eigenvalue);
}

SpectrumCheck check_spectrum(const Eigen::MatrixXd& m) {
  SpectrumCheck out;
  if (m.size() == 0) return out;
  out.symmetric = m == m.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.max_eigenvalue = es.eigenvalues().maxCoeff();
  return out;
}

Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("covariance must be square");
  if (m.size() == 0) return m;
  if (!m.allFinite()) throw ValidationError("covariance has non-finite entries");
  if (m != m.transpose()) throw ValidationError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo >= 0.0) return m;
  if (lo < -kPsdTolerance * std::max(0.0, hi)) {
    std::ostringstream os;
    os.precision(17);
    os << "covariance is not positive semi-definite: eigenvalue " << lo
       << " (largest " << hi << ")";
    throw ValidationError(os.str());
  }
  const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd r =
      es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return (r + r.transpose()) * 0.5;
}

ErroneousQuantity::ErroneousQuantity(Eigen::VectorXd value, Eigen::VectorXd bias,
                                     Eigen::MatrixXd gamma)
    : value_(std::move(value)), bias_(std::move(bias)) {
  const Eigen::Index n = value_.size();
  if (bias_.size() != n || gamma.rows() != n || gamma.cols() != n) {
    throw DimensionError("value, bias and gamma dimensions disagree");
  }
  if (!value_.allFinite() || !bias_.allFinite()) {
    throw ValidationError("value and bias must be finite");
  }
  if (gamma != gamma.transpose()) {
    const double asym = (gamma - gamma.transpose()).cwiseAbs().maxCoeff();
    if (asym > kPsdTolerance * gamma.cwiseAbs().maxCoeff()) {
      throw ValidationError("gamma is not symmetric");
    }
    const Eigen::MatrixXd s = (gamma + gamma.transpose()) * 0.5;
    gamma = s;
  }
  gamma_ = repair_psd(gamma);
}

ErroneousQuantity ErroneousQuantity::independent(Eigen::VectorXd value,
                                                 const Eigen::VectorXd& variances) {
  const Eigen::Index n = value.size();
  return ErroneousQuantity(std::move(value), Eigen::VectorXd::Zero(n),
                           variances.asDiagonal().toDenseMatrix());
}

Eigen::MatrixXd congruence(const Eigen::MatrixXd& jacobian,
                           const Eigen::MatrixXd& gamma) {
  if (jacobian.cols() != gamma.rows() || gamma.rows() != gamma.cols()) {
    throw DimensionError("congruence: jacobian and gamma shapes disagree");
  }
  const Eigen::MatrixXd left = jacobian * gamma;
  const Eigen::Index m = jacobian.rows();
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      const double v = left.row(i).dot(jacobian.row(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Propagation propagate_detailed(const ErroneousQuantity& x, const SmoothMap& f) {
  require_inputs(f, x.dimension());
  const Eigen::Index m = f.output_dimension();
  Propagation out;
  out.value.resize(m);
  out.bias.resize(m);
  out.jacobian.resize(m, x.dimension());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Jet j = f.jet(k, x.value(), &out.warnings);
    out.value(k) = j.value;
    out.jacobian.row(k) = j.gradient.transpose();
    out.bias(k) = j.gradient.dot(x.bias()) +
                  0.5 * (j.hessian.array() * x.gamma().array()).sum();
  }
  out.gamma = congruence(out.jacobian, x.gamma());
  return out;
}

ErroneousQuantity propagate(const ErroneousQuantity& x, const SmoothMap& f) {
  Propagation p = propagate_detailed(x, f);
  return ErroneousQuantity(std::move(p.value), std::move(p.bias), std::move(p.gamma));
}

double gamma_bilinear(const ErroneousQuantity& x, const SmoothMap& f,
                      const SmoothMap& g) {
  require_scalar(f, "gamma_bilinear");
  require_scalar(g, "gamma_bilinear");
  require_inputs(f, x.dimension());
  require_inputs(g, x.dimension());
  const Eigen::VectorXd gf = f.jet(0, x.value()).gradient;
  const Eigen::VectorXd gg = g.jet(0, x.value()).gradient;
  return gf.dot(x.gamma() * gg);
}

GeneratorL::GeneratorL(Eigen::VectorXd variances)
    : GeneratorL(variances, Eigen::VectorXd::Zero(variances.size())) {}

GeneratorL::GeneratorL(Eigen::VectorXd v, Eigen::VectorXd b)
    : variances(std::move(v)), drift(std::move(b)) {
  if (variances.size() != drift.size()) {
    throw DimensionError("generator variances and drift differ in length");
  }
  if ((variances.array() < 0.0).any() || !variances.allFinite()) {
    throw ValidationError("generator variances must be finite and >= 0");
  }
}

double GeneratorL::apply(const Jet& f) const {
  if (f.dimension() != variances.size()) {
    throw DimensionError("generator and jet dimensions disagree");
  }
  return drift.dot(f.gradient) + 0.5 * variances.dot(f.hessian.diagonal());
}

double carre_du_champ(const GeneratorL& generator, const SmoothMap& f,
                      const Eigen::VectorXd& point) {
  require_scalar(f, "carre_du_champ");
  const Jet j = f.jet(0, point);
  const Jet squared = j * j;
  return generator.apply(squared) - 2.0 * j.value * generator.apply(j);
}

double polarize(const ErroneousQuantity& x, const SmoothMap& f,
                const SmoothMap& g) {
  require_scalar(f, "polarize");
  require_scalar(g, "polarize");
  require_inputs(f, x.dimension());
  require_inputs(g, x.dimension());
  const Jet jf = f.jet(0, x.value());
  const Jet jg = g.jet(0, x.value());
  const Eigen::VectorXd plus = (jf + jg).gradient;
  const Eigen::VectorXd minus = (jf - jg).gradient;
  return 0.25 * (plus.dot(x.gamma() * plus) - minus.dot(x.gamma() * minus));
}

double ugly_propagate(const Eigen::VectorXd& sigmas, const SmoothMap& f,
                      const Eigen::VectorXd& point) {
  require_scalar(f, "ugly_propagate");
  require_inputs(f, sigmas.size());
  if ((sigmas.array() < 0.0).any()) throw ValidationError("sigmas must be >= 0");
  return f.jet(0, point).gradient.cwiseAbs().dot(sigmas);
}

double PipelineComparison::relative_discrepancy() const {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < direct.size(); ++k) {
    const double diff = std::abs(stepwise(k) - direct(k));
    worst = std::max(worst, direct(k) != 0.0 ? diff / std::abs(direct(k)) : diff);
  }
  return worst;
}

PipelineComparison ugly_pipeline(const Eigen::VectorXd& sigmas,
                                 const Eigen::VectorXd& point,
                                 const std::vector<SmoothMap>& stages) {
  if ((sigmas.array() < 0.0).any()) throw ValidationError("sigmas must be >= 0");
  Eigen::VectorXd p = point;
  Eigen::VectorXd s = sigmas;
  Eigen::MatrixXd total = Eigen::MatrixXd::Identity(point.size(), point.size());
  for (const auto& stage : stages) {
    require_inputs(stage, p.size());
    const Eigen::MatrixXd J = stage.jacobian(p);
    s = J.cwiseAbs() * s;
    total = J * total;
    p = stage.evaluate(p);
  }
  return {s, total.cwiseAbs() * sigmas};
}

PipelineComparison gauss_pipeline(const ErroneousQuantity& x,
                                  const std::vector<SmoothMap>& stages) {
  ErroneousQuantity cur = x;
  Eigen::MatrixXd total = Eigen::MatrixXd::Identity(x.dimension(), x.dimension());
  for (const auto& stage : stages) {
    total = stage.jacobian(cur.value()) * total;
    cur = propagate(cur, stage);
  }
  return {cur.gamma().diagonal(), congruence(total, x.gamma()).diagonal()};
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

SharpRepresentation sharp(const ErroneousQuantity& x, const SmoothMap& f) {
  require_scalar(f, "sharp");
  require_inputs(f, x.dimension());
  const Eigen::VectorXd grad = f.jet(0, x.value()).gradient;
  return {psd_sqrt(x.gamma()) * grad};
}

mc::Estimate SharpRepresentation::sample_second_moment(std::size_t samples,
                                                       std::uint64_t seed) const {
  const std::size_t blocks = mc::block_count(samples);
  const auto partial = mc::run_indexed(blocks, [&](std::size_t b) {
    mc::Rng rng = mc::substream(seed, 0x5a4a5250ULL, b);
    const std::size_t begin = b * mc::kBlockSize;
    const std::size_t end = std::min(samples, begin + mc::kBlockSize);
    Eigen::VectorXd xi(coefficients.size());
    mc::Moments m;
    for (std::size_t i = begin; i < end; ++i) {
      mc::fill_normal(rng, std::span<double>(xi.data(), static_cast<std::size_t>(xi.size())));
      const double v = coefficients.dot(xi);
      m.add(v * v);
    }
    return m;
  });
  return mc::pairwise_sum(partial).estimate();
}

double gaussian_mean_absolute(double sigma) {
  if (sigma < 0.0) throw ValidationError("sigma must be >= 0");
  return std::sqrt(2.0 / std::numbers::pi) * sigma;
}

double laplace_first_moment(const Eigen::VectorXd& mean_absolute_errors,
                            const SmoothMap& f, const Eigen::VectorXd& point) {
  require_scalar(f, "laplace_first_moment");
  require_inputs(f, mean_absolute_errors.size());
  if ((mean_absolute_errors.array() < 0.0).any()) {
    throw ValidationError("mean absolute errors must be >= 0");
  }
  const Eigen::VectorXd grad = f.jet(0, point).gradient;
  return std::sqrt(grad.cwiseProduct(mean_absolute_errors).squaredNorm());
}

FisherTransport fisher_transport(const Eigen::MatrixXd& precision,
                                 const SmoothMap& g, const Eigen::VectorXd& point) {
  require_inputs(g, precision.rows());
  if (precision.rows() != precision.cols()) {
    throw DimensionError("precision must be square");
  }
  repair_psd(precision);  // validation only; the input is transported as given
  FisherTransport out;
  const Eigen::MatrixXd J = g.jacobian(point);
  out.precision = congruence(J, precision);
  out.jacobian_rank = Eigen::FullPivLU<Eigen::MatrixXd>(J).rank();
  out.degenerate = out.jacobian_rank < precision.rows();
  return out;
}

Dichotomy classify_dichotomy(const ErroneousQuantity& x, ScaleOrders orders) {
  if ((x.gamma().array() == 0.0).all()) return Dichotomy::kWeaklyStochastic;
  return orders.gamma_order > orders.bias_order ? Dichotomy::kWeaklyStochastic
                                                : Dichotomy::kStronglyStochastic;
}

std::string to_string(Dichotomy d) {
  return d == Dichotomy::kWeaklyStochastic ? "weakly_stochastic"
                                           : "strongly_stochastic";
}

}  // namespace errcalc
