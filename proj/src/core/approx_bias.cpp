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

#include "errcalc/approx_bias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "errcalc/errors.hpp"

namespace errcalc::bias {

TestFunction TestFunction::constant(double c) {
  return {"const", [c](double) { return c; }, [](double) { return 0.0; },
          [](double) { return 0.0; }};
}

TestFunction TestFunction::monomial(int k) {
  const std::string name = k == 0 ? "1" : k == 1 ? "y" : "y^" + std::to_string(k);
  return {name, [k](double y) { return std::pow(y, k); },
          [k](double y) { return k == 0 ? 0.0 : k * std::pow(y, k - 1); },
          [k](double y) { return k < 2 ? 0.0 : k * (k - 1) * std::pow(y, k - 2); }};
}

TestFunction TestFunction::bump() {
  // b(y) = exp(1 - 1/q), q = 1 - y^2/4. With r = 1/q:
  // b' = -b r^2 y/2, b'' = b r^2 [r^2 y^2/4 - r y^2/2 - 1/2].
  auto r_of = [](double y) { return 1.0 / (1.0 - 0.25 * y * y); };
  auto f = [r_of](double y) { return std::abs(y) < 2.0 ? std::exp(1.0 - r_of(y)) : 0.0; };
  auto d1 = [r_of, f](double y) {
    if (std::abs(y) >= 2.0) return 0.0;
    const double r = r_of(y);
    return -f(y) * r * r * 0.5 * y;
  };
  auto d2 = [r_of, f](double y) {
    if (std::abs(y) >= 2.0) return 0.0;
    const double r = r_of(y);
    const double y2 = y * y;
    return f(y) * r * r * (0.25 * r * r * y2 - 0.5 * r * y2 - 0.5);
  };
  return {"bump", f, d1, d2};
}

TestFunction TestFunction::product(const TestFunction& a, const TestFunction& b) {
  return {a.name + "*" + b.name, [a, b](double y) { return a.f(y) * b.f(y); },
          [a, b](double y) { return a.d1(y) * b.f(y) + a.f(y) * b.d1(y); },
          [a, b](double y) {
            return a.d2(y) * b.f(y) + 2.0 * a.d1(y) * b.d1(y) + a.f(y) * b.d2(y);
          }};
}

std::vector<TestFunction> default_bank() {
  return {TestFunction::monomial(0), TestFunction::monomial(1), TestFunction::monomial(2),
          TestFunction::monomial(3), TestFunction::bump()};
}

double Marginal::sample(mc::Rng& rng) const {
  if (kind == Kind::kNormal) return a + b * std::normal_distribution<double>()(rng);
  return std::uniform_real_distribution<double>(a, b)(rng);
}

double Coupling::sample(mc::Rng& rng, double y) const {
  switch (kind) {
    case Kind::kConstant: return a;
    case Kind::kAffineInY: return a * y + b;
    case Kind::kNormal: return a + b * std::normal_distribution<double>()(rng);
    case Kind::kUniform: return std::uniform_real_distribution<double>(a, b)(rng);
  }
  return 0.0;
}

double Coupling::conditional_mean(double y) const {
  switch (kind) {
    case Kind::kConstant: return a;
    case Kind::kAffineInY: return a * y + b;
    case Kind::kNormal: return a;
    case Kind::kUniform: return 0.5 * (a + b);
  }
  return 0.0;
}

double Coupling::conditional_second_moment(double y) const {
  switch (kind) {
    case Kind::kConstant: return a * a;
    case Kind::kAffineInY: return (a * y + b) * (a * y + b);
    case Kind::kNormal: return a * a + b * b;
    case Kind::kUniform: return (a * a + a * b + b * b) / 3.0;
  }
  return 0.0;
}

PerturbationScheme PerturbationScheme::diffusion(Marginal y, Coupling z, Coupling t) {
  PerturbationScheme s;
  s.kind = Kind::kDiffusion;
  s.y = y;
  s.z = z;
  s.t = t;
  return s;
}

PerturbationScheme PerturbationScheme::jumps(Marginal y, Coupling jump) {
  PerturbationScheme s;
  s.kind = Kind::kJump;
  s.y = y;
  s.jump = jump;
  return s;
}

void PerturbationScheme::validate() const {
  mc::LinearExtrapolation check(eps);  // throws on a bad grid
  if (kind == Kind::kJump && eps.front() > 1.0) {
    throw ValidationError("jump scheme needs eps <= 1");
  }
  if (y.kind == Marginal::Kind::kNormal && !(y.b > 0.0)) {
    throw ValidationError("law of Y: standard deviation must be positive");
  }
  if (y.kind == Marginal::Kind::kUniform && !(y.b > y.a)) {
    throw ValidationError("law of Y: empty uniform interval");
  }
}

double PerturbationScheme::sample_noise(mc::Rng& rng) const {
  switch (g) {
    case NoiseLaw::kNormal: return std::normal_distribution<double>()(rng);
    case NoiseLaw::kRademacher:
      return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    case NoiseLaw::kUniform: {
      const double r = std::sqrt(3.0);
      return std::uniform_real_distribution<double>(-r, r)(rng);
    }
  }
  return 0.0;
}

NoiseCheck check_noise(const PerturbationScheme& scheme, std::size_t samples,
                       std::uint64_t seed) {
  const auto blocks = mc::run_indexed(mc::block_count(samples), [&](std::size_t b) {
    auto rng = mc::substream(seed, 0x6e6f6973, b);
    mc::Moments m;
    const std::size_t end = std::min(samples, (b + 1) * mc::kBlockSize);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) m.add(scheme.sample_noise(rng));
    return m;
  });
  const mc::Moments m = mc::pairwise_sum(blocks);
  NoiseCheck out;
  out.mean = m.sum / m.n;
  out.variance = (m.sum_sq - m.n * out.mean * out.mean) / (m.n - 1.0);
  out.passed = std::abs(out.mean) <= 3.0 / std::sqrt(m.n) &&
               std::abs(out.variance - 1.0) <= 0.05;
  return out;
}

namespace {

constexpr std::uint64_t kDrawStream = 0xb1a5;
constexpr double kWindow = 6.0;  // kernel support, in bandwidths

struct Draws {
  std::vector<double> y, z, t, g, u, j;
};

Draws draw(const PerturbationScheme& s, std::size_t n, std::uint64_t seed) {
  Draws d;
  for (auto* v : {&d.y, &d.z, &d.t, &d.g, &d.u, &d.j}) v->resize(n);
  mc::run_indexed(mc::block_count(n), [&](std::size_t b) {
    auto rng = mc::substream(seed, kDrawStream, b);
    std::uniform_real_distribution<double> unif;
    const std::size_t end = std::min(n, (b + 1) * mc::kBlockSize);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
      const double y = s.y.sample(rng);
      d.y[i] = y;
      if (s.kind == PerturbationScheme::Kind::kDiffusion) {
        d.z[i] = s.z.sample(rng, y);
        d.t[i] = s.t.sample(rng, y);
        d.g[i] = s.sample_noise(rng);
      } else {
        d.u[i] = unif(rng);
        d.j[i] = s.jump.sample(rng, y);
      }
    }
    return 0;
  });
  return d;
}

// Antithetic +-G pairs for diffusion schemes (all supported G laws are
// symmetric); a single draw for jumps.
std::size_t sign_count(const PerturbationScheme& s) {
  return s.kind == PerturbationScheme::Kind::kDiffusion ? 2 : 1;
}

double perturbed(const PerturbationScheme& s, const Draws& d, std::size_t i, double eps,
                 std::size_t sign) {
  if (s.kind == PerturbationScheme::Kind::kJump) {
    return d.u[i] < eps ? d.y[i] + d.j[i] : d.y[i];
  }
  const double noise = std::sqrt(eps) * d.t[i] * d.g[i];
  return d.y[i] + eps * d.z[i] + (sign == 0 ? noise : -noise);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite sample in ") + what);
  }
}

double bandwidth_for(std::span<const double> y) {
  const mc::Estimate m = mc::mean_estimate(y);
  const double n = static_cast<double>(y.size());
  const double sd = m.standard_error * std::sqrt(n);
  return 1.06 * sd * std::pow(n, -0.2);
}

double quantile(std::vector<double> v, double q) {
  const std::size_t k = static_cast<std::size_t>(std::floor(q * (v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

// Points of one regression design sorted by abscissa, ties broken by index.
struct SortedDesign {
  std::vector<double> x;             // sorted abscissae
  std::vector<std::uint32_t> point;  // original point index
};

SortedDesign sort_design(const std::vector<double>& x) {
  std::vector<std::uint32_t> order(x.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return x[a] < x[b] || (x[a] == x[b] && a < b);
  });
  SortedDesign s;
  s.point = order;
  s.x.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s.x[i] = x[order[i]];
  return s;
}

// Local polynomial (degree kDegree) Gaussian-kernel regression at y0 over the
// window of a sorted design. The cubic fit removes the O(h^2) smoothing bias
// of local-constant and local-linear fits. The estimate is sum_p l_p u_p.
constexpr int kDegree = 3;
using Basis = Eigen::Matrix<double, kDegree + 1, 1>;

Basis basis(double d) {
  Basis x;
  x(0) = 1.0;
  for (int j = 1; j <= kDegree; ++j) x(j) = x(j - 1) * d;
  return x;
}

struct Window {
  std::size_t begin = 0, end = 0;
  std::vector<double> d, kernel, weights;
  Eigen::Matrix<double, kDegree + 1, kDegree + 1> moments;
  Eigen::LDLT<Eigen::Matrix<double, kDegree + 1, kDegree + 1>> solver;
  double effective = 0;

  void fit(const SortedDesign& s, double y0, double h) {
    begin = static_cast<std::size_t>(
        std::lower_bound(s.x.begin(), s.x.end(), y0 - kWindow * h) - s.x.begin());
    end = static_cast<std::size_t>(
        std::upper_bound(s.x.begin(), s.x.end(), y0 + kWindow * h) - s.x.begin());
    d.resize(end - begin);
    kernel.resize(end - begin);
    weights.resize(end - begin);
    moments.setZero();
    double s0 = 0.0, k2 = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      const double di = (s.x[p] - y0) / h;
      const double k = std::exp(-0.5 * di * di);
      d[p - begin] = di;
      kernel[p - begin] = k;
      const Basis x = basis(di);
      moments.noalias() += k * x * x.transpose();
      s0 += k;
      k2 += k * k;
    }
    effective = k2 > 0.0 ? s0 * s0 / k2 : 0.0;
    if (effective < 50.0) {
      throw NumericalError("kernel bandwidth degenerate at y = " + std::to_string(y0) +
                           ": fewer than 50 effective neighbors");
    }
    solver.compute(moments);
    // e1^T M^-1 gives the weight profile of the value at y0.
    const Basis row = solver.solve(Basis::Unit(0));
    for (std::size_t w = 0; w < d.size(); ++w) weights[w] = kernel[w] * row.dot(basis(d[w]));
  }

  double weight(std::size_t w) const { return weights[w]; }

  // Local polynomial coefficients (in powers of d) for responses u[point].
  Basis coefficients(const SortedDesign& s, const std::vector<double>& u) const {
    Basis rhs = Basis::Zero();
    for (std::size_t p = begin; p < end; ++p) {
      rhs += (kernel[p - begin] * u[s.point[p]]) * basis(d[p - begin]);
    }
    return solver.solve(rhs);
  }

  double value(const SortedDesign& s, const std::vector<double>& u) const {
    double v = 0.0;
    for (std::size_t p = begin; p < end; ++p) v += weights[p - begin] * u[s.point[p]];
    return v;
  }
};

double poly(const Basis& c, double d) { return c.dot(basis(d)); }

// Per-sample data of a scheme for grid estimation: the theoretical operator
// regresses per-sample extrapolated increments on Y; the practical operator
// regresses -increment/eps on Y_eps separately at each eps and then
// extrapolates the fitted values.
class GridEngine {
 public:
  GridEngine(const PerturbationScheme& s, const std::vector<TestFunction>& bank,
             const Draws& d, std::size_t n)
      : n_(n), q_(bank.size()), signs_(sign_count(s)), fit_(s.eps) {
    const std::size_t kcount = s.eps.size();
    y_ = sort_design(d.y);
    h_ = bandwidth_for(d.y);
    ubar_.assign(q_, std::vector<double>(n, 0.0));
    under_x_.resize(kcount);
    under_u_.assign(kcount, std::vector<std::vector<double>>(q_));
    for (std::size_t k = 0; k < kcount; ++k) {
      const double eps = s.eps[k];
      std::vector<double> x(signs_ * n);
      for (std::size_t sg = 0; sg < signs_; ++sg) {
        for (std::size_t i = 0; i < n; ++i) x[sg * n + i] = perturbed(s, d, i, eps, sg);
      }
      for (std::size_t f = 0; f < q_; ++f) {
        auto& u = under_u_[k][f];
        u.resize(signs_ * n);
        for (std::size_t sg = 0; sg < signs_; ++sg) {
          for (std::size_t i = 0; i < n; ++i) {
            const double inc = (bank[f].f(x[sg * n + i]) - bank[f].f(d.y[i])) / eps;
            check_finite(inc, "increment");
            u[sg * n + i] = -inc;
            ubar_[f][i] += fit_.intercept_weights[k] * inc / static_cast<double>(signs_);
          }
        }
      }
      under_x_[k] = sort_design(x);
    }
    infl_bar_.assign(q_, std::vector<double>(n, 0.0));
    infl_under_.assign(q_, std::vector<double>(n, 0.0));
  }

  double bandwidth() const { return h_; }

  // Fills values and per-sample influences of both operators for every test
  // function at y0.
  void evaluate(double y0) {
    for (std::size_t f = 0; f < q_; ++f) {
      std::fill(infl_bar_[f].begin(), infl_bar_[f].end(), 0.0);
      std::fill(infl_under_[f].begin(), infl_under_[f].end(), 0.0);
    }
    bar_.assign(q_, 0.0);
    under_.assign(q_, 0.0);

    Window w;
    w.fit(y_, y0, h_);
    for (std::size_t f = 0; f < q_; ++f) {
      const Basis c = w.coefficients(y_, ubar_[f]);
      bar_[f] = w.value(y_, ubar_[f]);
      for (std::size_t p = w.begin; p < w.end; ++p) {
        const std::size_t i = y_.point[p];
        const std::size_t wi = p - w.begin;
        infl_bar_[f][i] = w.weight(wi) * (ubar_[f][i] - poly(c, w.d[wi]));
      }
    }
    for (std::size_t k = 0; k < under_x_.size(); ++k) {
      const SortedDesign& s = under_x_[k];
      w.fit(s, y0, h_);
      const double wk = fit_.intercept_weights[k];
      for (std::size_t f = 0; f < q_; ++f) {
        const auto& u = under_u_[k][f];
        const Basis c = w.coefficients(s, u);
        under_[f] += wk * w.value(s, u);
        for (std::size_t p = w.begin; p < w.end; ++p) {
          const std::size_t pt = s.point[p];
          const std::size_t wi = p - w.begin;
          infl_under_[f][pt % n_] += wk * w.weight(wi) * (u[pt] - poly(c, w.d[wi]));
        }
      }
    }
  }

  double theoretical(std::size_t f) const { return bar_[f]; }
  double practical(std::size_t f) const { return under_[f]; }

  // Standard error of sum_f (cbar_f Abar[f] + cunder_f Aund[f]).
  double standard_error(const std::vector<double>& cbar,
                        const std::vector<double>& cunder) const {
    double v = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double c = 0.0;
      for (std::size_t f = 0; f < q_; ++f) {
        c += cbar[f] * infl_bar_[f][i] + cunder[f] * infl_under_[f][i];
      }
      v += c * c;
    }
    return std::sqrt(v);
  }

 private:
  std::size_t n_, q_, signs_;
  mc::LinearExtrapolation fit_;
  double h_ = 0.0;
  SortedDesign y_;
  std::vector<std::vector<double>> ubar_;
  std::vector<SortedDesign> under_x_;
  std::vector<std::vector<std::vector<double>>> under_u_;
  std::vector<double> bar_, under_;
  std::vector<std::vector<double>> infl_bar_, infl_under_;
};

std::vector<double> make_grid(const Draws& d, const EstimateOptions& o) {
  const double lo = quantile(d.y, o.lower_quantile);
  const double hi = quantile(d.y, o.upper_quantile);
  std::vector<double> grid(o.grid_points);
  for (std::size_t i = 0; i < o.grid_points; ++i) {
    grid[i] = o.grid_points == 1
                  ? 0.5 * (lo + hi)
                  : lo + (hi - lo) * static_cast<double>(i) / (o.grid_points - 1);
  }
  return grid;
}

// Moments of per-sample pairing values: extrapolated theoretical, practical,
// symmetric and singular pairings, the symmetry difference, the raw value at
// each eps, and the fit residual at each eps.
struct PairStats {
  std::vector<mc::Moments> m;
  PairStats operator+(const PairStats& o) const {
    PairStats r{m};
    for (std::size_t i = 0; i < m.size(); ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }
};

void check_sample_count(std::size_t n) {
  if (n < 10'000) throw ValidationError("at least 1e4 samples are required");
  if (n > std::numeric_limits<std::uint32_t>::max() / 2) {
    throw ValidationError("too many samples");
  }
}

}  // namespace

BiasOperatorEstimates estimate_bias_operators(const PerturbationScheme& scheme,
                                              const std::vector<TestFunction>& bank,
                                              std::size_t samples, std::uint64_t seed,
                                              const EstimateOptions& options) {
  scheme.validate();
  check_sample_count(samples);
  if (bank.empty()) throw ValidationError("empty test function bank");
  const Draws d = draw(scheme, samples, seed);
  const std::size_t q = bank.size();
  const std::size_t kc = scheme.eps.size();
  const std::size_t signs = sign_count(scheme);
  const mc::LinearExtrapolation fit(scheme.eps);

  BiasOperatorEstimates out;
  out.samples = samples;
  out.eps = scheme.eps;

  // Pairings, accumulated per block.
  // Layout per (a, b): [bar, under, sym, sing, symdiff, bar_k..., under_k...,
  // bar_res_k..., under_res_k...].
  const std::size_t per_pair = 5 + 4 * kc;
  const auto blocks = mc::run_indexed(mc::block_count(samples), [&](std::size_t blk) {
    PairStats st{std::vector<mc::Moments>(q * q * per_pair)};
    std::vector<double> fy(q), bar(q * q * kc), under(q * q * kc);
    std::vector<double> fe(q * signs);
    std::vector<double> xe(signs);
    const std::size_t end = std::min(samples, (blk + 1) * mc::kBlockSize);
    for (std::size_t i = blk * mc::kBlockSize; i < end; ++i) {
      for (std::size_t f = 0; f < q; ++f) fy[f] = bank[f].f(d.y[i]);
      for (std::size_t k = 0; k < kc; ++k) {
        const double eps = scheme.eps[k];
        for (std::size_t sg = 0; sg < signs; ++sg) {
          xe[sg] = perturbed(scheme, d, i, eps, sg);
          for (std::size_t f = 0; f < q; ++f) fe[f * signs + sg] = bank[f].f(xe[sg]);
        }
        for (std::size_t a = 0; a < q; ++a) {
          for (std::size_t b = 0; b < q; ++b) {
            double sb = 0.0, su = 0.0;
            for (std::size_t sg = 0; sg < signs; ++sg) {
              const double inc = fe[a * signs + sg] - fy[a];
              sb += inc * fy[b];
              su -= inc * fe[b * signs + sg];
            }
            bar[(a * q + b) * kc + k] = sb / (eps * signs);
            under[(a * q + b) * kc + k] = su / (eps * signs);
          }
        }
      }
      for (std::size_t a = 0; a < q; ++a) {
        for (std::size_t b = 0; b < q; ++b) {
          const double* pb = &bar[(a * q + b) * kc];
          const double* pu = &under[(a * q + b) * kc];
          const double* tb = &bar[(b * q + a) * kc];
          const double* tu = &under[(b * q + a) * kc];
          double vb = 0.0, vu = 0.0, wb = 0.0, wu = 0.0;
          for (std::size_t k = 0; k < kc; ++k) {
            vb += fit.intercept_weights[k] * pb[k];
            vu += fit.intercept_weights[k] * pu[k];
            wb += fit.intercept_weights[k] * tb[k];
            wu += fit.intercept_weights[k] * tu[k];
          }
          check_finite(vb + vu, "pairing");
          mc::Moments* m = &st.m[(a * q + b) * per_pair];
          m[0].add(vb);
          m[1].add(vu);
          m[2].add((vb + vu) / 2.0);
          m[3].add((vb - vu) / 2.0);
          m[4].add((vb + vu) / 2.0 - (wb + wu) / 2.0);
          for (std::size_t k = 0; k < kc; ++k) {
            m[5 + k].add(pb[k]);
            m[5 + kc + k].add(pu[k]);
            double rb = 0.0, ru = 0.0;
            for (std::size_t c = 0; c < kc; ++c) {
              rb += fit.residual_weights[k][c] * pb[c];
              ru += fit.residual_weights[k][c] * pu[c];
            }
            m[5 + 2 * kc + k].add(rb);
            m[5 + 3 * kc + k].add(ru);
          }
        }
      }
    }
    return st;
  });
  const PairStats total = mc::pairwise_sum(blocks);

  out.pairings.assign(q, std::vector<PairingEstimate>(q));
  out.symmetry_residual.assign(q, std::vector<mc::Estimate>(q));
  for (std::size_t a = 0; a < q; ++a) {
    for (std::size_t b = 0; b < q; ++b) {
      const mc::Moments* m = &total.m[(a * q + b) * per_pair];
      PairingEstimate& p = out.pairings[a][b];
      p.theoretical = m[0].estimate();
      p.practical = m[1].estimate();
      p.symmetric = m[2].estimate();
      p.singular = m[3].estimate();
      // Keep the half-sum and half-difference relations exact on the values.
      p.symmetric.value = (p.theoretical.value + p.practical.value) / 2.0;
      p.singular.value = (p.theoretical.value - p.practical.value) / 2.0;
      out.symmetry_residual[a][b] = m[4].estimate();
      for (std::size_t k = 0; k < kc; ++k) {
        p.theoretical_by_eps.push_back(m[5 + k].estimate().value);
        p.practical_by_eps.push_back(m[5 + kc + k].estimate().value);
        // Residuals are judged against the statistical error of the
        // extrapolated value: with common random numbers the residuals
        // themselves are nearly noise-free and pick up genuine O(eps^2) terms.
        for (int which = 0; which < 2; ++which) {
          const mc::Estimate r = m[5 + (2 + which) * kc + k].estimate();
          const mc::Estimate& target = which ? p.practical : p.theoretical;
          const double floor = 1e-9 * (1.0 + std::abs(target.value));
          p.residual_ratio = std::max(
              p.residual_ratio, std::abs(r.value) / (target.standard_error + floor));
        }
      }
      p.theoretical_slope = fit.slope(p.theoretical_by_eps);
      p.practical_slope = fit.slope(p.practical_by_eps);
      if (p.residual_ratio > options.residual_limit) {
        throw NumericalError("eps extrapolation residual for <A " + bank[a].name + ", " +
                             bank[b].name + "> exceeds " +
                             std::to_string(options.residual_limit) +
                             " standard errors: wrong asymptotic order?");
      }
    }
  }

  // Grid estimates.
  out.grid = make_grid(d, options);
  GridEngine engine(scheme, bank, d, samples);
  out.bandwidth = engine.bandwidth();
  out.operators.resize(q);
  for (std::size_t f = 0; f < q; ++f) out.operators[f].function = bank[f].name;
  std::vector<double> zero(q, 0.0);
  for (double y0 : out.grid) {
    engine.evaluate(y0);
    for (std::size_t f = 0; f < q; ++f) {
      GridOperators& g = out.operators[f];
      const double a = engine.theoretical(f);
      const double u = engine.practical(f);
      g.theoretical.push_back(a);
      g.practical.push_back(u);
      g.symmetric.push_back((a + u) / 2.0);
      g.singular.push_back((a - u) / 2.0);
      std::vector<double> one = zero, half = zero, mhalf = zero;
      one[f] = 1.0;
      half[f] = 0.5;
      mhalf[f] = -0.5;
      g.theoretical_se.push_back(engine.standard_error(one, zero));
      g.practical_se.push_back(engine.standard_error(zero, one));
      g.symmetric_se.push_back(engine.standard_error(half, half));
      g.singular_se.push_back(engine.standard_error(half, mhalf));
    }
  }
  return out;
}

double theoretical_bias_closed_form(const PerturbationScheme& scheme,
                                    const TestFunction& phi, double y) {
  if (scheme.kind != PerturbationScheme::Kind::kDiffusion) {
    throw ValidationError("closed form applies to diffusion schemes");
  }
  return scheme.z.conditional_mean(y) * phi.d1(y) +
         0.5 * scheme.t.conditional_second_moment(y) * phi.d2(y);
}

KernelClosedForm theoretical_bias_kernel(const PerturbationScheme& scheme,
                                         const TestFunction& phi, double y,
                                         std::size_t samples, std::uint64_t seed) {
  scheme.validate();
  check_sample_count(samples);
  if (scheme.kind != PerturbationScheme::Kind::kDiffusion) {
    throw ValidationError("closed form applies to diffusion schemes");
  }
  const Draws d = draw(scheme, samples, seed);
  const SortedDesign s = sort_design(d.y);
  std::vector<double> t2(samples);
  for (std::size_t i = 0; i < samples; ++i) t2[i] = d.t[i] * d.t[i];
  KernelClosedForm out;
  out.bandwidth = bandwidth_for(d.y);
  Window w;
  w.fit(s, y, out.bandwidth);
  out.effective_neighbors = w.effective;
  const double ez = w.value(s, d.z);
  const double et2 = w.value(s, t2);
  out.value = ez * phi.d1(y) + 0.5 * et2 * phi.d2(y);
  return out;
}

DirichletFormEstimate dirichlet_form_estimate(const PerturbationScheme& scheme,
                                              const TestFunction& phi,
                                              const TestFunction& chi,
                                              std::size_t samples, std::uint64_t seed) {
  scheme.validate();
  check_sample_count(samples);
  if (scheme.kind != PerturbationScheme::Kind::kDiffusion) {
    throw ValidationError("the plug-in route needs a diffusion scheme");
  }
  const Draws d = draw(scheme, samples, seed);
  const mc::LinearExtrapolation fit(scheme.eps);
  const auto blocks = mc::run_indexed(mc::block_count(samples), [&](std::size_t b) {
    PairStats st{std::vector<mc::Moments>(3)};
    const std::size_t end = std::min(samples, (b + 1) * mc::kBlockSize);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
      const double y = d.y[i];
      const double plug = d.t[i] * d.t[i] * phi.d1(y) * chi.d1(y);
      double inc = 0.0;
      for (std::size_t k = 0; k < scheme.eps.size(); ++k) {
        const double eps = scheme.eps[k];
        double s = 0.0;
        for (std::size_t sg = 0; sg < 2; ++sg) {
          const double x = perturbed(scheme, d, i, eps, sg);
          s += (phi.f(x) - phi.f(y)) * (chi.f(x) - chi.f(y));
        }
        inc += fit.intercept_weights[k] * s / (2.0 * eps);
      }
      check_finite(plug + inc, "Dirichlet form");
      st.m[0].add(plug);
      st.m[1].add(inc);
      st.m[2].add(inc - plug);
    }
    return st;
  });
  const PairStats total = mc::pairwise_sum(blocks);
  DirichletFormEstimate out{total.m[0].estimate(), total.m[1].estimate(),
                            total.m[2].estimate()};
  if (std::abs(out.difference.value) >
      5.0 * out.difference.standard_error + 1e-12 * (1.0 + std::abs(out.plug_in.value))) {
    throw NumericalError("Dirichlet form routes disagree: plug-in " +
                         std::to_string(out.plug_in.value) + ", increments " +
                         std::to_string(out.increments.value));
  }
  return out;
}

std::string to_string(Locality l) {
  switch (l) {
    case Locality::kLocal: return "local";
    case Locality::kNonLocal: return "non_local";
    case Locality::kInconclusive: return "inconclusive";
  }
  return "inconclusive";
}

LocalityResult locality_test(const PerturbationScheme& scheme, const TestFunction& phi,
                             std::size_t samples, std::uint64_t seed, double threshold) {
  scheme.validate();
  check_sample_count(samples);
  if (!(threshold > 0.0)) throw ValidationError("locality threshold must be positive");
  const Draws d = draw(scheme, samples, seed);
  const mc::LinearExtrapolation fit(scheme.eps);
  const std::size_t signs = sign_count(scheme);
  const auto blocks = mc::run_indexed(mc::block_count(samples), [&](std::size_t b) {
    mc::Moments m;
    const std::size_t end = std::min(samples, (b + 1) * mc::kBlockSize);
    for (std::size_t i = b * mc::kBlockSize; i < end; ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < scheme.eps.size(); ++k) {
        const double eps = scheme.eps[k];
        double s = 0.0;
        for (std::size_t sg = 0; sg < signs; ++sg) {
          const double inc = phi.f(perturbed(scheme, d, i, eps, sg)) - phi.f(d.y[i]);
          s += inc * inc * inc * inc;
        }
        v += fit.intercept_weights[k] * s / (eps * signs);
      }
      check_finite(v, "fourth moment");
      m.add(v);
    }
    return m;
  });
  LocalityResult out;
  out.fourth_moment = mc::pairwise_sum(blocks).estimate();
  out.threshold = threshold;
  const double lo = out.fourth_moment.value - 3.0 * out.fourth_moment.standard_error;
  const double hi = out.fourth_moment.value + 3.0 * out.fourth_moment.standard_error;
  out.verdict = hi < threshold ? Locality::kLocal
                : lo > threshold ? Locality::kNonLocal
                                 : Locality::kInconclusive;
  return out;
}

DerivationCheck derivation_property_check(const PerturbationScheme& scheme,
                                          const TestFunction& phi,
                                          const TestFunction& chi,
                                          std::size_t samples, std::uint64_t seed,
                                          Operator op) {
  scheme.validate();
  check_sample_count(samples);
  const std::vector<TestFunction> bank{phi, chi, TestFunction::product(phi, chi)};
  const Draws d = draw(scheme, samples, seed);
  DerivationCheck out;
  out.grid = make_grid(d, EstimateOptions{});
  GridEngine engine(scheme, bank, d, samples);

  // Coefficients of an operator on Abar and Aund.
  double cb = 1.0, cu = 0.0;
  switch (op) {
    case Operator::kTheoretical: cb = 1.0; cu = 0.0; break;
    case Operator::kPractical: cb = 0.0; cu = 1.0; break;
    case Operator::kSymmetric: cb = 0.5; cu = 0.5; break;
    case Operator::kSingular: cb = 0.5; cu = -0.5; break;
  }
  std::size_t within = 0;
  for (double y0 : out.grid) {
    engine.evaluate(y0);
    auto value = [&](std::size_t f) {
      return cb * engine.theoretical(f) + cu * engine.practical(f);
    };
    // residual = Op[phi chi] - chi(y0) Op[phi] - phi(y0) Op[chi]
    const std::vector<double> coef{-chi.f(y0), -phi.f(y0), 1.0};
    double r = 0.0;
    std::vector<double> cbar(3), cunder(3);
    for (std::size_t f = 0; f < 3; ++f) {
      r += coef[f] * value(f);
      cbar[f] = coef[f] * cb;
      cunder[f] = coef[f] * cu;
    }
    const double se = engine.standard_error(cbar, cunder);
    out.residual.push_back(r);
    out.standard_error.push_back(se);
    if (std::abs(r) <= 3.0 * se) ++within;
  }
  out.fraction_within = static_cast<double>(within) / static_cast<double>(out.grid.size());
  out.passed = out.fraction_within >= 0.95;
  return out;
}

}  // namespace errcalc::bias
