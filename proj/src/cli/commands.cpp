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

#include <algorithm>
#include <cmath>

#include "errcalc/cli.hpp"
#include "errcalc/errors.hpp"
#include "errcalc/process_models.hpp"

#ifndef ERRCALC_VERSION
#define ERRCALC_VERSION "0.0.0"
#endif

namespace errcalc::cli {

namespace {

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

Json estimate_json(const mc::Estimate& e) {
  return {{"value", e.value}, {"standard_error", e.standard_error}};
}

void require_model(const ModelDocument& doc) {
  if (doc.variables.empty()) throw ValidationError("document declares no variables");
  if (doc.expressions.empty()) throw ValidationError("document has no expressions");
}

double z_score(double estimate, double reference, double se) {
  const double diff = estimate - reference;
  if (se > 0.0) return diff / se;
  return diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
}

Json comparison_row(const std::string& quantity, double analytic, double estimate, double se) {
  return {{"quantity", quantity},
          {"analytic", analytic},
          {"estimate", estimate},
          {"standard_error", se},
          {"z", z_score(estimate, analytic, se)}};
}

}  // namespace

std::string tool_version() { return ERRCALC_VERSION; }

Json make_report(const Json& command, const std::string& input_digest, std::uint64_t seed,
                 Json results) {
  return {{"command", command},
          {"input_digest", input_digest},
          {"seed", seed},
          {"tool_version", tool_version()},
          {"results", std::move(results)}};
}

Json cmd_propagate(const ModelDocument& doc) {
  require_model(doc);
  const ErroneousQuantity x = doc.input();
  const SmoothMap f = doc.model();
  const Propagation p = propagate_detailed(x, f);
  const ErroneousQuantity y = propagate(x, f);
  Json outputs = Json::array();
  for (std::size_t k = 0; k < doc.expressions.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    outputs.push_back({{"name", doc.expressions[k].first},
                       {"expression", doc.expressions[k].second},
                       {"value", y.value()(i)},
                       {"variance", y.gamma()(i, i)},
                       {"bias", y.bias()(i)}});
  }
  return {{"outputs", std::move(outputs)},
          {"covariance", matrix_json(y.gamma())},
          {"warnings", p.warnings}};
}

Json cmd_cluster(const ModelDocument& doc, const Options& options) {
  require_model(doc);
  const ClusterBlock block = doc.cluster.value_or(ClusterBlock{});
  const auto points = options.points ? options.points : block.points;
  const auto scale = options.scale ? options.scale : block.scale;
  if (!points || !scale) {
    throw ValidationError(
        "missing cluster configuration: give a cluster block or --points and --scale");
  }
  if (!(*scale > 0.0)) throw ValidationError("--scale must be positive");
  const std::string dist_name =
      options.distribution.value_or(block.distribution.value_or("gaussian"));
  const auto dist = clusters::parse_distribution(dist_name);
  const std::uint64_t seed = options.seed.value_or(block.seed.value_or(doc.seed.value_or(0)));

  const ErroneousQuantity x = doc.input();
  const SmoothMap f = doc.model();
  auto cfg = clusters::ClusterConfig::scaled(x.value(), x.gamma(), *scale, *points, seed, dist);
  cfg.drift = x.bias();
  const auto box = clusters::BlackBox::from_map(f);
  const clusters::ClusterEstimate e = clusters::run_cluster(box, cfg);

  Json results;
  results["config"] = {{"points", *points},
                       {"scale", *scale},
                       {"distribution", dist_name},
                       {"seed", seed}};
  results["estimate"] = {
      {"gamma_hat", matrix_json(e.gamma_hat)},
      {"gamma_se", matrix_json(e.gamma_se)},
      {"bias_hat", vector_json(e.bias_hat)},
      {"bias_hat_se", vector_json(e.bias_se)},
      {"bias", vector_json(e.bias())},
      {"bias_se", vector_json(e.bias_standard_error())},
      {"center_value", vector_json(e.center_value)},
      {"points", e.points},
      {"scale", e.scale},
      {"small_cluster", e.small_cluster},
      {"cloud",
       {{"min_eigenvalue", e.cloud.min_eigenvalue},
        {"max_eigenvalue", e.cloud.max_eigenvalue},
        {"condition_number", e.cloud.condition_number},
        {"dispersion_error", e.cloud.dispersion_error},
        {"full", e.cloud.full}}}};

  // Comparison against the analytic path when the model is differentiable
  // at the center.
  std::optional<ErroneousQuantity> reference;
  try {
    reference = propagate(x, f);
  } catch (const NumericalError& err) {
    results["comparison_unavailable"] = err.what();
  }
  if (reference) {
    Json rows = Json::array();
    const auto m = static_cast<Eigen::Index>(doc.expressions.size());
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::string a = doc.expressions[static_cast<std::size_t>(i)].first;
      for (Eigen::Index j = i; j < m; ++j) {
        const std::string b = doc.expressions[static_cast<std::size_t>(j)].first;
        rows.push_back(comparison_row("gamma[" + a + "," + b + "]", reference->gamma()(i, j),
                                      e.gamma_hat(i, j), e.gamma_se(i, j)));
      }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      rows.push_back(comparison_row("bias[" + doc.expressions[static_cast<std::size_t>(i)].first + "]",
                                    reference->bias()(i), e.bias()(i),
                                    e.bias_standard_error()(i)));
    }
    results["comparison"] = std::move(rows);
  }

  if (reference && (!options.sweep_points.empty() || !options.sweep_scales.empty())) {
    clusters::ConvergenceOptions study;
    study.point_counts = options.sweep_points.empty() ? std::vector<std::size_t>{*points}
                                                      : options.sweep_points;
    study.scales = options.sweep_scales.empty() ? std::vector<double>{*scale}
                                                : options.sweep_scales;
    study.replicates = options.replicates;
    study.distribution = dist;
    study.seed = seed;
    const auto c = clusters::convergence_study(box, x, *reference, study);
    Json table = Json::array();
    for (const auto& row : c.table) {
      table.push_back({{"points", row.points},
                       {"scale", row.scale},
                       {"gamma_rms", row.gamma_rms},
                       {"bias_rms", row.bias_rms}});
    }
    auto fits = [](const std::vector<clusters::PowerLaw>& v) {
      Json a = Json::array();
      for (const auto& p : v) a.push_back({{"exponent", p.exponent}, {"intercept", p.intercept}});
      return a;
    };
    results["convergence"] = {{"replicates", study.replicates},
                              {"table", std::move(table)},
                              {"gamma_vs_points", fits(c.gamma_vs_points)},
                              {"bias_vs_points", fits(c.bias_vs_points)},
                              {"gamma_vs_scale", fits(c.gamma_vs_scale)},
                              {"bias_vs_scale", fits(c.bias_vs_scale)},
                              {"best_scale", c.best_scale}};
  }
  return results;
}

Json cmd_bias(const ModelDocument& doc, const Options& options) {
  if (!doc.scheme) throw ValidationError("document has no scheme block");
  const SchemeBlock& block = *doc.scheme;
  const std::uint64_t seed = options.seed.value_or(doc.seed.value_or(0));
  const auto bank = bias::default_bank();
  const auto est =
      bias::estimate_bias_operators(block.scheme, bank, block.samples, seed, block.options);
  const bool diffusion = block.scheme.kind == bias::PerturbationScheme::Kind::kDiffusion;

  Json ops = Json::object();
  double relation_error = 0.0;
  for (std::size_t f = 0; f < est.operators.size(); ++f) {
    const auto& o = est.operators[f];
    Json entry = {{"theoretical", o.theoretical},
                  {"theoretical_se", o.theoretical_se},
                  {"practical", o.practical},
                  {"practical_se", o.practical_se},
                  {"symmetric", o.symmetric},
                  {"symmetric_se", o.symmetric_se},
                  {"singular", o.singular},
                  {"singular_se", o.singular_se}};
    if (diffusion) {
      std::vector<double> closed;
      for (double y : est.grid) {
        closed.push_back(bias::theoretical_bias_closed_form(block.scheme, bank[f], y));
      }
      entry["theoretical_closed_form"] = closed;
    }
    for (std::size_t g = 0; g < est.grid.size(); ++g) {
      relation_error = std::max(
          {relation_error,
           std::abs(o.symmetric[g] - 0.5 * (o.theoretical[g] + o.practical[g])),
           std::abs(o.singular[g] - 0.5 * (o.theoretical[g] - o.practical[g]))});
    }
    ops[o.function] = std::move(entry);
  }

  const std::size_t q = est.operators.size();
  Eigen::MatrixXd resid(q, q), resid_se(q, q);
  double max_z = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      const auto& r = est.symmetry_residual[i][j];
      resid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.value;
      resid_se(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.standard_error;
      if (r.standard_error > 0.0) max_z = std::max(max_z, std::abs(r.value) / r.standard_error);
    }
  }
  std::vector<std::string> names;
  for (const auto& f : bank) names.push_back(f.name);

  const auto loc = bias::locality_test(block.scheme, bias::TestFunction::monomial(1),
                                       block.samples, seed, block.locality_threshold);

  Json results = {{"grid", est.grid},
                  {"bandwidth", est.bandwidth},
                  {"samples", est.samples},
                  {"eps", est.eps},
                  {"functions", names},
                  {"operators", std::move(ops)},
                  {"relations_max_error", relation_error},
                  {"symmetry_residual",
                   {{"value", matrix_json(resid)},
                    {"standard_error", matrix_json(resid_se)},
                    {"max_abs_z", max_z}}},
                  {"locality",
                   {{"verdict", bias::to_string(loc.verdict)},
                    {"test_function", "y"},
                    {"fourth_moment", estimate_json(loc.fourth_moment)},
                    {"threshold", loc.threshold}}}};
  if (diffusion) {
    const auto noise = bias::check_noise(block.scheme, block.samples, seed);
    results["noise"] = {{"mean", noise.mean}, {"variance", noise.variance}, {"passed", noise.passed}};
  }
  return results;
}

Json cmd_process_bridge(const BridgeFlags& flags, std::uint64_t seed) {
  const double analytic = process::bridge_gamma_analytic(flags.s, flags.t, flags.steps);
  const double continuum = process::bridge_gamma_continuum(flags.s, flags.t);
  Json results = {{"s", flags.s},
                  {"t", flags.t},
                  {"K", flags.steps},
                  {"analytic", analytic},
                  {"continuum", continuum},
                  {"discretization_error", std::abs(analytic - continuum)},
                  {"discretization_bound", 2.0 / flags.steps}};
  std::vector<process::BridgeMethod> methods;
  if (flags.method == "both") {
    methods = {process::BridgeMethod::kSharpSampling, process::BridgeMethod::kCluster};
  } else if (flags.method != "none") {
    methods = {process::parse_bridge_method(flags.method)};
  }
  Json rows = Json::array();
  for (const auto m : methods) {
    const auto e = process::bridge_gamma_estimated(flags.s, flags.t, flags.steps, m,
                                                   flags.samples, seed);
    rows.push_back({{"method", process::to_string(m)},
                    {"estimate", e.value},
                    {"standard_error", e.standard_error},
                    {"z", z_score(e.value, analytic, e.standard_error)}});
  }
  results["estimates"] = std::move(rows);
  return results;
}

Json cmd_process_string(const StringFlags& flags) {
  const auto d = process::string_mean_square_deflection(
      {flags.length, flags.tension, flags.temperature, flags.x}, flags.steps);
  return {{"l", flags.length},
          {"F", flags.tension},
          {"T", flags.temperature},
          {"x", flags.x},
          {"K", d.steps},
          {"mean_square_deflection", d.closed_form},
          {"bridge_value", d.bridge_value},
          {"difference", std::abs(d.closed_form - d.bridge_value)},
          {"tolerance", d.tolerance}};
}

Json cmd_process_donsker(const DonskerFlags& flags, std::uint64_t seed) {
  const auto d = process::donsker_erroneous_walk(flags.steps, flags.times, flags.samples, seed);
  Json rows = Json::array();
  const auto n = static_cast<Eigen::Index>(d.times.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      rows.push_back({{"s", d.times[static_cast<std::size_t>(i)]},
                      {"t", d.times[static_cast<std::size_t>(j)]},
                      {"gamma", d.gamma(i, j)},
                      {"standard_error", d.standard_error(i, j)},
                      {"discrete", d.discrete(i, j)},
                      {"continuum", d.continuum(i, j)}});
    }
  }
  return {{"K", flags.steps}, {"samples", flags.samples}, {"eps", d.eps}, {"table", std::move(rows)}};
}

}  // namespace errcalc::cli
