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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "errcalc/cli.hpp"
#include "errcalc/errors.hpp"

namespace errcalc::cli {

namespace {

using bias::Coupling;
using bias::Marginal;
using bias::NoiseLaw;
using bias::PerturbationScheme;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

void only_keys(const Json& obj, const std::string& where, std::set<std::string> allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) fail(where, "unknown key '" + key + "'");
  }
}

double number(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) fail(where, "missing '" + key + "'");
  const Json& v = obj.at(key);
  if (!v.is_number()) fail(where + "." + key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(where + "." + key, "must be finite");
  return x;
}

double number_or(const Json& obj, const std::string& key, const std::string& where,
                 double fallback) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

std::uint64_t unsigned_value(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(where, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string string_at(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) fail(where, "missing '" + key + "'");
  if (!obj.at(key).is_string()) fail(where + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

Marginal parse_marginal(const Json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  const std::string law = string_at(j, "law", where);
  if (law == "normal") {
    only_keys(j, where, {"law", "mean", "sd"});
    return Marginal::normal(number_or(j, "mean", where, 0.0), number_or(j, "sd", where, 1.0));
  }
  if (law == "uniform") {
    only_keys(j, where, {"law", "lo", "hi"});
    return Marginal::uniform(number(j, "lo", where), number(j, "hi", where));
  }
  fail(where + ".law", "expected normal or uniform, got '" + law + "'");
}

Coupling parse_coupling(const Json& j, const std::string& where) {
  if (j.is_number()) return Coupling::constant(j.get<double>());
  if (!j.is_object()) fail(where, "expected a number or an object");
  const std::string law = string_at(j, "law", where);
  if (law == "constant") {
    only_keys(j, where, {"law", "value"});
    return Coupling::constant(number(j, "value", where));
  }
  if (law == "affine") {
    only_keys(j, where, {"law", "a", "b"});
    return Coupling::affine(number(j, "a", where), number_or(j, "b", where, 0.0));
  }
  if (law == "normal") {
    only_keys(j, where, {"law", "mean", "sd"});
    const double sd = number_or(j, "sd", where, 1.0);
    if (sd < 0.0) fail(where + ".sd", "must be >= 0");
    return Coupling::normal(number_or(j, "mean", where, 0.0), sd);
  }
  if (law == "uniform") {
    only_keys(j, where, {"law", "lo", "hi"});
    const double lo = number(j, "lo", where), hi = number(j, "hi", where);
    if (!(hi > lo)) fail(where, "empty uniform interval");
    return Coupling::uniform(lo, hi);
  }
  fail(where + ".law", "expected constant, affine, normal or uniform, got '" + law + "'");
}

NoiseLaw parse_noise(const std::string& name) {
  if (name == "normal") return NoiseLaw::kNormal;
  if (name == "rademacher") return NoiseLaw::kRademacher;
  if (name == "uniform") return NoiseLaw::kUniform;
  fail("scheme.G", "expected normal, rademacher or uniform, got '" + name + "'");
}

SchemeBlock parse_scheme(const Json& j) {
  const std::string where = "scheme";
  if (!j.is_object()) fail(where, "expected an object");
  only_keys(j, where,
            {"kind", "Y", "Z", "T", "G", "jump", "eps", "samples", "grid_points",
             "locality_threshold"});
  SchemeBlock block;
  const std::string kind = j.contains("kind") ? string_at(j, "kind", where) : "diffusion";
  if (!j.contains("Y")) fail(where, "missing 'Y'");
  const Marginal y = parse_marginal(j.at("Y"), "scheme.Y");
  if (kind == "diffusion") {
    if (j.contains("jump")) fail(where, "'jump' belongs to jump schemes");
    block.scheme = PerturbationScheme::diffusion(
        y, j.contains("Z") ? parse_coupling(j.at("Z"), "scheme.Z") : Coupling::constant(0.0),
        j.contains("T") ? parse_coupling(j.at("T"), "scheme.T") : Coupling::constant(1.0));
    if (j.contains("G")) block.scheme.g = parse_noise(string_at(j, "G", where));
  } else if (kind == "jump") {
    for (const char* k : {"Z", "T", "G"}) {
      if (j.contains(k)) fail(where, std::string("'") + k + "' belongs to diffusion schemes");
    }
    block.scheme = PerturbationScheme::jumps(
        y, j.contains("jump") ? parse_coupling(j.at("jump"), "scheme.jump")
                              : Coupling::constant(1.0));
  } else {
    fail(where + ".kind", "expected diffusion or jump, got '" + kind + "'");
  }
  if (j.contains("eps")) {
    const Json& e = j.at("eps");
    if (!e.is_array()) fail("scheme.eps", "expected an array");
    block.scheme.eps.clear();
    for (const auto& v : e) {
      if (!v.is_number()) fail("scheme.eps", "expected numbers");
      block.scheme.eps.push_back(v.get<double>());
    }
  }
  if (j.contains("samples")) block.samples = unsigned_value(j.at("samples"), "scheme.samples");
  if (j.contains("grid_points")) {
    block.options.grid_points = unsigned_value(j.at("grid_points"), "scheme.grid_points");
    if (block.options.grid_points < 2) fail("scheme.grid_points", "must be >= 2");
  }
  block.locality_threshold = number_or(j, "locality_threshold", where, 1e-3);
  if (!(block.locality_threshold > 0.0)) fail("scheme.locality_threshold", "must be positive");
  if (block.samples < 10000) fail("scheme.samples", "must be >= 10000");
  block.scheme.validate();
  return block;
}

ClusterBlock parse_cluster(const Json& j) {
  const std::string where = "cluster";
  if (!j.is_object()) fail(where, "expected an object");
  only_keys(j, where, {"points", "scale", "distribution", "seed"});
  ClusterBlock block;
  if (j.contains("points")) block.points = unsigned_value(j.at("points"), "cluster.points");
  if (j.contains("scale")) {
    block.scale = number(j, "scale", where);
    if (!(*block.scale > 0.0)) fail("cluster.scale", "must be positive");
  }
  if (j.contains("distribution")) {
    block.distribution = string_at(j, "distribution", where);
    clusters::parse_distribution(*block.distribution);
  }
  if (j.contains("seed")) block.seed = unsigned_value(j.at("seed"), "cluster.seed");
  return block;
}

Json marginal_json(const Marginal& m) {
  if (m.kind == Marginal::Kind::kNormal) return {{"law", "normal"}, {"mean", m.a}, {"sd", m.b}};
  return {{"law", "uniform"}, {"lo", m.a}, {"hi", m.b}};
}

Json coupling_json(const Coupling& c) {
  switch (c.kind) {
    case Coupling::Kind::kConstant: return {{"law", "constant"}, {"value", c.a}};
    case Coupling::Kind::kAffineInY: return {{"law", "affine"}, {"a", c.a}, {"b", c.b}};
    case Coupling::Kind::kNormal: return {{"law", "normal"}, {"mean", c.a}, {"sd", c.b}};
    case Coupling::Kind::kUniform: return {{"law", "uniform"}, {"lo", c.a}, {"hi", c.b}};
  }
  return nullptr;
}

std::string noise_name(NoiseLaw g) {
  switch (g) {
    case NoiseLaw::kNormal: return "normal";
    case NoiseLaw::kRademacher: return "rademacher";
    case NoiseLaw::kUniform: return "uniform";
  }
  return "normal";
}

void write_number(std::string& out, double x) {
  if (!std::isfinite(x)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

bool scalar(const Json& j) { return !j.is_object() && !j.is_array(); }

void write(std::string& out, const Json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  if (j.is_number_float()) {
    write_number(out, j.get<double>());
  } else if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (const auto& [key, value] : j.items()) {
      if (!first) out += ",\n";
      first = false;
      out += pad + Json(key).dump() + ": ";
      write(out, value, indent + 2);
    }
    out += "\n" + close + "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      out += "[]";
      return;
    }
    const bool flat = std::all_of(j.begin(), j.end(), scalar);
    if (flat) {
      out += "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ", ";
        write(out, j[i], indent + 2);
      }
      out += "]";
      return;
    }
    out += "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) out += ",\n";
      out += pad;
      write(out, j[i], indent + 2);
    }
    out += "\n" + close + "]";
  } else {
    out += j.dump();
  }
}

}  // namespace

std::vector<std::string> ModelDocument::variable_names() const {
  std::vector<std::string> names;
  for (const auto& v : variables) names.push_back(v.name);
  return names;
}

ErroneousQuantity ModelDocument::input() const {
  const auto n = static_cast<Eigen::Index>(variables.size());
  Eigen::VectorXd value(n), b(n);
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Variable& v = variables[static_cast<std::size_t>(i)];
    value(i) = v.value;
    b(i) = v.bias;
    if (v.covariance) {
      for (Eigen::Index j = 0; j < n; ++j) gamma(i, j) = (*v.covariance)[static_cast<std::size_t>(j)];
    }
    gamma(i, i) = v.variance;
  }
  return ErroneousQuantity(value, b, gamma);
}

SmoothMap ModelDocument::model() const {
  std::vector<std::string> sources;
  for (const auto& [_, src] : expressions) sources.push_back(src);
  return SmoothMap::parse(sources, variable_names());
}

ModelDocument parse_document(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("document is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("document", "expected a JSON object");
  only_keys(j, "document", {"variables", "expressions", "scheme", "cluster", "seed"});

  ModelDocument doc;
  doc.source = j;
  if (j.contains("variables")) {
    const Json& vars = j.at("variables");
    if (!vars.is_array()) fail("variables", "expected an array");
    std::set<std::string> seen;
    bool any_rows = false;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const std::string where = "variables[" + std::to_string(i) + "]";
      const Json& v = vars[i];
      if (!v.is_object()) fail(where, "expected an object");
      only_keys(v, where, {"name", "value", "variance", "bias", "covariance"});
      Variable var;
      var.name = string_at(v, "name", where);
      if (!seen.insert(var.name).second) fail(where, "duplicate variable '" + var.name + "'");
      var.value = number(v, "value", where);
      var.bias = number_or(v, "bias", where, 0.0);
      if (v.contains("covariance")) {
        any_rows = true;
        const Json& row = v.at("covariance");
        if (!row.is_array() || row.size() != vars.size()) {
          fail(where + ".covariance", "expected a row of " + std::to_string(vars.size()) + " numbers");
        }
        std::vector<double> r;
        for (const auto& x : row) {
          if (!x.is_number() || !std::isfinite(x.get<double>())) {
            fail(where + ".covariance", "expected finite numbers");
          }
          r.push_back(x.get<double>());
        }
        var.covariance = std::move(r);
      }
      if (v.contains("variance")) {
        var.variance = number(v, "variance", where);
        if (var.covariance && (*var.covariance)[i] != var.variance) {
          fail(where, "variance disagrees with the covariance diagonal");
        }
      } else if (var.covariance) {
        var.variance = (*var.covariance)[i];
      }
      if (var.variance < 0.0) fail(where + ".variance", "must be >= 0");
      doc.variables.push_back(std::move(var));
    }
    if (any_rows) {
      for (std::size_t i = 0; i < doc.variables.size(); ++i) {
        if (!doc.variables[i].covariance) {
          fail("variables[" + std::to_string(i) + "]",
               "covariance rows must be given for every variable or none");
        }
      }
      for (std::size_t i = 0; i < doc.variables.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
          if ((*doc.variables[i].covariance)[k] != (*doc.variables[k].covariance)[i]) {
            fail("covariance", "not symmetric at (" + std::to_string(i) + ", " +
                                   std::to_string(k) + ")");
          }
        }
      }
    }
    try {
      (void)doc.input();
    } catch (const ValidationError& e) {
      fail("covariance", e.what());
    }
  }

  if (j.contains("expressions")) {
    const Json& ex = j.at("expressions");
    if (!ex.is_object()) fail("expressions", "expected an object mapping names to sources");
    if (ex.empty()) fail("expressions", "the expression map is empty");
    for (const auto& [name, src] : ex.items()) {
      if (!src.is_string()) fail("expressions." + name, "expected a string");
      doc.expressions.emplace_back(name, src.get<std::string>());
    }
    if (doc.variables.empty()) fail("expressions", "no variables are declared");
    (void)doc.model();  // resolves every identifier
  }
  if (j.contains("scheme")) doc.scheme = parse_scheme(j.at("scheme"));
  if (j.contains("cluster")) doc.cluster = parse_cluster(j.at("cluster"));
  if (j.contains("seed")) doc.seed = unsigned_value(j.at("seed"), "seed");
  return doc;
}

ModelDocument load_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read document '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_document(buf.str());
}

Json to_json(const ModelDocument& doc) {
  Json j = Json::object();
  if (!doc.variables.empty()) {
    Json vars = Json::array();
    for (const auto& v : doc.variables) {
      Json o = {{"name", v.name}, {"value", v.value}, {"variance", v.variance}, {"bias", v.bias}};
      if (v.covariance) o["covariance"] = *v.covariance;
      vars.push_back(std::move(o));
    }
    j["variables"] = std::move(vars);
  }
  if (!doc.expressions.empty()) {
    Json ex = Json::object();
    for (const auto& [name, src] : doc.expressions) ex[name] = src;
    j["expressions"] = std::move(ex);
  }
  if (doc.scheme) {
    const auto& s = doc.scheme->scheme;
    Json sj = {{"Y", marginal_json(s.y)},
               {"eps", s.eps},
               {"samples", doc.scheme->samples},
               {"grid_points", doc.scheme->options.grid_points},
               {"locality_threshold", doc.scheme->locality_threshold}};
    if (s.kind == PerturbationScheme::Kind::kDiffusion) {
      sj["kind"] = "diffusion";
      sj["Z"] = coupling_json(s.z);
      sj["T"] = coupling_json(s.t);
      sj["G"] = noise_name(s.g);
    } else {
      sj["kind"] = "jump";
      sj["jump"] = coupling_json(s.jump);
    }
    j["scheme"] = std::move(sj);
  }
  if (doc.cluster) {
    Json c = Json::object();
    if (doc.cluster->points) c["points"] = *doc.cluster->points;
    if (doc.cluster->scale) c["scale"] = *doc.cluster->scale;
    if (doc.cluster->distribution) c["distribution"] = *doc.cluster->distribution;
    if (doc.cluster->seed) c["seed"] = *doc.cluster->seed;
    j["cluster"] = std::move(c);
  }
  if (doc.seed) j["seed"] = *doc.seed;
  return j;
}

std::string digest(const Json& j) {
  const std::string text = j.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

std::string serialize(const Json& j) {
  std::string out;
  write(out, j, 0);
  out += "\n";
  return out;
}

}  // namespace errcalc::cli
