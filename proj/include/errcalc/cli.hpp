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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errcalc/approx_bias.hpp"
#include "errcalc/clusters.hpp"
#include "errcalc/error_core.hpp"
#include "errcalc/smooth_map.hpp"

namespace errcalc::cli {

using Json = nlohmann::json;

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

struct Variable {
  std::string name;
  double value = 0.0;
  double variance = 0.0;
  double bias = 0.0;
  /// Row of the full error covariance, when the document gives one.
  std::optional<std::vector<double>> covariance;
};

struct SchemeBlock {
  bias::PerturbationScheme scheme;
  std::size_t samples = 100000;
  bias::EstimateOptions options;
  double locality_threshold = 1e-3;
};

struct ClusterBlock {
  std::optional<std::size_t> points;
  std::optional<double> scale;
  std::optional<std::string> distribution;
  std::optional<std::uint64_t> seed;
};

struct ModelDocument {
  std::vector<Variable> variables;
  /// (output name, source), ordered by name.
  std::vector<std::pair<std::string, std::string>> expressions;
  std::optional<SchemeBlock> scheme;
  std::optional<ClusterBlock> cluster;
  std::optional<std::uint64_t> seed;
  /// The document as parsed, kept for digests and re-serialization.
  Json source;

  std::vector<std::string> variable_names() const;
  /// Values, biases and covariance (per-variable variances on the diagonal).
  ErroneousQuantity input() const;
  SmoothMap model() const;
};

/// Parses and validates a document. Throws ValidationError (or a ParseError
/// subclass for expression sources) on any violation.
ModelDocument parse_document(const std::string& text);
ModelDocument load_document(const std::string& path);

/// Canonical JSON form of a parsed document; parse_document(dump) gives back
/// the same document.
Json to_json(const ModelDocument& doc);

/// SHA-256 of the sorted-key, whitespace-free dump, as lowercase hex.
std::string digest(const Json& j);

/// Pretty JSON with every floating-point number written with 17 significant
/// digits. Non-finite numbers become null.
std::string serialize(const Json& j);

struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> points;
  std::optional<double> scale;
  std::optional<std::string> distribution;
  std::vector<std::size_t> sweep_points;
  std::vector<double> sweep_scales;
  std::size_t replicates = 8;
};

/// The "results" section of each command.
Json cmd_propagate(const ModelDocument& doc);
Json cmd_cluster(const ModelDocument& doc, const Options& options);
Json cmd_bias(const ModelDocument& doc, const Options& options);

struct BridgeFlags {
  double s = 0.5;
  double t = 0.5;
  int steps = 1024;
  std::string method = "both";
  std::size_t samples = 100000;
};
struct StringFlags {
  double length = 1.0;
  double tension = 1.0;
  double temperature = 1.0;
  double x = 0.5;
  int steps = 1024;
};
struct DonskerFlags {
  std::vector<double> times{1.0};
  int steps = 256;
  std::size_t samples = 20000;
};

Json cmd_process_bridge(const BridgeFlags& flags, std::uint64_t seed);
Json cmd_process_string(const StringFlags& flags);
Json cmd_process_donsker(const DonskerFlags& flags, std::uint64_t seed);

/// Full report: command echo, input digest, seed, tool version, results.
Json make_report(const Json& command, const std::string& input_digest,
                 std::uint64_t seed, Json results);

std::string tool_version();

/// Entry point. Writes the report to `out` (or the --output file) and
/// diagnostics to `err`; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace errcalc::cli
