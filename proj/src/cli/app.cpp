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

#include <unistd.h>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "errcalc/cli.hpp"
#include "errcalc/errors.hpp"
#include "errcalc/montecarlo.hpp"

namespace errcalc::cli {

namespace {

unsigned parse_thread_count(const std::string& text, const std::string& source) {
  unsigned n = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, n);
  if (ec != std::errc() || ptr != end || n == 0) {
    throw ValidationError(source + " must be a positive integer, got '" + text + "'");
  }
  return n;
}

std::string cell(const Json& v) {
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Short human-readable summary; the JSON report stays on stdout.
void print_table(const Json& report, std::ostream& err) {
  err << "errcalc " << report["command"]["name"].get<std::string>() << "\n";
  const Json& r = report["results"];
  if (r.contains("outputs")) {
    for (const auto& o : r["outputs"]) {
      err << "  " << cell(o["name"]) << "  value " << cell(o["value"]) << "  variance "
          << cell(o["variance"]) << "  bias " << cell(o["bias"]) << "\n";
    }
  }
  for (const char* table : {"comparison", "estimates", "table"}) {
    if (!r.contains(table) || !r[table].is_array()) continue;
    for (const auto& row : r[table]) {
      err << " ";
      for (const auto& [k, v] : row.items()) err << " " << k << "=" << cell(v);
      err << "\n";
    }
  }
  for (const auto& [k, v] : r.items()) {
    if (v.is_primitive()) err << "  " << k << ": " << cell(v) << "\n";
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Error calculus: propagation, clusters, bias operators and process models",
               "errcalc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  std::optional<std::uint64_t> seed;
  std::optional<std::string> threads;
  std::string output;
  app.add_option("--seed", seed, "Random seed (u64)");
  app.add_option("--threads", threads, "Worker threads (falls back to ERRCALC_THREADS)");
  app.add_option("--output", output, "Write the report to this file instead of stdout");

  std::string path;
  Options opt;

  auto* propagate = app.add_subcommand("propagate", "Propagate variance and bias analytically");
  propagate->add_option("document", path, "Model document (JSON)")->required();

  auto* cluster = app.add_subcommand("cluster", "Estimate variance and bias from a point cloud");
  cluster->add_option("document", path, "Model document (JSON)")->required();
  cluster->add_option("--points", opt.points, "Cloud size M");
  cluster->add_option("--scale", opt.scale, "Dispersion scale s");
  cluster->add_option("--distribution", opt.distribution, "gaussian or uniform-ellipsoid");
  cluster->add_option("--sweep-points", opt.sweep_points, "Cloud sizes for a convergence study")
      ->delimiter(',');
  cluster->add_option("--sweep-scales", opt.sweep_scales, "Scales for a convergence study")
      ->delimiter(',');
  cluster->add_option("--replicates", opt.replicates, "Replicates per study cell")
      ->check(CLI::PositiveNumber);

  auto* bias = app.add_subcommand("bias", "Estimate the bias operators of a perturbation scheme");
  bias->add_option("document", path, "Scheme document (JSON)")->required();

  auto* process = app.add_subcommand("process", "Error structures on Wiener space");
  process->require_subcommand(1);
  BridgeFlags bf;
  auto* bridge = process->add_subcommand("bridge", "Brownian bridge Gamma");
  bridge->add_option("--s", bf.s, "First time in [0, 1]");
  bridge->add_option("--t", bf.t, "Second time in [0, 1]");
  bridge->add_option("--K", bf.steps, "Walk steps");
  bridge->add_option("--method", bf.method, "sharp-sampling, cluster, both or none");
  bridge->add_option("--samples", bf.samples, "Monte-Carlo samples");
  StringFlags sf;
  auto* string = process->add_subcommand("string", "Mean-square deflection of a thermal string");
  string->add_option("--l", sf.length, "Length");
  string->add_option("--F", sf.tension, "Tension");
  string->add_option("--T", sf.temperature, "Temperature");
  string->add_option("--x", sf.x, "Observation point");
  string->add_option("--K", sf.steps, "Walk steps for the bridge comparison");
  DonskerFlags df;
  auto* donsker = process->add_subcommand("donsker", "Erroneous random walk Gamma");
  donsker->add_option("--t", df.times, "Observation times in [0, 1]")->delimiter(',');
  donsker->add_option("--K", df.steps, "Walk steps");
  donsker->add_option("--samples", df.samples, "Monte-Carlo samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitSuccess : kExitValidation;
  }

  try {
    if (threads) {
      mc::set_thread_count(parse_thread_count(*threads, "--threads"));
    } else if (const char* env = std::getenv("ERRCALC_THREADS"); env && *env) {
      mc::set_thread_count(parse_thread_count(env, "ERRCALC_THREADS"));
    }
    opt.seed = seed;

    Json report;
    if (*propagate || *cluster || *bias) {
      const ModelDocument doc = load_document(path);
      Json command = {{"name", propagate->parsed() ? "propagate"
                                : cluster->parsed() ? "cluster"
                                                    : "bias"}};
      Json results;
      std::uint64_t used = seed.value_or(doc.seed.value_or(0));
      if (*propagate) {
        results = cmd_propagate(doc);
      } else if (*cluster) {
        results = cmd_cluster(doc, opt);
        used = results["config"]["seed"].get<std::uint64_t>();
        command["points"] = results["config"]["points"];
        command["scale"] = results["config"]["scale"];
        command["distribution"] = results["config"]["distribution"];
        if (!opt.sweep_points.empty()) command["sweep_points"] = opt.sweep_points;
        if (!opt.sweep_scales.empty()) command["sweep_scales"] = opt.sweep_scales;
        if (!opt.sweep_points.empty() || !opt.sweep_scales.empty()) {
          command["replicates"] = opt.replicates;
        }
      } else {
        results = cmd_bias(doc, opt);
      }
      report = make_report(command, digest(doc.source), used, std::move(results));
    } else {
      const std::uint64_t used = seed.value_or(0);
      Json command;
      Json results;
      if (*bridge) {
        command = {{"name", "process bridge"},
                   {"s", bf.s},
                   {"t", bf.t},
                   {"K", bf.steps},
                   {"method", bf.method},
                   {"samples", bf.samples}};
        results = cmd_process_bridge(bf, used);
      } else if (*string) {
        command = {{"name", "process string"},
                   {"l", sf.length},
                   {"F", sf.tension},
                   {"T", sf.temperature},
                   {"x", sf.x},
                   {"K", sf.steps}};
        results = cmd_process_string(sf);
      } else {
        command = {{"name", "process donsker"},
                   {"t", df.times},
                   {"K", df.steps},
                   {"samples", df.samples}};
        results = cmd_process_donsker(df, used);
      }
      report = make_report(command, digest(command), used, std::move(results));
    }

    const std::string text = serialize(report);
    if (!output.empty()) {
      std::ofstream file(output, std::ios::binary);
      if (!file) throw ValidationError("cannot write report to '" + output + "'");
      file << text;
      if (!file) throw NumericalError("failed writing report to '" + output + "'");
    } else {
      out << text;
    }
    if (&err == &std::cerr && ::isatty(STDERR_FILENO)) print_table(report, err);
    return kExitSuccess;
  } catch (const ValidationError& e) {
    err << "errcalc: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    err << "errcalc: error: malformed document: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "errcalc: numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "errcalc: runtime error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace errcalc::cli
