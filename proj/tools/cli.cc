// Copyright 2026 The GDAMN Authors.
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

#include "cli.h"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "gdamn/errors.h"
#include "gdamn/experiments.h"

namespace gdamn {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string graph;
  std::string config;
  std::string seeds = "0";
  std::string out;
  std::string ratios;
  std::string samples;
  std::string from;
  std::vector<std::string> overrides;
  bool overwrite = false;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

template <typename T>
T number(const char* field, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(field, "cannot parse '" + text + "'");
  }
  return v;
}

// "0-9", "1,4,7" or a mix such as "0-2,10".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : split(text, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(number<std::uint64_t>("seeds", part));
      continue;
    }
    const auto lo = number<std::uint64_t>("seeds", part.substr(0, dash));
    const auto hi = number<std::uint64_t>("seeds", part.substr(dash + 1));
    if (hi < lo) throw ConfigError("seeds", "empty range '" + part + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw ConfigError("seeds", "no seeds given");
  return seeds;
}

std::string default_out_dir(const std::string& command) {
  const char* root = std::getenv("GDAMN_OUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << command << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::path dir = base / stamp.str();
  for (int k = 1; fs::exists(dir); ++k) {
    dir = base / (stamp.str() + "-" + std::to_string(k));
  }
  return dir.string();
}

ExperimentSpec build_spec(const std::string& command, const Options& o) {
  ExperimentSpec spec;
  spec.command = command;
  std::map<std::string, std::string> kv;
  if (!o.config.empty()) kv = read_key_values(o.config);
  for (const std::string& item : o.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("set", "expected key=value, got '" + item + "'");
    }
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  if (!o.graph.empty()) {
    spec.graph_path = o.graph;
    if (!is_graph_bundle(o.graph)) {
      // Citation-scale defaults unless the config says otherwise.
      spec.hp.hidden = 16;
      spec.hp.weight_decay_later = 1e-4;
    }
  }
  apply_config(kv, spec.hp, spec.sbm);
  spec.hp.validate();
  spec.seeds = parse_seeds(o.seeds);
  for (const std::string& r : split(o.ratios, ',')) {
    spec.ratios.push_back(number<double>("ratios", r));
  }
  for (const std::string& s : split(o.samples, ',')) {
    spec.samples.push_back(number<int>("samples", s));
  }
  spec.from_dir = o.from;
  spec.overwrite = o.overwrite;
  spec.out_dir = o.out.empty() ? default_out_dir(command) : o.out;
  return spec;
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

void run_command(const std::string& command, const ExperimentSpec& spec,
                 std::ostream& out) {
  if (command == "train") {
    const TrainSummary s = cmd_train(spec);
    out << "test accuracy " << pct(s.acc.mean) << " +- " << pct(s.acc.std)
        << " over " << s.acc.n << " seeds\n";
  } else if (command == "fig1a") {
    std::vector<double> x, y;
    for (const Fig1aRow& r : cmd_fig1a(spec)) {
      out << "ratio " << r.ratio << ": ";
      if (r.skipped) {
        out << "skipped (infeasible)\n";
        continue;
      }
      out << pct(r.stat.mean) << " +- " << pct(r.stat.std) << " (edges "
          << r.edges << ")\n";
      x.push_back(r.ratio);
      y.push_back(r.stat.mean);
    }
    if (x.size() >= 2) out << "spearman " << spearman(x, y) << "\n";
  } else if (command == "fig1b") {
    for (const auto& [key, s] : cmd_fig1b(spec).stat) {
      out << key << ": " << pct(s.mean) << " +- " << pct(s.std) << "\n";
    }
  } else if (command == "fig4") {
    for (const Fig4Row& r : cmd_fig4(spec)) {
      out << "S=" << r.samples << ": " << pct(r.stat.mean) << " +- "
          << pct(r.stat.std) << "\n";
    }
  } else if (command == "connectivity") {
    for (const auto& [key, s] : cmd_connectivity(spec).stat) {
      out << key << " diag/offdiag ratio " << s.mean << "\n";
    }
  } else if (command == "retrain") {
    for (const RetrainRun& r : cmd_retrain(spec)) {
      out << "seed " << r.seed << " " << r.variant << ": " << pct(r.final_acc)
          << " (90% at epoch " << r.epochs_to_90 << ")\n";
    }
  }
  out << "wrote " << spec.out_dir << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Decoupled hard/soft attention GNN trained with EM"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "EM training over a seed sweep"},
      {"fig1a", "vanilla GCN accuracy vs inter-class edge ratio"},
      {"fig1b", "PR/NR attention under original and oracle adjacency"},
      {"fig4", "stable re-weighting vs averaged structure samples"},
      {"connectivity", "class-pair connectivity of learned weights"},
      {"retrain", "GCN on original, oracle and learned weights"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--graph", o.graph,
                    "graph bundle or citation manifest (default: SBM)");
    sub->add_option("--config", o.config, "key=value config file");
    sub->add_option("--set", o.overrides, "override one config key (key=value)");
    sub->add_option("--seeds", o.seeds, "seed list, e.g. 0-9 or 1,2,3")
        ->capture_default_str();
    sub->add_option("--out", o.out,
                    "output directory (default $GDAMN_OUT_ROOT/<command>-<time>)");
    sub->add_flag("--overwrite", o.overwrite, "reuse a non-empty output directory");
    if (name == "fig1a") {
      sub->add_option("--ratios", o.ratios, "inter-class ratios, e.g. 0,0.5,1");
    }
    if (name == "fig4") {
      sub->add_option("--samples", o.samples, "sample counts, 0 = stable");
    }
    if (name == "retrain") {
      sub->add_option("--from", o.from, "output directory of a train run")
          ->required();
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const ExperimentSpec spec = build_spec(command, o);
    run_command(command, spec, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace gdamn
