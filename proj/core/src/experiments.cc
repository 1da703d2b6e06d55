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

#include "gdamn/experiments.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <system_error>

#include "gdamn/attention.h"
#include "gdamn/errors.h"
#include "gdamn/gnn.h"

namespace gdamn {
namespace {

namespace fs = std::filesystem;

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "cannot parse '" + text + "'");
  }
  return v;
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(seeds[k]);
  }
  return out;
}

// Creates the output directory and writes the config snapshot. Returns
// false when out_dir is empty (no files requested).
bool prepare_output(const ExperimentSpec& spec) {
  if (spec.out_dir.empty()) return false;
  const fs::path dir(spec.out_dir);
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !spec.overwrite) {
    throw ConfigError("out", "'" + spec.out_dir +
                                 "' already exists; pass --overwrite to reuse it");
  }
  fs::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create '" + spec.out_dir +
                             "': " + ec.message());
  }
  auto snapshot = spec.snapshot();
  snapshot["command"] = spec.command;
  write_key_values((dir / "config.txt").string(), snapshot);
  return true;
}

std::string out_path(const ExperimentSpec& spec, const std::string& name) {
  return (fs::path(spec.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<EpochMetric> epoch_metrics(const std::vector<EpochRecord>& h) {
  std::vector<EpochMetric> out;
  out.reserve(h.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    out.push_back({static_cast<int>(k) + 1, h[k].loss, h[k].val_acc});
  }
  return out;
}

ResultRecord make_record(const ExperimentSpec& spec, const std::string& id,
                         std::uint64_t seed) {
  ResultRecord r;
  r.experiment = id;
  r.seed = seed;
  r.hyperparams = spec.snapshot();
  return r;
}

std::string stat_columns(const Stat& s) {
  return format_number(s.mean) + ',' + format_number(s.std) + ',' +
         std::to_string(s.n);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

bool is_graph_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("graph", "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in).contains("n_nodes");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph", "'" + path + "' is not valid JSON: " + e.what());
  }
}

Graph load_graph(const std::string& path) {
  if (is_graph_bundle(path)) return read_graph_bundle(path);
  return load_citation(DatasetManifest::read(path));
}

Graph ExperimentSpec::graph_for(std::uint64_t seed) const {
  if (graph_path) return load_graph(*graph_path);
  SbmConfig c = sbm;
  c.seed = seed;
  return generate_sbm(c);
}

std::map<std::string, std::string> ExperimentSpec::snapshot() const {
  auto kv = hp.to_map();
  if (graph_path) {
    kv["graph"] = *graph_path;
  } else {
    kv["sbm.blocks"] = std::to_string(sbm.blocks);
    kv["sbm.nodes_per_block"] = std::to_string(sbm.nodes_per_block);
    kv["sbm.p_in"] = format_number(sbm.p_in);
    kv["sbm.p_out"] = format_number(sbm.p_out);
    kv["sbm.feature_dim"] = std::to_string(sbm.feature_dim);
    kv["sbm.feature_noise"] = format_number(sbm.feature_noise);
    kv["sbm.train_per_class"] = std::to_string(sbm.train_per_class);
    kv["sbm.val_per_class"] = std::to_string(sbm.val_per_class);
  }
  kv["seeds"] = seeds_text(seeds);
  return kv;
}

void apply_config(const std::map<std::string, std::string>& kv,
                  Hyperparams& hp, SbmConfig& sbm) {
  std::map<std::string, std::string> rest;
  for (const auto& [key, value] : kv) {
    if (key.rfind("sbm.", 0) != 0) {
      rest[key] = value;
    } else if (key == "sbm.blocks") {
      sbm.blocks = parse_value<int>(key, value);
    } else if (key == "sbm.nodes_per_block") {
      sbm.nodes_per_block = parse_value<int>(key, value);
    } else if (key == "sbm.p_in") {
      sbm.p_in = parse_value<double>(key, value);
    } else if (key == "sbm.p_out") {
      sbm.p_out = parse_value<double>(key, value);
    } else if (key == "sbm.feature_dim") {
      sbm.feature_dim = parse_value<int>(key, value);
    } else if (key == "sbm.feature_noise") {
      sbm.feature_noise = parse_value<double>(key, value);
    } else if (key == "sbm.train_per_class") {
      sbm.train_per_class = parse_value<int>(key, value);
    } else if (key == "sbm.val_per_class") {
      sbm.val_per_class = parse_value<int>(key, value);
    } else {
      throw ConfigError(key, "unknown SBM setting");
    }
  }
  hp = Hyperparams::from_map(rest, hp);
}

Stat summarize(const std::vector<double>& values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two equal-length samples");
  }
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const Stat sx = summarize(rx), sy = summarize(ry);
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - sx.mean) * (ry[i] - sy.mean);
  }
  cov /= static_cast<double>(rx.size() - 1);
  if (sx.std == 0.0 || sy.std == 0.0) return 0.0;
  return cov / (sx.std * sy.std);
}

TrainSummary cmd_train(const ExperimentSpec& spec) {
  spec.hp.validate();
  const bool write = prepare_output(spec);
  TrainSummary summary;
  std::vector<ResultRecord> records;
  for (std::uint64_t seed : spec.seeds) {
    const Graph g = spec.graph_for(seed);
    Trainer trainer(g, spec.hp, seed);
    trainer.run();
    const double acc = trainer.test_accuracy();
    const Connectivity conn = connectivity_strength(
        g, trainer.q_weights(), g.labels(), g.num_classes());
    summary.gdamn_acc.push_back(acc);
    summary.connectivity_ratio.push_back(conn.ratio);

    ResultRecord r = make_record(spec, "train", seed);
    r.epochs = epoch_metrics(trainer.history());
    r.test_acc = acc;
    r.metrics["val_accuracy"] =
        accuracy(trainer.predict(), g.labels(), g.splits().val);
    r.metrics["connectivity_ratio"] = conn.ratio;
    r.metrics["n_edges"] = g.n_edges();
    if (g.n_edges() > 0) r.metrics["inter_class_ratio"] = inter_class_ratio(g);
    records.push_back(std::move(r));
    if (write) {
      write_entry_weights(
          out_path(spec, "stable_weights_seed" + std::to_string(seed) + ".csv"),
          g, trainer.q_weights());
    }
  }
  summary.acc = summarize(summary.gdamn_acc);
  if (write) {
    write_results(records, out_path(spec, "results.csv"));
    write_text(out_path(spec, "aggregate.csv"),
               "metric,mean,std,n\ntest_accuracy," + stat_columns(summary.acc) +
                   "\n");
  }
  return summary;
}

std::vector<Fig1aRow> cmd_fig1a(const ExperimentSpec& spec) {
  spec.hp.validate();
  std::vector<double> ratios = spec.ratios;
  if (ratios.empty()) ratios = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("ratios", "every ratio must lie in [0, 1]");
    }
  }
  const bool write = prepare_output(spec);
  std::vector<Fig1aRow> rows;
  std::vector<ResultRecord> records;
  for (double ratio : ratios) {
    Fig1aRow row;
    row.ratio = ratio;
    std::vector<double> achieved, edges;
    for (std::uint64_t seed : spec.seeds) {
      const Graph base = spec.graph_for(seed);
      std::optional<Graph> g;
      try {
        g = perturb_inter_class(base, ratio, seed);
      } catch (const InfeasibleTargetError&) {
        row.skipped = true;
        break;
      }
      const GcnRun run = train_gcn(*g, laplacian_weights(*g), spec.hp, seed);
      row.acc.push_back(run.test_acc);
      achieved.push_back(inter_class_ratio(*g));
      edges.push_back(g->n_edges());
      ResultRecord r =
          make_record(spec, "fig1a/ratio=" + format_number(ratio), seed);
      r.epochs = epoch_metrics(run.history);
      r.test_acc = run.test_acc;
      r.metrics["achieved_ratio"] = achieved.back();
      r.metrics["n_edges"] = edges.back();
      records.push_back(std::move(r));
    }
    if (row.skipped) {
      row.acc.clear();
    } else {
      row.stat = summarize(row.acc);
      row.achieved_ratio = summarize(achieved).mean;
      row.edges = summarize(edges).mean;
    }
    rows.push_back(std::move(row));
  }
  if (write) {
    std::string csv = "ratio,achieved_ratio,n_edges,mean_acc,std,n,status\n";
    for (const Fig1aRow& r : rows) {
      csv += format_number(r.ratio) + ',';
      if (r.skipped) {
        csv += ",,,,0,skipped\n";
      } else {
        csv += format_number(r.achieved_ratio) + ',' + format_number(r.edges) +
               ',' + stat_columns(r.stat) + ",ok\n";
      }
    }
    write_text(out_path(spec, "fig1a.csv"), csv);
    write_results(records, out_path(spec, "results.csv"));
  }
  return rows;
}

Fig1bResult cmd_fig1b(const ExperimentSpec& spec) {
  spec.hp.validate();
  const bool write = prepare_output(spec);
  Fig1bResult result;
  std::vector<ResultRecord> records;
  for (std::uint64_t seed : spec.seeds) {
    const Graph original = spec.graph_for(seed);
    const Graph oracle = oracle_graph(original);
    for (const auto& [adjacency, g] :
         {std::pair<std::string, const Graph*>{"original", &original},
          {"oracle", &oracle}}) {
      for (const auto& [name, mode] :
           {std::pair<std::string, Relativity>{"PR", Relativity::kPositive},
            {"NR", Relativity::kNegative}}) {
        const GcnRun run = train_gcn(*g, pr_nr_weights(*g, g->features(), mode),
                                     spec.hp, seed);
        const std::string key = adjacency + "/" + name;
        result.acc[key].push_back(run.test_acc);
        ResultRecord r = make_record(spec, "fig1b/" + key, seed);
        r.epochs = epoch_metrics(run.history);
        r.test_acc = run.test_acc;
        records.push_back(std::move(r));
      }
    }
  }
  for (const auto& [key, values] : result.acc) result.stat[key] = summarize(values);
  if (write) {
    std::string csv = "adjacency,attention,mean_acc,std,n\n";
    for (const auto& [key, s] : result.stat) {
      const auto slash = key.find('/');
      csv += key.substr(0, slash) + ',' + key.substr(slash + 1) + ',' +
             stat_columns(s) + '\n';
    }
    write_text(out_path(spec, "fig1b.csv"), csv);
    write_results(records, out_path(spec, "results.csv"));
  }
  return result;
}

std::vector<Fig4Row> cmd_fig4(const ExperimentSpec& spec) {
  spec.hp.validate();
  std::vector<int> counts = spec.samples;
  if (counts.empty()) {
    counts.resize(11);
    std::iota(counts.begin(), counts.end(), 0);
  }
  for (int s : counts) {
    if (s < 0) throw ConfigError("samples", "sample counts must be >= 0");
  }
  const bool write = prepare_output(spec);
  std::vector<Fig4Row> rows;
  std::vector<ResultRecord> records;
  for (int s : counts) {
    Fig4Row row;
    row.samples = s;
    Hyperparams hp = spec.hp;
    hp.stable_samples = s;
    for (std::uint64_t seed : spec.seeds) {
      const Graph g = spec.graph_for(seed);
      Trainer trainer(g, hp, seed);
      trainer.run();
      row.acc.push_back(trainer.test_accuracy());
      ResultRecord r = make_record(spec, "fig4/S=" + std::to_string(s), seed);
      r.hyperparams["stable_samples"] = std::to_string(s);
      r.epochs = epoch_metrics(trainer.history());
      r.test_acc = row.acc.back();
      records.push_back(std::move(r));
    }
    row.stat = summarize(row.acc);
    rows.push_back(std::move(row));
  }
  if (write) {
    std::string csv = "samples,mean_acc,std,n\n";
    for (const Fig4Row& r : rows) {
      csv += std::to_string(r.samples) + ',' + stat_columns(r.stat) + '\n';
    }
    write_text(out_path(spec, "fig4.csv"), csv);
    write_results(records, out_path(spec, "results.csv"));
  }
  return rows;
}

ConnectivitySummary cmd_connectivity(const ExperimentSpec& spec) {
  spec.hp.validate();
  const bool write = prepare_output(spec);
  ConnectivitySummary summary;
  std::vector<ResultRecord> records;
  std::string csv = "seed,source,ratio,total_ratio\n";
  for (std::uint64_t seed : spec.seeds) {
    const Graph g = spec.graph_for(seed);
    Trainer trainer(g, spec.hp, seed);
    trainer.run();
    ResultRecord r = make_record(spec, "connectivity", seed);
    r.test_acc = trainer.test_accuracy();
    for (const auto& [source, weights] :
         {std::pair<std::string, Vector>{"laplacian", laplacian_weights(g)},
          {"uniform", uniform_weights(g)},
          {"learned", trainer.q_weights()}}) {
      const Connectivity c =
          connectivity_strength(g, weights, g.labels(), g.num_classes());
      summary.ratio[source].push_back(c.ratio);
      r.metrics["ratio_" + source] = c.ratio;
      csv += std::to_string(seed) + ',' + source + ',' + format_number(c.ratio) +
             ',' + format_number(c.total_ratio) + '\n';
      if (write) {
        write_matrix_csv(out_path(spec, "connectivity_" + source + "_seed" +
                                            std::to_string(seed) + ".csv"),
                         c.mean);
      }
    }
    records.push_back(std::move(r));
  }
  for (const auto& [key, values] : summary.ratio) {
    summary.stat[key] = summarize(values);
  }
  if (write) {
    write_text(out_path(spec, "connectivity.csv"), csv);
    write_results(records, out_path(spec, "results.csv"));
  }
  return summary;
}

std::vector<RetrainRun> cmd_retrain(const ExperimentSpec& spec) {
  spec.hp.validate();
  if (spec.from_dir.empty()) {
    throw ConfigError("from", "retrain needs the output directory of a train run");
  }
  for (std::uint64_t seed : spec.seeds) {
    const fs::path p = fs::path(spec.from_dir) /
                       ("stable_weights_seed" + std::to_string(seed) + ".csv");
    if (!fs::exists(p)) {
      throw ConfigError("from", "missing export '" + p.string() + "'");
    }
  }
  const bool write = prepare_output(spec);
  std::vector<RetrainRun> runs;
  std::vector<ResultRecord> records;
  for (std::uint64_t seed : spec.seeds) {
    const Graph g = spec.graph_for(seed);
    const Graph oracle = oracle_graph(g);
    const Vector learned = read_entry_weights(
        (fs::path(spec.from_dir) /
         ("stable_weights_seed" + std::to_string(seed) + ".csv"))
            .string(),
        g);
    const std::vector<std::pair<std::string, GcnRun>> variants = {
        {"original", train_gcn(g, laplacian_weights(g), spec.hp, seed)},
        {"oracle", train_gcn(oracle, laplacian_weights(oracle), spec.hp, seed)},
        {"learned", train_gcn(g, learned, spec.hp, seed)}};
    for (const auto& [name, run] : variants) {
      RetrainRun rr;
      rr.variant = name;
      rr.seed = seed;
      rr.final_acc = run.test_acc;
      rr.history = run.history;
      rr.epochs_to_90 = static_cast<int>(run.history.size());
      for (const EpochRecord& e : run.history) {
        if (e.test_acc >= 0.9 * run.test_acc) {
          rr.epochs_to_90 = e.epoch;
          break;
        }
      }
      ResultRecord r = make_record(spec, "retrain/" + name, seed);
      r.epochs = epoch_metrics(run.history);
      r.test_acc = run.test_acc;
      r.metrics["epochs_to_90"] = rr.epochs_to_90;
      records.push_back(std::move(r));
      runs.push_back(std::move(rr));
    }
  }
  if (write) {
    std::string curves = "seed,variant,epoch,train_loss,test_acc\n";
    for (const RetrainRun& r : runs) {
      for (const EpochRecord& e : r.history) {
        curves += std::to_string(r.seed) + ',' + r.variant + ',' +
                  std::to_string(e.epoch) + ',' + format_number(e.loss) + ',' +
                  format_number(e.test_acc) + '\n';
      }
    }
    write_text(out_path(spec, "retrain.csv"), curves);
    std::string summary = "variant,mean_final_acc,std,n,mean_epochs_to_90\n";
    for (const char* name : {"original", "oracle", "learned"}) {
      std::vector<double> acc, speed;
      for (const RetrainRun& r : runs) {
        if (r.variant == name) {
          acc.push_back(r.final_acc);
          speed.push_back(r.epochs_to_90);
        }
      }
      summary += std::string(name) + ',' + stat_columns(summarize(acc)) + ',' +
                 format_number(summarize(speed).mean) + '\n';
    }
    write_text(out_path(spec, "retrain_summary.csv"), summary);
    write_results(records, out_path(spec, "results.csv"));
  }
  return runs;
}

}  // namespace gdamn
