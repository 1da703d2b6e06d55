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

#include "gdamn/data_io.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "gdamn/errors.h"

namespace gdamn {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path + "': " + e.what());
  }
}

double parse_number(const std::string& text, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error(context + ": bad number '" + text + "'");
  }
  return v;
}

template <typename Int>
Int parse_integer(const std::string& text, const std::string& context) {
  Int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error(context + ": bad integer '" + text + "'");
  }
  return v;
}

void check_stat(const char* field, const std::optional<int>& expected,
                int actual) {
  if (expected && *expected != actual) {
    throw IntegrityError(std::string(field) + ": expected " +
                         std::to_string(*expected) + ", loaded " +
                         std::to_string(actual));
  }
}

std::vector<int> int_list(const json& j, const std::string& key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<int>>();
}

Splits splits_from_json(const json& j) {
  return {int_list(j, "train"), int_list(j, "val"), int_list(j, "test")};
}

json splits_to_json(const Splits& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

std::optional<int> optional_int(const json& j, const char* key) {
  if (j.contains(key)) return j.at(key).get<int>();
  return std::nullopt;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

DatasetManifest DatasetManifest::read(const std::string& path) {
  const json j = read_json(path);
  const fs::path dir = fs::path(path).parent_path();
  auto resolve = [&](const char* key) {
    if (!j.contains(key)) {
      throw std::runtime_error("'" + path + "': missing \"" + key + "\"");
    }
    const fs::path p = j.at(key).get<std::string>();
    return (p.is_absolute() ? p : dir / p).string();
  };
  DatasetManifest m;
  m.name = j.value("name", fs::path(path).stem().string());
  m.edges = resolve("edges");
  m.features = resolve("features");
  m.labels = resolve("labels");
  m.splits = resolve("splits");
  m.classes = optional_int(j, "classes");
  if (j.contains("expected_stats")) {
    const json& s = j.at("expected_stats");
    m.expected = {optional_int(s, "n_nodes"), optional_int(s, "n_edges"),
                  optional_int(s, "d"),       optional_int(s, "C"),
                  optional_int(s, "train"),   optional_int(s, "val"),
                  optional_int(s, "test")};
  }
  return m;
}

Graph load_citation(const DatasetManifest& m) {
  std::vector<int> labels;
  {
    std::istringstream in(read_file(m.labels));
    std::string token;
    while (in >> token) labels.push_back(parse_integer<int>(token, m.labels));
  }
  const int n = static_cast<int>(labels.size());
  int classes = m.classes.value_or(0);
  if (!m.classes) {
    for (int y : labels) classes = std::max(classes, y + 1);
  }

  std::istringstream fin(read_file(m.features));
  int rows = 0, dim = 0;
  if (!(fin >> rows >> dim)) {
    throw std::runtime_error("'" + m.features + "': missing 'n d' header");
  }
  if (rows != n) {
    throw IntegrityError("n_nodes: features list " + std::to_string(rows) +
                         " rows, labels list " + std::to_string(n));
  }
  Matrix x = Matrix::Zero(n, dim);
  int i = 0, f = 0;
  double v = 0.0;
  while (fin >> i >> f >> v) {
    if (i < 0 || i >= n || f < 0 || f >= dim) {
      throw std::runtime_error("'" + m.features + "': entry (" +
                               std::to_string(i) + ", " + std::to_string(f) +
                               ") out of range");
    }
    x(i, f) = v;
  }
  if (!fin.eof()) {
    throw std::runtime_error("'" + m.features + "': malformed triple");
  }
  for (int r = 0; r < n; ++r) {
    const double total = x.row(r).sum();
    if (total != 0.0) x.row(r) /= total;
  }

  Graph g(n, classes, read_edge_list(m.edges), std::move(x), std::move(labels),
          splits_from_json(read_json(m.splits)));
  check_stat("n_nodes", m.expected.n_nodes, g.n_nodes());
  check_stat("n_edges", m.expected.n_edges, g.n_edges());
  check_stat("d", m.expected.d, g.feature_dim());
  check_stat("C", m.expected.C, g.num_classes());
  check_stat("train", m.expected.train,
             static_cast<int>(g.splits().train.size()));
  check_stat("val", m.expected.val, static_cast<int>(g.splits().val.size()));
  check_stat("test", m.expected.test, static_cast<int>(g.splits().test.size()));
  return g;
}

Graph read_graph_bundle(const std::string& path) {
  const json j = read_json(path);
  try {
    const int n = j.at("n_nodes").get<int>();
    const int classes = j.at("C").get<int>();
    std::vector<std::pair<int, int>> edges;
    for (const json& e : j.at("edges")) {
      edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    }
    const json& fj = j.at("features");
    Matrix x;
    if (fj.is_object()) {
      x = Matrix::Zero(n, fj.at("dim").get<int>());
      for (const json& t : fj.at("triples")) {
        const int r = t.at(0).get<int>(), c = t.at(1).get<int>();
        if (r < 0 || r >= n || c < 0 || c >= x.cols()) {
          throw std::runtime_error("feature triple out of range");
        }
        x(r, c) = t.at(2).get<double>();
      }
    } else {
      const int dim = fj.empty() ? 0 : static_cast<int>(fj.at(0).size());
      if (static_cast<int>(fj.size()) != n) {
        throw GraphError("feature rows do not match n_nodes");
      }
      x = Matrix(n, dim);
      for (int r = 0; r < n; ++r) {
        if (static_cast<int>(fj.at(r).size()) != dim) {
          throw GraphError("ragged feature rows");
        }
        for (int c = 0; c < dim; ++c) x(r, c) = fj.at(r).at(c).get<double>();
      }
    }
    return Graph(n, classes, std::move(edges), std::move(x),
                 j.at("labels").get<std::vector<int>>(),
                 splits_from_json(j.at("splits")));
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path + "': " + e.what());
  }
}

void write_graph_bundle(const std::string& path, const Graph& g) {
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.u, e.v});
  json features = json::array();
  for (int r = 0; r < g.n_nodes(); ++r) {
    json row = json::array();
    for (int c = 0; c < g.feature_dim(); ++c) row.push_back(g.features()(r, c));
    features.push_back(std::move(row));
  }
  const json j = {{"n_nodes", g.n_nodes()},       {"C", g.num_classes()},
                  {"edges", std::move(edges)},    {"features", std::move(features)},
                  {"labels", g.labels()},         {"splits", splits_to_json(g.splits())}};
  write_file(path, j.dump() + "\n");
}

std::vector<std::pair<int, int>> read_edge_list(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ls(line);
    int a = 0, b = 0;
    if (!(ls >> a)) continue;  // blank line
    if (!(ls >> b)) {
      throw std::runtime_error("'" + path + "':" + std::to_string(number) +
                               ": expected 'i j'");
    }
    edges.push_back({a, b});
  }
  return edges;
}

void write_edge_list(const std::string& path, const std::vector<Edge>& edges) {
  std::string text;
  for (const Edge& e : edges) {
    text += std::to_string(e.u) + ' ' + std::to_string(e.v) + '\n';
  }
  write_file(path, text);
}

void write_entry_weights(const std::string& path, const Graph& g,
                         const Vector& weights) {
  const AggregationPattern& p = g.pattern();
  if (weights.size() != p.nnz()) {
    throw DimensionError("write_entry_weights: one weight per entry needed");
  }
  std::string text = "i,j,weight\n";
  for (int k = 0; k < p.nnz(); ++k) {
    text += std::to_string(p.row[k]) + ',' + std::to_string(p.col(k)) + ',' +
            format_number(weights(k)) + '\n';
  }
  write_file(path, text);
}

Vector read_entry_weights(const std::string& path, const Graph& g) {
  const auto rows = parse_csv(read_file(path));
  const AggregationPattern& p = g.pattern();
  Vector w = Vector::Constant(p.nnz(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) {
      throw std::runtime_error("'" + path + "': expected i,j,weight");
    }
    const int i = parse_integer<int>(rows[r][0], path);
    const int j = parse_integer<int>(rows[r][1], path);
    if (i < 0 || i >= g.n_nodes()) {
      throw std::runtime_error("'" + path + "': node out of range");
    }
    const auto begin = p.csr->col.begin() + p.csr->row_ptr[i];
    const auto end = p.csr->col.begin() + p.csr->row_ptr[i + 1];
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) {
      throw std::runtime_error("'" + path + "': (" + rows[r][0] + ", " +
                               rows[r][1] + ") is not an edge of the graph");
    }
    w(it - p.csr->col.begin()) = parse_number(rows[r][2], path);
  }
  if (!w.allFinite()) {
    throw std::runtime_error("'" + path + "': weights missing for some edges");
  }
  return w;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::string text;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += format_number(m(i, j));
    }
    text += '\n';
  }
  write_file(path, text);
}

void ResultRecord::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(test_acc)) {
    throw std::invalid_argument("record '" + experiment +
                                "': test accuracy outside [0, 1]");
  }
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    if (!in_unit(epochs[k].val_acc)) {
      throw std::invalid_argument("record '" + experiment +
                                  "': validation accuracy outside [0, 1]");
    }
    if (k > 0 && epochs[k].epoch <= epochs[k - 1].epoch) {
      throw std::invalid_argument("record '" + experiment +
                                  "': epochs not strictly increasing");
    }
  }
}

void write_results(const std::vector<ResultRecord>& records,
                   const std::string& path) {
  std::string csv = "experiment,seed,epoch,split,metric,value\n";
  json sidecar = json::array();
  for (std::size_t r = 0; r < records.size(); ++r) {
    const ResultRecord& rec = records[r];
    rec.validate();
    const std::string prefix =
        csv_field(rec.experiment) + ',' + std::to_string(rec.seed) + ',';
    auto row = [&](const std::string& epoch, const char* split,
                   const std::string& metric, const std::string& value) {
      csv += prefix + epoch + ',' + split + ',' + csv_field(metric) + ',' +
             csv_field(value) + '\n';
    };
    row("", "meta", "record", std::to_string(r));
    for (const auto& [key, value] : rec.hyperparams) row("", "config", key, value);
    json epochs = json::array();
    for (const EpochMetric& e : rec.epochs) {
      row(std::to_string(e.epoch), "train", "loss", format_number(e.train_loss));
      row(std::to_string(e.epoch), "val", "accuracy", format_number(e.val_acc));
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", format_number(e.train_loss)},
                        {"val_acc", format_number(e.val_acc)}});
    }
    row("", "test", "accuracy", format_number(rec.test_acc));
    json metrics = json::object();
    for (const auto& [key, value] : rec.metrics) {
      row("", "derived", key, format_number(value));
      metrics[key] = format_number(value);
    }
    sidecar.push_back({{"experiment", rec.experiment},
                       {"seed", rec.seed},
                       {"hyperparams", rec.hyperparams},
                       {"epochs", std::move(epochs)},
                       {"test_acc", format_number(rec.test_acc)},
                       {"metrics", std::move(metrics)}});
  }
  write_file(path, csv);
  write_file(path + ".json", sidecar.dump(2) + "\n");
}

std::vector<ResultRecord> read_results(const std::string& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows[0] != std::vector<std::string>{"experiment", "seed",
                                                          "epoch", "split",
                                                          "metric", "value"}) {
    throw std::runtime_error("'" + path + "': missing results header");
  }
  std::vector<ResultRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path + ":" + std::to_string(r + 1);
    if (row.size() != 6) throw std::runtime_error(where + ": expected 6 fields");
    const std::string& split = row[3];
    if (split == "meta") {
      ResultRecord rec;
      rec.experiment = row[0];
      rec.seed = parse_integer<std::uint64_t>(row[1], where);
      records.push_back(std::move(rec));
      continue;
    }
    if (records.empty()) throw std::runtime_error(where + ": row before record");
    ResultRecord& rec = records.back();
    if (split == "config") {
      rec.hyperparams[row[4]] = row[5];
    } else if (split == "train") {
      rec.epochs.push_back({parse_integer<int>(row[2], where),
                            parse_number(row[5], where), 0.0});
    } else if (split == "val") {
      if (rec.epochs.empty()) throw std::runtime_error(where + ": orphan val row");
      rec.epochs.back().val_acc = parse_number(row[5], where);
    } else if (split == "test") {
      rec.test_acc = parse_number(row[5], where);
    } else if (split == "derived") {
      rec.metrics[row[4]] = parse_number(row[5], where);
    } else {
      throw std::runtime_error(where + ": unknown split '" + split + "'");
    }
  }
  return records;
}

std::vector<ResultRecord> read_results_json(const std::string& path) {
  const json j = read_json(path);
  std::vector<ResultRecord> records;
  for (const json& r : j) {
    ResultRecord rec;
    rec.experiment = r.at("experiment").get<std::string>();
    rec.seed = r.at("seed").get<std::uint64_t>();
    rec.hyperparams = r.at("hyperparams").get<std::map<std::string, std::string>>();
    for (const json& e : r.at("epochs")) {
      rec.epochs.push_back(
          {e.at("epoch").get<int>(),
           parse_number(e.at("train_loss").get<std::string>(), path),
           parse_number(e.at("val_acc").get<std::string>(), path)});
    }
    rec.test_acc = parse_number(r.at("test_acc").get<std::string>(), path);
    for (const auto& [key, value] : r.at("metrics").items()) {
      rec.metrics[key] = parse_number(value.get<std::string>(), path);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace gdamn
