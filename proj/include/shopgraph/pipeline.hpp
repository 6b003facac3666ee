// Copyright 2026 The shopgraph Authors.
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

// Stage orchestration: one JSON config, plain-file artifacts under the output
// directory, and a manifest of SHA-256 digests per stage.
//
// Layout of <output_dir>:
//   config.json                  canonical config of the last stage run
//   manifest.json                per-stage inputs/outputs digests, metrics, timing
//   ingest/                      purchases.{triplets.csv,rows.txt,cols.txt}, transactions.csv,
//                                segments.csv, items.csv, rejects.jsonl, summary.json
//   rfm/                         scores.csv, attributes.csv, boxcox.json
//   select-features/             cv_curve.csv, lasso_coefficients.csv, curve.csv, ranking.csv,
//                                predicted_actual.csv, pp_plot.csv, selected.*, summary.json
//   grid-search/                 grid.csv, best.json
//   factorize/                   W.csv, H.csv, dictionary.csv, top_items.csv, trace.csv, factorization.json
//   cluster/                     labels.csv, sizes.csv, centroids.csv, summary.json
//   export-graph/<kind>/         nodes.jsonl, edges.jsonl, graph.graphml
//   plots/<plot id>.csv

#ifndef SHOPGRAPH_PIPELINE_HPP
#define SHOPGRAPH_PIPELINE_HPP

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "shopgraph/cluster.hpp"
#include "shopgraph/graph.hpp"
#include "shopgraph/ingest.hpp"
#include "shopgraph/lasso.hpp"
#include "shopgraph/nmf.hpp"
#include "shopgraph/rfm.hpp"

namespace shopgraph {

namespace fs = std::filesystem;
using nlohmann::json;

struct PipelineConfig {
  std::string input_path;
  std::string output_dir = "shopgraph-run";
  std::uint64_t seed = 42;

  ColumnSchema schema;
  CleaningRules cleaning;
  SegmentationConfig segmentation;

  RfmWeights weights;
  LambdaSearch lambda_search;
  std::optional<std::string> as_of;  // default: one day after the last cleaned transaction

  struct Lasso {
    std::vector<double> alpha_grid;  // empty: log-spaced grid from the data
    std::size_t grid_count = 100;
    double grid_ratio = 1e-4;
    int folds = 5;
    double holdout_fraction = 0.2;
    double slack = 0.05;
    double tol = 1e-7;
    int max_iter = 10000;
    std::optional<std::uint64_t> seed;  // falls back to the global seed
  } lasso;

  struct Nmf {
    int k = 5;
    double alpha_m = 1.0;
    double l1_ratio = 0.1;
    bool use_grid_best = true;
    int k_min = 2;
    int k_max = 20;
    std::vector<double> alpha_grid{0.0, 0.1, 0.5, 1.0, 2.0};
    std::vector<double> l1_grid{0.0, 0.1, 0.5, 0.9, 1.0};
    double holdout_fraction = 1.0 / 3.0;
    double tol = 1e-6;
    int max_iter = 500;
    std::string init = "random";  // random | nndsvd
    int restarts = 3;  // random inits per grid cell
    unsigned threads = 0;
    std::size_t top_items = 10;
    std::optional<std::uint64_t> seed;
  } nmf;

  struct Cluster {
    int min_cluster_size = 5;
    int min_samples = 5;
    bool row_normalize = false;
    bool allow_single_cluster = false;
  } cluster;

  struct Graph {
    std::string kind = "both";  // purchase | affinity | both
    double affinity_threshold = 0.0;
    std::string out_dir;        // empty: <output_dir>/export-graph
  } graph;
};

// ---------------------------------------------------------------------------
// Config serialisation

namespace detail {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) out.reset();
  else out = j.at(key).get<T>();
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw Error("config: '" + std::string(where) + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw Error("config: unknown key '" + std::string(where.empty() ? "" : std::string(where) + ".") + k + "'");
}

}  // namespace detail

inline json config_to_json(const PipelineConfig& c) {
  json j;
  j["input_path"] = c.input_path;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["schema"] = {{"invoice_id", c.schema.invoice_id}, {"stock_code", c.schema.stock_code},
                 {"description", c.schema.description}, {"quantity", c.schema.quantity},
                 {"invoice_date", c.schema.invoice_date}, {"unit_price", c.schema.unit_price},
                 {"customer_id", c.schema.customer_id}, {"country", c.schema.country},
                 {"delimiter", std::string(1, c.schema.delimiter)}};
  j["cleaning"] = {{"cancellation_prefix", c.cleaning.cancellation_prefix},
                   {"excluded_stock_codes", c.cleaning.excluded_stock_codes}};
  j["segmentation"] = {{"frequent_min_purchases", c.segmentation.frequent_min_purchases},
                       {"wholesale_quantity_threshold", c.segmentation.wholesale_quantity_threshold}};
  j["rfm"] = {{"weights", {{"recency", c.weights.recency}, {"frequency", c.weights.frequency},
                           {"monetary", c.weights.monetary}}},
              {"lambda_lo", c.lambda_search.lo},
              {"lambda_hi", c.lambda_search.hi},
              {"lambda_tol", c.lambda_search.tol},
              {"as_of", detail::opt_json(c.as_of)}};
  j["lasso"] = {{"alpha_grid", c.lasso.alpha_grid}, {"grid_count", c.lasso.grid_count},
                {"grid_ratio", c.lasso.grid_ratio}, {"folds", c.lasso.folds},
                {"holdout_fraction", c.lasso.holdout_fraction}, {"slack", c.lasso.slack},
                {"tol", c.lasso.tol}, {"max_iter", c.lasso.max_iter}, {"seed", detail::opt_json(c.lasso.seed)}};
  j["nmf"] = {{"k", c.nmf.k}, {"alpha_m", c.nmf.alpha_m}, {"l1_ratio", c.nmf.l1_ratio},
              {"use_grid_best", c.nmf.use_grid_best}, {"k_min", c.nmf.k_min}, {"k_max", c.nmf.k_max},
              {"alpha_grid", c.nmf.alpha_grid}, {"l1_grid", c.nmf.l1_grid},
              {"holdout_fraction", c.nmf.holdout_fraction}, {"tol", c.nmf.tol}, {"max_iter", c.nmf.max_iter},
              {"init", c.nmf.init}, {"restarts", c.nmf.restarts}, {"threads", c.nmf.threads}, {"top_items", c.nmf.top_items},
              {"seed", detail::opt_json(c.nmf.seed)}};
  j["cluster"] = {{"min_cluster_size", c.cluster.min_cluster_size}, {"min_samples", c.cluster.min_samples},
                  {"row_normalize", c.cluster.row_normalize},
                  {"allow_single_cluster", c.cluster.allow_single_cluster}};
  j["graph"] = {{"kind", c.graph.kind}, {"affinity_threshold", c.graph.affinity_threshold},
                {"out_dir", c.graph.out_dir}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are an error.
inline PipelineConfig config_from_json(const json& j) {
  using detail::read_key;
  using detail::read_opt;
  PipelineConfig c;
  detail::reject_unknown(j, {"input_path", "output_dir", "seed", "schema", "cleaning", "segmentation", "rfm",
                             "lasso", "nmf", "cluster", "graph"},
                         "");
  read_key(j, "input_path", c.input_path);
  read_key(j, "output_dir", c.output_dir);
  read_key(j, "seed", c.seed);
  if (j.contains("schema")) {
    const auto& s = j.at("schema");
    detail::reject_unknown(s, {"invoice_id", "stock_code", "description", "quantity", "invoice_date", "unit_price",
                               "customer_id", "country", "delimiter"},
                           "schema");
    read_key(s, "invoice_id", c.schema.invoice_id);
    read_key(s, "stock_code", c.schema.stock_code);
    read_key(s, "description", c.schema.description);
    read_key(s, "quantity", c.schema.quantity);
    read_key(s, "invoice_date", c.schema.invoice_date);
    read_key(s, "unit_price", c.schema.unit_price);
    read_key(s, "customer_id", c.schema.customer_id);
    read_key(s, "country", c.schema.country);
    if (s.contains("delimiter")) {
      const auto d = s.at("delimiter").get<std::string>();
      if (d.size() != 1) throw Error("config: schema.delimiter must be one character");
      c.schema.delimiter = d[0];
    }
  }
  if (j.contains("cleaning")) {
    const auto& s = j.at("cleaning");
    detail::reject_unknown(s, {"cancellation_prefix", "excluded_stock_codes"}, "cleaning");
    read_key(s, "cancellation_prefix", c.cleaning.cancellation_prefix);
    read_key(s, "excluded_stock_codes", c.cleaning.excluded_stock_codes);
  }
  if (j.contains("segmentation")) {
    const auto& s = j.at("segmentation");
    detail::reject_unknown(s, {"frequent_min_purchases", "wholesale_quantity_threshold"}, "segmentation");
    read_key(s, "frequent_min_purchases", c.segmentation.frequent_min_purchases);
    read_key(s, "wholesale_quantity_threshold", c.segmentation.wholesale_quantity_threshold);
  }
  if (j.contains("rfm")) {
    const auto& s = j.at("rfm");
    detail::reject_unknown(s, {"weights", "lambda_lo", "lambda_hi", "lambda_tol", "as_of"}, "rfm");
    if (s.contains("weights")) {
      const auto& w = s.at("weights");
      detail::reject_unknown(w, {"recency", "frequency", "monetary"}, "rfm.weights");
      read_key(w, "recency", c.weights.recency);
      read_key(w, "frequency", c.weights.frequency);
      read_key(w, "monetary", c.weights.monetary);
    }
    read_key(s, "lambda_lo", c.lambda_search.lo);
    read_key(s, "lambda_hi", c.lambda_search.hi);
    read_key(s, "lambda_tol", c.lambda_search.tol);
    read_opt(s, "as_of", c.as_of);
  }
  if (j.contains("lasso")) {
    const auto& s = j.at("lasso");
    detail::reject_unknown(s, {"alpha_grid", "grid_count", "grid_ratio", "folds", "holdout_fraction", "slack", "tol",
                               "max_iter", "seed"},
                           "lasso");
    read_key(s, "alpha_grid", c.lasso.alpha_grid);
    read_key(s, "grid_count", c.lasso.grid_count);
    read_key(s, "grid_ratio", c.lasso.grid_ratio);
    read_key(s, "folds", c.lasso.folds);
    read_key(s, "holdout_fraction", c.lasso.holdout_fraction);
    read_key(s, "slack", c.lasso.slack);
    read_key(s, "tol", c.lasso.tol);
    read_key(s, "max_iter", c.lasso.max_iter);
    read_opt(s, "seed", c.lasso.seed);
  }
  if (j.contains("nmf")) {
    const auto& s = j.at("nmf");
    detail::reject_unknown(s, {"k", "alpha_m", "l1_ratio", "use_grid_best", "k_min", "k_max", "alpha_grid", "l1_grid",
                               "holdout_fraction", "tol", "max_iter", "init", "restarts", "threads", "top_items", "seed"},
                           "nmf");
    read_key(s, "k", c.nmf.k);
    read_key(s, "alpha_m", c.nmf.alpha_m);
    read_key(s, "l1_ratio", c.nmf.l1_ratio);
    read_key(s, "use_grid_best", c.nmf.use_grid_best);
    read_key(s, "k_min", c.nmf.k_min);
    read_key(s, "k_max", c.nmf.k_max);
    read_key(s, "alpha_grid", c.nmf.alpha_grid);
    read_key(s, "l1_grid", c.nmf.l1_grid);
    read_key(s, "holdout_fraction", c.nmf.holdout_fraction);
    read_key(s, "tol", c.nmf.tol);
    read_key(s, "max_iter", c.nmf.max_iter);
    read_key(s, "init", c.nmf.init);
    read_key(s, "restarts", c.nmf.restarts);
    read_key(s, "threads", c.nmf.threads);
    read_key(s, "top_items", c.nmf.top_items);
    read_opt(s, "seed", c.nmf.seed);
  }
  if (j.contains("cluster")) {
    const auto& s = j.at("cluster");
    detail::reject_unknown(s, {"min_cluster_size", "min_samples", "row_normalize", "allow_single_cluster"}, "cluster");
    read_key(s, "min_cluster_size", c.cluster.min_cluster_size);
    read_key(s, "min_samples", c.cluster.min_samples);
    read_key(s, "row_normalize", c.cluster.row_normalize);
    read_key(s, "allow_single_cluster", c.cluster.allow_single_cluster);
  }
  if (j.contains("graph")) {
    const auto& s = j.at("graph");
    detail::reject_unknown(s, {"kind", "affinity_threshold", "out_dir"}, "graph");
    read_key(s, "kind", c.graph.kind);
    read_key(s, "affinity_threshold", c.graph.affinity_threshold);
    read_key(s, "out_dir", c.graph.out_dir);
  }
  return c;
}

/// Sorted keys, two-space indent, trailing newline.
inline std::string canonical_config_text(const PipelineConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline PipelineConfig load_config(const std::string& path) {
  try {
    return config_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
}

/// Applies "dotted.key=value" to a config. The value is read as JSON when it
/// parses, otherwise as a string.
inline PipelineConfig apply_override(const PipelineConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw Error("override must look like key.path=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json j = config_to_json(c);
  json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(part)) throw Error("override: unknown key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  *node = value;
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw Error("override " + key + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Digests and manifest

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p.string())); }

struct StageRecord {
  std::string name;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to the output dir -> sha256
  json metrics = json::object();
  double elapsed_ms = 0.0;
};

struct RunManifest {
  std::string config_digest;
  std::map<std::string, StageRecord> stages;

  json to_json() const {
    json j;
    j["config_digest"] = config_digest;
    j["stages"] = json::object();
    for (const auto& [name, s] : stages)
      j["stages"][name] = {{"inputs", s.inputs}, {"outputs", s.outputs}, {"metrics", s.metrics},
                           {"elapsed_ms", s.elapsed_ms}};
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.config_digest = j.value("config_digest", "");
    if (j.contains("stages"))
      for (const auto& [name, s] : j.at("stages").items()) {
        StageRecord r;
        r.name = name;
        r.inputs = s.at("inputs").get<std::map<std::string, std::string>>();
        r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
        r.metrics = s.at("metrics");
        r.elapsed_ms = s.at("elapsed_ms").get<double>();
        m.stages.emplace(name, std::move(r));
      }
    return m;
  }
};

inline fs::path manifest_path(const PipelineConfig& c) { return fs::path(c.output_dir) / "manifest.json"; }

inline RunManifest load_manifest(const PipelineConfig& c) {
  const auto p = manifest_path(c);
  if (!fs::exists(p)) return {};
  return RunManifest::from_json(json::parse(read_file(p.string())));
}

// ---------------------------------------------------------------------------
// Delimited text helpers

namespace detail {

inline std::vector<std::vector<std::string>> read_table(const fs::path& p, std::vector<std::string>* header = nullptr) {
  const std::string text = read_file(p.string());
  CsvReader reader(text, ',');
  CsvRecord rec;
  std::vector<std::vector<std::string>> rows;
  if (!reader.next(rec)) throw Error("empty table: " + p.string());
  if (header) *header = rec.fields;
  while (reader.next(rec)) {
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
    rows.push_back(rec.fields);
  }
  return rows;
}

inline double to_double(const std::string& s, const fs::path& where) {
  double v = 0;
  if (!parse_double(s, v)) throw Error("bad number '" + s + "' in " + where.string());
  return v;
}

inline std::string csv_row(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += csv_field(f);
    first = false;
  }
  out += '\n';
  return out;
}

/// Dense matrix with a header row (corner label + column ids) and a leading id column.
inline std::string format_dense(std::string_view corner, const std::vector<std::string>& row_ids,
                                const std::vector<std::string>& col_ids, const Eigen::MatrixXd& m) {
  std::string out = csv_field(corner);
  for (const auto& c : col_ids) out += "," + csv_field(c);
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += csv_field(row_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += "," + format_double(m(i, j));
    out += '\n';
  }
  return out;
}

inline Eigen::MatrixXd read_dense(const fs::path& p, std::vector<std::string>& row_ids,
                                  std::vector<std::string>& col_ids) {
  std::vector<std::string> header;
  const auto rows = read_table(p, &header);
  if (header.empty()) throw Error("dense matrix without header: " + p.string());
  col_ids.assign(header.begin() + 1, header.end());
  row_ids.clear();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(col_ids.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) throw Error("ragged row in " + p.string());
    row_ids.push_back(rows[i][0]);
    for (std::size_t j = 0; j < col_ids.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = to_double(rows[i][j + 1], p);
  }
  return m;
}

inline std::string format_transactions(const std::vector<CleanedTransaction>& txns) {
  std::string out = "customer_id,stock_code,invoice_id,invoice_date,quantity,unit_price,spend\n";
  for (const auto& t : txns)
    out += csv_row({t.customer_id, t.stock_code, t.invoice_id, format_timestamp(t.invoice_date),
                    std::to_string(t.quantity), format_double(t.unit_price), format_double(t.spend)});
  return out;
}

inline std::vector<CleanedTransaction> parse_transactions(const fs::path& p) {
  std::vector<CleanedTransaction> out;
  for (const auto& r : read_table(p)) {
    if (r.size() != 7) throw Error("malformed transaction row in " + p.string());
    CleanedTransaction t;
    t.customer_id = r[0];
    t.stock_code = r[1];
    t.invoice_id = r[2];
    const auto ts = parse_timestamp(r[3]);
    if (!ts) throw Error("bad timestamp '" + r[3] + "' in " + p.string());
    t.invoice_date = *ts;
    if (!parse_int64(r[4], t.quantity)) throw Error("bad quantity in " + p.string());
    t.unit_price = to_double(r[5], p);
    t.spend = to_double(r[6], p);
    out.push_back(std::move(t));
  }
  return out;
}

inline Factorization read_factorization(const fs::path& dir) {
  Factorization f;
  std::vector<std::string> w_cols, h_rows;
  f.w = read_dense(dir / "W.csv", f.row_ids, w_cols);
  f.h = read_dense(dir / "H.csv", h_rows, f.col_ids);
  if (f.w.cols() != f.h.rows()) throw Error("factorization files disagree on k: " + dir.string());
  return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"ingest", "rfm", "select-features", "grid-search",
                                              "factorize", "cluster", "export-graph"};
  return names;
}

namespace detail {

/// Tracks files read and written by one stage.
class StageContext {
 public:
  StageContext(const PipelineConfig& cfg, std::string name) : root_(cfg.output_dir) {
    record_.name = std::move(name);
    fs::create_directories(root_ / record_.name);
  }

  fs::path dir() const { return root_ / record_.name; }
  fs::path root() const { return root_; }

  /// Fails with the name of the stage that produces `rel` when it is absent.
  fs::path need(const std::string& producer, const std::string& rel) {
    const fs::path p = root_ / rel;
    if (!fs::exists(p))
      throw Error("stage '" + record_.name + "' needs output of stage '" + producer + "' (missing " + p.string() +
                  "); run '" + producer + "' first");
    record_.inputs[rel] = sha256_file(p);
    return p;
  }

  std::optional<fs::path> maybe(const std::string& rel) {
    const fs::path p = root_ / rel;
    if (!fs::exists(p)) return std::nullopt;
    record_.inputs[rel] = sha256_file(p);
    return p;
  }

  void external_input(const fs::path& p) { record_.inputs[p.string()] = sha256_file(p); }

  void write(const fs::path& p, std::string_view content) {
    fs::create_directories(p.parent_path());
    write_file(p.string(), content);
    record_.outputs[key_of(p)] = sha256_hex(content);
  }

  void write_local(const std::string& name, std::string_view content) { write(dir() / name, content); }

  json& metrics() { return record_.metrics; }
  StageRecord& record() { return record_; }

 private:
  std::string key_of(const fs::path& p) const {
    const fs::path rel = p.lexically_relative(root_);
    if (rel.empty() || *rel.begin() == "..") return fs::absolute(p).lexically_normal().string();
    return rel.generic_string();
  }

  fs::path root_;
  StageRecord record_;
};

inline void stage_ingest(const PipelineConfig& cfg, StageContext& ctx) {
  if (cfg.input_path.empty()) throw Error("ingest: no input path configured");
  ctx.external_input(cfg.input_path);
  const ParseResult parsed = parse_invoice_csv(cfg.input_path, cfg.schema);
  const auto txns = clean_transactions(parsed.lines, cfg.cleaning);
  if (txns.empty()) throw Error("ingest: no transactions survive cleaning");
  const auto segments = segment_customers(txns, cfg.segmentation);
  const auto members = members_of(segments, Segment::Frequent);
  if (members.empty()) throw Error("ingest: no frequent shoppers under the segmentation rules");
  const PurchaseMatrix p = build_incidence_matrix(txns, members);

  std::set<std::string> member_set(members.begin(), members.end());
  std::vector<CleanedTransaction> member_txns;
  Timestamp last = txns.front().invoice_date;
  for (const auto& t : txns) {
    last = std::max(last, t.invoice_date);
    if (member_set.contains(t.customer_id)) member_txns.push_back(t);
  }

  ctx.write_local("purchases.triplets.csv", format_triplets(p));
  ctx.write_local("purchases.rows.txt", format_id_list(p.row_ids()));
  ctx.write_local("purchases.cols.txt", format_id_list(p.col_ids()));
  ctx.write_local("transactions.csv", format_transactions(member_txns));
  ctx.write_local("rejects.jsonl", format_reject_report(parsed.rejects));

  std::string seg = "customer_id,segment,n_purchases\n";
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : segments) {
    seg += csv_row({s.customer_id, std::string(to_string(s.segment)), std::to_string(s.n_purchases)});
    ++counts[static_cast<int>(s.segment)];
  }
  ctx.write_local("segments.csv", seg);

  const auto desc = item_descriptions(parsed.lines);
  std::string items = "stock_code,description\n";
  for (const auto& code : p.col_ids()) {
    auto it = desc.find(code);
    items += csv_row({code, it == desc.end() ? std::string() : it->second});
  }
  ctx.write_local("items.csv", items);

  json summary{{"lines", parsed.lines.size()},
               {"rejects", parsed.rejects.size()},
               {"cleaned_transactions", txns.size()},
               {"customers", segments.size()},
               {"frequent", counts[static_cast<int>(Segment::Frequent)]},
               {"infrequent", counts[static_cast<int>(Segment::Infrequent)]},
               {"wholesale", counts[static_cast<int>(Segment::Wholesale)]},
               {"items", p.cols()},
               {"nnz", p.nnz()},
               {"last_transaction", format_timestamp(last)}};
  ctx.write_local("summary.json", summary.dump(2) + "\n");
  ctx.metrics() = summary;
}

inline void stage_rfm(const PipelineConfig& cfg, StageContext& ctx) {
  const auto txns = parse_transactions(ctx.need("ingest", "ingest/transactions.csv"));
  const json summary = json::parse(read_file(ctx.need("ingest", "ingest/summary.json").string()));
  Timestamp as_of;
  if (cfg.as_of) {
    const auto ts = parse_timestamp(*cfg.as_of);
    if (!ts) throw Error("rfm: bad as_of date '" + *cfg.as_of + "'");
    as_of = *ts;
  } else {
    const auto last = parse_timestamp(summary.at("last_transaction").get<std::string>());
    if (!last) throw Error("rfm: bad last_transaction in ingest summary");
    as_of = *last + std::chrono::days(1);
  }
  const auto attrs = compute_rfm_attributes(txns, as_of);
  const auto pop = score_customers(attrs, cfg.weights, cfg.lambda_search);

  std::string a = "customer_id,recency,frequency,monetary\n";
  for (const auto& r : attrs)
    a += csv_row({r.customer_id, format_double(r.recency), format_double(r.frequency), format_double(r.monetary)});
  ctx.write_local("attributes.csv", a);
  std::string s = "customer_id,gamma,gamma_prime\n";
  std::vector<double> g, gp;
  for (const auto& r : pop.scores) {
    s += csv_row({r.customer_id, format_double(r.gamma), format_double(r.gamma_prime)});
    g.push_back(r.gamma);
    gp.push_back(r.gamma_prime);
  }
  ctx.write_local("scores.csv", s);
  json bc{{"lambda", pop.boxcox.lambda},
          {"shift", pop.boxcox.shift},
          {"log_likelihood", pop.boxcox.log_likelihood},
          {"as_of", format_timestamp(as_of)},
          {"skewness_gamma", skewness(g)},
          {"skewness_gamma_prime", skewness(gp)},
          {"customers", pop.scores.size()}};
  ctx.write_local("boxcox.json", bc.dump(2) + "\n");
  ctx.metrics() = bc;
}

inline std::map<std::string, double> read_scores(const fs::path& p) {
  std::map<std::string, double> out;
  for (const auto& r : read_table(p)) {
    if (r.size() != 3) throw Error("malformed score row in " + p.string());
    out[r[0]] = to_double(r[2], p);
  }
  return out;
}

inline void stage_select_features(const PipelineConfig& cfg, StageContext& ctx) {
  ctx.need("ingest", "ingest/purchases.rows.txt");
  ctx.need("ingest", "ingest/purchases.cols.txt");
  ctx.need("ingest", "ingest/purchases.triplets.csv");
  const PurchaseMatrix p = read_matrix_files(ctx.root() / "ingest" / "purchases");
  const auto responses = read_scores(ctx.need("rfm", "rfm/scores.csv"));
  const DesignMatrix d = standardize(p, responses);
  if (d.cols() == 0) throw Error("select-features: every item column is constant");

  const std::uint64_t seed = cfg.lasso.seed.value_or(cfg.seed);
  const auto n = static_cast<std::size_t>(d.rows());
  const auto holdout = holdout_split(n, cfg.lasso.holdout_fraction, derive_seed(seed, "lasso.holdout"));
  const auto train_rows = complement_rows(n, holdout);
  const DesignMatrix tr = d.subset_rows(train_rows);
  const DesignMatrix te = d.subset_rows(holdout);
  const SolverConfig solver{cfg.lasso.tol, cfg.lasso.max_iter};

  const std::vector<double> grid =
      cfg.lasso.alpha_grid.empty() ? alpha_grid(tr, cfg.lasso.grid_count, cfg.lasso.grid_ratio) : cfg.lasso.alpha_grid;
  const CvResult cv = cross_validate_alpha(tr, grid, cfg.lasso.folds, derive_seed(seed, "lasso.folds"), solver);
  const LassoModel model = fit_lasso(tr, cv.alpha_best, solver);
  if (model.nonzeros() == 0)
    throw Error("select-features: the cross-validated alpha " + format_double(cv.alpha_best) + " keeps no item");

  const auto curve = drop_experiment(d, model, holdout);
  const auto ranking = select_features(curve, SelectionRule{cfg.lasso.slack});
  if (ranking.selected_count == 0) throw Error("select-features: no item improves on the intercept-only model");

  std::string cv_text = "alpha,mean_mse\n";
  for (const auto& pt : cv.curve) cv_text += format_double(pt.alpha) + "," + format_double(pt.mean_mse) + "\n";
  ctx.write_local("cv_curve.csv", cv_text);

  std::string coef = "stock_code,beta\n";
  for (auto j : model.support())
    coef += csv_row({d.col_ids[static_cast<std::size_t>(j)], format_double(model.beta(j))});
  ctx.write_local("lasso_coefficients.csv", coef);

  std::string curve_text = "n_features,mse\n";
  for (const auto& pt : curve.points) curve_text += std::to_string(pt.n_features) + "," + format_double(pt.holdout_mse) + "\n";
  ctx.write_local("curve.csv", curve_text);

  std::string rank = "stock_code,beta,rank\n";
  std::vector<std::string> selected;
  for (const auto& f : ranking.features) {
    rank += csv_row({f.stock_code, format_double(f.beta), std::to_string(f.rank)});
    selected.push_back(f.stock_code);
  }
  ctx.write_local("ranking.csv", rank);

  // holdout diagnostics of the selected refit
  const DropPoint& pt = curve.points[ranking.selected_point];
  std::map<std::string, Eigen::Index> col_of;
  for (std::size_t j = 0; j < d.col_ids.size(); ++j) col_of[d.col_ids[j]] = static_cast<Eigen::Index>(j);
  Eigen::VectorXd pred = Eigen::VectorXd::Constant(te.rows(), pt.intercept);
  for (std::size_t k = 0; k < pt.features.size(); ++k)
    pred += pt.coefficients(static_cast<Eigen::Index>(k)) * te.x.col(col_of.at(pt.features[k]));
  const DiagnosticsReport diag = residual_diagnostics(pred, te.y);
  std::string pa = "customer_id,predicted,actual\n";
  for (std::size_t i = 0; i < diag.predicted_actual.size(); ++i)
    pa += csv_row({te.row_ids[i], format_double(diag.predicted_actual[i].first),
                   format_double(diag.predicted_actual[i].second)});
  ctx.write_local("predicted_actual.csv", pa);
  std::string pp = "empirical,normal\n";
  for (const auto& [e, t] : diag.pp_points) pp += format_double(e) + "," + format_double(t) + "\n";
  ctx.write_local("pp_plot.csv", pp);

  const PurchaseMatrix sel = p.select_columns(selected);
  for (const auto& [ext, text] : {std::pair<std::string, std::string>{".triplets.csv", format_triplets(sel)},
                                  {".rows.txt", format_id_list(sel.row_ids())},
                                  {".cols.txt", format_id_list(sel.col_ids())}})
    ctx.write_local("selected" + ext, text);

  auto r2 = [](const Eigen::VectorXd& yhat, const Eigen::VectorXd& y) {
    const double ss = (y.array() - y.mean()).square().sum();
    return ss > 0 ? 1.0 - (y - yhat).squaredNorm() / ss : 0.0;
  };
  const Eigen::VectorXd tr_pred = model.predict(tr.x), te_pred = model.predict(te.x);
  json summary{{"alpha_best", cv.alpha_best},
               {"lasso_features", model.nonzeros()},
               {"lasso_converged", model.converged},
               {"lasso_train_r2", r2(tr_pred, tr.y)},
               {"lasso_test_r2", r2(te_pred, te.y)},
               {"lasso_train_mse", (tr.y - tr_pred).squaredNorm() / static_cast<double>(tr.rows())},
               {"lasso_test_mse", (te.y - te_pred).squaredNorm() / static_cast<double>(te.rows())},
               {"selected_features", ranking.selected_count},
               {"selected_holdout_mse", pt.holdout_mse},
               {"selected_train_mse", pt.train_mse},
               {"pp_max_deviation", diag.max_pp_deviation},
               {"constant_columns_dropped", d.dropped_constant.size()},
               {"train_rows", tr.rows()},
               {"holdout_rows", te.rows()}};
  ctx.write_local("summary.json", summary.dump(2) + "\n");
  ctx.metrics() = summary;
}

inline NmfInit parse_init(const std::string& s) {
  if (s == "random") return NmfInit::random_uniform;
  if (s == "nndsvd") return NmfInit::nndsvd;
  throw Error("unknown NMF init '" + s + "' (expected random or nndsvd)");
}

inline PurchaseMatrix need_selected(StageContext& ctx) {
  for (const char* ext : {".triplets.csv", ".rows.txt", ".cols.txt"})
    ctx.need("select-features", std::string("select-features/selected") + ext);
  return read_matrix_files(ctx.root() / "select-features" / "selected");
}

inline void stage_grid_search(const PipelineConfig& cfg, StageContext& ctx) {
  const PurchaseMatrix p = need_selected(ctx);
  const int k_cap = static_cast<int>(std::min(p.rows(), p.cols()));
  if (cfg.nmf.k_min < 1 || cfg.nmf.k_min > cfg.nmf.k_max) throw Error("grid-search: need 1 <= k_min <= k_max");
  const int k_hi = std::min(cfg.nmf.k_max, k_cap);
  if (k_hi < cfg.nmf.k_min)
    throw Error("grid-search: k_min " + std::to_string(cfg.nmf.k_min) + " exceeds min(n, m) = " + std::to_string(k_cap));
  GridSpec spec;
  spec.k_range = GridSpec::k_between(cfg.nmf.k_min, k_hi);
  spec.alpha_grid = cfg.nmf.alpha_grid;
  spec.l1_grid = cfg.nmf.l1_grid;
  spec.holdout_fraction = cfg.nmf.holdout_fraction;
  spec.restarts = cfg.nmf.restarts;
  spec.threads = cfg.nmf.threads;
  NmfConfig base;
  base.tol = cfg.nmf.tol;
  base.max_iter = cfg.nmf.max_iter;
  base.init = parse_init(cfg.nmf.init);
  const auto res = grid_search(p, spec, cfg.nmf.seed.value_or(cfg.seed), base);

  std::string table = "k,alpha_m,l1_ratio,mse\n";
  std::size_t failed = 0;
  for (const auto& c : res.table) {
    if (c.failed) {
      ++failed;
      continue;
    }
    table += std::to_string(c.k) + "," + format_double(c.alpha_m) + "," + format_double(c.l1_ratio) + "," +
             format_double(c.imputation_mse) + "\n";
  }
  ctx.write_local("grid.csv", table);
  json best{{"k", res.best.k},
            {"alpha_m", res.best.alpha_m},
            {"l1_ratio", res.best.l1_ratio},
            {"mse", res.best_mse},
            {"k_searched_max", k_hi},
            {"failed_cells", failed}};
  ctx.write_local("best.json", best.dump(2) + "\n");
  ctx.metrics() = best;
}

inline void stage_factorize(const PipelineConfig& cfg, StageContext& ctx) {
  const PurchaseMatrix p = need_selected(ctx);
  NmfConfig nc;
  nc.k = cfg.nmf.k;
  nc.alpha_m = cfg.nmf.alpha_m;
  nc.l1_ratio = cfg.nmf.l1_ratio;
  if (cfg.nmf.use_grid_best) {
    const json best = json::parse(read_file(ctx.need("grid-search", "grid-search/best.json").string()));
    nc.k = best.at("k").get<int>();
    nc.alpha_m = best.at("alpha_m").get<double>();
    nc.l1_ratio = best.at("l1_ratio").get<double>();
  }
  nc.tol = cfg.nmf.tol;
  nc.max_iter = cfg.nmf.max_iter;
  nc.init = parse_init(cfg.nmf.init);
  nc.seed = derive_seed(cfg.nmf.seed.value_or(cfg.seed), "nmf.init");
  const Factorization f = fit_nmf(p, nc);

  std::vector<std::string> elements;
  for (int c = 0; c < nc.k; ++c) elements.push_back(element_id(static_cast<std::size_t>(c)));
  ctx.write_local("W.csv", format_dense("customer_id", f.row_ids, elements, f.w));
  ctx.write_local("H.csv", format_dense("element", elements, f.col_ids, f.h));

  const auto dict = normalize_dictionary(f);
  std::string prof = "element,item,weight\n";
  for (Eigen::Index c = 0; c < dict.h.rows(); ++c)
    for (Eigen::Index j = 0; j < dict.h.cols(); ++j)
      prof += csv_row({elements[static_cast<std::size_t>(c)], f.col_ids[static_cast<std::size_t>(j)],
                       format_double(dict.h(c, j))});
  ctx.write_local("dictionary.csv", prof);

  std::map<std::string, std::string> desc;
  if (auto items = ctx.maybe("ingest/items.csv"))
    for (const auto& r : read_table(*items))
      if (r.size() == 2) desc[r[0]] = r[1];
  std::string top = "element,rank,stock_code,description,weight\n";
  const auto tops = top_items_per_element(dict.h, cfg.nmf.top_items);
  for (std::size_t c = 0; c < tops.size(); ++c)
    for (std::size_t r = 0; r < tops[c].size(); ++r) {
      const auto& code = f.col_ids[tops[c][r].first];
      top += csv_row({elements[c], std::to_string(r + 1), code, desc.contains(code) ? desc[code] : std::string(),
                      format_double(tops[c][r].second)});
    }
  ctx.write_local("top_items.csv", top);

  std::string trace = "iteration,objective\n";
  for (std::size_t i = 0; i < f.objective_trace.size(); ++i)
    trace += std::to_string(i) + "," + format_double(f.objective_trace[i]) + "\n";
  ctx.write_local("trace.csv", trace);

  const Eigen::MatrixXd dense = p.to_dense();
  const double pn = dense.norm();
  json info{{"k", nc.k},
            {"alpha_m", nc.alpha_m},
            {"l1_ratio", nc.l1_ratio},
            {"n_iter", f.n_iter},
            {"converged", f.converged},
            {"objective", f.objective_trace.back()},
            {"relative_error", pn > 0 ? (dense - f.reconstruct()).norm() / pn : 0.0},
            {"zero_dictionary_rows", dict.zero_rows.size()}};
  ctx.write_local("factorization.json", info.dump(2) + "\n");
  ctx.metrics() = info;
}

inline void stage_cluster(const PipelineConfig& cfg, StageContext& ctx) {
  std::vector<std::string> ids, elements;
  const Eigen::MatrixXd w = read_dense(ctx.need("factorize", "factorize/W.csv"), ids, elements);
  const Eigen::MatrixXd pts = cfg.cluster.row_normalize ? row_normalized(w) : w;
  const DensityParams params{cfg.cluster.min_cluster_size, cfg.cluster.min_samples, cfg.cluster.allow_single_cluster};
  const ClusterLabeling lab = cluster_points(pts, params);

  std::string labels = "customer_id,cluster\n";
  for (std::size_t i = 0; i < ids.size(); ++i) labels += csv_row({ids[i], std::to_string(lab.labels[i])});
  ctx.write_local("labels.csv", labels);
  std::string sizes = "cluster,size\n" + std::to_string(kNoise) + "," + std::to_string(lab.noise) + "\n";
  for (const auto& [c, s] : lab.sizes) sizes += std::to_string(c) + "," + std::to_string(s) + "\n";
  ctx.write_local("sizes.csv", sizes);
  std::string cent = "cluster,element,weight\n";
  for (const auto& prof : profile_clusters(lab, w))
    for (Eigen::Index c = 0; c < prof.normalized_centroid.size(); ++c)
      cent += std::to_string(prof.cluster_id) + "," + elements[static_cast<std::size_t>(c)] + "," +
              format_double(prof.normalized_centroid(c)) + "\n";
  ctx.write_local("centroids.csv", cent);

  json size_list = json::array();
  for (const auto& [c, s] : lab.sizes) size_list.push_back(s);
  json summary{{"clusters", lab.n_clusters}, {"noise", lab.noise}, {"sizes", size_list}, {"customers", ids.size()}};
  ctx.write_local("summary.json", summary.dump(2) + "\n");
  ctx.metrics() = summary;
}

inline fs::path graph_dir(const PipelineConfig& cfg) {
  return cfg.graph.out_dir.empty() ? fs::path(cfg.output_dir) / "export-graph" : fs::path(cfg.graph.out_dir);
}

inline void stage_export_graph(const PipelineConfig& cfg, StageContext& ctx) {
  const auto& kind = cfg.graph.kind;
  if (kind != "purchase" && kind != "affinity" && kind != "both")
    throw Error("export-graph: unknown kind '" + kind + "' (expected purchase, affinity or both)");
  const PurchaseMatrix p = need_selected(ctx);
  ctx.need("factorize", "factorize/W.csv");
  ctx.need("factorize", "factorize/H.csv");
  Factorization f = read_factorization(ctx.root() / "factorize");

  std::optional<ClusterLabeling> labels;
  if (auto lp = ctx.maybe("cluster/labels.csv")) {
    ClusterLabeling lab;
    std::map<std::string, int> by_id;
    for (const auto& r : read_table(*lp)) by_id[r.at(0)] = std::stoi(r.at(1));
    for (const auto& id : f.row_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("export-graph: cluster labels do not cover customer " + id);
      lab.labels.push_back(it->second);
    }
    labels = std::move(lab);
  }

  const fs::path out = graph_dir(cfg);
  auto emit = [&](const std::string& name, const BipartiteGraph& g) {
    const GraphDocument doc = attach_embeddings(g, f, labels ? &*labels : nullptr);
    const fs::path dir = out / name;
    ctx.write(dir / "nodes.jsonl", format_nodes_jsonl(doc));
    ctx.write(dir / "edges.jsonl", format_edges_jsonl(doc));
    ctx.write(dir / "graph.graphml", format_graphml(doc));
    ctx.metrics()[name] = {{"nodes", doc.nodes.size()}, {"edges", doc.edges.size()}};
  };
  if (kind == "purchase" || kind == "both") emit("purchase", build_purchase_graph(p));
  if (kind == "affinity" || kind == "both") emit("affinity", build_affinity_graph(f, cfg.graph.affinity_threshold));
}

}  // namespace detail

/// Runs one stage, writes its artifacts and replaces its manifest entry.
inline StageRecord run_stage(const std::string& name, const PipelineConfig& cfg) {
  using Fn = void (*)(const PipelineConfig&, detail::StageContext&);
  static const std::map<std::string, Fn> stages{
      {"ingest", detail::stage_ingest},           {"rfm", detail::stage_rfm},
      {"select-features", detail::stage_select_features}, {"grid-search", detail::stage_grid_search},
      {"factorize", detail::stage_factorize},     {"cluster", detail::stage_cluster},
      {"export-graph", detail::stage_export_graph}};
  auto it = stages.find(name);
  if (it == stages.end()) {
    std::string valid;
    for (const auto& s : stage_names()) valid += (valid.empty() ? "" : ", ") + s;
    throw Error("unknown stage '" + name + "' (valid: " + valid + ")");
  }
  fs::create_directories(cfg.output_dir);
  const std::string config_text = canonical_config_text(cfg);
  write_file((fs::path(cfg.output_dir) / "config.json").string(), config_text);

  detail::StageContext ctx(cfg, name);
  const auto t0 = std::chrono::steady_clock::now();
  it->second(cfg, ctx);
  ctx.record().elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  RunManifest m = load_manifest(cfg);
  m.config_digest = sha256_hex(config_text);
  m.stages[name] = ctx.record();
  write_file(manifest_path(cfg).string(), m.to_json().dump(2) + "\n");
  return ctx.record();
}

// ---------------------------------------------------------------------------
// Plot data

inline const std::vector<std::string>& plot_ids() {
  static const std::vector<std::string> ids{"rfm-scores",  "cv-curve",           "feature-curve",
                                            "feature-importance", "predicted-vs-actual", "pp-plot",
                                            "grid-mse",    "dictionary-profile", "cluster-sizes",
                                            "centroid-profile"};
  return ids;
}

/// Writes <output_dir>/plots/<kind>.csv from the producing stage's artifact and
/// returns its path.
inline fs::path emit_plot_data(const PipelineConfig& cfg, const std::string& kind) {
  struct Source {
    std::string stage;
    std::string file;
    std::string header;
    std::vector<std::size_t> columns;  // copied from the artifact, in order
  };
  static const std::map<std::string, Source> sources{
      {"rfm-scores", {"rfm", "rfm/scores.csv", "gamma,gamma_prime", {1, 2}}},
      {"cv-curve", {"select-features", "select-features/cv_curve.csv", "alpha,mean_mse", {0, 1}}},
      {"feature-curve", {"select-features", "select-features/curve.csv", "n_features,holdout_mse", {0, 1}}},
      {"feature-importance", {"select-features", "select-features/ranking.csv", "rank,beta,stock_code", {2, 1, 0}}},
      {"predicted-vs-actual", {"select-features", "select-features/predicted_actual.csv", "predicted,actual", {1, 2}}},
      {"pp-plot", {"select-features", "select-features/pp_plot.csv", "empirical,normal", {0, 1}}},
      {"grid-mse", {"grid-search", "grid-search/grid.csv", "k,alpha_m,l1_ratio,mse", {0, 1, 2, 3}}},
      {"dictionary-profile", {"factorize", "factorize/dictionary.csv", "element,item,weight", {0, 1, 2}}},
      {"cluster-sizes", {"cluster", "cluster/sizes.csv", "cluster,size", {0, 1}}},
      {"centroid-profile", {"cluster", "cluster/centroids.csv", "cluster,element,weight", {0, 1, 2}}}};
  auto it = sources.find(kind);
  if (it == sources.end()) {
    std::string valid;
    for (const auto& id : plot_ids()) valid += (valid.empty() ? "" : ", ") + id;
    throw Error("unknown plot id '" + kind + "' (valid: " + valid + ")");
  }
  const Source& src = it->second;
  const fs::path in = fs::path(cfg.output_dir) / src.file;
  if (!fs::exists(in))
    throw Error("plot '" + kind + "' needs output of stage '" + src.stage + "' (missing " + in.string() + ")");
  std::string out = src.header + "\n";
  for (const auto& row : detail::read_table(in)) {
    bool first = true;
    for (auto c : src.columns) {
      if (!first) out += ',';
      out += csv_field(row.at(c));
      first = false;
    }
    out += '\n';
  }
  const fs::path dst = fs::path(cfg.output_dir) / "plots" / (kind + ".csv");
  fs::create_directories(dst.parent_path());
  write_file(dst.string(), out);
  return dst;
}

/// Every stage in order, then every plot file.
inline RunManifest run_all(const PipelineConfig& cfg) {
  for (const auto& s : stage_names()) run_stage(s, cfg);
  for (const auto& id : plot_ids()) emit_plot_data(cfg, id);
  return load_manifest(cfg);
}

/// Ranked neighbours from an exported graph. `node` may be a bare key or
/// "<collection>/<key>" to pick the node kind.
inline std::vector<std::pair<std::string, double>> query_similar(const PipelineConfig& cfg, const std::string& node,
                                                                 std::size_t top_n, const std::string& graph = "purchase") {
  const fs::path dir = detail::graph_dir(cfg) / graph;
  if (!fs::exists(dir / "nodes.jsonl"))
    throw Error("query-similar needs output of stage 'export-graph' (missing " + (dir / "nodes.jsonl").string() + ")");
  const GraphDocument doc = import_graph(dir);
  std::optional<NodeKind> kind;
  std::string key = node;
  if (const auto slash = node.find('/'); slash != std::string::npos) {
    const std::string coll = node.substr(0, slash);
    for (NodeKind k : {NodeKind::customer, NodeKind::item, NodeKind::dictionary_element})
      if (collection_of(k) == coll) kind = k;
    if (!kind) throw Error("unknown collection '" + coll + "'");
    key = node.substr(slash + 1);
  }
  return similar_nodes(doc, key, top_n, kind);
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_PIPELINE_HPP
