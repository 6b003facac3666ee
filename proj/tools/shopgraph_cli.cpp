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

// Command-line front end. Every subcommand reads the JSON config given with
// --config (defaults otherwise), applies its flags and any --set key=value
// overrides, then runs.

#include <CLI11.hpp>
#include <iostream>

#include "shopgraph/shopgraph.hpp"

namespace {

using shopgraph::PipelineConfig;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0;
    if (!shopgraph::parse_double(shopgraph::trim(item), v)) throw shopgraph::Error("bad number in list: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void print_record(const shopgraph::StageRecord& r) {
  std::cout << r.name << ": " << r.metrics.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shopgraph: frequent-shopper characterization pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  auto* opt_config = app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* opt_out = app.add_option("--out-dir", out_dir, "Run directory (config output_dir)");
  auto* opt_seed = app.add_option("--seed", seed, "Global seed");
  app.add_option("--set", overrides, "Override a config key, e.g. --set lasso.folds=10");
  (void)opt_config;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, clean and segment invoices; build the purchase matrix");
  std::string input;
  std::int64_t min_purchases = 0, wholesale = 0;
  auto* o_input = ingest->add_option("--input", input, "Invoice CSV");
  auto* o_minp = ingest->add_option("--min-purchases", min_purchases, "Distinct invoices for a frequent shopper");
  auto* o_whole = ingest->add_option("--wholesale-threshold", wholesale, "Per-invoice quantity above which a customer is wholesale");

  // rfm
  auto* rfm = app.add_subcommand("rfm", "RFM scores and Box-Cox transform");
  double w_r = 0, w_f = 0, w_m = 0, lam_lo = 0, lam_hi = 0;
  std::string as_of;
  auto* o_wr = rfm->add_option("--w-recency", w_r);
  auto* o_wf = rfm->add_option("--w-frequency", w_f);
  auto* o_wm = rfm->add_option("--w-monetary", w_m);
  auto* o_llo = rfm->add_option("--lambda-lo", lam_lo);
  auto* o_lhi = rfm->add_option("--lambda-hi", lam_hi);
  auto* o_asof = rfm->add_option("--as-of", as_of, "Reference date, YYYY-MM-DD[ HH:MM[:SS]]");

  // select-features
  auto* sel = app.add_subcommand("select-features", "LASSO with cross-validation and the drop experiment");
  std::string l_grid;
  int folds = 0;
  double slack = 0, l_holdout = 0;
  std::uint64_t l_seed = 0;
  auto* o_lgrid = sel->add_option("--alpha-grid", l_grid, "Comma-separated alphas (default: data-driven grid)");
  auto* o_folds = sel->add_option("--folds", folds);
  auto* o_lseed = sel->add_option("--seed", l_seed, "Stage seed");
  auto* o_slack = sel->add_option("--slack", slack);
  auto* o_lhold = sel->add_option("--holdout", l_holdout, "Holdout fraction");

  // factorize
  auto* fac = app.add_subcommand("factorize", "Regularized NMF of the selected purchase matrix");
  int k = 0;
  double alpha_m = 0, l1 = 0;
  std::uint64_t n_seed = 0;
  bool use_grid = false;
  auto* o_k = fac->add_option("--k", k);
  auto* o_am = fac->add_option("--alpha-m", alpha_m);
  auto* o_l1 = fac->add_option("--l1-ratio", l1);
  auto* o_nseed = fac->add_option("--seed", n_seed, "Stage seed");
  fac->add_flag("--use-grid-best", use_grid, "Take k, alpha_m and l1_ratio from the grid search");

  // grid-search
  auto* grid = app.add_subcommand("grid-search", "Masked-imputation search over k, alpha_m and l1_ratio");
  int k_min = 0, k_max = 0;
  std::string a_grid, l1_grid;
  std::uint64_t g_seed = 0;
  unsigned threads = 0;
  int restarts = 0;
  auto* o_kmin = grid->add_option("--k-min", k_min);
  auto* o_kmax = grid->add_option("--k-max", k_max);
  auto* o_agrid = grid->add_option("--alpha-grid", a_grid, "Comma-separated alpha_m values");
  auto* o_l1grid = grid->add_option("--l1-grid", l1_grid, "Comma-separated l1_ratio values");
  auto* o_gseed = grid->add_option("--seed", g_seed, "Stage seed");
  auto* o_restarts = grid->add_option("--restarts", restarts, "Random inits per grid cell");
  auto* o_threads = grid->add_option("--threads", threads, "Worker threads (0: all cores)");

  // cluster
  auto* clu = app.add_subcommand("cluster", "Density clustering of the affinity matrix");
  int mcs = 0, ms = 0;
  bool row_norm = false, single = false;
  auto* o_mcs = clu->add_option("--min-cluster-size", mcs);
  auto* o_ms = clu->add_option("--min-samples", ms);
  clu->add_flag("--row-normalize", row_norm, "Cluster unit-length affinity rows");
  clu->add_flag("--allow-single-cluster", single, "Allow one cluster covering everything");

  // export-graph
  auto* exp = app.add_subcommand("export-graph", "Write purchase and affinity graphs");
  std::string g_kind, g_out;
  double threshold = 0;
  auto* o_gkind = exp->add_option("--kind", g_kind, "purchase | affinity | both")->check(CLI::IsMember({"purchase", "affinity", "both"}));
  auto* o_gout = exp->add_option("--out", g_out, "Directory for the graph files");
  auto* o_thr = exp->add_option("--threshold", threshold, "Affinity edge threshold");

  // query-similar
  auto* qs = app.add_subcommand("query-similar", "Nodes most similar to a given node");
  std::string node, q_graph = "purchase";
  std::size_t top = 5;
  qs->add_option("--node", node, "Node key, or <collection>/<key>")->required();
  qs->add_option("--top", top);
  qs->add_option("--graph", q_graph, "purchase | affinity")->check(CLI::IsMember({"purchase", "affinity"}));
  auto* o_qout = qs->add_option("--out", g_out, "Graph directory used by export-graph");

  auto* all = app.add_subcommand("run-all", "Every stage in order, then every plot file");

  auto* plot = app.add_subcommand("plot-data", "Write plot-ready delimited files");
  std::string plot_kind = "all";
  plot->add_option("--kind", plot_kind, "Plot id, or 'all'");

  auto* show = app.add_subcommand("show-config", "Print the effective canonical config");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : shopgraph::load_config(config_path);
    if (opt_out->count()) cfg.output_dir = out_dir;
    if (opt_seed->count()) cfg.seed = seed;
    if (o_input->count()) cfg.input_path = input;
    if (o_minp->count()) cfg.segmentation.frequent_min_purchases = min_purchases;
    if (o_whole->count()) cfg.segmentation.wholesale_quantity_threshold = wholesale;
    if (o_wr->count()) cfg.weights.recency = w_r;
    if (o_wf->count()) cfg.weights.frequency = w_f;
    if (o_wm->count()) cfg.weights.monetary = w_m;
    if (o_llo->count()) cfg.lambda_search.lo = lam_lo;
    if (o_lhi->count()) cfg.lambda_search.hi = lam_hi;
    if (o_asof->count()) cfg.as_of = as_of;
    if (o_lgrid->count()) cfg.lasso.alpha_grid = parse_list(l_grid);
    if (o_folds->count()) cfg.lasso.folds = folds;
    if (o_lseed->count()) cfg.lasso.seed = l_seed;
    if (o_slack->count()) cfg.lasso.slack = slack;
    if (o_lhold->count()) cfg.lasso.holdout_fraction = l_holdout;
    if (o_k->count() || o_am->count() || o_l1->count()) cfg.nmf.use_grid_best = false;
    if (use_grid) cfg.nmf.use_grid_best = true;
    if (o_k->count()) cfg.nmf.k = k;
    if (o_am->count()) cfg.nmf.alpha_m = alpha_m;
    if (o_l1->count()) cfg.nmf.l1_ratio = l1;
    if (o_nseed->count()) cfg.nmf.seed = n_seed;
    if (o_kmin->count()) cfg.nmf.k_min = k_min;
    if (o_kmax->count()) cfg.nmf.k_max = k_max;
    if (o_agrid->count()) cfg.nmf.alpha_grid = parse_list(a_grid);
    if (o_l1grid->count()) cfg.nmf.l1_grid = parse_list(l1_grid);
    if (o_gseed->count()) cfg.nmf.seed = g_seed;
    if (o_restarts->count()) cfg.nmf.restarts = restarts;
    if (o_threads->count()) cfg.nmf.threads = threads;
    if (o_mcs->count()) cfg.cluster.min_cluster_size = mcs;
    if (o_ms->count()) cfg.cluster.min_samples = ms;
    if (row_norm) cfg.cluster.row_normalize = true;
    if (single) cfg.cluster.allow_single_cluster = true;
    if (o_gkind->count()) cfg.graph.kind = g_kind;
    if (o_gout->count() || o_qout->count()) cfg.graph.out_dir = g_out;
    if (o_thr->count()) cfg.graph.affinity_threshold = threshold;
    for (const auto& o : overrides) cfg = shopgraph::apply_override(cfg, o);

    if (show->parsed()) {
      std::cout << shopgraph::canonical_config_text(cfg);
    } else if (all->parsed()) {
      for (const auto& s : shopgraph::stage_names()) print_record(shopgraph::run_stage(s, cfg));
      for (const auto& id : shopgraph::plot_ids()) shopgraph::emit_plot_data(cfg, id);
      std::cout << "outputs in " << cfg.output_dir << "\n";
    } else if (plot->parsed()) {
      if (plot_kind == "all") {
        for (const auto& id : shopgraph::plot_ids()) {
          try {
            std::cout << shopgraph::emit_plot_data(cfg, id).string() << "\n";
          } catch (const shopgraph::Error& e) {
            std::cerr << "skipped: " << e.what() << "\n";
          }
        }
      } else {
        std::cout << shopgraph::emit_plot_data(cfg, plot_kind).string() << "\n";
      }
    } else if (qs->parsed()) {
      for (const auto& [id, score] : shopgraph::query_similar(cfg, node, top, q_graph))
        std::cout << id << "," << shopgraph::format_double(score) << "\n";
    } else {
      for (auto* sub : app.get_subcommands()) print_record(shopgraph::run_stage(sub->get_name(), cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
