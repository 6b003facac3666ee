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

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "shopgraph/pipeline.hpp"
#include "test_util.hpp"

namespace shopgraph {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

PipelineConfig fixture_config(const fs::path& out) {
  PipelineConfig c;
  c.input_path = testing::fixture_csv().string();
  c.output_dir = out.string();
  return c;
}

/// Every file under `root` keyed by relative path. The manifest is kept with
/// its timings removed.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") {
      auto j = nlohmann::json::parse(slurp(e.path()));
      for (auto& [name, s] : j.at("stages").items()) s.erase("elapsed_ms");
      out[rel] = j.dump();
    } else {
      out[rel] = slurp(e.path());
    }
  }
  return out;
}

std::size_t line_count(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class FullRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("pipeline-full");
    run_all(fixture_config(dir_->path()));
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static PipelineConfig config() { return fixture_config(dir_->path()); }
  static fs::path root() { return dir_->path(); }

  static testing::TempDir* dir_;
};
testing::TempDir* FullRun::dir_ = nullptr;

TEST_F(FullRun, ManifestHasEveryStageAndDigestsVerify) {
  const auto m = load_manifest(config());
  ASSERT_EQ(m.stages.size(), 7u);
  for (const auto& s : stage_names()) ASSERT_TRUE(m.stages.contains(s)) << s;
  EXPECT_EQ(m.config_digest, sha256_hex(slurp(root() / "config.json")));
  std::size_t checked = 0;
  for (const auto& [name, rec] : m.stages) {
    EXPECT_FALSE(rec.outputs.empty()) << name;
    for (const auto& [rel, digest] : rec.outputs) {
      const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : root() / rel;
      EXPECT_EQ(sha256_file(p), digest) << rel;
      ++checked;
    }
    for (const auto& [rel, digest] : rec.inputs) {
      const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : root() / rel;
      EXPECT_EQ(sha256_file(p), digest) << name << " input " << rel;
    }
  }
  EXPECT_GT(checked, 30u);
  EXPECT_TRUE(m.stages.at("rfm").inputs.contains("ingest/transactions.csv"));
  EXPECT_TRUE(m.stages.at("rfm").metrics.contains("lambda"));
  EXPECT_TRUE(m.stages.at("select-features").metrics.contains("alpha_best"));
  EXPECT_TRUE(m.stages.at("grid-search").metrics.contains("k"));
  EXPECT_TRUE(m.stages.at("cluster").metrics.contains("sizes"));
}

TEST_F(FullRun, SecondInvocationIsByteIdentical) {
  const auto first = snapshot(root());
  // rerun in the same directory so config.json (which records output_dir) matches
  fs::remove_all(root());
  run_all(config());
  const auto second = snapshot(root());
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [rel, bytes] : first) {
    ASSERT_TRUE(second.contains(rel)) << rel;
    EXPECT_TRUE(second.at(rel) == bytes) << rel;
  }
}

TEST_F(FullRun, RerunningOneStageReproducesDigests) {
  const auto before = load_manifest(config()).stages.at("factorize").outputs;
  const auto rec = run_stage("factorize", config());
  EXPECT_EQ(rec.outputs, before);
}

TEST_F(FullRun, PlotSchemas) {
  const auto grid = root() / "plots" / "grid-mse.csv";
  const auto header = slurp(grid).substr(0, slurp(grid).find('\n'));
  EXPECT_EQ(header, "k,alpha_m,l1_ratio,mse");
  EXPECT_EQ(line_count(grid), line_count(root() / "grid-search" / "grid.csv"));

  const auto summary = nlohmann::json::parse(slurp(root() / "cluster" / "summary.json"));
  EXPECT_EQ(line_count(root() / "plots" / "cluster-sizes.csv"), 1u + summary.at("clusters").get<std::size_t>() + 1u);

  const auto curve = root() / "plots" / "feature-curve.csv";
  EXPECT_EQ(line_count(curve), line_count(root() / "select-features" / "curve.csv"));
  for (const auto& id : plot_ids()) EXPECT_TRUE(fs::exists(root() / "plots" / (id + ".csv"))) << id;

  try {
    emit_plot_data(config(), "fig-99");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const auto& id : plot_ids()) EXPECT_NE(msg.find(id), std::string::npos) << id;
  }
}

TEST_F(FullRun, SimilarityQueryOnExportedGraph) {
  const auto customer = nlohmann::json::parse(slurp(root() / "export-graph" / "purchase" / "nodes.jsonl").substr(
      0, slurp(root() / "export-graph" / "purchase" / "nodes.jsonl").find('\n')));
  const std::string key = customer.at("_key");
  const auto r = query_similar(config(), "customers/" + key, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_GE(r[0].second, r[1].second);
  EXPECT_THROW(query_similar(config(), "planets/x", 3), Error);
  EXPECT_THROW(query_similar(config(), "customers/" + key, 3, "nope"), Error);
}

TEST(Stages, MissingUpstreamNamesTheStage) {
  const testing::TempDir d("pipeline-order");
  const auto cfg = fixture_config(d.path());
  try {
    run_stage("rfm", cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'ingest'"), std::string::npos) << e.what();
  }
  run_stage("ingest", cfg);
  try {
    run_stage("factorize", cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'select-features'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_stage("bake", cfg), Error);
}

TEST(Stages, IngestRequiresInput) {
  const testing::TempDir d("pipeline-noinput");
  PipelineConfig cfg;
  cfg.output_dir = d.path().string();
  EXPECT_THROW(run_stage("ingest", cfg), Error);
}

TEST(Config, CanonicalRoundTrip) {
  PipelineConfig c;
  c.seed = 7;
  c.lasso.alpha_grid = {0.5, 0.1};
  c.nmf.k = 4;
  c.as_of = "2011-12-10";
  const auto text = canonical_config_text(c);
  const auto back = config_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(canonical_config_text(back), text);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.nmf.k, 4);
}

TEST(Config, Overrides) {
  auto c = apply_override(PipelineConfig{}, "lasso.folds=10");
  EXPECT_EQ(c.lasso.folds, 10);
  c = apply_override(c, "nmf.alpha_grid=[0, 0.5]");
  EXPECT_EQ(c.nmf.alpha_grid, (std::vector<double>{0, 0.5}));
  c = apply_override(c, "output_dir=somewhere");
  EXPECT_EQ(c.output_dir, "somewhere");
  EXPECT_THROW(apply_override(c, "lasso.fold=10"), Error);
  EXPECT_THROW(apply_override(c, "nokey"), Error);
  EXPECT_THROW(apply_override(c, "lasso.folds=\"ten\""), Error);
}

TEST(Config, UnknownKeysRejected) {
  auto j = config_to_json(PipelineConfig{});
  j["cluster"]["min_size"] = 3;
  EXPECT_THROW(config_from_json(j), Error);
}

int run(const std::string& args, std::string* out = nullptr) {
  const testing::TempDir d("cli-out");
  const std::string cmd = std::string(SHOPGRAPH_CLI_PATH) + " " + args + " > " + (d / "out.txt").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (out) *out = slurp(d / "out.txt");
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Cli, Smoke) {
  const testing::TempDir d("cli-run");
  const std::string base = "--out-dir " + d.path().string() + " ";
  std::string out;

  EXPECT_EQ(run(base + "rfm", &out), 1);
  EXPECT_NE(out.find("'ingest'"), std::string::npos) << out;

  EXPECT_EQ(run(base + "ingest --input " + testing::fixture_csv().string(), &out), 0) << out;
  EXPECT_NE(out.find("frequent"), std::string::npos);
  EXPECT_EQ(run(base + "rfm --w-recency 0.3 --w-frequency 0.3 --w-monetary 0.4", &out), 0) << out;

  EXPECT_EQ(run(base + "--set lasso.folds=3 show-config", &out), 0);
  const auto cfg = config_from_json(nlohmann::json::parse(out));
  EXPECT_EQ(cfg.lasso.folds, 3);

  EXPECT_EQ(run(base + "plot-data --kind nonsense", &out), 1);
  EXPECT_NE(out.find("rfm-scores"), std::string::npos);
  EXPECT_EQ(run(base + "plot-data --kind rfm-scores", &out), 0) << out;
  EXPECT_TRUE(fs::exists(d / "plots" / "rfm-scores.csv"));

  EXPECT_NE(run("frobnicate"), 0);
}

}  // namespace
}  // namespace shopgraph
