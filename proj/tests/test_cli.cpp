#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dynsnetoc/io.hpp"

using namespace dynsnetoc;
namespace fs = std::filesystem;
using dynsnetoc::io::json;

namespace {

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dynsnetoc_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with the output directory set to the fixture directory; returns the exit code.
  int run(const std::string& args) const {
    const std::string cmd = std::string("\"") + DYNSNETOC_CLI + "\" " + args + " > \"" + (dir_ / "stdout.txt").string() +
                            "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
#ifdef WEXITSTATUS
    return WEXITSTATUS(status);
#else
    return status;
#endif
  }
  std::string out() const { return "--out \"" + dir_.string() + "\""; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("stats --no-such-flag"), 2);
  EXPECT_EQ(run("simulate " + out()), 2);  // model.p missing
  EXPECT_EQ(run("simulate --set model.p=1 --set model.gamma=3 " + out()), 2);
  EXPECT_EQ(run("simulate --set model.p=1 --set model.sigma=1.5 " + out()), 2);
  EXPECT_EQ(run("simulate --set model.p=1 --config \"" + path("missing.json").string() + "\" " + out()), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, DataErrorsExitWithThree) {
  EXPECT_EQ(run("stats --set model.p=1 " + out()), 3);  // no edges.tsv
  write_text(path("edges.tsv"), "# dynsnetoc-edges v1 T=1 N=4\n1\t3\t2\t1\n");
  EXPECT_EQ(run("stats --set model.p=1 " + out()), 3);
  std::ifstream err(path("stderr.txt"));
  std::string line;
  std::getline(err, line);
  EXPECT_NE(line.find("line 2"), std::string::npos) << line;
  write_text(path("corpus.txt"), "1\ta b\n3\tc d\n");
  EXPECT_EQ(run("ingest --set model.p=1 --corpus \"" + path("corpus.txt").string() + "\" " + out()), 3);
}

TEST_F(CliTest, SimulateStatsAndTailFit) {
  const std::string cfg = "--set model.p=1 --set model.alpha=500 --set model.sigma=0.5 --set sim.T=1 "
                          "--set sim.epsilon=1e-4 --set sim.seed=3 " + out();
  ASSERT_EQ(run("simulate " + cfg), 0);
  ASSERT_TRUE(fs::exists(path("edges.tsv")));
  ASSERT_TRUE(fs::exists(path("truth.csv")));
  const auto g = io::load_graph(path("edges.tsv"));

  ASSERT_EQ(run("stats " + cfg), 0);
  const json stats = io::load_json(path("stats.json"));
  ASSERT_EQ(stats.size(), 1u);
  const SummaryStats s = summary_stats(g, 0);
  EXPECT_EQ(stats[0]["active_count"].get<std::size_t>(), s.active_count);
  EXPECT_EQ(stats[0]["edge_count"].get<std::uint64_t>(), s.edge_count);

  ASSERT_EQ(run("tail-fit --t 1 " + cfg), 0);
  const json tail = io::load_json(path("tail.json"));
  ASSERT_EQ(tail.size(), 1u);
  EXPECT_NEAR(tail[0]["exponent"].get<double>(), 1.5, 0.2);
  EXPECT_EQ(run("tail-fit --t 2 " + cfg), 2);
}

TEST_F(CliTest, InferWritesOneDrawFilePerChainWithDistinctSeeds) {
  const std::string cfg = "--set model.p=1 --set model.alpha=10 --set sim.T=2 --set sim.epsilon=0.05 "
                          "--set infer.chains=2 --set infer.num_warmup=100 --set infer.num_samples=100 "
                          "--set ppc.n_rep=20 --set export.top_k=5 " + out();
  ASSERT_EQ(run("simulate " + cfg), 0);
  ASSERT_EQ(run("infer " + cfg), 0);
  const Chain c1 = io::load_draws(path("draws.chain1.csv"));
  const Chain c2 = io::load_draws(path("draws.chain2.csv"));
  EXPECT_FALSE(fs::exists(path("draws.chain3.csv")));
  EXPECT_EQ(c1.size(), 100u);
  EXPECT_EQ(c2.size(), 100u);
  EXPECT_NE(c1.log_posterior_trace(), c2.log_posterior_trace());
  const json diag = io::load_json(path("diagnostics.json"));
  ASSERT_EQ(diag["chains"].size(), 2u);
  EXPECT_NE(diag["chains"][0]["seed"], diag["chains"][1]["seed"]);

  ASSERT_EQ(run("ppc " + cfg), 0);
  EXPECT_FALSE(io::load_ppc(path("ppc.csv")).empty());
  ASSERT_EQ(run("export-affiliations " + cfg), 0);
  const auto table = io::load_affiliations(path("affiliations.csv"));
  EXPECT_EQ(table.p, 1u);
  ASSERT_EQ(run("export-sankey " + cfg), 0);
  std::ifstream sankey(path("sankey.json"));
  const auto flows = io::sankey_from_json(json::parse(sankey));
  EXPECT_FALSE(flows.empty());
}

TEST_F(CliTest, IngestBuildsTheCooccurrenceGraph) {
  write_text(path("corpus.txt"), "1\toil price rises\n1\toil exports fall\n2\tprice of oil price\n");
  ASSERT_EQ(run("ingest --set model.p=1 --corpus \"" + path("corpus.txt").string() + "\" " + out()), 0);
  const auto g = io::load_graph(path("edges.tsv"));
  EXPECT_EQ(g.num_timesteps(), 2u);
  EXPECT_EQ(g.num_nodes(), 6u);
  EXPECT_EQ(io::load_labels(path("labels.txt")),
            (std::vector<std::string>{"oil", "price", "rises", "exports", "fall", "of"}));
  ASSERT_EQ(run("stats --set model.p=1 " + out()), 0);
  const json stats = io::load_json(path("stats.json"));
  EXPECT_EQ(stats[0]["edge_count"], 6u);
  EXPECT_EQ(stats[1]["edge_count"], 3u);
}

TEST_F(CliTest, ConfigFileAndOverridesCombine) {
  write_text(path("run.json"), R"({"model": {"p": 1, "alpha": 10}, "sim": {"T": 2, "epsilon": 0.05, "seed": 4}})");
  ASSERT_EQ(run("simulate --config \"" + path("run.json").string() + "\" --set sim.T=3 " + out()), 0);
  EXPECT_EQ(io::load_graph(path("edges.tsv")).num_timesteps(), 3u);
}
