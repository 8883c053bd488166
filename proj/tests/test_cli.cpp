#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "lingsel/cli.hpp"
#include "support.hpp"

using namespace lingsel;
using testing_support::slurp;
using testing_support::spit;
using testing_support::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lingsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(LINGSEL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

void write_scores(const std::string& path, const std::vector<std::pair<std::string, double>>& s) {
  std::string text;
  for (const auto& [id, v] : s) text += nlohmann::json{{"id", id}, {"score", v}}.dump() + "\n";
  spit(path, text);
}

class CliTest : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  std::string f(const std::string& name) const { return dir.file(name); }

  void synth(std::size_t n_target, std::size_t n_other, std::size_t dim, const char* sep = "10") {
    ASSERT_EQ(run_cli({"synth", "--seed", "3", "--n-target", std::to_string(n_target), "--n-other",
                       std::to_string(n_other), "--dim", std::to_string(dim), "--separation", sep,
                       "--out-target", f("t.jsonl"), "--out-other", f("o.jsonl")})
                  .code,
              0);
  }
};

}  // namespace

TEST_F(CliTest, ExitCodesPartitionFailures) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"--version"}).code, 0);
  synth(10, 10, 4);
  EXPECT_EQ(run_cli({"train", "--method", "svm", "--manifest", f("t.jsonl"), "--out", f("m")}).code, 1);
  EXPECT_EQ(run_cli({"train", "--method", "dsvdd", "--ae-epochs", "0", "--manifest", f("t.jsonl"),
                     "--out", f("m")})
                .code,
            1);
  EXPECT_EQ(run_cli({"train", "--method", "ocsvm", "--manifest", f("none.jsonl"), "--out", f("m")}).code,
            2);
  EXPECT_EQ(run_cli({"train", "--method", "dsvdd", "--ae-lr", "1e308", "--ae-epochs", "2",
                     "--enc-epochs", "1", "--manifest", f("t.jsonl"), "--out", f("m")})
                .code,
            3);
  EXPECT_EQ(run_binary("bogus"), 1);
  EXPECT_EQ(run_binary("train --method ocsvm --manifest " + f("none.jsonl") + " --out " + f("m")), 2);
  EXPECT_EQ(run_binary("--version"), 0);
}

TEST_F(CliTest, TrainedOcSvmPassesInvariantAuditAndNuBound) {
  synth(300, 10, 8);
  ASSERT_EQ(run_cli({"train", "--method", "ocsvm", "--manifest", f("t.jsonl"), "--out", f("oc.json")})
                .code,
            0);
  const auto model = load_model(f("oc.json"));
  const auto& m = std::get<OcSvmModel>(model.model);
  double sum = 0.0;
  for (double a : m.alphas) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, m.box());
    sum += a;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_TRUE(std::filesystem::exists(f("oc.json.run.json")));

  ASSERT_EQ(run_cli({"score", "--model", f("oc.json"), "--manifest", f("t.jsonl"), "--out",
                     f("s.jsonl")})
                .code,
            0);
  const auto rows = read_jsonl(f("s.jsonl"));
  ASSERT_EQ(rows.size(), 300u);
  EXPECT_EQ(rows[0]["id"], "tgt-000000");
  std::size_t negative = 0;
  for (const auto& r : rows) negative += r["score"].get<double>() < 0.0;
  EXPECT_LE(negative, static_cast<std::size_t>(std::ceil(0.01 * 300)) + 1);
}

TEST_F(CliTest, ScoreEdgeCases) {
  synth(40, 10, 6);
  ASSERT_EQ(run_cli({"train", "--method", "iforest", "--trees", "10", "--manifest", f("t.jsonl"),
                     "--out", f("if.json")})
                .code,
            0);
  spit(f("empty.jsonl"), "");
  const auto r = run_cli({"score", "--model", f("if.json"), "--manifest", f("empty.jsonl"), "--out",
                          f("e.jsonl")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(slurp(f("e.jsonl")), "");
  EXPECT_NE(r.err.find("scored 0"), std::string::npos);

  spit(f("bad.jsonl"), "{\"id\":\"x\",\"duration_sec\":1,\"embedding\":[1,2]}\n");
  EXPECT_EQ(run_cli({"score", "--model", f("if.json"), "--manifest", f("bad.jsonl"), "--out",
                     f("b.jsonl")})
                .code,
            2);

  for (int i = 0; i < 2; ++i) {
    ASSERT_EQ(run_cli({"score", "--model", f("if.json"), "--manifest", f("o.jsonl"), "--out",
                       f("o" + std::to_string(i) + ".jsonl")})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(f("o0.jsonl")), slurp(f("o1.jsonl")));
}

TEST_F(CliTest, EnsembleHandTraceSelectsB) {
  spit(f("pool.jsonl"),
       "{\"id\":\"a\",\"duration_sec\":10}\n{\"id\":\"b\",\"duration_sec\":10}\n"
       "{\"id\":\"c\",\"duration_sec\":10}\n");
  write_scores(f("u1"), {{"a", 3}, {"b", 2}, {"c", 1}});
  write_scores(f("u2"), {{"c", 3}, {"b", 2}, {"a", 1}});
  write_scores(f("u3"), {{"b", 3}, {"a", 2}, {"c", 1}});
  const auto r = run_cli({"select", "--strategy", "ensemble", "--scores",
                          f("u1") + "," + f("u2") + "," + f("u3"), "--pool", f("pool.jsonl"),
                          "--hours", "0.0025", "--l0", "1", "--out", f("sel.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_jsonl(f("sel.jsonl"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["id"], "b");
  EXPECT_EQ(rows[0]["rank"], 1);
  EXPECT_EQ(rows[0]["cumulative_sec"], 10.0);
  EXPECT_EQ(rows[1]["summary"]["passes"], 2);
  EXPECT_EQ(rows[1]["summary"]["exhausted"], false);

  // Wrong list count, unknown ids, and partial coverage.
  EXPECT_EQ(run_cli({"select", "--strategy", "ensemble", "--scores", f("u1"), "--pool",
                     f("pool.jsonl"), "--hours", "1", "--out", f("x")})
                .code,
            1);
  write_scores(f("u4"), {{"a", 3}, {"zz", 2}, {"c", 1}});
  EXPECT_EQ(run_cli({"select", "--strategy", "single", "--scores", f("u4"), "--pool",
                     f("pool.jsonl"), "--hours", "1", "--out", f("x")})
                .code,
            2);
  write_scores(f("u5"), {{"a", 3}});
  EXPECT_EQ(run_cli({"select", "--strategy", "single", "--scores", f("u5"), "--pool",
                     f("pool.jsonl"), "--hours", "1", "--out", f("x")})
                .code,
            2);
  spit(f("ex.txt"), "b\nc\n");
  ASSERT_EQ(run_cli({"select", "--strategy", "single", "--scores", f("u5"), "--pool",
                     f("pool.jsonl"), "--hours", "1", "--exclude", f("ex.txt"), "--out", f("x")})
                .code,
            0);
}

TEST_F(CliTest, OversizedBudgetTakesPoolWithWarning) {
  synth(5, 20, 3);
  const auto r = run_cli({"select", "--strategy", "random", "--seed", "7", "--pool", f("o.jsonl"),
                          "--hours", "10", "--out", f("r1.jsonl")});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto rows = read_jsonl(f("r1.jsonl"));
  EXPECT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows.back()["summary"]["exhausted"], true);
  run_cli({"select", "--strategy", "random", "--seed", "7", "--pool", f("o.jsonl"), "--hours", "0.05",
           "--out", f("r2.jsonl")});
  run_cli({"select", "--strategy", "random", "--seed", "7", "--pool", f("o.jsonl"), "--hours", "0.05",
           "--out", f("r3.jsonl")});
  EXPECT_EQ(slurp(f("r2.jsonl")), slurp(f("r3.jsonl")));
}

TEST_F(CliTest, EvaluateReportsAndIsStable) {
  synth(120, 120, 16);
  ASSERT_EQ(run_cli({"train", "--method", "ocsvm", "--manifest", f("t.jsonl"), "--out", f("oc.json")})
                .code,
            0);
  ASSERT_EQ(run_cli({"train", "--method", "iforest", "--trees", "50", "--manifest", f("t.jsonl"),
                     "--out", f("if.json")})
                .code,
            0);
  const auto r = run_cli({"evaluate", "--model", f("oc.json"), "--model", f("if.json"), "--pos",
                          f("t.jsonl"), "--neg", f("o.jsonl"), "--out", f("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Pos."), std::string::npos);
  EXPECT_NE(r.out.find("Neg."), std::string::npos);
  const auto rep = nlohmann::json::parse(slurp(f("rep.json")));
  ASSERT_EQ(rep["classifiers"].size(), 2u);
  for (const auto& c : rep["classifiers"]) {
    EXPECT_LE(c["pos_err"].get<double>(), 0.1);
    EXPECT_LE(c["neg_err"].get<double>(), 0.1);
  }
  EXPECT_EQ(slurp(f("rep.json.txt")), r.out);
  const auto first = slurp(f("rep.json"));
  run_cli({"evaluate", "--model", f("oc.json"), "--model", f("if.json"), "--pos", f("t.jsonl"),
           "--neg", f("o.jsonl"), "--out", f("rep.json")});
  EXPECT_EQ(slurp(f("rep.json")), first);

  const auto same = run_cli({"evaluate", "--model", f("oc.json"), "--pos", f("o.jsonl"), "--neg",
                             f("o.jsonl"), "--out", f("same.json")});
  ASSERT_EQ(same.code, 0);
  const auto sj = nlohmann::json::parse(slurp(f("same.json")));
  EXPECT_EQ(sj["classifiers"][0]["pos_err"].get<double>() + sj["classifiers"][0]["neg_err"].get<double>(),
            1.0);
  spit(f("empty.jsonl"), "");
  EXPECT_EQ(run_cli({"evaluate", "--model", f("oc.json"), "--pos", f("empty.jsonl"), "--neg",
                     f("o.jsonl")})
                .code,
            2);
}

TEST_F(CliTest, SynthIsByteIdenticalAndLoadable) {
  ASSERT_EQ(run_cli({"synth", "--seed", "1", "--n-target", "5", "--n-other", "5", "--out-target",
                     f("a1"), "--out-other", f("b1")})
                .code,
            0);
  ASSERT_EQ(run_cli({"synth", "--seed", "1", "--n-target", "5", "--n-other", "5", "--out-target",
                     f("a2"), "--out-other", f("b2")})
                .code,
            0);
  EXPECT_EQ(slurp(f("a1")), slurp(f("a2")));
  EXPECT_EQ(slurp(f("b1")), slurp(f("b2")));
  EXPECT_EQ(load_manifest(f("a1")).dim, 512u);
  const auto run = nlohmann::json::parse(slurp(f("a1.run.json")));
  EXPECT_EQ(run["command"], "synth");
  EXPECT_EQ(run["seeds"]["synth"], 1);
  EXPECT_EQ(run["outputs"][f("a1")], sha256_file(f("a1")));
}

TEST_F(CliTest, BinaryEmbeddingsFeedTraining) {
  const auto suite = gen_synthetic_suite(2, 30, 5, 8, 1.0);
  write_binary_embeddings(suite.target, f("m.jsonl"), f("e.lemb"));
  ASSERT_EQ(run_cli({"train", "--method", "iforest", "--trees", "5", "--manifest", f("m.jsonl"),
                     "--blob", f("e.lemb"), "--normalize", "--out", f("if.json")})
                .code,
            0);
  EXPECT_TRUE(load_model(f("if.json")).normalize);
}
