#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cli_support.hpp"

namespace fs = std::filesystem;

namespace {

fs::path root() {
  static const fs::path p = [] {
    const fs::path d = fs::temp_directory_path() / "pivot_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

cli::Result pivot(const std::string& args, const std::string& tag) { return cli::run(args, root() / (tag + ".log")); }

// one small dataset shared by the train and eval cases
fs::path dataset() {
  static const fs::path out = [] {
    const fs::path o = root() / "ds";
    const auto r = pivot("collect --protocol rotate-to-stop --objects Toothpaste,Spray1 --seed 2 --out " + o.string(),
                         "ds");
    EXPECT_EQ(r.code, 0) << r.output;
    return o;
  }();
  return out / "dataset";
}

}  // namespace

TEST(Cli, NoSubcommandFails) {
  EXPECT_NE(pivot("", "none").code, 0);
  EXPECT_NE(pivot("bogus", "bogus").code, 0);
}

TEST(Cli, CollectRequiresSeed) {
  const auto r = pivot("collect --objects Toothpaste --out " + (root() / "noseed").string(), "noseed");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("seed"), std::string::npos) << r.output;
}

TEST(Cli, UnknownObjectListsNames) {
  const auto r = pivot("collect --objects Banana --seed 1 --out " + (root() / "banana").string(), "banana");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("Banana"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("Toothpaste"), std::string::npos) << r.output;
}

TEST(Cli, GoalOutOfRange) {
  const auto r = pivot("control --goal 200 --estimator oracle --out " + (root() / "g200").string(), "g200");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("200"), std::string::npos) << r.output;
}

TEST(Cli, ControlWithOracle) {
  const fs::path out = root() / "control";
  const auto r = pivot("control --goal 45 --estimator oracle --seed 3 --out " + out.string(), "control");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_TRUE(fs::exists(out / "control-manifest.json"));
  EXPECT_NE(r.output.find("TE"), std::string::npos);
}

TEST(Cli, ConfigFileAndOverrides) {
  const fs::path cfg = root() / "control.json";
  {
    std::ofstream f(cfg);
    f << R"({"goal": 30, "estimator": "oracle", "object": "Magnet"})";
  }
  const fs::path out = root() / "configured";
  const auto r = pivot("--config " + cfg.string() + " --set goal=60 control --out " + out.string(), "configured");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("goal 60"), std::string::npos) << r.output;
  std::ifstream m(out / "control-manifest.json");
  const std::string manifest{std::istreambuf_iterator<char>(m), {}};
  EXPECT_NE(manifest.find("Magnet"), std::string::npos);
}

TEST(Cli, CollectSameSeedIsByteIdentical) {
  const std::string base = "collect --protocol angle-goal --objects Pill --seed 11 --out ";
  ASSERT_EQ(pivot(base + (root() / "same_a").string(), "same_a").code, 0);
  ASSERT_EQ(pivot(base + (root() / "same_b").string() + " --jobs 2", "same_b").code, 0);
  const auto a = cli::tree(root() / "same_a"), b = cli::tree(root() / "same_b");
  EXPECT_GT(a.size(), 3u);
  EXPECT_EQ(a, b);
  ASSERT_EQ(pivot("collect --protocol angle-goal --objects Pill --seed 12 --out " + (root() / "same_c").string(), "c").code, 0);
  EXPECT_NE(a, cli::tree(root() / "same_c"));
}

TEST(Cli, TrainAndEvaluate) {
  const fs::path model = root() / "train";
  const std::string train = "train --dataset " + dataset().string() +
                            " --arch gru --hidden 8 --layers 1 --head_hidden 8 --epochs 2 --seed 1 --out ";
  auto r = pivot(train + model.string(), "train");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(model / "model.ckpt"));
  EXPECT_TRUE(fs::exists(model / "history.csv"));
  // same seed, different worker count, same bytes
  const fs::path again = root() / "train2";
  ASSERT_EQ(pivot(train + again.string() + " --jobs 2", "train2").code, 0);
  EXPECT_EQ(cli::tree(model), cli::tree(again));

  const fs::path ev = root() / "eval";
  r = pivot("eval --study closed-loop --checkpoint " + (model / "model.ckpt").string() +
                " --objects Toothpaste --approach 0 --goals 45 --out " + ev.string(),
            "eval");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(ev / "closed_loop.csv"));
  EXPECT_TRUE(fs::exists(ev / "episodes.csv"));

  const fs::path st = root() / "study";
  r = pivot("eval --study unseen-object --dataset " + dataset().string() +
                " --arch rnn --hidden 8 --layers 1 --head_hidden 8 --epochs 1 --repeats 1 --seed 1 --out " + st.string(),
            "study");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(st / "unseen-object.csv"));
}

TEST(Cli, MissingDatasetIsUsageError) {
  const auto r = pivot("train --dataset " + (root() / "nowhere").string() + " --out " + (root() / "nw").string(), "nw");
  EXPECT_EQ(r.code, 2) << r.output;
}
