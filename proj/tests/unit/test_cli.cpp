#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(LCMKIT_BIN) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path only_subdir(const fs::path& root, const std::string& prefix) {
  fs::path found;
  int count = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind(prefix, 0) == 0) {
      found = e.path();
      ++count;
    }
  }
  EXPECT_EQ(count, 1) << prefix << " under " << root;
  return found;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("lcmkit-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string at(const std::string& rel) const { return (root_ / rel).string(); }
  fs::path root_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --no-such-flag").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, GradcheckExitCodes) {
  const auto ok = run("gradcheck --preset \"\" --instances 2");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const auto bad = run("gradcheck --inject-bug --instances 2");
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_NE(bad.out.find("injected_sign_flip"), std::string::npos) << bad.out;
}

TEST_F(Cli, ConfigKeysAreChecked) {
  std::ofstream(at("bad.json")) << R"({"steps": 3, "stepz": 4})";
  auto r = run("train --synthetic 4 --synthetic-size 16 --preset toy16 --config " + at("bad.json") + " --out " +
               at("runs"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("stepz"), std::string::npos) << r.out;
  std::ofstream(at("typed.json")) << R"({"steps": "three"})";
  EXPECT_EQ(run("train --synthetic 4 --config " + at("typed.json")).code, 1);
  EXPECT_EQ(run("train --synthetic 4 --config " + at("missing.json")).code, 1);
}

TEST_F(Cli, FlagOverridesFileOverridesDefault) {
  std::ofstream(at("cfg.json")) << R"({"steps": 3, "batch_size": 2, "preset": "toy16"})";
  const std::string base = "train --synthetic 4 --synthetic-size 16 --config " + at("cfg.json");
  auto r = run(base + " --out " + at("a"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string eff_a = slurp(only_subdir(at("a"), "train-") / "effective-config.json");
  EXPECT_NE(eff_a.find("\"steps\": 3"), std::string::npos) << eff_a;
  EXPECT_NE(eff_a.find("\"lr_glo\": 10.0"), std::string::npos) << eff_a;
  r = run(base + " --steps 2 --out " + at("b"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string eff_b = slurp(only_subdir(at("b"), "train-") / "effective-config.json");
  EXPECT_NE(eff_b.find("\"steps\": 2"), std::string::npos) << eff_b;
  EXPECT_NE(eff_b.find("\"batch_size\": 2"), std::string::npos) << eff_b;
  EXPECT_NE(only_subdir(at("a"), "train-").filename(), only_subdir(at("b"), "train-").filename());
}

TEST_F(Cli, InvalidValuesExitWithValidationCode) {
  EXPECT_EQ(run("train --synthetic 4 --synthetic-size 16 --preset toy16 --batch-size 0 --out " + at("r")).code, 1);
  EXPECT_EQ(run("train --synthetic 4 --synthetic-size 16 --preset toy32 --steps 1 --out " + at("r")).code, 1);
  EXPECT_EQ(run("train --out " + at("r")).code, 1);
}

TEST_F(Cli, EndToEndPipeline) {
  auto r = run("synth --count 6 --size 16 --out " + at("raw"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ofstream(at("raw/readme.txt")) << "not an image";
  r = run("prepare-data --src " + at("raw") + " --manifest-out " + at("data/manifest.json") + " --shape 3,16,16");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("6 images, 2 skipped"), std::string::npos) << r.out;
  const std::string first_manifest = slurp(at("data/manifest.json"));
  r = run("prepare-data --src " + at("raw") + " --manifest-out " + at("data/manifest.json") + " --shape 3,16,16");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(at("data/manifest.json")), first_manifest);

  const std::string train = "train --manifest " + at("data/manifest.json") +
                            " --preset toy16 --steps 6 --batch-size 3 --epochs 0 --seed 4 --out " + at("runs");
  r = run(train);
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path run_dir = only_subdir(at("runs"), "train-");
  const std::string csv = slurp(run_dir / "loss.csv");
  EXPECT_EQ(csv.rfind("epoch,split,loss\n", 0), 0u) << csv;
  ASSERT_TRUE(fs::exists(run_dir / "checkpoint.lcmk"));
  // same config, same directory, identical bytes
  r = run(train);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(only_subdir(at("runs"), "train-") / "loss.csv"), csv);

  r = run("restore --checkpoint " + (run_dir / "checkpoint.lcmk").string() + " --input " + at("raw") +
          " --task inpaint --mask center:6 --steps 5 --deterministic --out " + at("rest"));
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path rest = only_subdir(at("rest"), "restore-");
  EXPECT_TRUE(fs::exists(rest / "restored" / "toy_00000.png")) << r.out;
  EXPECT_TRUE(fs::exists(rest / "masks" / "toy_00000.png"));
  EXPECT_TRUE(fs::exists(rest / "traces" / "toy_00000.csv"));

  r = run("eval --restored " + (rest / "restored").string() + " --truth " + at("raw") + " --masks " +
          (rest / "masks").string() + " --task inpaint --mode manifold --out " + at("eval.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string eval = slurp(at("eval.csv"));
  EXPECT_EQ(eval.rfind("id,task,mode,mse_full,mse_known,mse_hole,lap_l1\n", 0), 0u) << eval;
  EXPECT_EQ(std::count(eval.begin(), eval.end(), '\n'), 8) << eval;  // header, 6 rows, mean

  // a GLO-only mode on an LCM checkpoint is rejected before any work
  r = run("restore --checkpoint " + (run_dir / "checkpoint.lcmk").string() + " --input " + at("raw") +
          " --mode glo --steps 2 --out " + at("rest2"));
  EXPECT_EQ(r.code, 1) << r.out;
  r = run("restore --checkpoint " + (run_dir / "checkpoint.lcmk").string() + " --input " + at("raw") +
          " --task sr --factor 3 --steps 2 --out " + at("rest3"));
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST_F(Cli, CorruptCheckpointIsAValidationError) {
  std::ofstream(at("junk.lcmk")) << "JUNKJUNKJUNKJUNK";
  std::ofstream(at("x.png")) << "";
  const auto r = run("restore --checkpoint " + at("junk.lcmk") + " --input " + at("x.png"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("magic"), std::string::npos) << r.out;
}
