#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "transweather/image.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tw_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << "stage1.dim = 8\nstage2.dim = 16\nstage3.dim = 16\nstage4.dim = 32\n"
                                        "stage1.depth = 1\nstage2.depth = 1\nstage3.depth = 1\nstage4.depth = 1\n"
                                        "stage2.heads = 2\nstage3.heads = 2\nstage4.heads = 4\n"
                                        "ffn_mult = 2\nnum_queries = 4\ndecoder_depth = 1\n"
                                        "tail_channels = 16,8,8,3\nbatch_size = 2\nepochs = 2\n"
                                        "halve_epochs = 1\nval_fraction = 0\n";
  }

  CliResult run(const std::string& args) const {
    const auto log = dir_ / "out.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" TW_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(log);
    return r;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  // Value printed after "<key>\t" on its own line.
  static std::string field(const std::string& out, const std::string& key) {
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(key + "\t", 0) == 0) return line.substr(key.size() + 1);
    }
    return {};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsEveryFlag) {
  const auto top = run("--help");
  EXPECT_EQ(top.code, 0);
  for (const char* f : {"--config", "--seed", "--verbose", "gen", "train", "restore", "eval", "gradcheck", "attn-dump"})
    EXPECT_NE(top.out.find(f), std::string::npos) << f;
  const std::pair<const char*, std::vector<const char*>> subs[] = {
      {"gen", {"--count", "--mix", "--size", "--min-intensity", "--max-intensity", "--out"}},
      {"train", {"--manifest", "--out", "--resume", "--log", "--steps"}},
      {"restore", {"--checkpoint", "--input", "--output"}},
      {"eval", {"--checkpoint", "--manifest"}},
      {"gradcheck", {"--inject-fault", "--size", "--coords"}},
      {"attn-dump", {"--checkpoint", "--input", "--out-dir", "--queries"}},
  };
  for (const auto& [name, flags] : subs) {
    const auto r = run(std::string(name) + " --help");
    EXPECT_EQ(r.code, 0) << name;
    for (const char* f : flags) EXPECT_NE(r.out.find(f), std::string::npos) << name << " " << f;
  }
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("gen --count 6 --out d --bogus").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("gen --out d --mix nonsense").code, 2);
  EXPECT_EQ(run("gen --count 0 --out d").code, 2);
  std::ofstream(dir_ / "bad.cfg") << "no_such_key = 1\n";
  const auto r = run("--config bad.cfg gen --count 2 --out d");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("no_such_key"), std::string::npos) << r.out;
}

TEST_F(Cli, MissingFilesExitOneNamingThePath) {
  const auto r = run("eval --manifest nowhere/manifest.tsv");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("nowhere/manifest.tsv"), std::string::npos) << r.out;
  const auto c = run("restore --checkpoint absent.ckpt --input x.twimg --output y.twimg");
  EXPECT_EQ(c.code, 1);
  EXPECT_NE(c.out.find("absent.ckpt"), std::string::npos) << c.out;
  EXPECT_EQ(run("--config missing.cfg gen --count 2 --out d").code, 1);
}

TEST_F(Cli, GenIsByteIdenticalOnRerun) {
  ASSERT_EQ(run("gen --count 6 --mix uniform --seed 7 --size 32 --out a").code, 0);
  const auto r = run("gen --count 6 --mix uniform --seed 7 --size 32 --out b");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(field(r.out, "raindrop"), "2");
  EXPECT_EQ(field(r.out, "rain_fog"), "2");
  EXPECT_EQ(field(r.out, "snow"), "2");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / fs::relative(e.path(), dir_ / "a"))) << e.path();
  }
  EXPECT_EQ(files, 13u);
}

TEST_F(Cli, PaperMixProportions) {
  const auto r = run("gen --count 200 --mix paper --size 16 --out p");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(field(r.out, "raindrop"), "11");
  EXPECT_EQ(std::stoi(field(r.out, "rain_fog")) + std::stoi(field(r.out, "snow")), 189);
  EXPECT_NEAR(std::stoi(field(r.out, "snow")), 94.5, 0.5);
}

TEST_F(Cli, EvalCleanPairsGivesSentinel) {
  ASSERT_EQ(run("gen --count 3 --size 32 --out d").code, 0);
  std::ifstream in(dir_ / "d/manifest.tsv");
  std::ofstream out(dir_ / "d/same.tsv");
  std::string clean, degraded, kind, seed;
  while (in >> clean >> degraded >> kind >> seed) out << clean << '\t' << clean << '\t' << kind << '\t' << seed << '\n';
  out.close();
  const auto r = run("eval --manifest d/same.tsv");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(field(r.out, "overall.psnr"), "inf");
  EXPECT_EQ(field(r.out, "overall.ssim"), "1.000000");
  for (const char* k : {"raindrop", "rain_fog", "snow"}) EXPECT_EQ(field(r.out, std::string(k) + ".count"), "1");
}

TEST_F(Cli, TrainRestoreEvalAttnDump) {
  ASSERT_EQ(run("gen --count 6 --size 32 --seed 3 --out d").code, 0);
  const auto t = run("--config tiny.cfg train --manifest d/manifest.tsv --out m.ckpt --log log.tsv");
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(dir_ / "m.ckpt.cfg"));
  EXPECT_NE(slurp(dir_ / "log.tsv").find("epoch\t1"), std::string::npos);

  // The sidecar config is picked up without --config.
  const auto r = run("restore --checkpoint m.ckpt --input d/degraded/00000.twimg --output r.twimg");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto restored = tw::read_twimg(dir_ / "r.twimg");
  EXPECT_TRUE(restored.same_dims(tw::read_twimg(dir_ / "d/degraded/00000.twimg")));
  ASSERT_EQ(run("restore --checkpoint m.ckpt --input d/degraded/00000.twimg --output r2.twimg").code, 0);
  EXPECT_EQ(slurp(dir_ / "r.twimg"), slurp(dir_ / "r2.twimg"));
  ASSERT_EQ(run("restore --checkpoint m.ckpt --input d/degraded/00000.twimg --output r.png").code, 0);
  EXPECT_TRUE(tw::read_png(dir_ / "r.png").same_dims(restored));

  const auto e = run("eval --checkpoint m.ckpt --manifest d/manifest.tsv");
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_EQ(field(e.out, "overall.count"), "6");
  EXPECT_FALSE(field(e.out, "snow.psnr").empty());

  const auto a = run("attn-dump --checkpoint m.ckpt --input d/degraded/00000.twimg --out-dir maps --queries all");
  ASSERT_EQ(a.code, 0) << a.out;
  std::istringstream lines(a.out);
  std::string line;
  int dumped = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("query\t", 0) != 0) continue;
    ++dumped;
    std::istringstream f(line);
    std::string tag, idx, label, sum;
    f >> tag >> idx >> label >> sum;
    EXPECT_NEAR(std::stod(sum), 1.0, 1e-6);
  }
  EXPECT_EQ(dumped, 4);
  for (int k = 0; k < 4; ++k) {
    const auto map = tw::read_png(dir_ / "maps" / ("query_" + std::to_string(k) + ".png"));
    EXPECT_EQ(map.height, 32u);
  }
  EXPECT_EQ(run("attn-dump --checkpoint m.ckpt --input d/degraded/00000.twimg --out-dir maps --queries 4").code, 2);
}

TEST_F(Cli, AttentionMapsDifferAcrossKinds) {
  ASSERT_EQ(run("gen --count 3 --size 32 --seed 5 --out d").code, 0);
  ASSERT_EQ(run("--config tiny.cfg train --manifest d/manifest.tsv --out m.ckpt --log log.tsv").code, 0);
  std::ifstream in(dir_ / "d/manifest.tsv");
  std::string clean, degraded, kind, seed;
  std::vector<std::string> inputs;
  while (in >> clean >> degraded >> kind >> seed) inputs.push_back("d/" + degraded);
  ASSERT_EQ(inputs.size(), 3u);
  std::vector<tw::Image> maps;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto out = "maps" + std::to_string(i);
    ASSERT_EQ(run("attn-dump --checkpoint m.ckpt --input " + inputs[i] + " --out-dir " + out + " --queries 0").code, 0);
    maps.push_back(tw::read_png(dir_ / out / "query_0.png"));
  }
  double diff = 0;
  for (std::size_t i = 0; i < maps[0].size(); ++i)
    diff = std::max({diff, double(std::abs(maps[0].data[i] - maps[1].data[i])),
                     double(std::abs(maps[0].data[i] - maps[2].data[i]))});
  EXPECT_GT(diff, 0.0);
}

TEST_F(Cli, ResumedTrainingMatchesStraightRun) {
  ASSERT_EQ(run("gen --count 4 --size 32 --seed 2 --out d").code, 0);
  ASSERT_EQ(run("--config tiny.cfg train --manifest d/manifest.tsv --out full.ckpt --log a.tsv").code, 0);
  ASSERT_EQ(run("--config tiny.cfg train --manifest d/manifest.tsv --out half.ckpt --steps 1 --log b.tsv").code, 0);
  ASSERT_EQ(
      run("--config tiny.cfg train --manifest d/manifest.tsv --resume half.ckpt --out rest.ckpt --log c.tsv").code, 0);
  EXPECT_EQ(slurp(dir_ / "full.ckpt"), slurp(dir_ / "rest.ckpt"));
}

TEST_F(Cli, GradcheckExitCodes) {
  const auto ok = run("gradcheck");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("network"), std::string::npos);
  EXPECT_EQ(ok.out.find("faulty_tanh"), std::string::npos);
  const auto bad = run("gradcheck --inject-fault");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("faulty_tanh"), std::string::npos);
}
