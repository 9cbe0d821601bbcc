#include "stscq/report_json.hpp"
#include "stscq/stscq.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args, const std::string& env = "")
{
    const fs::path log = fs::temp_directory_path() / ("stscq_cli_" + std::to_string(::getpid()) + ".log");
    const std::string cmd = env + " \"" STSCQ_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    fs::remove(log);
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() / ("stscq_cli_test_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string p(const std::string& rel) const { return "\"" + (dir / rel).string() + "\""; }

    void tokens(const std::string& name, int seed = 3, int samples = 256)
    {
        ASSERT_EQ(run("synth --out " + p(name) + " --separation 1 --tokens 8 --dim 4 --samples " +
                      std::to_string(samples) + " --seed " + std::to_string(seed))
                      .code,
                  0);
    }

    static constexpr const char* kFast = " --steps1 150 --steps2 150 --lambda1 5 --hidden 16 -M 4 -K 8";

    fs::path dir;
};

} // namespace

TEST_F(Cli, SynthIsDeterministicAndHonoursEnvSeed)
{
    tokens("a", 9);
    tokens("b", 9);
    EXPECT_EQ(slurp(dir / "a/tokens.stscq"), slurp(dir / "b/tokens.stscq"));
    ASSERT_EQ(run("synth --out " + p("c") + " --separation 1 --tokens 8 --dim 4 --samples 256", "STSCQ_SEED=9").code,
              0);
    EXPECT_EQ(slurp(dir / "a/tokens.stscq"), slurp(dir / "c/tokens.stscq"));

    const auto corpus = stscq::load_corpus((dir / "a/tokens.stscq").string());
    EXPECT_EQ(corpus.size(), 256u);
    std::vector<int> per_label(8, 0);
    for (int l : corpus.labels)
        ++per_label[l];
    for (int c : per_label)
        EXPECT_EQ(c, 32);

    ASSERT_EQ(run("synth --kind images --out " + p("img") + " --samples 6 --width 16 --height 16 --clusters 3").code, 0);
    const auto manifest = stscq::read_manifest((dir / "img/manifest.txt").string());
    EXPECT_EQ(manifest.paths.size(), 6u);
    EXPECT_EQ(manifest.labels[4], 1);
}

TEST_F(Cli, ExitCodes)
{
    tokens("t");
    const std::string data = " --data " + p("t/tokens.stscq");
    EXPECT_EQ(run("train" + data + " --out " + p("art") + " --stage 2").code, 2);
    EXPECT_EQ(run("train" + data + " --out " + p("art") + " --stage 3").code, 2);
    EXPECT_EQ(run("train" + data + " --out " + p("art") + " --no-such-flag").code, 2);
    std::ofstream(dir / "cfg.json") << R"({"M": 2, "colour": "blue"})";
    EXPECT_EQ(run("train" + data + " --out " + p("art") + " --config " + p("cfg.json")).code, 2);
    std::ofstream(dir / "junk.stscq") << "not a corpus";
    EXPECT_EQ(run("train --data " + p("junk.stscq") + " --out " + p("art")).code, 3);
    EXPECT_EQ(run("train" + data + " --out " + p("art") + " --steps1 400 --stage 1 --lr 1e150").code, 4);
    EXPECT_EQ(run("synth --out " + p("s") + " --clusters 0").code, 2);
}

TEST_F(Cli, TrainEncodeDecodeEval)
{
    tokens("t");
    const auto input_before = slurp(dir / "t/tokens.stscq");
    const std::string data = " --data " + p("t/tokens.stscq");
    ASSERT_EQ(run("train" + data + " --out " + p("art") + kFast + " --stage 1").code, 0);
    ASSERT_EQ(run("train" + data + " --out " + p("art") + kFast + " --stage 2").code, 0);
    EXPECT_EQ(slurp(dir / "t/tokens.stscq"), input_before);

    for (int stage : {1, 2}) {
        const auto report = json::parse(slurp(dir / ("art/report_stage" + std::to_string(stage) + ".json")));
        EXPECT_TRUE(stscq::validate_report(report["report"], 256).empty());
        EXPECT_EQ(report["config"]["lambda1"], 5.0);
    }

    const auto pool = stscq::load_pool((dir / "art/pool.stscq").string());
    const auto corpus = stscq::load_corpus((dir / "t/tokens.stscq").string());
    for (int i : {0, 17}) {
        const std::string idx = " --index " + std::to_string(i);
        ASSERT_EQ(run("encode --input " + p("t/tokens.stscq") + idx + " --artifacts " + p("art") + " --out " +
                      p("nn.bin"))
                      .code,
                  0);
        ASSERT_EQ(run("encode --input " + p("t/tokens.stscq") + idx + " --artifacts " + p("art") +
                      " --policy cr --out " + p("cr.bin"))
                      .code,
                  0);
        const auto bytes = slurp(dir / "nn.bin");
        EXPECT_EQ(bytes.size(), stscq::kStreamHeaderBytes + (stscq::payload_bits(8, 8, 4) + 7) / 8);
        auto err = [&](const char* f) {
            const auto s = slurp(dir / f);
            const auto q = stscq::deserialize(std::vector<std::uint8_t>(s.begin(), s.end()), pool);
            return (stscq::dequantize(q, pool) - corpus.samples[i]).squaredNorm();
        };
        EXPECT_LE(err("nn.bin"), err("cr.bin") + 1e-12);

        ASSERT_EQ(run("decode --input " + p("nn.bin") + " --artifacts " + p("art") + " --out " + p("d1.stscq")).code, 0);
        ASSERT_EQ(run("decode --input " + p("nn.bin") + " --artifacts " + p("art") + " --out " + p("d2.stscq")).code, 0);
        EXPECT_EQ(slurp(dir / "d1.stscq"), slurp(dir / "d2.stscq"));
        const auto decoded = stscq::load_corpus((dir / "d1.stscq").string());
        const auto q = stscq::quantize_routed(corpus.samples[i], pool, stscq::RoutingPolicy::NearestNeighbor);
        EXPECT_EQ(decoded.samples.at(0), stscq::dequantize(q, pool));
    }

    ASSERT_EQ(run("eval" + data + " --artifacts " + p("art") + " --csv " + p("rd.csv") + " --histogram " +
                  p("h.json"))
                  .code,
              0);
    std::istringstream csv(slurp(dir / "rd.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line))
        ++rows;
    EXPECT_EQ(rows, 2);
    const auto hist = json::parse(slurp(dir / "h.json"));
    for (const char* policy : {"nn", "cr"}) {
        std::uint64_t total = 0;
        for (const auto& e : hist[policy])
            total += e["total"].get<std::uint64_t>();
        EXPECT_EQ(total, 256u);
    }
}

TEST_F(Cli, TrainingIsIdempotent)
{
    tokens("t");
    for (const char* out : {"a", "b"})
        ASSERT_EQ(run("train --data " + p("t/tokens.stscq") + " --out " + p(out) + kFast + " --seed 4").code, 0);
    for (const char* f : {"pool_stage1.stscq", "router_stage1.stscq", "pool.stscq", "router.stscq"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    for (const char* f : {"report_stage1.json", "report_stage2.json"}) {
        auto a = json::parse(slurp(dir / "a" / f));
        auto b = json::parse(slurp(dir / "b" / f));
        a["report"].erase("wall_clock_seconds");
        b["report"].erase("wall_clock_seconds");
        EXPECT_EQ(a, b) << f;
    }
}

TEST_F(Cli, ImagePipelineWithHeaderBpp)
{
    ASSERT_EQ(run("synth --kind images --out " + p("img") + " --samples 24 --width 16 --height 16 --clusters 3").code,
              0);
    ASSERT_EQ(run("train --data " + p("img/manifest.txt") + " --out " + p("art") +
                  " --steps1 60 --steps2 60 -M 2 -K 8 --hidden 8 --patch-size 4 --latent-dim 6")
                  .code,
              0);
    EXPECT_TRUE(fs::exists(dir / "art/decoder.stscq"));
    EXPECT_TRUE(fs::exists(dir / "art/report_stage3.json"));
    const auto r = run("encode --input " + p("img/img_00002.pgm") + " --artifacts " + p("art") + " --out " +
                       p("s.bin") + " --header-bpp");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("bpp " + stscq::format_number(stscq::bpp(16, 8, 2, 16, 16))), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("bpp incl. header"), std::string::npos);
    ASSERT_EQ(run("decode --input " + p("s.bin") + " --artifacts " + p("art") + " --out " + p("r.pgm")).code, 0);
    const auto img = stscq::read_pnm((dir / "r.pgm").string());
    EXPECT_EQ(img.width, 16);
    EXPECT_EQ(img.channels, 1);
}

TEST_F(Cli, SweepEmitsOneRowPerConfiguration)
{
    tokens("t", 3, 128);
    ASSERT_EQ(run("sweep --data " + p("t/tokens.stscq") + " --out " + p("sw") +
                  " --group-list 1,2,4 --steps1 40 --steps2 40 --hidden 8 -K 4")
                  .code,
              0);
    std::istringstream csv(slurp(dir / "sw/sweep.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line))
        ++rows;
    EXPECT_EQ(rows, 6);
    EXPECT_TRUE(fs::exists(dir / "sw/sweep.gp"));
    const auto hist = json::parse(slurp(dir / "sw/histograms.json"));
    EXPECT_EQ(hist.size(), 3u);
}
