#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "modaltl/io/text.hpp"
#include "modaltl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace modaltl;

namespace {

const std::string tiny = MODALTL_TEST_DATA_DIR "/tiny_pipeline.json";
const std::string beam = MODALTL_CONFIG_DIR "/beam_pipeline.json";

struct Run {
    int code;
    std::string err;
};

Run cli(const std::string& args) {
    const auto err = (fs::temp_directory_path() / "modaltl_cli_stderr.txt").string();
    const int status = std::system((std::string(MODALTL_CLI) + " -q " + args + " 2> " + err).c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, io::read_file(err)};
}

std::string scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("modaltl_cli_" + name);
    fs::remove_all(p);
    return p.string();
}

/// Copy of `base` with one top-level field replaced, written next to it.
std::string variant(const std::string& base, const std::string& name, const std::function<void(io::json&)>& edit) {
    auto j = io::parse(io::read_file(base), base);
    edit(j);
    const auto p = (fs::temp_directory_path() / ("modaltl_cli_" + name + ".json")).string();
    io::write_file(p, j.dump(2));
    return p;
}

double first_frequency(const std::string& csv) {
    const auto a = io::read_csv(csv);
    return a(0, 1);
}

const char* stages[] = {"dataset", "train", "transfer", "validate", "scenario", "stream", "track", "report"};

}  // namespace

TEST(Cli, FemModesSourceFundamental) {
    const auto out = scratch("fem");
    ASSERT_EQ(cli("--config " + beam + " --out " + out + " fem-modes").code, 0);
    const auto a = io::read_csv(out + "/fem_modes_source.csv");
    ASSERT_EQ(a.rows(), 10);
    ASSERT_EQ(a.cols(), 2 + 15);
    EXPECT_NEAR(a(0, 1), 13.06, 0.015 * 13.06);
    const auto text = io::read_file(out + "/fem_modes_source.csv");
    EXPECT_NE(text.find("config_hash"), std::string::npos);
    EXPECT_NE(text.find("seed 2024"), std::string::npos);
}

TEST(Cli, FemModesUniformMultiplierScalesFrequencies) {
    const auto out = scratch("fem81");
    const auto cfg = variant(beam, "k081", [](io::json& j) { j["fem_modes"]["multipliers"] = 0.81; });
    ASSERT_EQ(cli("--config " + beam + " --out " + out + "/a fem-modes").code, 0);
    ASSERT_EQ(cli("--config " + cfg + " --out " + out + "/b fem-modes").code, 0);
    const auto a = io::read_csv(out + "/a/fem_modes_source.csv");
    const auto b = io::read_csv(out + "/b/fem_modes_source.csv");
    for (Eigen::Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(b(r, 1), 0.9 * a(r, 1), 1e-9 * a(r, 1));
}

TEST(Cli, ConfigErrorsExitTwoWithPath) {
    const auto bad_type = variant(tiny, "badtype", [](io::json& j) { j["design"]["lower"] = "low"; });
    auto r = cli("--config " + bad_type + " fem-modes");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/design/lower"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find(bad_type), std::string::npos) << r.err;

    const auto unknown = variant(tiny, "unknown", [](io::json& j) { j["monitor"]["strem"] = 1; });
    r = cli("--config " + unknown + " fem-modes");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/monitor/strem"), std::string::npos) << r.err;

    const auto version = variant(tiny, "version", [](io::json& j) { j["version"] = 99; });
    EXPECT_EQ(cli("--config " + version + " fem-modes").code, 2);

    const auto broken = (fs::temp_directory_path() / "modaltl_cli_broken.json").string();
    io::write_file(broken, "{\"format\": \"modaltl-pipeline\",\n  \"version\": 1,\n");
    r = cli("--config " + broken + " fem-modes");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

    EXPECT_EQ(cli("--config " + tiny + " no-such-command").code, 2);
    EXPECT_EQ(cli("--config /nonexistent.json fem-modes").code, 2);
    EXPECT_EQ(cli("--config " + tiny + " --out " + scratch("missing") + " train").code, 2);
}

TEST(Cli, TinyPipelineIsReproducibleAndStageIsolated) {
    const auto a = scratch("run_a"), b = scratch("run_b");
    for (const char* s : stages) ASSERT_EQ(cli("--config " + tiny + " --out " + a + " " + s).code, 0) << s;
    for (const char* s : stages) ASSERT_EQ(cli("--config " + tiny + " --out " + b + " " + s).code, 0) << s;

    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        ASSERT_TRUE(fs::exists(fs::path(b) / rel)) << rel;
        std::string ta = io::read_file(e.path().string()), tb = io::read_file((fs::path(b) / rel).string());
        if (rel == "report.txt") continue;  // names its own output directory
        EXPECT_EQ(ta, tb) << rel;
        EXPECT_NE(ta.find(pipeline::load_config(tiny).hash), std::string::npos) << rel << " lacks the config hash";
        ++compared;
    }
    EXPECT_GE(compared, 20u);

    // deleting a downstream artifact and rerunning its stage reproduces it
    for (const char* artifact : {"stream.jsonl", "trace.csv", "target_net.json"}) {
        const auto before = io::read_file(a + "/" + artifact);
        fs::remove(a + "/" + artifact);
        const std::string stage = std::string(artifact) == "stream.jsonl" ? "stream" : std::string(artifact) == "trace.csv" ? "track" : "transfer";
        ASSERT_EQ(cli("--config " + tiny + " --out " + a + " " + stage).code, 0);
        EXPECT_EQ(io::read_file(a + "/" + artifact), before) << artifact;
    }

    // tracking is independent of the thread count
    const auto before = io::read_file(a + "/trace.csv");
    ASSERT_EQ(cli("--config " + tiny + " --out " + a + " --threads 3 track").code, 0);
    EXPECT_EQ(io::read_file(a + "/trace.csv"), before);

    // a different seed changes the artifacts
    ASSERT_EQ(cli("--config " + tiny + " --out " + b + " --seed 8 dataset").code, 0);
    EXPECT_NE(io::read_file(a + "/datasets/source/K.csv"), io::read_file(b + "/datasets/source/K.csv"));

    // frequency-only tracking writes its own trace
    ASSERT_EQ(cli("--config " + tiny + " --out " + a + " track --likelihood none").code, 0);
    EXPECT_TRUE(fs::exists(a + "/trace_none.csv"));
    EXPECT_EQ(cli("--config " + tiny + " --out " + a + " track --likelihood bogus").code, 2);
}

TEST(Cli, DimensionMismatchExitsFour) {
    const auto a = scratch("mismatch");
    for (const char* s : stages) {
        if (std::string(s) == "track") break;
        ASSERT_EQ(cli("--config " + tiny + " --out " + a + " " + s).code, 0) << s;
    }
    // stream header claims more sensors than the records carry
    auto text = io::read_file(a + "/stream.jsonl");
    const auto pos = text.find("\"m\":2");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 5, "\"m\":3");
    io::write_file(a + "/stream.jsonl", text);
    auto r = cli("--config " + tiny + " --out " + a + " track");
    EXPECT_EQ(r.code, 4) << r.err;

    // network trained for another structure size
    const auto wide = variant(tiny, "wide", [](io::json& j) { j["source"]["modes"] = 4; });
    r = cli("--config " + wide + " --out " + a + " train");
    EXPECT_EQ(r.code, 4) << r.err;
}
