#include <gtest/gtest.h>

#include <array>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/types.h>

#include <nlohmann/json.hpp>

#include "support/app_fixture.hpp"

using namespace wsic;
using namespace wsic::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

} // namespace

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_wsic({}).code, 1);
    const auto unknown = run_wsic({"frobnicate"});
    EXPECT_EQ(unknown.code, 1);
    EXPECT_EQ(run_wsic({"gen-corpus"}).code, 1); // --out missing
    EXPECT_EQ(run_wsic({"simulate", "--corpus", "x", "--policy", "greedy"}).code, 1);
    EXPECT_EQ(run_wsic({"serve", "--port", "70000"}).code, 1);
    EXPECT_EQ(run_wsic({"--help"}).code, 0);
}

TEST(Cli, RuntimeErrorsExitTwo) {
    const auto dir = scratch_dir("cli_runtime");
    const auto r = run_wsic({"train", "--corpus", (dir / "missing").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("not_found"), std::string::npos);
    EXPECT_EQ(run_wsic({"report", "--in", dir.string()}).code, 2);
}

TEST(Cli, GenCorpusIsByteIdentical) {
    const auto dir = scratch_dir("cli_gen");
    for (const char* name : {"a", "b"})
        ASSERT_EQ(run_wsic({"gen-corpus", "--out", (dir / name).string(), "--slides", "2", "--train", "1", "--val",
                            "1", "--size", "256", "--seed", "1"})
                      .code,
                  0);
    const auto a = tree(dir / "a"), b = tree(dir / "b");
    EXPECT_EQ(a.size(), 1u + 4 * 4); // manifest + 4 files per slide
    EXPECT_EQ(a, b);
}

TEST(Cli, TrainPredictSimulateAreDeterministic) {
    const fs::path c = trained_corpus();
    const auto dir = scratch_dir("cli_determinism");
    ASSERT_EQ(run_wsic({"train", "--corpus", c.string(), "--out", (dir / "m2.json").string()}).code, 0);
    EXPECT_EQ(slurp(c / "model.json"), slurp(dir / "m2.json"));

    for (const char* name : {"s1", "s2"}) {
        const auto r = run_wsic({"simulate", "--corpus", c.string(), "--policy", "uncertainty", "--passes", "2",
                                 "--runs", "2", "--seed", "7", "--out", (dir / name).string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (const char* f : {"runs.json", "runs.csv", "table.json", "table.csv", "table.md"}) {
        EXPECT_FALSE(slurp(dir / "s1" / f).empty()) << f;
        EXPECT_EQ(slurp(dir / "s1" / f), slurp(dir / "s2" / f)) << f;
    }
    EXPECT_TRUE(fs::exists(dir / "s1" / "timing.json"));

    ASSERT_EQ(run_wsic({"predict", "--corpus", c.string(), "--split", "test", "--out", (dir / "p").string()}).code, 0);
    for (const auto& e : fs::directory_iterator(dir / "p" / "features"))
        EXPECT_EQ(slurp(e.path()), slurp(c / "features" / e.path().filename()));
}

TEST(Cli, SimulateOutputsAndReport) {
    const fs::path c = trained_corpus();
    const auto dir = scratch_dir("cli_report");
    ASSERT_EQ(run_wsic({"simulate", "--corpus", c.string(), "--policy", "naive", "--passes", "3", "--runs", "2",
                        "--out", (dir / "naive").string()})
                  .code,
              0);
    const auto runs = nlohmann::json::parse(slurp(dir / "naive" / "runs.json"));
    EXPECT_EQ(runs.at("runs").size(), 2u * 2u); // 2 test slides x 2 runs
    for (const auto& r : runs.at("runs")) EXPECT_EQ(r.at("passes").size(), 4u);
    const auto table = nlohmann::json::parse(slurp(dir / "naive" / "table.json"));
    EXPECT_EQ(table.at("passes").size(), 4u);

    const auto rep = run_wsic({"report", "--in", (dir / "naive").string(), "--out", (dir / "r.md").string()});
    ASSERT_EQ(rep.code, 0) << rep.err;
    const std::string md = slurp(dir / "r.md");
    EXPECT_NE(md.find("| rough |"), std::string::npos);
    EXPECT_NE(md.find("Non-decreasing"), std::string::npos);
}

TEST(Cli, GenScribblesAndTune) {
    const fs::path c = trained_corpus();
    const auto dir = scratch_dir("cli_scribbles");
    ASSERT_EQ(run_wsic({"gen-scribbles", "--corpus", c.string(), "--split", "train", "--out", (dir / "s").string()})
                  .code,
              0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir / "s")) {
        ++files;
        EXPECT_FALSE(slurp(e.path()).empty());
    }
    EXPECT_EQ(files, 3);

    const auto r = run_wsic({"tune-nepoch", "--corpus", c.string(), "--candidates", "1,30", "--runs", "1",
                             "--passes", "2", "--out", (dir / "tune.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(dir / "tune.json"));
    const int best = j.at("n_epoch_star").get<int>();
    EXPECT_TRUE(best == 1 || best == 30);
    EXPECT_EQ(j.at("scores").size(), 2u);
    EXPECT_EQ(run_wsic({"tune-nepoch", "--corpus", c.string(), "--candidates", "1,x"}).code, 1);
}

TEST(Cli, ServePortZeroPrintsBoundPort) {
    const fs::path c = trained_corpus();
    // The shell reports the server pid first, then the server its address.
    const std::string cmd =
        std::string(WSIC_BINARY) + " serve --data-root '" + c.string() + "' --port 0 & echo $!";
    FILE* pipe = popen(cmd.c_str(), "r");
    ASSERT_NE(pipe, nullptr);
    // Either line may come first: one is the pid, the other the address.
    std::string lines[2];
    std::array<char, 256> buf{};
    int got = 0;
    while (got < 2 && fgets(buf.data(), buf.size(), pipe)) lines[got++] = buf.data();
    const std::string& pid_line = lines[0].rfind("listening", 0) == 0 ? lines[1] : lines[0];
    const std::string& line = lines[0].rfind("listening", 0) == 0 ? lines[0] : lines[1];
    if (!pid_line.empty()) kill(static_cast<pid_t>(std::stol(pid_line)), SIGTERM);
    pclose(pipe);
    ASSERT_EQ(got, 2);
    EXPECT_EQ(line.rfind("listening on http://127.0.0.1:", 0), 0u) << line;
    const int port = std::stoi(line.substr(line.rfind(':') + 1));
    EXPECT_GT(port, 0);
    EXPECT_LT(port, 65536);
}
