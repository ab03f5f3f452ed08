#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int status = -1;
    std::string output;  // stdout and stderr interleaved
};

CliRun run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(CSNET_CLI_PATH) + " " + args + " 2>&1";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("csnet_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string p(const std::string& name) const { return (dir / name).string(); }

    // gen -> train -> eval, writing every artefact with the given suffix.
    void pipeline(const std::string& tag, const std::string& env = "") {
        const auto g = run("gen --task trajectory --modes 2 --n 24 --h 5 --size 16 --seed 3 --out " + p(tag + ".csnd"),
                           env);
        ASSERT_EQ(g.status, 0) << g.output;
        std::ofstream(p(tag + ".cfg")) << "scheme = KBEST\nK = 3\nd = 2\nepochs = 2\nbatch_size = 4\n"
                                          "feature_dim = 6\nhidden = 8\neval_every = 1\neval_draws = 4\n"
                                          "seed = 4\ndataset = "
                                       << p(tag + ".csnd") << "\ncheckpoint = " << p(tag + ".csnc")
                                       << "\nlog = " << p(tag + ".log") << "\n";
        const auto t = run("train --quiet --config " + p(tag + ".cfg"), env);
        ASSERT_EQ(t.status, 0) << t.output;
        const auto e = run("eval --checkpoint " + p(tag + ".csnc") + " --dataset " + p(tag + ".csnd") +
                               " --k-max 4 --n-draw 6 --seed 1 --out " + p(tag + ".csv"),
                           env);
        ASSERT_EQ(e.status, 0) << e.output;
        EXPECT_NE(e.output.find("top-1"), std::string::npos);
    }

    fs::path dir;
};

// Log lines carry wall-clock timings; compare everything else.
std::string without_timings(const std::string& log) {
    std::istringstream in(log);
    std::string out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] != '#' && line[0] != 'e') line = line.substr(0, line.rfind(','));
        out += line + "\n";
    }
    return out;
}

}  // namespace

TEST_F(Cli, PipelineIsBitIdenticalAcrossRuns) {
    pipeline("a");
    pipeline("b", "CSNET_THREADS=1");
    EXPECT_EQ(slurp(p("a.csnd")), slurp(p("b.csnd")));
    EXPECT_EQ(slurp(p("a.csnc")), slurp(p("b.csnc")));
    EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
    const std::string csv = slurp(p("a.csv"));
    EXPECT_EQ(csv.rfind("k,mean_error,stderr,n\n", 0), 0u);
    const std::string log_a = slurp(p("a.log")), log_b = slurp(p("b.log"));
    EXPECT_NE(log_a.find("epoch,train_loss,recon,kl,top1,top4,wall_ms"), std::string::npos);
    // Paths differ by tag; compare data rows only.
    EXPECT_EQ(without_timings(log_a.substr(log_a.find("\nepoch"))), without_timings(log_b.substr(log_b.find("\nepoch"))));

    const auto r = run("report " + p("a.csv") + " " + p("b.csv") + " --svg " + p("r.svg") + " --md " + p("r.md"));
    ASSERT_EQ(r.status, 0) << r.output;
    const std::string svg = slurp(p("r.svg"));
    std::size_t lines = 0;
    for (auto q = svg.find("<polyline"); q != std::string::npos; q = svg.find("<polyline", q + 1)) ++lines;
    EXPECT_EQ(lines, 2u);
    EXPECT_NE(slurp(p("r.md")).find("| a |"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwoWithOneLine) {
    auto expect_usage = [](const CliRun& r) {
        EXPECT_EQ(r.status, 2) << r.output;
        EXPECT_EQ(r.output.rfind("csnet: usage error: ", 0), 0u) << r.output;
        EXPECT_EQ(r.output.find('\n'), r.output.size() - 1) << r.output;
    };
    expect_usage(run("gen --task trajectory --modes 0 --n 4 --out " + p("x.csnd")));
    expect_usage(run("gen --task juggling --n 4 --out " + p("x.csnd")));
    expect_usage(run("gen --n 4"));
    expect_usage(run("frobnicate"));
    expect_usage(run("train --config " + p("missing.cfg")));
    std::ofstream(p("bad.cfg")) << "epochs = 3\nwhat = 1\n";
    const auto bad = run("train --config " + p("bad.cfg"));
    expect_usage(bad);
    EXPECT_NE(bad.output.find("bad.cfg:2"), std::string::npos);
}

TEST_F(Cli, EvalRejectsKMaxAboveDraws) {
    ASSERT_EQ(run("gen --n 4 --size 16 --h 5 --out " + p("d.csnd")).status, 0);
    const auto r = run("eval --checkpoint " + p("none.csnc") + " --dataset " + p("d.csnd") + " --k-max 10 --n-draw 4");
    EXPECT_EQ(r.status, 2) << r.output;
    EXPECT_NE(r.output.find("k-max"), std::string::npos) << r.output;
}

TEST_F(Cli, FormatErrorsExitOne) {
    std::ofstream(p("junk.csnd")) << "JUNKJUNKJUNK";
    std::ofstream(p("junk.csnc")) << "NOPE";
    const auto r = run("eval --checkpoint " + p("junk.csnc") + " --dataset " + p("junk.csnd"));
    EXPECT_EQ(r.status, 1) << r.output;
    EXPECT_EQ(r.output.rfind("csnet: error: ", 0), 0u);
    EXPECT_EQ(r.output.find('\n'), r.output.size() - 1) << r.output;
    std::ofstream(p("bad.csv")) << "k,err\n";
    EXPECT_EQ(run("report " + p("bad.csv") + " --svg " + p("o.svg")).status, 1);
}

TEST_F(Cli, HelpListsSubcommands) {
    const auto r = run("--help");
    EXPECT_EQ(r.status, 0);
    for (const char* sub : {"gen", "train", "eval", "report"}) EXPECT_NE(r.output.find(sub), std::string::npos);
}
