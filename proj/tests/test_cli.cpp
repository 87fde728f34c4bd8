#include "mmhrr/io.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace mmhrr;
using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

const fs::path work = fs::temp_directory_path() / "mmhrr_test_cli";

struct Result {
    int code = -1;
    std::string out, err;
};

/// Runs the CLI with `args` (shell syntax) from the scratch directory.
Result run(const std::string& args) {
    fs::create_directories(work);
    const auto out = work / "stdout.txt", err = work / "stderr.txt";
    const std::string cmd = "cd '" + work.string() + "' && '" MMHRR_CLI_PATH "' " + args + " > '" + out.string() +
                            "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(out);
    r.err = io::read_file(err);
    return r;
}

double field(const std::string& line, const std::string& key) {
    const auto pos = line.find(key + "=");
    REQUIRE(pos != std::string::npos);
    return std::stod(line.substr(pos + key.size() + 1));
}

std::string read(const fs::path& p) { return io::read_file(work / p); }

struct Scratch {
    Scratch() { fs::remove_all(work); }
    ~Scratch() { fs::remove_all(work); }
};

}  // namespace

TEST_CASE("synth then estimate recovers the HRR", "[cli]") {
    Scratch s;
    auto r = run("synth -o trace.csv");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(work / "trace.csv.meta"));
    CHECK(fs::exists(work / "trace.csv.config"));
    r = run("estimate -i trace.csv -o est");
    INFO(r.err);
    REQUIRE(r.code == 0);
    const double hrr = field(r.out, "hrr_60");
    const auto kv = io::read_key_values(work / "est" / "report", "io");
    const double truth = io::parse_double(kv.at("truth_hrr_60"), "t", 0);
    CHECK(std::abs(hrr - truth) <= 3.5);
    CHECK(field(r.out, "mean_abs_error") <= 3.5);
    for (const char* f : {"config", "hr.csv", "report", "report.json"}) CHECK(fs::exists(work / "est" / f));
    CHECK_FALSE(fs::exists(work / "est" / "modes.csv"));

    SECTION("the echoed configuration reproduces every output") {
        r = run("estimate -i trace.csv -o again -c est/config");
        REQUIRE(r.code == 0);
        for (const char* f : {"config", "hr.csv", "report", "report.json"})
            CHECK(read(fs::path("again") / f) == read(fs::path("est") / f));
    }
    SECTION("a synth config re-run gives the identical trace") {
        REQUIRE(run("synth -c trace.csv.config -o trace2.csv").code == 0);
        CHECK(read("trace2.csv") == read("trace.csv"));
        CHECK(read("trace2.csv.meta") == read("trace.csv.meta"));
    }
    SECTION("overrides change the stage they name") {
        REQUIRE(run("estimate -i trace.csv -o mu -s mu1=0.5 --set vmd_k=5").code == 0);
        const auto cfg = read("mu/config");
        CHECK_THAT(cfg, ContainsSubstring("mu1=0.5\n"));
        CHECK_THAT(cfg, ContainsSubstring("vmd_k=5\n"));
    }
}

TEST_CASE("short trace is an input error naming the minimum duration", "[cli][errors]") {
    Scratch s;
    REQUIRE(run("synth -o short.csv -s duration=10").code == 0);
    const auto r = run("estimate -i short.csv -o est");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("minimum duration is l_a = 16"));
}

TEST_CASE("malformed input names the line", "[cli][errors]") {
    Scratch s;
    fs::create_directories(work);
    std::ofstream(work / "bad.csv") << "time_s,displacement_mm\n0,1\n0.01,oops\n";
    auto r = run("estimate -i bad.csv -o est");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("(line 3)"));
    r = run("estimate -i missing.csv -o est");
    CHECK(r.code == 2);
}

TEST_CASE("configuration and usage errors exit 1", "[cli][errors]") {
    Scratch s;
    auto r = run("synth -o t.csv -s nonsense=1");
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("unknown key 'nonsense'"));
    CHECK_THAT(r.err, ContainsSubstring("mu1"));
    r = run("synth -o t.csv -s mu2=1.5");
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("mu2 must be in (0, 1)"));
    CHECK(run("synth -o t.csv -s mu2").code == 1);
    CHECK(run("frobnicate").code == 1);
    CHECK(run("estimate -o est").code == 1);
    r = run("--config-keys");
    CHECK(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("l_b_max"));
}

TEST_CASE("dump-modes matches the eval archive tables", "[cli]") {
    Scratch s;
    auto r = run("eval -o arch --scenario clean-constant-100 --serial");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("clean-constant-100,all,"));
    CHECK_THAT(read("arch/score_table.csv"), ContainsSubstring("clean-constant-100,2,"));
    r = run("dump-modes -i arch/clean-constant-100/rep_1/trace.csv -c arch/clean-constant-100/rep_1/config -o dump");
    REQUIRE(r.code == 0);
    for (const char* f : {"modes.csv", "labels.csv", "windows.csv"})
        CHECK(read(fs::path("dump") / f) == read(fs::path("arch/clean-constant-100/rep_1") / f));
    CHECK_FALSE(fs::exists(work / "dump" / "hr.csv"));

    CHECK_THAT(run("eval --list").out, ContainsSubstring("coincidence-3x"));
    CHECK(run("eval -o x --scenario no-such-scenario").code == 1);
    CHECK(run("eval -o x --scenario clean-constant-100 --repetitions 2").code == 1);
}

TEST_CASE("eval reports failed cells with exit 3", "[cli][errors]") {
    Scratch s;
    const auto r = run("eval -o arch --scenario radar-noise-1 -s noise_floor=10000 -s duration=20");
    CHECK(r.code == 3);
    CHECK_THAT(r.out, ContainsSubstring("radar-noise-1,all,nan,nan,3 failed"));
    CHECK(fs::exists(work / "arch" / "radar-noise-1" / "rep_0" / "error"));
}

TEST_CASE("simulate then estimate from the cube", "[cli]") {
    Scratch s;
    auto r = run("simulate -o scene.cube -s noise_floor=1 -s second_range=2.0");
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("2 target(s)"));
    CHECK(fs::exists(work / "scene.cube.target_2.csv"));
    for (const auto& [range, target] : {std::pair{"1.0", "1"}, std::pair{"2.0", "2"}}) {
        r = run(std::string("estimate -i scene.cube -o est_") + target + " --range " + range +
                " --truth scene.cube.target_" + target + ".csv");
        INFO(r.err);
        REQUIRE(r.code == 0);
        CHECK(field(r.out, "mean_abs_error") <= 3.5);
    }
    std::ofstream(work / "trunc.cube", std::ios::binary) << read("scene.cube").substr(0, 500);
    r = run("estimate -i trunc.cube -o est");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("byte offset"));
}

TEST_CASE("degraded quality exits 4 and still writes the series", "[cli]") {
    Scratch s;
    REQUIRE(run("synth -o t.csv -s snr_db=none").code == 0);
    // A heart-rate band with no energy in it: every window lacks a heartbeat.
    const auto r = run("estimate -i t.csv -o est -s hr_band_low=3.0 -s hr_band_high=3.3");
    CHECK(r.code == 4);
    CHECK_THAT(r.err, ContainsSubstring("degraded quality"));
    CHECK(fs::exists(work / "est" / "hr.csv"));
    CHECK(run("dump-modes -i t.csv -o dump -s hr_band_low=3.0 -s hr_band_high=3.3").code == 4);
    CHECK(fs::exists(work / "dump" / "windows.csv"));
}
