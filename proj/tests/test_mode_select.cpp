#include "mmhrr/mode_select.hpp"
#include "mmhrr/pipeline.hpp"
#include "mmhrr/signal_model.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

using namespace mmhrr;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double fs = 100.0;
constexpr std::size_t n = 1600;

/// A ModeSet whose modes are pure tones (freq, amplitude).
ModeSet tones(const std::vector<std::pair<double, double>>& spec) {
    ModeSet ms;
    ms.sample_rate = fs;
    std::vector<double> input(n, 0.0);
    double phase = 0.3;
    for (const auto& [f, a] : spec) {
        ms.modes.push_back(a == 0.0 ? std::vector<double>(n, 0.0) : oracle::tone(f, a, fs, n, phase));
        ms.center_freqs.push_back(f);
        for (std::size_t i = 0; i < n; ++i) input[i] += ms.modes.back()[i];
        phase += 0.9;
    }
    ms.residual.assign(n, 0.0);
    for (double v : input) ms.input_energy += v * v;
    return ms;
}

int count_kind(const ModeClassification& c, ModeKind k) {
    return static_cast<int>(std::count_if(c.labels.begin(), c.labels.end(), [&](const auto& l) { return l.kind == k; }));
}

}  // namespace

TEST_CASE("respiration, four harmonics and a heartbeat", "[mode-select]") {
    const auto ms = tones({{0.4, 1.0}, {0.8, 0.3}, {1.2, 0.2}, {1.6, 0.15}, {2.0, 0.1}, {2.3, 0.25}});
    const auto c = classify_modes(ms);
    CHECK(c.heartbeat == 5);
    CHECK_FALSE(c.coincidence);
    REQUIRE(c.respiration);
    CHECK(*c.respiration == 0);
    CHECK(c.labels[1].name() == "harmonic(2)");
    CHECK(c.labels[2].name() == "harmonic(3)");
    CHECK(c.labels[3].name() == "harmonic(4)");
    CHECK_THAT(c.labels[5].peak_freq, WithinAbs(2.3, 0.02));
    CHECK(count_kind(c, ModeKind::Heartbeat) == 1);
    CHECK(count_kind(c, ModeKind::Respiration) == 1);
}

TEST_CASE("heartbeat merged into a harmonic is recovered by the coincidence rule", "[mode-select]") {
    // 3 x 0.4 Hz carries both the third harmonic and the heartbeat.
    const auto ms = tones({{0.4, 1.0}, {0.8, 0.12}, {1.2, 0.2}, {1.6, 0.05}});
    const auto c = classify_modes(ms);
    CHECK(c.coincidence);
    CHECK(c.heartbeat == 2);
    CHECK(c.labels[2].name() == "heartbeat=harmonic(3)");
    CHECK(count_kind(c, ModeKind::Heartbeat) == 1);
}

TEST_CASE("pure two-tone set", "[mode-select]") {
    const auto c = classify_modes(tones({{0.3, 1.0}, {1.5, 0.2}}));
    REQUIRE(c.respiration);
    CHECK(*c.respiration == 0);
    CHECK(c.heartbeat == 1);
    CHECK(c.labels[0].name() == "respiration");
    // 1.5 Hz is also 5 x 0.3 Hz, so the pick goes through the coincidence rule.
    CHECK(c.labels[1].kind == ModeKind::Heartbeat);
    CHECK_THAT(c.labels[1].peak_freq, WithinAbs(1.5, 0.02));
}

TEST_CASE("no in-band mode raises no-heartbeat", "[mode-select][errors]") {
    CHECK_THROWS_AS(classify_modes(tones({{0.3, 1.0}, {4.5, 0.2}})), NoHeartbeat);
    CHECK_THROWS_AS(classify_modes(tones({{0.3, 1.0}, {0.0, 0.0}})), NoHeartbeat);
}

TEST_CASE("zero modes are noise", "[mode-select]") {
    const auto c = classify_modes(tones({{0.3, 1.0}, {0.0, 0.0}, {1.7, 0.1}}));
    CHECK(c.labels[1].kind == ModeKind::Noise);
    CHECK(c.heartbeat == 2);
}

TEST_CASE("broadband and insignificant modes are rejected as noise", "[mode-select]") {
    auto ms = tones({{0.3, 1.0}, {1.5, 0.2}, {2.6, 0.2}});
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& v : ms.modes[2]) v = g(rng);  // white noise in place of the 2.6 Hz tone
    auto c = classify_modes(ms);
    CHECK(c.labels[2].kind == ModeKind::Noise);
    CHECK(c.heartbeat == 1);

    // A sharp but tiny in-band peak does not outrank the real heartbeat.
    const auto weak = tones({{0.3, 1.0}, {1.5, 0.2}, {2.6, 0.05}});
    c = classify_modes(weak);
    CHECK(c.labels[2].kind == ModeKind::Noise);
    CHECK(c.heartbeat == 1);
}

TEST_CASE("peak frequency with parabolic interpolation", "[mode-select][peak]") {
    for (double f : {0.73, 1.7, 2.91}) {
        const auto x = oracle::tone(f, 1.0, fs, 3000, 0.5);
        const auto p = peak_frequency(x, fs);
        CHECK_THAT(p.freq, WithinAbs(f, 0.02));
        CHECK(p.prominence > 4.0);
    }
    CHECK_THROWS_AS(peak_frequency(std::vector<double>(64, 0.0), fs), InvalidArgument);
}

TEST_CASE("white noise has low prominence across seeds", "[mode-select][peak]") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g;
        std::vector<double> x(1600);
        for (auto& v : x) v = g(rng);
        CHECK(peak_frequency(x, fs).prominence < 4.0);
    }
}

TEST_CASE("equal tones tie-break to the lower frequency", "[mode-select][peak]") {
    // 2048 samples at 102.4 Hz: both tones sit on exact bins of the padded
    // spectrum, so their peak magnitudes agree to rounding.
    const double rate = 102.4;
    auto x = oracle::tone(1.0, 1.0, rate, 2048);
    const auto y = oracle::tone(2.0, 1.0, rate, 2048);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    CHECK_THAT(peak_frequency(x, rate).freq, WithinAbs(1.0, 0.01));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] + oracle::tone(1.0, 1.0, rate, 2048, 0.8)[i];
    CHECK_THAT(peak_frequency(x, rate).freq, WithinAbs(1.0, 0.01));
}

TEST_CASE("mode order does not change the chosen heartbeat", "[mode-select][property]") {
    const std::vector<std::vector<std::pair<double, double>>> sets = {
        {{0.4, 1.0}, {0.8, 0.3}, {1.2, 0.2}, {1.6, 0.15}, {2.0, 0.1}, {2.3, 0.25}},
        {{0.4, 1.0}, {0.8, 0.12}, {1.2, 0.2}, {1.6, 0.05}},
        {{0.3, 1.0}, {1.5, 0.2}, {1.9, 0.2}},  // equal candidates: decided by value, not position
        {{0.25, 1.0}, {1.1, 0.15}, {2.4, 0.15}, {0.5, 0.2}},
    };
    std::mt19937_64 rng(8);
    for (const auto& base : sets) {
        const auto ref = classify_modes(tones(base));
        const double ref_f = base[ref.heartbeat].first;
        auto perm = base;
        for (int trial = 0; trial < 10; ++trial) {
            std::shuffle(perm.begin(), perm.end(), rng);
            const auto c = classify_modes(tones(perm));
            CHECK(perm[c.heartbeat].first == ref_f);
            CHECK(c.coincidence == ref.coincidence);
        }
    }
}

TEST_CASE("exactly one heartbeat or an error, never two", "[mode-select][property]") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> f(0.2, 4.5), a(0.01, 1.0);
    std::uniform_int_distribution<int> k(2, 6);
    int errors = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> spec;
        const int K = k(rng);
        for (int i = 0; i < K; ++i) spec.push_back({f(rng), a(rng)});
        try {
            const auto c = classify_modes(tones(spec));
            CHECK(count_kind(c, ModeKind::Heartbeat) == 1);
            CHECK(count_kind(c, ModeKind::Respiration) <= 1);
            CHECK(c.labels[c.heartbeat].kind == ModeKind::Heartbeat);
        } catch (const NoHeartbeat&) {
            ++errors;
        }
    }
    CHECK(errors < 200);
}

TEST_CASE("harmonic labels come from respiration when the heartbeat is clear of them", "[mode-select][property]") {
    // Real decompositions of synthetic traces; f_heart kept > 2*tol*f_resp from every n*f_resp.
    const double f_resp = 0.3;
    PipelineConfig cfg;
    for (double hr : {81.0, 99.0, 117.0, 130.0, 150.0}) {
        const double fh = hr / 60.0;
        const double n_near = std::round(fh / f_resp);
        REQUIRE(std::abs(fh - n_near * f_resp) > 2 * 0.08 * f_resp);
        RespirationModel resp{.fundamental_freq = f_resp, .harmonics = {1.0, 0.3, 0.15}};
        HeartbeatModel heart{.rate_trajectory = constant_rate(hr), .amplitude = 0.1};
        const auto tr = preprocess(synthesize_trace(resp, heart, 0.0, fs, 16.0, 1));
        AlphaSelection sel;
        try {
            sel = select_alpha(tr.samples, fs, cfg.vmd, cfg.gates, cfg.alpha_range, true);
        } catch (const InfeasibleAlpha& e) {
            sel = e.best();
        }
        const auto c = classify_modes(sel.modes, cfg.select);
        for (const auto& lab : c.labels) {
            if (lab.kind != ModeKind::Harmonic) continue;
            CHECK(std::abs(lab.peak_freq - lab.harmonic_order * f_resp) <= 0.08 * f_resp);
            CHECK(std::abs(lab.peak_freq - fh) > 0.08 * f_resp);
        }
        CHECK_FALSE(c.coincidence);
        CHECK_THAT(c.labels[c.heartbeat].peak_freq, WithinAbs(fh, 0.05));
    }
}

TEST_CASE("select config invariants", "[mode-select][errors]") {
    const auto ms = tones({{0.3, 1.0}, {1.5, 0.2}});
    CHECK_THROWS_AS(classify_modes(ms, {.hr_band_low = 3.5}), InvalidArgument);
    CHECK_THROWS_AS(classify_modes(ms, {.harmonic_tol = 0.0}), InvalidArgument);
    CHECK_THROWS_AS(classify_modes(ms, {.min_relative_energy = 1.0}), InvalidArgument);
}
