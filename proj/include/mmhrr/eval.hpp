/**
 * Closed-loop evaluation: synthesise (or simulate through the radar model),
 * run the pipeline, score against ground truth, archive everything.
 */
#pragma once

#include "mmhrr/config.hpp"
#include "mmhrr/error.hpp"
#include "mmhrr/io.hpp"
#include "mmhrr/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <vector>

namespace mmhrr {

enum class Source { Trace, Radar };

struct Scenario {
    std::string name;
    RunConfig config;  // signal, scene and pipeline parameters; config.seed is ignored
    Source source = Source::Trace;
    int repetitions = 3;
    std::uint64_t seed_base = 1;

    void validate() const {
        if (name.empty() || name.find_first_of("/\\,") != std::string::npos)
            throw InvalidArgument("eval", "Scenario: name must be non-empty and free of '/', '\\' and ','");
        if (repetitions < 3) throw InvalidArgument("eval", "Scenario " + name + ": repetitions must be >= 3");
        config.validate();
    }

    RunConfig rep_config(int k) const {
        RunConfig c = config;
        c.seed = seed_base + static_cast<std::uint64_t>(k);
        return c;
    }
};

/// One target of one repetition.
struct TargetRun {
    ChestMotionTrace trace;  // the pipeline input, with ground truth attached
    std::optional<PipelineResult> result;
    std::optional<HrrReport> report;
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
};

struct RepResult {
    int rep = 0;
    std::uint64_t seed = 0;
    std::vector<TargetRun> targets;

    bool ok() const {
        for (const auto& t : targets)
            if (!t.ok()) return false;
        return !targets.empty();
    }
    /// Mean over targets of the per-target mean |HR_G - HR_E|.
    double mean_abs_error() const {
        double acc = 0.0;
        for (const auto& t : targets) acc += *t.report->mean_abs_error;
        return acc / static_cast<double>(targets.size());
    }
    std::string error() const {
        std::string e;
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (!targets[i].ok()) e += (e.empty() ? "" : "; ") + ("target " + std::to_string(i + 1) + ": " + targets[i].error);
        return e;
    }
};

struct ScoreRow {
    std::string scenario;
    std::vector<std::optional<double>> values;  // per repetition; nullopt marks a failed cell
    std::vector<std::string> failures;          // per repetition; empty when the cell succeeded
    double mean = NAN;
    double std = NAN;  // sample standard deviation of the successful cells
    int coincidence_windows = 0;
    int relaxed_windows = 0;

    int failed() const {
        int n = 0;
        for (const auto& v : values) n += !v.has_value();
        return n;
    }
};

/// Mean and sample standard deviation of the successful cells.
inline void aggregate(ScoreRow& row) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : row.values)
        if (v) sum += *v, ++n;
    row.mean = n > 0 ? sum / n : NAN;
    if (n < 2) {
        row.std = n == 1 ? 0.0 : NAN;
        return;
    }
    double ss = 0.0;
    for (const auto& v : row.values)
        if (v) ss += (*v - row.mean) * (*v - row.mean);
    row.std = std::sqrt(ss / (n - 1));
}

struct ScoreTable {
    std::vector<ScoreRow> rows;

    bool empty() const { return rows.empty(); }
    std::size_t size() const { return rows.size(); }

    /// scenario,rep,mean_abs_error_bpm,status then one summary line per scenario (rep=all).
    void write_csv(std::ostream& f) const {
        f << "scenario,rep,mean_abs_error_bpm,std_bpm,status\n";
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.values.size(); ++k)
                f << r.scenario << ',' << k << ',' << (r.values[k] ? io::fmt(*r.values[k]) : "nan") << ",,"
                  << (r.values[k] ? "ok" : "failed") << '\n';
            f << r.scenario << ",all," << io::fmt(r.mean) << ',' << io::fmt(r.std) << ','
              << (r.failed() ? std::to_string(r.failed()) + " failed" : std::string("ok")) << '\n';
        }
    }
    void write_csv(const std::filesystem::path& p) const {
        auto f = io::open_out(p);
        write_csv(f);
    }
};

struct ScenarioRun {
    Scenario scenario;
    std::vector<RepResult> reps;
    ScoreRow row;
};

namespace detail {

inline TargetRun run_target(ChestMotionTrace input, const PipelineConfig& pipeline) {
    TargetRun t;
    t.trace = std::move(input);
    try {
        t.result = estimate_hr(t.trace, pipeline);
        t.report = build_report(t.result->series(), io::truth_of(t.trace));
        if (t.result->degraded())
            t.error = "degraded quality: carry-forward fraction " + io::fmt(t.result->carry_fraction());
    } catch (const Error& e) {
        t.error = std::string(e.what());
    }
    return t;
}

/// Tracked displacement with the scene target's ground truth attached.
inline ChestMotionTrace radar_input(const RadarCube& cube, double range, std::size_t width, const ChestMotionTrace& truth) {
    auto tr = displacement_from_cube(cube, {range, width});
    tr.ground_truth = truth.ground_truth;
    return tr;
}

}  // namespace detail

inline RepResult run_repetition(const Scenario& s, int k) {
    const RunConfig cfg = s.rep_config(k);
    RepResult r;
    r.rep = k;
    r.seed = cfg.seed;
    if (s.source == Source::Trace) {
        r.targets.push_back(detail::run_target(make_trace(cfg), cfg.pipeline));
        return r;
    }
    const auto scene = make_scene(cfg);
    RadarCube cube;
    try {
        cube = simulate_frames(cfg.radar.radar, scene, cfg.synth.duration, cfg.seed);
    } catch (const Error& e) {
        TargetRun t;
        t.error = std::string(e.what());
        r.targets.push_back(std::move(t));
        return r;
    }
    for (const auto& target : scene.targets) {
        try {
            r.targets.push_back(detail::run_target(
                detail::radar_input(cube, target.base_range, cfg.radar.search_width, target.trace), cfg.pipeline));
        } catch (const Error& e) {
            TargetRun t;
            t.trace = target.trace;
            t.error = std::string(e.what());
            r.targets.push_back(std::move(t));
        }
    }
    return r;
}

/// Runs every repetition (concurrently when `parallel`) and scores it.
/// Results are assembled in repetition order, so the row does not depend
/// on scheduling.
inline ScenarioRun run_scenario(const Scenario& s, bool parallel = true) {
    s.validate();
    ScenarioRun out;
    out.scenario = s;
    if (parallel) {
        std::vector<std::future<RepResult>> jobs;
        for (int k = 0; k < s.repetitions; ++k) jobs.push_back(std::async(std::launch::async, run_repetition, std::cref(s), k));
        for (auto& j : jobs) out.reps.push_back(j.get());
    } else {
        for (int k = 0; k < s.repetitions; ++k) out.reps.push_back(run_repetition(s, k));
    }

    out.row.scenario = s.name;
    for (const auto& r : out.reps) {
        if (r.ok()) {
            out.row.values.push_back(r.mean_abs_error());
            out.row.failures.emplace_back();
        } else {
            out.row.values.push_back(std::nullopt);
            out.row.failures.push_back(r.error());
        }
        for (const auto& t : r.targets) {
            if (!t.result) continue;
            for (const auto& w : t.result->windows) {
                out.row.coincidence_windows += w.coincidence;
                out.row.relaxed_windows += w.gate_relaxed;
            }
        }
    }
    aggregate(out.row);
    return out;
}

inline std::vector<ScenarioRun> sweep(const std::vector<Scenario>& scenarios, bool parallel = true) {
    std::vector<ScenarioRun> out;
    for (const auto& s : scenarios) out.push_back(run_scenario(s, parallel));
    return out;
}

inline ScoreTable score_table(const std::vector<ScenarioRun>& runs) {
    ScoreTable t;
    for (const auto& r : runs) t.rows.push_back(r.row);
    return t;
}

// ============================================================================
// Archive
// ============================================================================

/// <dir>/score_table.csv and <dir>/<scenario>/rep_<k>/ holding config,
/// trace.csv(.meta), hr.csv, report, report.json, modes.csv, labels.csv,
/// windows.csv and, on failure, error. Files for a second target carry a
/// "_2" suffix. Returns the number of reports written.
inline std::size_t write_archive(const std::filesystem::path& dir, const std::vector<ScenarioRun>& runs) {
    std::filesystem::create_directories(dir);
    score_table(runs).write_csv(dir / "score_table.csv");
    std::size_t reports = 0;
    for (const auto& run : runs) {
        for (const auto& rep : run.reps) {
            const auto rd = dir / run.scenario.name / ("rep_" + std::to_string(rep.rep));
            std::filesystem::create_directories(rd);
            {
                auto f = io::open_out(rd / "config");
                f << echo_config(run.scenario.rep_config(rep.rep));
            }
            for (std::size_t i = 0; i < rep.targets.size(); ++i) {
                const auto& t = rep.targets[i];
                const std::string sfx = i == 0 ? "" : "_" + std::to_string(i + 1);
                if (!t.trace.samples.empty()) io::write_trace(rd / ("trace" + sfx + ".csv"), t.trace);
                if (t.result) {
                    io::write_series(rd / ("hr" + sfx + ".csv"), t.result->series());
                    auto f = io::open_out(rd / ("modes" + sfx + ".csv"));
                    io::write_mode_table(f, t.result->windows);
                    auto g = io::open_out(rd / ("labels" + sfx + ".csv"));
                    io::write_label_table(g, t.result->windows);
                    auto h = io::open_out(rd / ("windows" + sfx + ".csv"));
                    io::write_window_table(h, t.result->windows);
                }
                if (t.report) {
                    io::write_report_text(rd / ("report" + sfx), *t.report);
                    io::write_report_json(rd / ("report" + sfx + ".json"), *t.report);
                    ++reports;
                }
                if (!t.ok()) {
                    auto f = io::open_out(rd / ("error" + sfx));
                    f << t.error << '\n';
                }
            }
        }
    }
    return reports;
}

// ============================================================================
// Default scenarios
// ============================================================================

namespace detail {

inline Scenario trace_scenario(std::string name, double resp_freq, std::vector<double> harmonics, const std::string& heart,
                               std::optional<double> snr_db, std::uint64_t seed_base) {
    Scenario s;
    s.name = std::move(name);
    s.seed_base = seed_base;
    auto& syn = s.config.synth;
    syn.resp.fundamental_freq = resp_freq;
    syn.resp.harmonics = std::move(harmonics);
    syn.heart.rate_trajectory = parse_trajectory(heart);
    syn.snr_db = snr_db;
    syn.noise_std = 0.0;
    return s;
}

inline Scenario radar_scenario(std::string name, double noise_floor, std::optional<double> second_range,
                               std::uint64_t seed_base) {
    Scenario s = trace_scenario(std::move(name), 0.3, {1.0, 0.3, 0.15}, "exponential:140:110:30", std::nullopt, seed_base);
    s.source = Source::Radar;
    s.config.radar.noise_floor = noise_floor;
    s.config.radar.second_range = second_range;
    return s;
}

}  // namespace detail

/// The standard scenario set. The 3x and 2x respiration-harmonic crossings
/// are always included so the coincidence rule is exercised.
inline std::vector<Scenario> default_scenarios() {
    using detail::radar_scenario;
    using detail::trace_scenario;
    std::vector<Scenario> s;
    s.push_back(trace_scenario("clean-constant-100", 0.3, {1.0, 0.3, 0.15}, "constant:100", 30.0, 100));
    s.push_back(trace_scenario("recovery-152-120", 0.35, {1.0, 0.3, 0.15, 0.08}, "exponential:152:120:30", 15.0, 200));
    s.push_back(trace_scenario("pure-tones-noiseless", 0.3, {1.0}, "constant:120", std::nullopt, 300));
    s.push_back(trace_scenario("coincidence-3x", 0.5, {1.0, 0.08, 0.04}, "exponential:100:80:30", 25.0, 400));
    s.push_back(trace_scenario("coincidence-2x", 0.55, {1.0, 0.08, 0.04}, "exponential:80:56:30", 25.0, 500));
    s.push_back(trace_scenario("initial-plus40", 0.4, {1.0, 0.2, 0.1}, "exponential:110:80:30", 15.0, 600));
    s.push_back(trace_scenario("initial-plus60", 0.4, {1.0, 0.2, 0.1}, "exponential:130:90:30", 15.0, 700));
    s.push_back(trace_scenario("initial-plus80", 0.4, {1.0, 0.2, 0.1}, "exponential:150:95:30", 15.0, 800));
    s.push_back(radar_scenario("radar-noise-1", 1.0, std::nullopt, 900));
    s.push_back(radar_scenario("radar-noise-10", 10.0, std::nullopt, 1000));
    s.push_back(radar_scenario("radar-noise-40", 40.0, std::nullopt, 1100));
    s.push_back(radar_scenario("radar-two-targets", 1.0, 2.0, 1200));
    return s;
}

}  // namespace mmhrr
