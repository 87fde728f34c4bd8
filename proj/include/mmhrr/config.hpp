/**
 * Run configuration: every stage parameter under one flat key=value
 * namespace. Files and command-line overrides use the same keys; the
 * resolved configuration is echoed in the same format and parses back to
 * the identical configuration.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/io.hpp"
#include "mmhrr/pipeline.hpp"
#include "mmhrr/radar_sim.hpp"
#include "mmhrr/signal_model.hpp"

#include <filesystem>
#include <cmath>
#include <functional>
#include <sstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mmhrr {

struct SynthSpec {
    bool respiration = true;
    RespirationModel resp{.fundamental_freq = 0.35, .harmonics = {1.0, 0.3, 0.15, 0.08}, .phase_offset = 0.0};
    HeartbeatModel heart{.rate_trajectory = exponential_recovery(152, 120, 30), .amplitude = 0.1,
                         .waveform = Waveform::Sinusoid};
    double noise_std = 0.0;         // mm, used when snr_db is unset
    std::optional<double> snr_db = 15.0;
    double sample_rate = 100.0;
    double duration = 70.0;

    double resolved_noise_std() const {
        if (!snr_db) return noise_std;
        return noise_std_for_snr(respiration ? std::optional(resp) : std::nullopt, heart, *snr_db, sample_rate, duration);
    }
};

struct RadarSpec {
    RadarConfig radar;
    double target_range = 1.0;  // m
    double target_drift = 0.0;  // m/s
    double noise_floor = 0.0;
    std::size_t search_width = 2;
    std::optional<double> second_range;  // m; enables a second target
    RateTrajectory second_trajectory = exponential_recovery(130, 100, 30);
    double second_resp_freq = 0.25;
};

struct RunConfig {
    std::uint64_t seed = 1;
    SynthSpec synth;
    RadarSpec radar;
    PipelineConfig pipeline;

    void validate() const {
        auto wrap = [](auto&& fn) {
            try {
                fn();
            } catch (const InvalidArgument& e) {
                throw InvalidArgument("config", e.what());
            }
        };
        wrap([&] {
            if (!(synth.sample_rate >= kMinTraceSampleRate))
                throw InvalidArgument("config", "sample_rate must be >= 20 Hz");
            if (!(synth.duration > 0.0)) throw InvalidArgument("config", "duration must be > 0");
            if (!(synth.noise_std >= 0.0)) throw InvalidArgument("config", "noise_std must be >= 0");
            if (synth.respiration) synth.resp.validate();
            if (!(synth.heart.amplitude > 0.0)) throw InvalidArgument("config", "heart_amplitude must be > 0");
            pipeline.validate(synth.sample_rate);
            radar.radar.validate();
            if (!(radar.noise_floor >= 0.0)) throw InvalidArgument("config", "noise_floor must be >= 0");
            if (radar.search_width < 1) throw InvalidArgument("config", "search_width must be >= 1");
        });
    }
};

namespace detail {

struct ConfigKey {
    std::string key;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline double to_num(const std::string& key, const std::string& v) {
    try {
        return io::parse_double(v, "config", 0);
    } catch (const ParseError&) {
        throw InvalidArgument("config", key + ": expected a number, got '" + v + "'");
    }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
    const double d = to_num(key, v);
    if (d < 0 || d != std::floor(d)) throw InvalidArgument("config", key + ": expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidArgument("config", key + ": expected true or false, got '" + v + "'");
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

#define MMHRR_NUM(KEY, HELP, FIELD)                                                                     \
    ConfigKey {                                                                                         \
        KEY, HELP, [](const RunConfig& c) { return io::fmt(static_cast<double>(c.FIELD)); },            \
            [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_num(KEY, v)); } \
    }
#define MMHRR_COUNT(KEY, HELP, FIELD)                                                                   \
    ConfigKey {                                                                                         \
        KEY, HELP, [](const RunConfig& c) { return std::to_string(c.FIELD); },                          \
            [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_count(KEY, v)); } \
    }
#define MMHRR_BOOL(KEY, HELP, FIELD)                                                                    \
    ConfigKey {                                                                                         \
        KEY, HELP, [](const RunConfig& c) { return from_bool(c.FIELD); },                               \
            [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); }                       \
    }

inline std::string optional_num(const std::optional<double>& v) { return v ? io::fmt(*v) : "none"; }

inline std::optional<double> parse_optional_num(const std::string& key, const std::string& v) {
    if (v == "none") return std::nullopt;
    return to_num(key, v);
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "random seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) {
             try {
                 std::size_t used = 0;
                 c.seed = std::stoull(v, &used);
                 if (used != v.size()) throw std::invalid_argument("trailing");
             } catch (const std::exception&) {
                 throw InvalidArgument("config", "seed: expected a non-negative integer, got '" + v + "'");
             }
         }},
        MMHRR_NUM("sample_rate", "trace sample rate, Hz", synth.sample_rate),
        MMHRR_NUM("duration", "trace duration, s", synth.duration),
        MMHRR_NUM("noise_std", "displacement noise std, mm (used when snr_db=none)", synth.noise_std),
        {"snr_db", "displacement SNR in dB, or none", [](const RunConfig& c) { return optional_num(c.synth.snr_db); },
         [](RunConfig& c, const std::string& v) { c.synth.snr_db = parse_optional_num("snr_db", v); }},
        MMHRR_BOOL("respiration", "include respiration", synth.respiration),
        MMHRR_NUM("resp_freq", "respiration fundamental, Hz", synth.resp.fundamental_freq),
        {"resp_harmonics", "harmonic amplitudes in mm, ';'-separated, fundamental first",
         [](const RunConfig& c) {
             std::string s;
             for (double a : c.synth.resp.harmonics) s += (s.empty() ? "" : ";") + io::fmt(a);
             return s;
         },
         [](RunConfig& c, const std::string& v) {
             c.synth.resp.harmonics.clear();
             for (const auto& a : io::split(v, ';')) c.synth.resp.harmonics.push_back(to_num("resp_harmonics", a));
         }},
        MMHRR_NUM("resp_phase", "respiration phase offset, rad", synth.resp.phase_offset),
        {"heart_trajectory", "constant:<bpm> or exponential:<hi>:<hf>:<tau>",
         [](const RunConfig& c) { return c.synth.heart.rate_trajectory.description; },
         [](RunConfig& c, const std::string& v) { c.synth.heart.rate_trajectory = parse_trajectory(v); }},
        MMHRR_NUM("heart_amplitude", "heartbeat amplitude, mm", synth.heart.amplitude),
        {"heart_waveform", "sinusoid or pulse-like", [](const RunConfig& c) { return std::string(to_string(c.synth.heart.waveform)); },
         [](RunConfig& c, const std::string& v) { c.synth.heart.waveform = parse_waveform(v); }},

        MMHRR_NUM("carrier_freq", "radar carrier, Hz", radar.radar.carrier_freq),
        MMHRR_NUM("bandwidth", "chirp bandwidth, Hz", radar.radar.bandwidth),
        MMHRR_NUM("chirp_duration", "chirp duration, s", radar.radar.chirp_duration),
        MMHRR_COUNT("samples_per_chirp", "IF samples per chirp", radar.radar.samples_per_chirp),
        MMHRR_NUM("frame_rate", "radar frame rate, Hz", radar.radar.frame_rate),
        MMHRR_NUM("target_range", "target range, m (also the tracking seed)", radar.target_range),
        MMHRR_NUM("target_drift", "slow range drift, m/s", radar.target_drift),
        MMHRR_NUM("noise_floor", "IF noise power relative to a unit target", radar.noise_floor),
        MMHRR_COUNT("search_width", "tracking search half-width, bins", radar.search_width),
        {"second_range", "range of a second target in m, or none",
         [](const RunConfig& c) { return optional_num(c.radar.second_range); },
         [](RunConfig& c, const std::string& v) { c.radar.second_range = parse_optional_num("second_range", v); }},
        {"second_trajectory", "heart-rate trajectory of the second target",
         [](const RunConfig& c) { return c.radar.second_trajectory.description; },
         [](RunConfig& c, const std::string& v) { c.radar.second_trajectory = parse_trajectory(v); }},
        MMHRR_NUM("second_resp_freq", "respiration fundamental of the second target, Hz", radar.second_resp_freq),

        MMHRR_NUM("filter_low", "band-pass lower edge, Hz", pipeline.filter.pass_low),
        MMHRR_NUM("filter_high", "band-pass upper edge, Hz", pipeline.filter.pass_high),
        {"filter_order", "Butterworth prototype order", [](const RunConfig& c) { return std::to_string(c.pipeline.filter.order); },
         [](RunConfig& c, const std::string& v) { c.pipeline.filter.order = static_cast<int>(to_count("filter_order", v)); }},
        {"vmd_k", "number of VMD modes", [](const RunConfig& c) { return std::to_string(c.pipeline.vmd.K); },
         [](RunConfig& c, const std::string& v) { c.pipeline.vmd.K = static_cast<int>(to_count("vmd_k", v)); }},
        MMHRR_NUM("vmd_tau", "VMD dual ascent step", pipeline.vmd.tau),
        MMHRR_NUM("vmd_tolerance", "VMD convergence tolerance", pipeline.vmd.tolerance),
        {"vmd_max_iters", "VMD iteration cap", [](const RunConfig& c) { return std::to_string(c.pipeline.vmd.max_iters); },
         [](RunConfig& c, const std::string& v) { c.pipeline.vmd.max_iters = static_cast<int>(to_count("vmd_max_iters", v)); }},
        MMHRR_NUM("alpha_lo", "alpha search lower bound", pipeline.alpha_range.lo),
        MMHRR_NUM("alpha_hi", "alpha search upper bound", pipeline.alpha_range.hi),
        MMHRR_NUM("alpha_stop_ratio", "bisection stops when hi/lo falls below this", pipeline.alpha_range.stop_ratio),
        MMHRR_BOOL("widest_alpha", "return the largest passing alpha instead of the first", pipeline.widest_alpha),
        MMHRR_NUM("mu1", "correlation gate, in (0, 1)", pipeline.gates.mu1),
        MMHRR_NUM("mu2", "energy-loss gate, in (0, 1)", pipeline.gates.mu2),
        MMHRR_NUM("hr_band_low", "heart band lower edge, Hz", pipeline.select.hr_band_low),
        MMHRR_NUM("hr_band_high", "heart band upper edge, Hz", pipeline.select.hr_band_high),
        MMHRR_NUM("resp_band_low", "respiration band lower edge, Hz", pipeline.select.resp_band_low),
        MMHRR_NUM("resp_band_high", "respiration band upper edge, Hz", pipeline.select.resp_band_high),
        MMHRR_NUM("harmonic_tol", "harmonic tolerance relative to f_resp", pipeline.select.harmonic_tol),
        {"max_harmonic_order", "highest harmonic order labelled",
         [](const RunConfig& c) { return std::to_string(c.pipeline.select.max_harmonic_order); },
         [](RunConfig& c, const std::string& v) {
             c.pipeline.select.max_harmonic_order = static_cast<int>(to_count("max_harmonic_order", v));
         }},
        MMHRR_NUM("noise_prominence", "minimum peak-to-mean ratio", pipeline.select.noise_prominence),
        MMHRR_NUM("noise_halfwidth", "band for the energy concentration test, Hz", pipeline.select.noise_halfwidth),
        MMHRR_NUM("min_band_fraction", "minimum energy share near the peak", pipeline.select.min_band_fraction),
        MMHRR_NUM("min_relative_energy", "minimum energy relative to the strongest in-band mode",
                  pipeline.select.min_relative_energy),
        MMHRR_NUM("l_b_max", "maximum counting window, s", pipeline.windows.l_b_max),
        MMHRR_NUM("l_min", "first-pass counting floor, s", pipeline.windows.l_min),
        MMHRR_NUM("l_min_low", "adaptive floor lower bound, s", pipeline.windows.l_min_low),
        MMHRR_NUM("l_min_high", "adaptive floor upper bound, s", pipeline.windows.l_min_high),
        MMHRR_NUM("cadence", "output spacing, s", pipeline.windows.cadence),
        MMHRR_NUM("beats_per_window", "beats spanned by the adaptive floor", pipeline.windows.beats_per_window),
    };
    return keys;
}

#undef MMHRR_NUM
#undef MMHRR_COUNT
#undef MMHRR_BOOL

}  // namespace detail

inline std::string valid_config_keys() {
    std::string s;
    for (const auto& k : detail::config_keys()) s += (s.empty() ? "" : ", ") + k.key;
    return s;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (k.key == key) return k.set(cfg, value);
    throw InvalidArgument("config", "unknown key '" + key + "'; valid keys: " + valid_config_keys());
}

/// Defaults, then the file (if any), then overrides in order; validated.
inline RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    RunConfig cfg;
    if (file)
        for (const auto& [k, v] : io::read_key_values(*file, "config")) set_config_value(cfg, k, v);
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    RunConfig cfg;
    for (const auto& [k, v] : io::parse_key_values(in, "config")) set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
}

inline std::string echo_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += k.key + "=" + k.get(cfg) + "\n";
    return out;
}

inline std::string config_help() {
    std::string out;
    for (const auto& k : detail::config_keys()) out += "  " + k.key + "  " + k.help + "\n";
    return out;
}

// ============================================================================
// Inputs described by a configuration
// ============================================================================

inline ChestMotionTrace make_trace(const RunConfig& cfg) {
    const auto& s = cfg.synth;
    const auto resp = s.respiration ? std::optional(s.resp) : std::nullopt;
    return synthesize_trace(resp, s.heart, s.resolved_noise_std(), s.sample_rate, s.duration, cfg.seed);
}

/// Second target: same shape, its own rates, seed offset by one.
inline ChestMotionTrace make_second_trace(const RunConfig& cfg) {
    RunConfig other = cfg;
    other.synth.resp.fundamental_freq = cfg.radar.second_resp_freq;
    other.synth.heart.rate_trajectory = cfg.radar.second_trajectory;
    other.seed = cfg.seed + 1;
    return make_trace(other);
}

inline TargetScene make_scene(const RunConfig& cfg) {
    TargetScene scene;
    scene.noise_floor = cfg.radar.noise_floor;
    scene.targets.push_back({cfg.radar.target_range, 0.0, make_trace(cfg), cfg.radar.target_drift, 1.0});
    if (cfg.radar.second_range)
        scene.targets.push_back({*cfg.radar.second_range, 0.0, make_second_trace(cfg), 0.0, 1.0});
    return scene;
}

inline RadarCube make_cube(const RunConfig& cfg) {
    RadarConfig rc = cfg.radar.radar;
    return simulate_frames(rc, make_scene(cfg), cfg.synth.duration, cfg.seed);
}

}  // namespace mmhrr
