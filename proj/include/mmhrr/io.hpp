/**
 * File formats: trace CSV plus key=value sidecar, radar cube binary, HR
 * series CSV, HRR report (key=value and JSON) and per-window mode tables.
 * Numbers are written with %.17g so files round-trip exactly.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/hr_estimate.hpp"
#include "mmhrr/pipeline.hpp"
#include "mmhrr/radar_sim.hpp"
#include "mmhrr/signal_model.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mmhrr::io {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& stage, std::size_t line) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || b == e) throw ParseError(stage, "not a number: '" + s + "'", line);
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("io", "cannot open for writing: " + p.string());
    return f;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("io", "cannot open for reading: " + p.string());
    return f;
}

// ============================================================================
// key=value files
// ============================================================================

using KeyValues = std::map<std::string, std::string>;

/// Blank lines and lines starting with '#' are ignored.
inline KeyValues parse_key_values(std::istream& in, const std::string& stage) {
    KeyValues kv;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(stage, "expected key=value, got '" + t + "'", no);
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) throw ParseError(stage, "empty key", no);
        kv[key] = trim(t.substr(eq + 1));
    }
    return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& p, const std::string& stage) {
    auto f = open_in(p);
    return parse_key_values(f, stage);
}

// ============================================================================
// Traces
// ============================================================================

inline std::filesystem::path meta_path(const std::filesystem::path& trace_csv) {
    return trace_csv.string() + ".meta";
}

inline KeyValues trace_metadata(const ChestMotionTrace& tr) {
    KeyValues kv;
    kv["sample_rate"] = fmt(tr.sample_rate);
    kv["samples"] = std::to_string(tr.size());
    kv["unit"] = tr.unit == Unit::Millimeters ? "mm" : "rad";
    if (!tr.ground_truth) return kv;
    const auto& g = *tr.ground_truth;
    kv["seed"] = std::to_string(g.seed);
    kv["noise_std"] = fmt(g.noise_std);
    if (g.respiration) {
        kv["resp_freq"] = fmt(g.respiration->fundamental_freq);
        std::string h;
        for (double a : g.respiration->harmonics) h += (h.empty() ? "" : ";") + fmt(a);
        kv["resp_harmonics"] = h;
        kv["resp_phase"] = fmt(g.respiration->phase_offset);
    }
    if (g.heartbeat) {
        kv["heart_trajectory"] = g.heartbeat->rate_trajectory.description;
        kv["heart_amplitude"] = fmt(g.heartbeat->amplitude);
        kv["heart_waveform"] = to_string(g.heartbeat->waveform);
    }
    return kv;
}

inline void write_trace(const std::filesystem::path& p, const ChestMotionTrace& tr, const KeyValues& extra = {}) {
    {
        auto f = open_out(p);
        f << (tr.unit == Unit::Millimeters ? "time_s,displacement_mm\n" : "time_s,phase_rad\n");
        for (std::size_t i = 0; i < tr.size(); ++i) f << fmt(tr.time(i)) << ',' << fmt(tr.samples[i]) << '\n';
    }
    auto meta = trace_metadata(tr);
    for (const auto& [k, v] : extra) meta[k] = v;
    auto f = open_out(meta_path(p));
    for (const auto& [k, v] : meta) f << k << '=' << v << '\n';
}

inline ChestMotionTrace read_trace(const std::filesystem::path& p) {
    const std::string stage = "io";
    auto f = open_in(p);
    std::string line;
    std::size_t no = 1;
    if (!std::getline(f, line)) throw ParseError(stage, p.string() + ": empty file", 1);
    ChestMotionTrace tr;
    const auto header = trim(line);
    if (header == "time_s,displacement_mm") tr.unit = Unit::Millimeters;
    else if (header == "time_s,phase_rad") tr.unit = Unit::Radians;
    else throw ParseError(stage, p.string() + ": expected header 'time_s,displacement_mm'", 1);

    std::vector<double> times;
    while (std::getline(f, line)) {
        ++no;
        if (trim(line).empty()) continue;
        const auto cols = split(trim(line), ',');
        if (cols.size() != 2) throw ParseError(stage, p.string() + ": expected 2 columns", no);
        times.push_back(parse_double(cols[0], stage, no));
        tr.samples.push_back(parse_double(cols[1], stage, no));
    }
    if (tr.samples.size() < 2) throw ParseError(stage, p.string() + ": fewer than 2 samples", no);

    KeyValues meta;
    if (std::filesystem::exists(meta_path(p))) meta = read_key_values(meta_path(p), stage);
    if (meta.count("sample_rate")) {
        tr.sample_rate = parse_double(meta["sample_rate"], stage, 0);
    } else {
        tr.sample_rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
    }
    if (!(tr.sample_rate >= kMinTraceSampleRate))
        throw ParseError(stage, p.string() + ": sample_rate must be >= 20 Hz", 0);

    if (meta.count("seed")) {
        GroundTruth g;
        g.seed = std::stoull(meta["seed"]);
        g.noise_std = meta.count("noise_std") ? parse_double(meta["noise_std"], stage, 0) : 0.0;
        if (meta.count("resp_freq")) {
            RespirationModel r;
            r.fundamental_freq = parse_double(meta["resp_freq"], stage, 0);
            r.harmonics.clear();
            for (const auto& a : split(meta["resp_harmonics"], ';')) r.harmonics.push_back(parse_double(a, stage, 0));
            r.phase_offset = meta.count("resp_phase") ? parse_double(meta["resp_phase"], stage, 0) : 0.0;
            g.respiration = r;
        }
        if (meta.count("heart_trajectory")) {
            HeartbeatModel h;
            h.rate_trajectory = parse_trajectory(meta["heart_trajectory"]);
            h.amplitude = meta.count("heart_amplitude") ? parse_double(meta["heart_amplitude"], stage, 0) : h.amplitude;
            if (meta.count("heart_waveform")) h.waveform = parse_waveform(meta["heart_waveform"]);
            g.heartbeat = h;
        }
        tr.ground_truth = g;
    }
    return tr;
}

/// Ground-truth heart-rate trajectory recorded with a trace, if any.
inline std::optional<RateTrajectory> truth_of(const ChestMotionTrace& tr) {
    if (tr.ground_truth && tr.ground_truth->heartbeat) return tr.ground_truth->heartbeat->rate_trajectory;
    return std::nullopt;
}

// ============================================================================
// Radar cube
// ============================================================================

inline constexpr const char* kCubeMagic = "MMHRR-CUBE 1";

namespace detail {

inline void put_f32(std::ostream& out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

inline float get_f32(const unsigned char* b) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

}  // namespace detail

/// Text header terminated by `end_header`, then little-endian float32 I, Q
/// pairs, frame-major.
inline void write_cube(const std::filesystem::path& p, const RadarCube& cube) {
    auto f = open_out(p);
    f << kCubeMagic << '\n'
      << "frames=" << cube.frames << '\n'
      << "samples_per_chirp=" << cube.samples_per_chirp << '\n'
      << "frame_rate=" << fmt(cube.frame_rate) << '\n'
      << "bin_size=" << fmt(cube.bin_size) << '\n'
      << "wavelength=" << fmt(cube.wavelength) << '\n'
      << "end_header\n";
    for (const auto& v : cube.iq) {
        detail::put_f32(f, static_cast<float>(v.real()));
        detail::put_f32(f, static_cast<float>(v.imag()));
    }
}

inline RadarCube read_cube(const std::filesystem::path& p) {
    const std::string stage = "io";
    auto f = open_in(p);
    std::string line;
    std::size_t no = 1;
    if (!std::getline(f, line) || trim(line) != kCubeMagic)
        throw ParseError(stage, p.string() + ": missing '" + std::string(kCubeMagic) + "' magic line", 1);
    KeyValues kv;
    bool ended = false;
    while (std::getline(f, line)) {
        ++no;
        if (trim(line) == "end_header") {
            ended = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(stage, p.string() + ": malformed header line", no);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (!ended) throw ParseError(stage, p.string() + ": header not terminated by end_header", no);
    for (const char* k : {"frames", "samples_per_chirp", "frame_rate", "bin_size", "wavelength"})
        if (!kv.count(k)) throw ParseError(stage, p.string() + ": header lacks '" + k + "'", no);

    RadarCube cube;
    cube.frames = static_cast<std::size_t>(parse_double(kv["frames"], stage, no));
    cube.samples_per_chirp = static_cast<std::size_t>(parse_double(kv["samples_per_chirp"], stage, no));
    cube.frame_rate = parse_double(kv["frame_rate"], stage, no);
    cube.bin_size = parse_double(kv["bin_size"], stage, no);
    cube.wavelength = parse_double(kv["wavelength"], stage, no);

    const std::size_t count = cube.frames * cube.samples_per_chirp;
    const auto data_offset = static_cast<std::size_t>(f.tellg());
    std::vector<unsigned char> raw(count * 8);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    const auto got = static_cast<std::size_t>(f.gcount());
    if (got != raw.size())
        throw ParseError(stage, p.string() + ": payload truncated at byte offset " + std::to_string(data_offset + got) +
                                    " (expected " + std::to_string(raw.size()) + " payload bytes)",
                         no);
    cube.iq.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        cube.iq[i] = {detail::get_f32(&raw[8 * i]), detail::get_f32(&raw[8 * i + 4])};
    return cube;
}

// ============================================================================
// HR series and report
// ============================================================================

inline void write_series(std::ostream& f, const HrSeries& s) {
    f << "time_s,hr_bpm,l_b_s,flag\n";
    for (const auto& p : s.points) f << fmt(p.time_s) << ',' << fmt(p.hr_bpm) << ',' << fmt(p.l_b) << ',' << to_string(p.flag) << '\n';
}

inline void write_series(const std::filesystem::path& p, const HrSeries& s) {
    auto f = open_out(p);
    write_series(f, s);
}

inline PointFlag parse_flag(const std::string& s, std::size_t line) {
    for (auto f : {PointFlag::Ok, PointFlag::CarryForward, PointFlag::NoHeartbeat})
        if (s == to_string(f)) return f;
    throw ParseError("io", "unknown flag '" + s + "'", line);
}

inline HrSeries read_series(const std::filesystem::path& p) {
    auto f = open_in(p);
    std::string line;
    std::size_t no = 1;
    if (!std::getline(f, line) || trim(line) != "time_s,hr_bpm,l_b_s,flag")
        throw ParseError("io", p.string() + ": expected header 'time_s,hr_bpm,l_b_s,flag'", 1);
    HrSeries s;
    while (std::getline(f, line)) {
        ++no;
        if (trim(line).empty()) continue;
        const auto c = split(trim(line), ',');
        if (c.size() != 4) throw ParseError("io", p.string() + ": expected 4 columns", no);
        s.points.push_back({parse_double(c[0], "io", no), parse_double(c[1], "io", no), parse_double(c[2], "io", no),
                            parse_flag(c[3], no)});
    }
    return s;
}

inline KeyValues report_fields(const HrrReport& r) {
    KeyValues kv;
    kv["initial_time_s"] = fmt(r.initial_time);
    kv["initial_hr"] = fmt(r.initial_hr);
    kv["hr_at_60s"] = fmt(r.hr_at_60s);
    kv["hrr_60"] = fmt(r.hrr_60);
    kv["points"] = std::to_string(r.curve.size());
    kv["carry_fraction"] = fmt(r.carry_fraction);
    if (r.mean_abs_error) kv["mean_abs_error"] = fmt(*r.mean_abs_error);
    if (r.max_abs_error) kv["max_abs_error"] = fmt(*r.max_abs_error);
    if (r.truth_hrr_60) kv["truth_hrr_60"] = fmt(*r.truth_hrr_60);
    return kv;
}

inline void write_report_text(const std::filesystem::path& p, const HrrReport& r) {
    auto f = open_out(p);
    for (const auto& [k, v] : report_fields(r)) f << k << '=' << v << '\n';
}

inline nlohmann::ordered_json report_json(const HrrReport& r) {
    nlohmann::ordered_json j;
    j["initial_time_s"] = r.initial_time;
    j["initial_hr"] = r.initial_hr;
    j["hr_at_60s"] = r.hr_at_60s;
    j["hrr_60"] = r.hrr_60;
    j["carry_fraction"] = r.carry_fraction;
    if (r.mean_abs_error) j["mean_abs_error"] = *r.mean_abs_error;
    if (r.max_abs_error) j["max_abs_error"] = *r.max_abs_error;
    if (r.truth_hrr_60) j["truth_hrr_60"] = *r.truth_hrr_60;
    auto& curve = j["curve"] = nlohmann::ordered_json::array();
    for (const auto& p : r.curve.points)
        curve.push_back({{"time_s", p.time_s}, {"hr_bpm", p.hr_bpm}, {"l_b_s", p.l_b}, {"flag", to_string(p.flag)}});
    return j;
}

inline void write_report_json(const std::filesystem::path& p, const HrrReport& r) {
    auto f = open_out(p);
    f << report_json(r).dump(2) << '\n';
}

// ============================================================================
// Mode tables
// ============================================================================

/// window_start_s,mode,center_freq_hz,energy_share
inline void write_mode_table(std::ostream& f, const std::vector<WindowDiagnostics>& windows) {
    f << "window_start_s,mode,center_freq_hz,energy_share\n";
    for (const auto& w : windows)
        for (const auto& m : w.modes)
            f << fmt(w.start) << ',' << m.index << ',' << fmt(m.center_freq) << ',' << fmt(m.energy_share) << '\n';
}

/// window_start_s,mode,label,peak_freq_hz,energy
inline void write_label_table(std::ostream& f, const std::vector<WindowDiagnostics>& windows) {
    f << "window_start_s,mode,label,peak_freq_hz,energy\n";
    for (const auto& w : windows)
        for (const auto& m : w.modes)
            f << fmt(w.start) << ',' << m.index << ',' << m.label.name() << ',' << fmt(m.label.peak_freq) << ','
              << fmt(m.label.energy) << '\n';
}

/// window_start_s,alpha,r_max,energy_loss,probes,gate_relaxed,coincidence,heartbeat_mode
inline void write_window_table(std::ostream& f, const std::vector<WindowDiagnostics>& windows) {
    f << "window_start_s,alpha,r_max,energy_loss,probes,gate_relaxed,coincidence,heartbeat_mode\n";
    for (const auto& w : windows)
        f << fmt(w.start) << ',' << fmt(w.alpha) << ',' << fmt(w.r_max) << ',' << fmt(w.energy_loss) << ',' << w.probes
          << ',' << w.gate_relaxed << ',' << w.coincidence << ','
          << (w.heartbeat ? std::to_string(*w.heartbeat) : std::string("none")) << '\n';
}

inline void write_mode_dump(const std::filesystem::path& dir, const std::vector<WindowDiagnostics>& windows) {
    {
        auto f = open_out(dir / "modes.csv");
        write_mode_table(f, windows);
    }
    {
        auto f = open_out(dir / "labels.csv");
        write_label_table(f, windows);
    }
    auto f = open_out(dir / "windows.csv");
    write_window_table(f, windows);
}

inline std::string read_file(const std::filesystem::path& p) {
    auto f = open_in(p);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace mmhrr::io
