/**
 * FMCW front-end simulation and target phase extraction.
 *
 * Each target contributes a dechirped complex tone whose beat frequency places
 * it at range_bin = range / bin_size and whose phase is 4*pi*range/lambda.
 * The range FFT is a plain rectangular DFT per chirp. Tracking follows the
 * spectral peak bin by bin, unwraps each bin's phase over frames and stitches
 * bin switches with the median inter-frame step of the preceding frames.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/fft.hpp"
#include "mmhrr/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <span>
#include <vector>

namespace mmhrr {

inline constexpr double kSpeedOfLight = 299792458.0;

struct RadarConfig {
    double carrier_freq = 79e9;                    // Hz
    double bandwidth = kSpeedOfLight / (2 * 0.05);  // Hz, 5 cm range bins
    double chirp_duration = 50e-6;                 // s
    std::size_t samples_per_chirp = 256;
    double frame_rate = 100.0;                     // Hz, one chirp per frame

    double wavelength() const { return kSpeedOfLight / carrier_freq; }
    double range_resolution() const { return kSpeedOfLight / (2.0 * bandwidth); }
    double max_range() const { return range_resolution() * static_cast<double>(samples_per_chirp - 1); }

    void validate() const {
        if (!(carrier_freq > 0.0)) throw InvalidArgument("radar-sim", "RadarConfig: carrier_freq must be > 0");
        if (!(bandwidth > 0.0)) throw InvalidArgument("radar-sim", "RadarConfig: range resolution c/(2*bandwidth) must be > 0");
        if (!(chirp_duration > 0.0)) throw InvalidArgument("radar-sim", "RadarConfig: chirp_duration must be > 0");
        if (samples_per_chirp < 8) throw InvalidArgument("radar-sim", "RadarConfig: samples_per_chirp must be >= 8");
        if (!(frame_rate >= kMinTraceSampleRate)) throw InvalidArgument("radar-sim", "RadarConfig: frame_rate must be >= 20 Hz");
    }
};

struct Target {
    double base_range = 1.0;  // m
    double angle_deg = 0.0;   // recorded only; no antenna pattern is modelled
    ChestMotionTrace trace;   // displacement in mm toward the radar's range axis
    double drift = 0.0;       // m/s, slow range drift
    double amplitude = 1.0;
};

struct TargetScene {
    std::vector<Target> targets;
    double noise_floor = 0.0;  // complex noise power per IF sample, relative to a unit-amplitude target

    void validate(const RadarConfig& cfg) const {
        if (targets.empty()) throw InvalidArgument("radar-sim", "TargetScene: no targets");
        if (!(noise_floor >= 0.0)) throw InvalidArgument("radar-sim", "TargetScene: noise_floor must be >= 0");
        for (const auto& t : targets) {
            if (!(t.base_range >= 0.0 && t.base_range <= cfg.max_range()))
                throw InvalidArgument("radar-sim", "TargetScene: base_range " + std::to_string(t.base_range) +
                                                       " m outside the unambiguous range [0, " +
                                                       std::to_string(cfg.max_range()) + "] m");
            if (t.trace.unit != Unit::Millimeters) throw InvalidArgument("radar-sim", "TargetScene: target trace must be in mm");
            if (t.trace.samples.empty()) throw InvalidArgument("radar-sim", "TargetScene: target trace is empty");
        }
        for (std::size_t i = 0; i < targets.size(); ++i)
            for (std::size_t j = i + 1; j < targets.size(); ++j)
                if (std::abs(targets[i].base_range - targets[j].base_range) < cfg.range_resolution())
                    throw InvalidArgument("radar-sim", "TargetScene: targets closer than one range bin");
    }
};

struct RadarCube {
    std::size_t frames = 0;
    std::size_t samples_per_chirp = 0;
    double frame_rate = 0.0;
    double bin_size = 0.0;    // m
    double wavelength = 0.0;  // m
    std::vector<std::complex<double>> iq;  // frame-major

    std::span<const std::complex<double>> frame(std::size_t m) const {
        return {iq.data() + m * samples_per_chirp, samples_per_chirp};
    }
};

/// Per-frame complex range spectra; spectrum_length equals samples_per_chirp.
struct RangeSpectra {
    std::size_t frames = 0;
    std::size_t spectrum_length = 0;
    std::vector<std::complex<double>> bins;  // frame-major

    std::complex<double> at(std::size_t frame, std::size_t bin) const { return bins[frame * spectrum_length + bin]; }
    std::vector<double> magnitude(std::size_t frame) const {
        std::vector<double> m(spectrum_length);
        for (std::size_t k = 0; k < spectrum_length; ++k) m[k] = std::abs(at(frame, k));
        return m;
    }
};

struct PhaseSequence {
    std::vector<double> phase;  // rad, stitched
    std::vector<std::size_t> source_bins;
    double sample_rate = 0.0;
    std::vector<std::size_t> switches;  // frames where the source bin changed
};

namespace detail {

/// Linear interpolation of a trace at time t, held at the ends.
inline double sample_at(const ChestMotionTrace& tr, double t) {
    const double x = t * tr.sample_rate;
    if (x <= 0.0) return tr.samples.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= tr.size()) return tr.samples.back();
    const double f = x - static_cast<double>(i);
    return tr.samples[i] * (1.0 - f) + tr.samples[i + 1] * f;
}

}  // namespace detail

/// Micro-displacement enters the tone phase only; the beat frequency follows
/// the slow range (base + drift), which is where bin position is decided.
inline RadarCube simulate_frames(const RadarConfig& cfg, const TargetScene& scene, double duration, std::uint64_t seed) {
    cfg.validate();
    scene.validate(cfg);
    if (!(duration > 0.0)) throw InvalidArgument("radar-sim", "simulate_frames: duration must be > 0");
    for (const auto& t : scene.targets)
        if (t.trace.duration() + 1e-9 < duration)
            throw InvalidArgument("radar-sim", "simulate_frames: target trace shorter than the requested duration");

    RadarCube cube;
    cube.frames = sample_count(cfg.frame_rate, duration);
    cube.samples_per_chirp = cfg.samples_per_chirp;
    cube.frame_rate = cfg.frame_rate;
    cube.bin_size = cfg.range_resolution();
    cube.wavelength = cfg.wavelength();
    cube.iq.assign(cube.frames * cube.samples_per_chirp, {0.0, 0.0});

    const double n_samples = static_cast<double>(cfg.samples_per_chirp);
    const double lambda = cfg.wavelength();
    for (std::size_t m = 0; m < cube.frames; ++m) {
        const double t = static_cast<double>(m) / cfg.frame_rate;
        auto* row = cube.iq.data() + m * cube.samples_per_chirp;
        for (const auto& tg : scene.targets) {
            const double slow = tg.base_range + tg.drift * t;
            if (slow < 0.0 || slow > cfg.max_range())
                throw InvalidArgument("radar-sim", "simulate_frames: target drifted outside the unambiguous range");
            const double range = slow + 1e-3 * detail::sample_at(tg.trace, t);
            const double bin = slow / cube.bin_size;
            const double phi = 4.0 * kPi * range / lambda;
            for (std::size_t n = 0; n < cube.samples_per_chirp; ++n)
                row[n] += std::polar(tg.amplitude, phi + 2.0 * kPi * bin * static_cast<double>(n) / n_samples);
        }
    }
    if (scene.noise_floor > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(scene.noise_floor / 2.0));
        for (auto& v : cube.iq) v += std::complex<double>(gauss(rng), gauss(rng));
    }
    return cube;
}

inline RangeSpectra range_fft(const RadarCube& cube) {
    if (cube.frames == 0 || cube.samples_per_chirp == 0) throw InvalidArgument("radar-sim", "range_fft: empty cube");
    RangeSpectra out;
    out.frames = cube.frames;
    out.spectrum_length = cube.samples_per_chirp;
    out.bins.reserve(cube.iq.size());
    for (std::size_t m = 0; m < cube.frames; ++m) {
        const auto spec = fft::forward(cube.frame(m));
        out.bins.insert(out.bins.end(), spec.begin(), spec.end());
    }
    return out;
}

/// Shifts the target content of frames >= `frame` by `shift` bins and
/// rotates it by `phase_offset`, emulating a peak hopping to a neighbour bin.
inline void inject_bin_switch(RadarCube& cube, std::size_t frame, int shift, double phase_offset) {
    const double n_samples = static_cast<double>(cube.samples_per_chirp);
    for (std::size_t m = frame; m < cube.frames; ++m)
        for (std::size_t n = 0; n < cube.samples_per_chirp; ++n)
            cube.iq[m * cube.samples_per_chirp + n] *=
                std::polar(1.0, phase_offset + 2.0 * kPi * shift * static_cast<double>(n) / n_samples);
}

inline std::vector<double> unwrap(std::span<const double> phase) {
    std::vector<double> out(phase.begin(), phase.end());
    double offset = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        double d = phase[i] - phase[i - 1];
        if (d > kPi) offset -= 2.0 * kPi * std::ceil((d - kPi) / (2.0 * kPi));
        else if (d < -kPi) offset += 2.0 * kPi * std::ceil((-d - kPi) / (2.0 * kPi));
        out[i] = phase[i] + offset;
    }
    return out;
}

inline constexpr std::size_t kStitchHistory = 5;
inline constexpr double kTrackingSnrFloor = 3.0;  // peak / median spectrum magnitude
inline constexpr double kTrackingLossTime = 1.0;  // s

/// Concatenates per-bin unwrapped phases along `bins`. At each switch the
/// later segment is offset so its boundary step equals the median of the
/// preceding (up to five) steps. With `stitch` false the raw per-bin phases
/// are concatenated, which is what the continuity check compares against.
inline PhaseSequence stitch_phase(const std::vector<std::vector<double>>& per_bin_unwrapped,
                                  std::span<const std::size_t> bins, std::size_t first_bin, double sample_rate,
                                  bool stitch = true) {
    PhaseSequence seq;
    seq.sample_rate = sample_rate;
    seq.source_bins.assign(bins.begin(), bins.end());
    seq.phase.resize(bins.size());
    double offset = 0.0;
    for (std::size_t m = 0; m < bins.size(); ++m) {
        const double raw = per_bin_unwrapped[bins[m] - first_bin][m];
        if (m > 0 && bins[m] != bins[m - 1]) {
            seq.switches.push_back(m);
            if (stitch) {
                std::vector<double> steps;
                for (std::size_t i = m - 1; i >= 1 && steps.size() < kStitchHistory; --i)
                    steps.push_back(seq.phase[i] - seq.phase[i - 1]);
                double target = 0.0;
                if (!steps.empty()) {
                    std::sort(steps.begin(), steps.end());
                    const std::size_t h = steps.size() / 2;
                    target = steps.size() % 2 ? steps[h] : 0.5 * (steps[h - 1] + steps[h]);
                }
                offset = seq.phase[m - 1] + target - raw;
            }
        }
        seq.phase[m] = raw + offset;
    }
    return seq;
}

inline PhaseSequence track_target(const RadarCube& cube, double expected_range, std::size_t search_width,
                                  bool stitch = true) {
    if (cube.frames == 0) throw InvalidArgument("radar-sim", "track_target: empty cube");
    const auto spectra = range_fft(cube);
    const std::size_t nbins = spectra.spectrum_length;
    const double guess = expected_range / cube.bin_size;
    if (!(guess >= 0.0 && guess < static_cast<double>(nbins)))
        throw InvalidArgument("radar-sim", "track_target: expected_range outside the range axis");

    auto argmax_near = [&](std::size_t m, std::size_t centre) {
        const std::size_t lo = centre >= search_width ? centre - search_width : 0;
        const std::size_t hi = std::min(nbins - 1, centre + search_width);
        std::size_t best = lo;
        for (std::size_t k = lo; k <= hi; ++k)
            if (std::abs(spectra.at(m, k)) > std::abs(spectra.at(m, best))) best = k;
        return best;
    };

    const auto lost_limit = static_cast<std::size_t>(std::llround(kTrackingLossTime * cube.frame_rate));
    std::vector<std::size_t> bins(cube.frames);
    std::size_t prev = static_cast<std::size_t>(std::llround(guess)), weak_run = 0;
    for (std::size_t m = 0; m < cube.frames; ++m) {
        bins[m] = argmax_near(m, prev);
        prev = bins[m];
        auto mag = spectra.magnitude(m);
        const double peak = mag[bins[m]];
        const auto mid = mag.begin() + static_cast<std::ptrdiff_t>(mag.size() / 2);
        std::nth_element(mag.begin(), mid, mag.end());
        weak_run = (peak < kTrackingSnrFloor * *mid || peak == 0.0) ? weak_run + 1 : 0;
        if (weak_run > lost_limit)
            throw TrackingLost("peak below " + std::to_string(kTrackingSnrFloor) + "x median spectrum for more than 1 s",
                               m);
    }

    const auto [lo_it, hi_it] = std::minmax_element(bins.begin(), bins.end());
    const std::size_t first = *lo_it;
    std::vector<std::vector<double>> unwrapped;
    for (std::size_t k = first; k <= *hi_it; ++k) {
        std::vector<double> raw(cube.frames);
        for (std::size_t m = 0; m < cube.frames; ++m) raw[m] = std::arg(spectra.at(m, k));
        unwrapped.push_back(unwrap(raw));
    }
    return stitch_phase(unwrapped, bins, first, cube.frame_rate, stitch);
}

/// displacement[i] = lambda * (phase[i] - phase[0]) / (4 pi), in mm.
inline ChestMotionTrace phase_to_displacement(const PhaseSequence& seq, double wavelength) {
    ChestMotionTrace out;
    out.sample_rate = seq.sample_rate;
    out.unit = Unit::Millimeters;
    out.samples.resize(seq.phase.size());
    for (std::size_t i = 0; i < seq.phase.size(); ++i)
        out.samples[i] = 1e3 * wavelength * (seq.phase[i] - seq.phase[0]) / (4.0 * kPi);
    return out;
}

inline double max_phase_jump(const PhaseSequence& seq) {
    double worst = 0.0;
    for (std::size_t i = 1; i < seq.phase.size(); ++i) worst = std::max(worst, std::abs(seq.phase[i] - seq.phase[i - 1]));
    return worst;
}

}  // namespace mmhrr
