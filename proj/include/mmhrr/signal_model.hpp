/**
 * Synthetic chest-motion signals with known ground truth.
 *
 * x(t) = x_r(t) + x_h(t) + n(t): a respiration Fourier series (DC absent),
 * a heartbeat whose phase is the running integral of a heart-rate
 * trajectory, and additive white Gaussian noise.
 */
#pragma once

#include "mmhrr/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace mmhrr {

inline constexpr double kPi = std::numbers::pi;

// ============================================================================
// Heart-rate trajectories
// ============================================================================

/// Instantaneous heart rate (bpm) as a function of time (s).
///
/// `description` is a parseable token (`constant:120`,
/// `exponential:152:120:30`) so trajectories survive a round trip through
/// trace metadata files.
struct RateTrajectory {
    std::function<double(double)> rate;
    std::string description;

    double operator()(double t) const { return rate(t); }
};

inline RateTrajectory constant_rate(double hr_bpm) {
    if (!(hr_bpm > 0.0)) throw InvalidArgument("signal-model", "constant rate must be > 0 bpm");
    std::ostringstream d;
    d.precision(17);
    d << "constant:" << hr_bpm;
    return {[hr_bpm](double) { return hr_bpm; }, d.str()};
}

/// HR(t) = hr_final + (hr_initial - hr_final) * exp(-t / time_constant).
inline RateTrajectory exponential_recovery(double hr_initial, double hr_final, double time_constant) {
    if (!(time_constant > 0.0))
        throw InvalidArgument("signal-model", "exponential_recovery: time_constant must be > 0");
    if (!(hr_final > 0.0))
        throw InvalidArgument("signal-model", "exponential_recovery: hr_final must be > 0");
    if (hr_initial < hr_final)
        throw InvalidArgument("signal-model", "exponential_recovery: hr_initial must be >= hr_final");
    std::ostringstream d;
    d.precision(17);
    d << "exponential:" << hr_initial << ':' << hr_final << ':' << time_constant;
    const double drop = hr_initial - hr_final;
    return {[=](double t) { return hr_final + drop * std::exp(-t / time_constant); }, d.str()};
}

/// Inverse of RateTrajectory::description.
inline RateTrajectory parse_trajectory(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
    auto num = [&](std::size_t i) {
        try {
            std::size_t used = 0;
            double v = std::stod(parts.at(i), &used);
            if (used != parts[i].size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw InvalidArgument("signal-model", "bad trajectory description '" + text + "'");
        }
    };
    if (parts.size() == 2 && parts[0] == "constant") return constant_rate(num(1));
    if (parts.size() == 4 && parts[0] == "exponential") return exponential_recovery(num(1), num(2), num(3));
    throw InvalidArgument("signal-model", "unknown trajectory description '" + text +
                                              "' (expected constant:<bpm> or exponential:<hi>:<hf>:<tau>)");
}

// ============================================================================
// Component models
// ============================================================================

struct RespirationModel {
    double fundamental_freq = 0.3;  // Hz
    /// harmonics[i] is the Fourier coefficient of harmonic n = i + 1 (mm);
    /// harmonics[0] is the fundamental. The DC term is always absent.
    std::vector<double> harmonics{1.0};
    double phase_offset = 0.0;  // rad, applied as a time shift (n * offset on harmonic n)

    double coefficient(std::size_t n) const {
        return (n >= 1 && n <= harmonics.size()) ? harmonics[n - 1] : 0.0;
    }

    void validate() const {
        if (!(fundamental_freq >= 10.0 / 60.0 - 1e-12))
            throw InvalidArgument("signal-model", "RespirationModel: fundamental_freq must be >= 10/60 Hz");
        if (harmonics.empty() || !(harmonics[0] > 0.0))
            throw InvalidArgument("signal-model", "RespirationModel: fundamental amplitude must be > 0");
        std::size_t nonzero_above = 0;
        for (std::size_t i = 0; i < harmonics.size(); ++i) {
            if (!std::isfinite(harmonics[i]))
                throw InvalidArgument("signal-model", "RespirationModel: harmonic amplitudes must be finite");
            if (i > 0 && harmonics[i] != 0.0) ++nonzero_above;
        }
        if (nonzero_above > 5)
            throw InvalidArgument("signal-model",
                                  "RespirationModel: at most 5 nonzero harmonics above the fundamental");
    }

    double operator()(double t) const {
        const double w = 2.0 * kPi * fundamental_freq;
        double x = 0.0;
        for (std::size_t i = 0; i < harmonics.size(); ++i) {
            const double n = static_cast<double>(i + 1);
            x += harmonics[i] * std::cos(n * (w * t + phase_offset));
        }
        return x;
    }
};

enum class Waveform { Sinusoid, PulseLike };

inline const char* to_string(Waveform w) { return w == Waveform::Sinusoid ? "sinusoid" : "pulse-like"; }

inline Waveform parse_waveform(const std::string& s) {
    if (s == "sinusoid") return Waveform::Sinusoid;
    if (s == "pulse-like" || s == "pulse") return Waveform::PulseLike;
    throw InvalidArgument("signal-model", "unknown waveform '" + s + "' (sinusoid | pulse-like)");
}

struct HeartbeatModel {
    RateTrajectory rate_trajectory = constant_rate(120.0);
    double amplitude = 0.1;  // mm
    Waveform waveform = Waveform::Sinusoid;

    /// Waveform value for an accumulated beat phase (rad). Beats sit at
    /// phase = 2*pi*m, where both shapes peak.
    double shape(double phase) const {
        if (waveform == Waveform::Sinusoid) return amplitude * std::cos(phase);
        // Raised-cosine pulse occupying 25% of each beat period.
        const double width = 0.25 * 2.0 * kPi;
        double wrapped = std::remainder(phase, 2.0 * kPi);
        if (std::abs(wrapped) >= 0.5 * width) return 0.0;
        return amplitude * 0.5 * (1.0 + std::cos(2.0 * kPi * wrapped / width));
    }
};

inline constexpr double kMinHeartRate = 40.0;
inline constexpr double kMaxHeartRate = 220.0;

// ============================================================================
// Traces
// ============================================================================

enum class Unit { Millimeters, Radians };

struct GroundTruth {
    std::optional<RespirationModel> respiration;
    std::optional<HeartbeatModel> heartbeat;
    double noise_std = 0.0;  // mm
    std::uint64_t seed = 0;
};

struct ChestMotionTrace {
    std::vector<double> samples;
    double sample_rate = 100.0;  // Hz
    Unit unit = Unit::Millimeters;
    std::optional<GroundTruth> ground_truth;

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    double time(std::size_t i) const { return static_cast<double>(i) / sample_rate; }
};

inline constexpr double kMinTraceSampleRate = 20.0;

inline std::size_t sample_count(double sample_rate, double duration) {
    return static_cast<std::size_t>(std::llround(sample_rate * duration));
}

/// Number of beats in [a, b]: integral of HR(t)/60, 5-point Gauss-Legendre
/// on panels of at most 10 ms.
inline double beats_between(const RateTrajectory& traj, double a, double b) {
    static constexpr std::array<double, 5> nodes{-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> weights{0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
    if (a == b) return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) / 0.01)));
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        double s = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) s += weights[k] * traj(mid + 0.5 * h * nodes[k]);
        acc += 0.5 * h * s;
    }
    return acc / 60.0;
}

/// Accumulated heartbeat phase 2*pi * integral_0^t HR(tau)/60 dtau at each
/// of the ascending `times`.
inline std::vector<double> heartbeat_phase(const RateTrajectory& traj, std::span<const double> times) {
    std::vector<double> phase(times.size());
    double prev_t = 0.0, cycles = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        cycles += beats_between(traj, prev_t, times[i]);
        prev_t = times[i];
        phase[i] = 2.0 * kPi * cycles;
    }
    return phase;
}

/// Ground-truth beat instants in [0, duration): times where the heartbeat
/// phase crosses 2*pi*m, refined by bisection to 1e-9 s.
inline std::vector<double> beat_times(const RateTrajectory& traj, double duration, double step = 0.01) {
    std::vector<double> grid;
    for (double t = 0.0; t < duration; t += step) grid.push_back(t);
    grid.push_back(duration);
    const auto phase = heartbeat_phase(traj, grid);
    auto phase_at = [&](double t0, double phi0, double t) {
        return phi0 + 2.0 * kPi * beats_between(traj, t0, t);
    };
    std::vector<double> out{0.0};
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double m_lo = std::floor(phase[i - 1] / (2.0 * kPi));
        const double m_hi = std::floor(phase[i] / (2.0 * kPi));
        for (double m = m_lo + 1; m <= m_hi; m += 1.0) {
            const double target = 2.0 * kPi * m;
            double a = grid[i - 1], b = grid[i];
            while (b - a > 1e-9) {
                const double c = 0.5 * (a + b);
                if (phase_at(grid[i - 1], phase[i - 1], c) < target) a = c; else b = c;
            }
            const double tb = 0.5 * (a + b);
            if (tb < duration) out.push_back(tb);
        }
    }
    return out;
}

/// x = x_r + x_h + n sampled at t_i = i / sample_rate. Either component may
/// be absent; noise is N(0, noise_std^2) from a seeded mt19937_64.
inline ChestMotionTrace synthesize_trace(const std::optional<RespirationModel>& resp,
                                         const std::optional<HeartbeatModel>& heart, double noise_std,
                                         double sample_rate, double duration, std::uint64_t seed) {
    if (!(duration > 0.0)) throw InvalidArgument("signal-model", "duration must be > 0");
    if (!(sample_rate >= kMinTraceSampleRate))
        throw InvalidArgument("signal-model", "ChestMotionTrace: sample_rate must be >= 20 Hz");
    if (!(noise_std >= 0.0)) throw InvalidArgument("signal-model", "noise_std must be >= 0");
    if (resp) resp->validate();

    const std::size_t n = sample_count(sample_rate, duration);
    std::vector<double> times(n);
    for (std::size_t i = 0; i < n; ++i) times[i] = static_cast<double>(i) / sample_rate;

    std::vector<double> phase;
    if (heart) {
        if (!(heart->amplitude > 0.0))
            throw InvalidArgument("signal-model", "HeartbeatModel: amplitude must be > 0");
        if (resp && !(heart->amplitude < resp->harmonics[0]))
            throw InvalidArgument("signal-model",
                                  "HeartbeatModel: amplitude must be below the respiration fundamental amplitude");
        for (double t : times) {
            const double hr = heart->rate_trajectory(t);
            if (!(hr >= kMinHeartRate && hr <= kMaxHeartRate))
                throw InvalidArgument("signal-model", "HeartbeatModel: rate_trajectory must stay within [40, 220] bpm");
        }
        phase = heartbeat_phase(heart->rate_trajectory, times);
    }

    ChestMotionTrace trace;
    trace.sample_rate = sample_rate;
    trace.samples.assign(n, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double x = 0.0;
        if (resp) x += (*resp)(times[i]);
        if (heart) x += heart->shape(phase[i]);
        if (noise_std > 0.0) x += noise_std * gauss(rng);
        trace.samples[i] = x;
    }
    trace.ground_truth = GroundTruth{resp, heart, noise_std, seed};
    return trace;
}

inline double mean_power(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(x.size());
}

/// Noise standard deviation giving `snr_db` against the noiseless trace.
inline double noise_std_for_snr(const std::optional<RespirationModel>& resp,
                                const std::optional<HeartbeatModel>& heart, double snr_db,
                                double sample_rate, double duration) {
    const auto clean = synthesize_trace(resp, heart, 0.0, sample_rate, duration, 0);
    return std::sqrt(mean_power(clean.samples) / std::pow(10.0, snr_db / 10.0));
}

}  // namespace mmhrr
