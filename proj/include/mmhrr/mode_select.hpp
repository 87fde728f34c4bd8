/**
 * Heartbeat mode selection.
 *
 * Modes are judged only by their spectra: broad or flat modes are noise, the
 * strongest mode in the breathing band is respiration, modes sitting on an
 * integer multiple of the respiration frequency are harmonics, and the
 * heartbeat is the strongest remaining peak inside the heart-rate band. When
 * nothing remains (the heartbeat sits on a harmonic) the most energetic
 * in-band harmonic is taken instead.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/fft.hpp"
#include "mmhrr/vmd.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmhrr {

struct SpectralPeak {
    double freq = 0.0;        // Hz, parabolic-interpolated
    double prominence = 0.0;  // peak magnitude / mean magnitude
    double magnitude = 0.0;   // peak magnitude (zero-padded DFT)
};

namespace detail {

inline std::size_t spectrum_size(std::size_t n) { return fft::next_pow2(4 * n); }

inline std::vector<double> magnitude_spectrum(std::span<const double> x) {
    const auto spec = fft::real_spectrum(x, spectrum_size(x.size()));
    std::vector<double> mag(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) mag[i] = std::abs(spec[i]);
    return mag;
}

}  // namespace detail

/// Spectral peak of a mode. Magnitudes within a relative 1e-12 of the
/// maximum count as ties and the lowest-frequency bin wins.
inline SpectralPeak peak_frequency(std::span<const double> mode, double sample_rate) {
    bool nonzero = false;
    for (double v : mode) nonzero |= (v != 0.0);
    if (!nonzero) throw InvalidArgument("mode-select", "peak_frequency: zero mode has no spectral peak");

    const auto mag = detail::magnitude_spectrum(mode);
    const std::size_t nfft = detail::spectrum_size(mode.size());
    double top = 0.0, sum = 0.0;
    for (double m : mag) {
        top = std::max(top, m);
        sum += m;
    }
    std::size_t k = 0;
    while (mag[k] < top * (1.0 - 1e-12)) ++k;

    double offset = 0.0;
    if (k > 0 && k + 1 < mag.size()) {
        const double a = mag[k - 1], b = mag[k], c = mag[k + 1];
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    }
    SpectralPeak p;
    p.freq = (static_cast<double>(k) + offset) * sample_rate / static_cast<double>(nfft);
    p.magnitude = mag[k];
    p.prominence = mag[k] / (sum / static_cast<double>(mag.size()));
    return p;
}

/// Fraction of a mode's spectral energy within +-halfwidth Hz of `centre`.
inline double energy_fraction_near(std::span<const double> mode, double sample_rate, double centre, double halfwidth) {
    const auto mag = detail::magnitude_spectrum(mode);
    const double df = sample_rate / static_cast<double>(detail::spectrum_size(mode.size()));
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        const double e = mag[i] * mag[i];
        total += e;
        if (std::abs(static_cast<double>(i) * df - centre) <= halfwidth) inside += e;
    }
    return total > 0.0 ? inside / total : 0.0;
}

// ============================================================================
// Classification
// ============================================================================

enum class ModeKind { Noise, Candidate, Respiration, Harmonic, Heartbeat };

inline const char* to_string(ModeKind k) {
    switch (k) {
    case ModeKind::Noise: return "noise";
    case ModeKind::Candidate: return "other";
    case ModeKind::Respiration: return "respiration";
    case ModeKind::Harmonic: return "harmonic";
    case ModeKind::Heartbeat: return "heartbeat";
    }
    return "?";
}

struct ModeLabel {
    ModeKind kind = ModeKind::Noise;
    int harmonic_order = 0;  // n for harmonic(n), also kept when a harmonic is promoted to heartbeat
    double peak_freq = 0.0;
    double prominence = 0.0;
    double peak_magnitude = 0.0;
    double energy = 0.0;
    double band_fraction = 0.0;  // energy share within +-noise_halfwidth of the peak

    std::string name() const {
        if (kind == ModeKind::Harmonic) return "harmonic(" + std::to_string(harmonic_order) + ")";
        if (kind == ModeKind::Heartbeat && harmonic_order > 0)
            return "heartbeat=harmonic(" + std::to_string(harmonic_order) + ")";
        return to_string(kind);
    }
};

struct SelectConfig {
    double hr_band_low = 0.6;   // Hz
    double hr_band_high = 3.4;  // Hz
    double resp_band_low = 10.0 / 60.0;
    double resp_band_high = 0.7;
    double harmonic_tol = 0.08;  // relative to the respiration frequency
    int max_harmonic_order = 5;
    double noise_prominence = 4.0;
    double noise_halfwidth = 0.3;   // Hz
    double min_band_fraction = 0.5;
    /// Modes weaker than this fraction of the strongest in-band mode are noise.
    double min_relative_energy = 0.2;

    void validate() const {
        if (!(hr_band_low > 0.0 && hr_band_low < hr_band_high))
            throw InvalidArgument("mode-select", "SelectConfig: require 0 < hr_band_low < hr_band_high");
        if (!(resp_band_low > 0.0 && resp_band_low < resp_band_high))
            throw InvalidArgument("mode-select", "SelectConfig: require 0 < resp_band_low < resp_band_high");
        if (!(harmonic_tol > 0.0 && harmonic_tol < 0.5))
            throw InvalidArgument("mode-select", "SelectConfig: harmonic_tol must be in (0, 0.5)");
        if (!(min_relative_energy >= 0.0 && min_relative_energy < 1.0))
            throw InvalidArgument("mode-select", "SelectConfig: min_relative_energy must be in [0, 1)");
        if (max_harmonic_order < 2) throw InvalidArgument("mode-select", "SelectConfig: max_harmonic_order must be >= 2");
    }
};

struct ModeClassification {
    std::vector<ModeLabel> labels;  // one per mode, ModeSet order
    std::optional<std::size_t> respiration;
    std::size_t heartbeat = 0;
    bool coincidence = false;  // heartbeat taken from a harmonic-labelled mode
};

inline ModeClassification classify_modes(const ModeSet& ms, const SelectConfig& cfg = {}) {
    cfg.validate();
    const double fs = ms.sample_rate;
    ModeClassification out;
    out.labels.resize(ms.modes.size());
    const auto energies = ms.energies();

    for (std::size_t k = 0; k < ms.modes.size(); ++k) {
        auto& lab = out.labels[k];
        lab.energy = energies[k];
        if (!(energies[k] > 0.0)) continue;  // zero mode: noise
        const auto peak = peak_frequency(ms.modes[k], fs);
        lab.peak_freq = peak.freq;
        lab.prominence = peak.prominence;
        lab.peak_magnitude = peak.magnitude;
        lab.band_fraction = energy_fraction_near(ms.modes[k], fs, peak.freq, cfg.noise_halfwidth);
        const bool noise = peak.prominence < cfg.noise_prominence || lab.band_fraction < cfg.min_band_fraction;
        lab.kind = noise ? ModeKind::Noise : ModeKind::Candidate;
    }

    // Ties below are broken on values, never on mode position, so the result
    // does not depend on the order of the ModeSet.
    auto stronger_energy = [&](std::size_t a, std::size_t b) {
        const auto &la = out.labels[a], &lb = out.labels[b];
        if (la.energy != lb.energy) return la.energy > lb.energy;
        return la.peak_freq < lb.peak_freq;
    };
    for (std::size_t k = 0; k < out.labels.size(); ++k) {
        const auto& lab = out.labels[k];
        if (lab.kind != ModeKind::Candidate) continue;
        if (lab.peak_freq < cfg.resp_band_low || lab.peak_freq > cfg.resp_band_high) continue;
        if (!out.respiration || stronger_energy(k, *out.respiration)) out.respiration = k;
    }

    if (out.respiration) {
        out.labels[*out.respiration].kind = ModeKind::Respiration;
        const double f_resp = out.labels[*out.respiration].peak_freq;
        for (auto& lab : out.labels) {
            if (lab.kind != ModeKind::Candidate) continue;
            const double n = std::round(lab.peak_freq / f_resp);
            if (n >= 2 && n <= cfg.max_harmonic_order && std::abs(lab.peak_freq - n * f_resp) <= cfg.harmonic_tol * f_resp) {
                lab.kind = ModeKind::Harmonic;
                lab.harmonic_order = static_cast<int>(n);
            }
        }
    }

    auto in_hr_band = [&](const ModeLabel& l) { return l.peak_freq >= cfg.hr_band_low && l.peak_freq <= cfg.hr_band_high; };

    // Spare modes that caught only leftover noise can still show a sharp
    // peak; what gives them away is an insignificant share of energy.
    double strongest = 0.0;
    for (const auto& lab : out.labels)
        if ((lab.kind == ModeKind::Candidate || lab.kind == ModeKind::Harmonic) && in_hr_band(lab))
            strongest = std::max(strongest, lab.energy);
    for (auto& lab : out.labels)
        if ((lab.kind == ModeKind::Candidate || lab.kind == ModeKind::Harmonic) &&
            lab.energy < cfg.min_relative_energy * strongest) {
            lab.kind = ModeKind::Noise;
            lab.harmonic_order = 0;
        }

    std::optional<std::size_t> pick;
    for (std::size_t k = 0; k < out.labels.size(); ++k) {
        const auto& lab = out.labels[k];
        if (lab.kind != ModeKind::Candidate || !in_hr_band(lab)) continue;
        if (!pick) { pick = k; continue; }
        const auto& cur = out.labels[*pick];
        if (lab.peak_magnitude > cur.peak_magnitude ||
            (lab.peak_magnitude == cur.peak_magnitude && stronger_energy(k, *pick)))
            pick = k;
    }
    if (!pick) {
        for (std::size_t k = 0; k < out.labels.size(); ++k) {
            const auto& lab = out.labels[k];
            if (lab.kind != ModeKind::Harmonic || !in_hr_band(lab)) continue;
            if (!pick || stronger_energy(k, *pick)) pick = k;
        }
        out.coincidence = pick.has_value();
    }
    if (!pick) throw NoHeartbeat("no mode with a spectral peak inside the heart-rate band");
    out.heartbeat = *pick;
    out.labels[*pick].kind = ModeKind::Heartbeat;
    return out;
}

}  // namespace mmhrr
