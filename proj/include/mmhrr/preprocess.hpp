/**
 * Trace conditioning: zero-phase Butterworth band-pass to the vital band and
 * the first-order difference that re-balances respiration vs heartbeat
 * energy before decomposition.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/signal_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace mmhrr {

struct FilterSpec {
    double pass_low = 0.2;   // Hz
    double pass_high = 3.4;  // Hz
    int order = 4;           // Butterworth prototype order; the band-pass has 2*order poles
    double stop_attenuation_db = 20.0;  // required at pass_low/4 and 1.5*pass_high

    void validate(double sample_rate) const {
        if (!(pass_low > 0.0 && pass_low < pass_high))
            throw InvalidArgument("preprocess", "FilterSpec: require 0 < pass_low < pass_high");
        if (!(pass_high < sample_rate / 2.0))
            throw InvalidArgument("preprocess", "FilterSpec: pass_high must be below sample_rate/2 (Nyquist)");
        if (order < 1 || order > 12)
            throw InvalidArgument("preprocess", "FilterSpec: order must be in [1, 12]");
    }
};

/// One second-order section, b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 2> a{};

    std::complex<double> response(double omega) const {
        const std::complex<double> z1 = std::polar(1.0, -omega);
        const auto z2 = z1 * z1;
        return (b[0] + b[1] * z1 + b[2] * z2) / (1.0 + a[0] * z1 + a[1] * z2);
    }
};

using SosFilter = std::vector<Biquad>;

inline std::complex<double> frequency_response(const SosFilter& sos, double freq, double sample_rate) {
    const double omega = 2.0 * kPi * freq / sample_rate;
    std::complex<double> h = 1.0;
    for (const auto& s : sos) h *= s.response(omega);
    return h;
}

/// Digital Butterworth band-pass via prewarped bilinear transform of the
/// analog low-pass prototype, returned as second-order sections.
inline SosFilter design_bandpass(const FilterSpec& spec, double sample_rate) {
    spec.validate(sample_rate);
    using C = std::complex<double>;
    const double fs2 = 2.0 * sample_rate;
    const double wl = fs2 * std::tan(kPi * spec.pass_low / sample_rate);
    const double wh = fs2 * std::tan(kPi * spec.pass_high / sample_rate);
    const double bw = wh - wl;
    const double w0sq = wl * wh;

    std::vector<C> zpoles;
    for (int k = 1; k <= spec.order; ++k) {
        const C p = std::polar(1.0, kPi * (2.0 * k + spec.order - 1) / (2.0 * spec.order));
        const C pb = p * bw;
        const C disc = std::sqrt(pb * pb - 4.0 * w0sq);
        for (const C s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) zpoles.push_back((fs2 + s) / (fs2 - s));
    }

    // Pair each upper-half-plane pole with its conjugate; real poles pair up in order.
    std::vector<C> upper, real;
    for (const C& z : zpoles) {
        if (z.imag() > 1e-12) upper.push_back(z);
        else if (std::abs(z.imag()) <= 1e-12) real.push_back({z.real(), 0.0});
    }
    std::sort(real.begin(), real.end(), [](C x, C y) { return x.real() < y.real(); });

    SosFilter sos;
    for (const C& z : upper) sos.push_back({{1.0, 0.0, -1.0}, {-2.0 * z.real(), std::norm(z)}});
    for (std::size_t i = 0; i + 1 < real.size(); i += 2)
        sos.push_back({{1.0, 0.0, -1.0}, {-(real[i].real() + real[i + 1].real()), real[i].real() * real[i + 1].real()}});

    // Unit gain at the digital image of the analog centre frequency.
    const double fc = std::atan(std::sqrt(w0sq) / fs2) * sample_rate / kPi;
    const double g = std::abs(frequency_response(sos, fc, sample_rate));
    const double per = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
    for (auto& s : sos)
        for (auto& b : s.b) b *= per;
    return sos;
}

namespace detail {

/// Steady-state direct-form-II-transposed state for a unit step input.
inline std::array<double, 2> step_state(const Biquad& s) {
    const double a1 = s.a[0], a2 = s.a[1];
    const double r0 = s.b[1] - a1 * s.b[0];
    const double r1 = s.b[2] - a2 * s.b[0];
    // [[1 + a1, -1], [a2, 1]] * zi = [r0, r1]
    const double det = (1.0 + a1) + a2;
    return {(r0 + r1) / det, (r1 * (1.0 + a1) - a2 * r0) / det};
}

inline void sosfilt_inplace(const SosFilter& sos, std::vector<double>& x) {
    if (x.empty()) return;
    double scale = x.front();
    for (const auto& s : sos) {
        auto zi = step_state(s);
        double z0 = zi[0] * scale, z1 = zi[1] * scale;
        for (double& v : x) {
            const double y = s.b[0] * v + z0;
            z0 = s.b[1] * v - s.a[0] * y + z1;
            z1 = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        scale *= (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
    }
}

}  // namespace detail

/// Forward-backward filtering with odd-reflection padding; zero phase,
/// squared magnitude response.
inline std::vector<double> filtfilt(const SosFilter& sos, std::span<const double> x, std::size_t padlen) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    padlen = std::min(padlen, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    detail::sosfilt_inplace(sos, ext);
    std::reverse(ext.begin(), ext.end());
    detail::sosfilt_inplace(sos, ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
            ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

inline ChestMotionTrace bandpass(const ChestMotionTrace& trace, const FilterSpec& spec = {}) {
    if (!(trace.sample_rate > 2.0 * spec.pass_high))
        throw InvalidArgument("preprocess", "bandpass: sample_rate must exceed 2 * pass_high (Nyquist)");
    const auto sos = design_bandpass(spec, trace.sample_rate);
    // Three periods of the lower edge covers the slowest transient.
    const auto padlen = static_cast<std::size_t>(std::ceil(3.0 * trace.sample_rate / spec.pass_low));
    ChestMotionTrace out = trace;
    out.samples = filtfilt(sos, trace.samples, padlen);
    return out;
}

/// y[i] = x[i+1] - x[i].
inline ChestMotionTrace difference(const ChestMotionTrace& trace) {
    if (trace.size() < 2) throw InvalidArgument("preprocess", "difference: need at least 2 samples");
    ChestMotionTrace out = trace;
    out.samples.resize(trace.size() - 1);
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) out.samples[i] = trace.samples[i + 1] - trace.samples[i];
    return out;
}

/// Both conditioning steps in pipeline order.
inline ChestMotionTrace preprocess(const ChestMotionTrace& trace, const FilterSpec& spec = {}) {
    return difference(bandpass(trace, spec));
}

}  // namespace mmhrr
