/**
 * Variational mode decomposition with gate-driven penalty selection.
 *
 * The decomposition is the usual ADMM scheme carried out entirely on the
 * one-sided spectrum of a mirror-extended window: Wiener-like mode updates,
 * centre frequencies as power-weighted means, optional dual ascent.
 *
 * The penalty factor alpha is chosen by bisection in log space against two
 * gates: the largest pairwise Pearson correlation between modes (too small
 * an alpha merges components) and the residual energy ratio (too large an
 * alpha starves the modes).
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace mmhrr {

struct VmdParams {
    int K = 6;
    double alpha = 2000.0;
    double tau = 0.0;  // dual ascent step; 0 lets the residual absorb noise
    double tolerance = 1e-7;
    int max_iters = 500;
    double mirror_fraction = 0.1;  // extension on each side, fraction of the window
    double init_span = 0.25;       // initial centres spread uniformly over [0, init_span * fs)

    void validate() const {
        if (K < 2 || K > 7) throw InvalidArgument("vmd", "VmdParams: K must be in [2, 7]");
        if (!(alpha > 0.0)) throw InvalidArgument("vmd", "VmdParams: alpha must be > 0");
        if (!(tolerance > 0.0)) throw InvalidArgument("vmd", "VmdParams: tolerance must be > 0");
        if (max_iters < 1) throw InvalidArgument("vmd", "VmdParams: max_iters must be >= 1");
        if (!(tau >= 0.0)) throw InvalidArgument("vmd", "VmdParams: tau must be >= 0");
        if (!(mirror_fraction >= 0.0 && mirror_fraction <= 0.5))
            throw InvalidArgument("vmd", "VmdParams: mirror_fraction must be in [0, 0.5]");
        if (!(init_span > 0.0 && init_span <= 0.5))
            throw InvalidArgument("vmd", "VmdParams: init_span must be in (0, 0.5]");
    }
};

enum class Termination { Converged, MaxIterations };

struct ModeSet {
    std::vector<std::vector<double>> modes;  // K signals, input length each
    std::vector<double> center_freqs;        // Hz, same order as modes
    std::vector<double> residual;            // input - sum(modes)
    double input_energy = 0.0;
    double sample_rate = 0.0;
    Termination termination = Termination::Converged;
    int iterations = 0;

    bool converged() const { return termination == Termination::Converged; }
    std::size_t size() const { return modes.size(); }

    std::vector<double> energies() const {
        std::vector<double> e;
        for (const auto& m : modes) e.push_back(std::inner_product(m.begin(), m.end(), m.begin(), 0.0));
        return e;
    }

    /// Sum of all modes, accumulated in mode order (the order used for the residual).
    std::vector<double> mode_sum() const {
        const std::size_t n = modes.empty() ? 0 : modes.front().size();
        std::vector<double> s(n, 0.0);
        for (const auto& m : modes)
            for (std::size_t i = 0; i < n; ++i) s[i] += m[i];
        return s;
    }

    /// Mode indices by descending energy (ties by index).
    std::vector<std::size_t> order_by_energy() const {
        const auto e = energies();
        std::vector<std::size_t> idx(e.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return e[a] > e[b]; });
        return idx;
    }

    /// Mode indices by ascending centre frequency (ties by index).
    std::vector<std::size_t> order_by_frequency() const {
        std::vector<std::size_t> idx(center_freqs.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return center_freqs[a] < center_freqs[b]; });
        return idx;
    }
};

inline ModeSet vmd_decompose(std::span<const double> signal, double sample_rate, const VmdParams& params) {
    using cplx = std::complex<double>;
    params.validate();
    const std::size_t n = signal.size();
    if (n < 64) throw InvalidArgument("vmd", "vmd_decompose: signal length must be >= 64");
    for (double v : signal)
        if (!std::isfinite(v)) throw InvalidArgument("vmd", "vmd_decompose: non-finite sample in input");

    // Half-sample symmetric mirror extension.
    const auto ext = static_cast<std::size_t>(std::llround(params.mirror_fraction * static_cast<double>(n)));
    std::vector<cplx> mirrored;
    mirrored.reserve(n + 2 * ext);
    for (std::size_t i = ext; i-- > 0;) mirrored.emplace_back(signal[i]);
    for (double v : signal) mirrored.emplace_back(v);
    for (std::size_t i = 0; i < ext; ++i) mirrored.emplace_back(signal[n - 1 - i]);
    const std::size_t T = mirrored.size();
    const auto spectrum = fft::forward(mirrored);

    const std::size_t half = T / 2;  // bins 0..half are the non-negative frequencies
    const std::size_t bins = half + 1;
    std::vector<double> nu(bins);
    for (std::size_t j = 0; j < bins; ++j) nu[j] = static_cast<double>(j) / static_cast<double>(T);
    const std::vector<cplx> f_hat(spectrum.begin(), spectrum.begin() + static_cast<std::ptrdiff_t>(bins));

    const auto K = static_cast<std::size_t>(params.K);
    std::vector<std::vector<cplx>> u_hat(K, std::vector<cplx>(bins));
    std::vector<double> omega(K);
    for (std::size_t k = 0; k < K; ++k) omega[k] = params.init_span * static_cast<double>(k) / static_cast<double>(K);
    std::vector<cplx> lambda(bins), total(bins);

    ModeSet out;
    out.termination = Termination::MaxIterations;
    std::vector<cplx> previous(bins);
    int it = 0;
    for (; it < params.max_iters; ++it) {
        double change = 0.0, norm_prev = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            auto& u = u_hat[k];
            previous = u;
            double power = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < bins; ++j) {
                const double d = nu[j] - omega[k];
                const cplx others = total[j] - u[j];
                const cplx v = (f_hat[j] - others + 0.5 * lambda[j]) / (1.0 + 2.0 * params.alpha * d * d);
                total[j] = others + v;
                u[j] = v;
                const double p = std::norm(v);
                power += p;
                weighted += nu[j] * p;
                change += std::norm(v - previous[j]);
                norm_prev += std::norm(previous[j]);
            }
            if (power > 0.0) omega[k] = weighted / power;
        }
        if (params.tau > 0.0)
            for (std::size_t j = 0; j < bins; ++j) lambda[j] += params.tau * (f_hat[j] - total[j]);
        if (it > 0 && (change == 0.0 || change < params.tolerance * norm_prev)) {
            out.termination = Termination::Converged;
            ++it;
            break;
        }
    }
    out.iterations = it;

    // Back to the time domain through a Hermitian spectrum, then crop the extension.
    out.sample_rate = sample_rate;
    out.modes.assign(K, std::vector<double>(n));
    std::vector<cplx> full(T);
    for (std::size_t k = 0; k < K; ++k) {
        std::fill(full.begin(), full.end(), cplx{});
        full[0] = u_hat[k][0].real();
        for (std::size_t j = 1; j < bins; ++j) {
            if (2 * j == T) {
                full[j] = u_hat[k][j].real();
            } else {
                full[j] = u_hat[k][j];
                full[T - j] = std::conj(u_hat[k][j]);
            }
        }
        const auto time = fft::inverse(full);
        for (std::size_t i = 0; i < n; ++i) out.modes[k][i] = time[ext + i].real();
        out.center_freqs.push_back(omega[k] * sample_rate);
    }
    const auto s = out.mode_sum();
    out.residual.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.residual[i] = signal[i] - s[i];
        out.input_energy += signal[i] * signal[i];
    }
    return out;
}

// ============================================================================
// Gates
// ============================================================================

struct GateThresholds {
    double mu1 = 0.2;   // correlation ceiling
    double mu2 = 1e-4;  // energy-loss ceiling

    void validate() const {
        if (!(mu1 > 0.0 && mu1 < 1.0)) throw InvalidArgument("vmd", "GateThresholds: mu1 must be in (0, 1)");
        if (!(mu2 > 0.0 && mu2 < 1.0)) throw InvalidArgument("vmd", "GateThresholds: mu2 must be in (0, 1)");
    }
};

/// r = (E[uv] - E[u]E[v]) / sqrt(D[u] D[v]) with population moments.
inline double pearson(std::span<const double> u, std::span<const double> v) {
    const double n = static_cast<double>(u.size());
    double su = 0, sv = 0, suv = 0, suu = 0, svv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        su += u[i];
        sv += v[i];
        suv += u[i] * v[i];
        suu += u[i] * u[i];
        svv += v[i] * v[i];
    }
    const double eu = su / n, ev = sv / n;
    const double du = suu / n - eu * eu, dv = svv / n - ev * ev;
    return (suv / n - eu * ev) / std::sqrt(du * dv);
}

inline double variance(std::span<const double> u) {
    if (u.empty()) return 0.0;
    const double n = static_cast<double>(u.size());
    const double mean = std::accumulate(u.begin(), u.end(), 0.0) / n;
    double acc = 0.0;
    for (double x : u) acc += (x - mean) * (x - mean);
    return acc / n;
}

/// Largest |r_ij| over mode pairs; zero-variance modes are skipped and fewer
/// than two usable modes give 0.
inline double mode_correlation_max(const ModeSet& ms) {
    std::vector<std::size_t> usable;
    for (std::size_t k = 0; k < ms.modes.size(); ++k)
        if (variance(ms.modes[k]) > 0.0) usable.push_back(k);
    double best = 0.0;
    for (std::size_t a = 0; a < usable.size(); ++a)
        for (std::size_t b = a + 1; b < usable.size(); ++b) {
            const double r = std::abs(pearson(ms.modes[usable[a]], ms.modes[usable[b]]));
            if (std::isfinite(r)) best = std::max(best, r);
        }
    return best;
}

/// p = ||f - sum u_k||^2 / ||f||^2 on the stored residual.
inline double energy_loss(const ModeSet& ms) {
    if (!(ms.input_energy > 0.0)) throw InvalidArgument("vmd", "energy_loss: input energy is zero (ratio undefined)");
    double r = 0.0;
    for (double v : ms.residual) r += v * v;
    return r / ms.input_energy;
}

// ============================================================================
// Alpha selection
// ============================================================================

struct AlphaRange {
    double lo = 10.0;
    double hi = 1e6;
    double stop_ratio = 1.1;  // bisection ends when hi / lo < stop_ratio

    void validate() const {
        if (!(lo > 0.0 && lo < hi)) throw InvalidArgument("vmd", "AlphaRange: require 0 < lo < hi");
        if (!(stop_ratio > 1.0)) throw InvalidArgument("vmd", "AlphaRange: stop_ratio must be > 1");
    }

    /// Upper bound on decompositions one bisection can run.
    int max_evaluations() const {
        return std::max(1, static_cast<int>(std::ceil(std::log2(std::log(hi / lo) / std::log(stop_ratio)))));
    }
};

struct AlphaProbe {
    double alpha = 0.0;
    double r_max = 0.0;
    double energy_loss = 0.0;
};

struct AlphaSelection {
    double alpha = 0.0;
    ModeSet modes;
    double r_max = 0.0;
    double energy_loss = 0.0;
    std::vector<AlphaProbe> probes;
};

/// Raised when bisection bottoms out without a decomposition passing both
/// gates. Carries the probe with the smallest normalised gate violation and
/// its decomposition so callers may fall back to it.
class InfeasibleAlpha : public Error {
public:
    InfeasibleAlpha(AlphaSelection best, const GateThresholds& gates)
        : Error("vmd", describe(best, gates)), best_(std::move(best)) {}

    const AlphaSelection& best() const noexcept { return best_; }

private:
    static std::string describe(const AlphaSelection& b, const GateThresholds& g) {
        return "no alpha satisfies r_max <= " + std::to_string(g.mu1) + " and p <= " + std::to_string(g.mu2) +
               "; best alpha=" + std::to_string(b.alpha) + " r_max=" + std::to_string(b.r_max) +
               " p=" + std::to_string(b.energy_loss);
    }
    AlphaSelection best_;
};

/// Bisection on log(alpha). A probe failing the energy-loss gate moves the
/// upper bound down (p grows with alpha); otherwise a probe failing the
/// correlation gate moves the lower bound up. The energy-loss test goes
/// first because r_max also rises at large alpha once spare modes split a
/// component, so only p gives a reliable direction when both gates fail.
///
/// With `widest_feasible` a passing probe also moves the lower bound up and
/// the search returns the largest passing alpha seen, i.e. the narrowest
/// modes the gates allow. Otherwise the first passing probe is returned.
inline AlphaSelection select_alpha(std::span<const double> signal, double sample_rate, VmdParams params,
                                   const GateThresholds& gates = {}, const AlphaRange& range = {},
                                   bool widest_feasible = false) {
    gates.validate();
    range.validate();
    double lo = range.lo, hi = range.hi;
    AlphaSelection best, chosen;
    bool found = false;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<AlphaProbe> probes;
    while (hi / lo >= range.stop_ratio) {
        const double mid = std::sqrt(lo * hi);
        params.alpha = mid;
        ModeSet ms = vmd_decompose(signal, sample_rate, params);
        const double r = mode_correlation_max(ms);
        const double p = energy_loss(ms);
        probes.push_back({mid, r, p});
        if (p <= gates.mu2 && r <= gates.mu1) {
            if (!widest_feasible) return {mid, std::move(ms), r, p, std::move(probes)};
            if (!found || mid > chosen.alpha) chosen = {mid, std::move(ms), r, p, {}};
            found = true;
            lo = mid;
            continue;
        }
        const double score = std::max(r / gates.mu1, p / gates.mu2);
        if (score < best_score) {
            best_score = score;
            best = {mid, std::move(ms), r, p, {}};
        }
        if (p > gates.mu2) hi = mid;
        else lo = mid;
    }
    if (found) {
        chosen.probes = std::move(probes);
        return chosen;
    }
    best.probes = std::move(probes);
    throw InfeasibleAlpha(std::move(best), gates);
}

}  // namespace mmhrr
