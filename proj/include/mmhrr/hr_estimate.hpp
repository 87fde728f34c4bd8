/**
 * Heart-rate estimation by peak counting over composite sliding windows.
 *
 * Outer windows W_a (length l_a, stride dl) each yield one heartbeat mode and
 * its peak train. Inner counting windows W_b start and end on peaks, span at
 * least l_min and at most l_b_max, and give HR = (peaks - 1) / span. W_a
 * advances once the left endpoint of the current W_b reaches the start of
 * the next W_a, so W_b always lies inside the W_a whose peaks it counts.
 */
#pragma once

#include "mmhrr/error.hpp"
#include "mmhrr/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mmhrr {

inline constexpr double kPeakMinAmplitude = 0.5;
inline constexpr double kPeakMinInterval = 0.27;  // s, i.e. at most 220 bpm
inline constexpr double kSeriesMinHr = 36.0;
inline constexpr double kSeriesMaxHr = 220.0;

struct PeakTrain {
    std::vector<double> times;  // s, ascending

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
};

struct WindowConfig {
    double l_b_max = 8.0;        // s; also the W_a stride
    double l_min = 5.0;  // s, first-pass counting floor
    double l_min_low = 3.0;      // adaptive l_min bounds, s
    double l_min_high = 8.0;
    double cadence = 1.0;        // s between output points
    double beats_per_window = 10.0;

    double delta_l() const { return l_b_max; }
    double l_a() const { return 2.0 * l_b_max; }

    void validate() const {
        if (!(l_b_max > 0.0)) throw InvalidArgument("hr-estimate", "WindowConfig: l_b_max must be > 0");
        if (!(l_min_low > 0.0 && l_min_low <= l_min_high && l_min_high <= l_b_max))
            throw InvalidArgument("hr-estimate", "WindowConfig: l_min bounds must satisfy 0 < low <= high <= l_b_max");
        if (!(l_min > 0.0 && l_min <= l_b_max))
            throw InvalidArgument("hr-estimate", "WindowConfig: l_min must be in (0, l_b_max]");
        if (!(cadence > 0.0)) throw InvalidArgument("hr-estimate", "WindowConfig: cadence must be > 0");
        if (!(beats_per_window > 0.0)) throw InvalidArgument("hr-estimate", "WindowConfig: beats_per_window must be > 0");
    }
};

// ============================================================================
// Conditioning
// ============================================================================

namespace detail {

/// Natural cubic spline through (x[i], y[i]), x strictly increasing.
class NaturalSpline {
public:
    NaturalSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
            const double a = h0, b = 2.0 * (h0 + h1), cc = h1;
            const double r = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
            const double denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (r - a * d[i - 1]) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
    }

    double operator()(double t) const {
        const std::size_t n = x_.size();
        if (n == 1) return y_[0];
        if (t <= x_.front()) return y_.front();
        if (t >= x_.back()) return y_.back();
        const auto it = std::upper_bound(x_.begin(), x_.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - t) / h, b = (t - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

private:
    std::vector<double> x_, y_, m_;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2) return *mid;
    return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace detail

/// Centred moving average over `window` samples, shrinking at the edges.
inline std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
    const std::size_t n = x.size();
    window = std::max<std::size_t>(window, 1) | 1;  // odd, so the average is centred
    const std::size_t before = window / 2, after = window / 2;
    std::vector<double> prefix(n + 1, 0.0), out(n);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= before ? i - before : 0;
        const std::size_t hi = std::min(n, i + after + 1);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

/// Upper envelope of |x|: natural cubic spline through the local maxima of
/// |x|, held flat beyond the first and last maximum.
inline std::vector<double> amplitude_envelope(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> kx, ky;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double a = std::abs(x[i]);
        if (a > std::abs(x[i - 1]) && a >= std::abs(x[i + 1])) {
            kx.push_back(static_cast<double>(i));
            ky.push_back(a);
        }
    }
    if (kx.size() < 2) throw InvalidArgument("hr-estimate", "condition_heartbeat: degenerate signal (fewer than 2 envelope maxima)");
    detail::NaturalSpline spline(kx, ky);
    std::vector<double> env(n);
    for (std::size_t i = 0; i < n; ++i) env[i] = spline(static_cast<double>(i));
    return env;
}

inline constexpr double kSmoothingWindow = 0.12;  // s
inline constexpr double kEnvelopeFloor = 0.1;     // fraction of the median envelope

/// Moving-average smoothing followed by division by the amplitude envelope.
inline std::vector<double> condition_heartbeat(std::span<const double> mode, double sample_rate) {
    bool nonzero = false;
    for (double v : mode) nonzero |= (v != 0.0);
    if (!nonzero) throw InvalidArgument("hr-estimate", "condition_heartbeat: zero mode");
    const auto smoothed =
        moving_average(mode, static_cast<std::size_t>(std::llround(kSmoothingWindow * sample_rate)));
    auto env = amplitude_envelope(smoothed);
    const double floor = kEnvelopeFloor * detail::median(env);
    if (!(floor > 0.0)) throw InvalidArgument("hr-estimate", "condition_heartbeat: degenerate signal (envelope below floor everywhere)");
    std::vector<double> out(smoothed.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = smoothed[i] / std::max(env[i], floor);
    return out;
}

// ============================================================================
// Peaks and counting
// ============================================================================

/// Local maxima >= min_amplitude, thinned greedily (tallest first) so no two
/// kept peaks are closer than min_interval. Times are offset by `t0`.
inline PeakTrain detect_peaks(std::span<const double> x, double sample_rate, double t0 = 0.0,
                              double min_amplitude = kPeakMinAmplitude, double min_interval = kPeakMinInterval) {
    std::vector<std::size_t> cand;
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        if (x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] >= min_amplitude) cand.push_back(i);
    std::stable_sort(cand.begin(), cand.end(), [&](auto a, auto b) { return x[a] > x[b]; });

    const double min_gap = min_interval * sample_rate - 1e-9;
    std::set<std::size_t> kept;
    for (std::size_t i : cand) {
        const auto next = kept.lower_bound(i);
        if (next != kept.end() && static_cast<double>(*next - i) < min_gap) continue;
        if (next != kept.begin() && static_cast<double>(i - *std::prev(next)) < min_gap) continue;
        kept.insert(i);
    }
    PeakTrain train;
    for (std::size_t i : kept) train.times.push_back(t0 + static_cast<double>(i) / sample_rate);
    return train;
}

struct CountResult {
    double hr_bpm = 0.0;
    double l_b = 0.0;    // s, right - left
    double left = 0.0;   // s, W_b start (a peak)
    double right = 0.0;  // s, W_b end (last peak <= t)
    std::size_t peaks = 0;
};

namespace detail {
inline constexpr double kTimeEps = 1e-9;
}

/// W_b ends on the last peak <= t and starts on the latest earlier peak
/// giving a span >= l_min. If that span exceeds l_b_max the start moves one
/// peak later, keeping W_b within l_b_max at the cost of the floor.
inline std::optional<CountResult> try_count_hr(const PeakTrain& train, double l_min, double l_b_max, double t) {
    using detail::kTimeEps;
    const auto end = std::upper_bound(train.times.begin(), train.times.end(), t + kTimeEps);
    const auto count = static_cast<std::size_t>(end - train.times.begin());
    if (count < 2) return std::nullopt;
    const std::size_t last = count - 1;
    const double right = train.times[last];
    std::optional<std::size_t> start;
    for (std::size_t i = last; i-- > 0;) {
        if (right - train.times[i] >= l_min - kTimeEps) {
            start = i;
            break;
        }
    }
    if (!start) return std::nullopt;
    if (right - train.times[*start] > l_b_max + kTimeEps) {
        if (*start + 1 >= last) return std::nullopt;
        ++*start;
    }
    CountResult r;
    r.left = train.times[*start];
    r.right = right;
    r.l_b = right - r.left;
    r.peaks = last - *start + 1;
    r.hr_bpm = static_cast<double>(r.peaks - 1) / r.l_b * 60.0;
    return r;
}

inline CountResult count_hr(const PeakTrain& train, const WindowConfig& cfg, double l_min, double t) {
    if (auto r = try_count_hr(train, l_min, cfg.l_b_max, t)) return *r;
    throw NoEstimate("count_hr: fewer than 2 peaks spanning l_min = " + std::to_string(l_min) + " s before t = " +
                     std::to_string(t) + " s");
}

/// l_min spanning a fixed number of beats at the previous estimate, clamped.
inline double adapt_lmin(double prev_hr, const WindowConfig& cfg) {
    if (!(prev_hr > 0.0)) return cfg.l_min;
    return std::clamp(cfg.beats_per_window * 60.0 / prev_hr, cfg.l_min_low, cfg.l_min_high);
}

// ============================================================================
// Series and report
// ============================================================================

enum class PointFlag { Ok, CarryForward, NoHeartbeat };

inline const char* to_string(PointFlag f) {
    switch (f) {
    case PointFlag::Ok: return "ok";
    case PointFlag::CarryForward: return "carry";
    case PointFlag::NoHeartbeat: return "no-heartbeat";
    }
    return "?";
}

struct HrPoint {
    double time_s = 0.0;
    double hr_bpm = 0.0;
    double l_b = 0.0;  // 0 for carried points
    PointFlag flag = PointFlag::Ok;

    bool carried() const { return flag != PointFlag::Ok; }
};

struct HrSeries {
    std::vector<HrPoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    double carry_fraction() const {
        if (points.empty()) return 1.0;
        std::size_t c = 0;
        for (const auto& p : points) c += p.carried();
        return static_cast<double>(c) / static_cast<double>(points.size());
    }

    const HrPoint* at(double t, double tol = 1e-6) const {
        for (const auto& p : points)
            if (std::abs(p.time_s - t) <= tol) return &p;
        return nullptr;
    }
};

// ============================================================================
// Composite windows
// ============================================================================

struct OuterWindow {
    double start = 0.0;  // s
    double end = 0.0;
    bool tail = false;   // aligned to the trace end instead of the dl grid
    bool has_heartbeat = false;
    PeakTrain peaks;
};

enum class Advance { None, LeftEndpoint, NominalLeft, Exhausted };

inline const char* to_string(Advance a) {
    switch (a) {
    case Advance::None: return "none";
    case Advance::LeftEndpoint: return "left-endpoint";
    case Advance::NominalLeft: return "nominal-left";
    case Advance::Exhausted: return "exhausted";
    }
    return "?";
}

/// One output instant of the W_b sweep.
struct ScheduleEntry {
    double t = 0.0;
    std::size_t window = 0;  // W_a index in use
    std::optional<CountResult> wb;
    double l_min = 0.0;
    Advance advance = Advance::None;
    /// Left endpoint the previous W_a produced when the advance fired.
    std::optional<double> trigger_left;
};

struct CompositeRun {
    std::vector<OuterWindow> windows;
    HrSeries first_pass;
    HrSeries series;  // second (adapted l_min) pass
    std::vector<ScheduleEntry> first_schedule;
    std::vector<ScheduleEntry> schedule;
};

/// W_a placements: a_j = j * dl while a_j + l_a fits, plus one window flush
/// with the trace end when the grid leaves a remainder.
inline std::vector<OuterWindow> plan_outer_windows(double duration, const WindowConfig& cfg) {
    cfg.validate();
    const double la = cfg.l_a(), dl = cfg.delta_l();
    if (duration + detail::kTimeEps < la)
        throw InvalidArgument("hr-estimate", "trace is " + std::to_string(duration) +
                                                 " s long; the minimum duration is l_a = " + std::to_string(la) + " s");
    std::vector<OuterWindow> w;
    for (int j = 0;; ++j) {
        const double a = j * dl;
        if (a + la > duration + detail::kTimeEps) break;
        w.push_back({a, a + la, false, false, {}});
    }
    if (w.back().end < duration - detail::kTimeEps) w.push_back({duration - la, duration, true, false, {}});
    return w;
}

namespace detail {

inline std::pair<HrSeries, std::vector<ScheduleEntry>> sweep_counting_window(
    const std::vector<OuterWindow>& windows, const WindowConfig& cfg, double duration,
    const std::function<double(double)>& l_min_at) {
    HrSeries series;
    std::vector<ScheduleEntry> schedule;
    std::size_t j = 0;
    std::optional<double> last_valid;
    const auto steps = static_cast<long>(std::floor(duration / cfg.cadence + kTimeEps));
    for (long m = 1; m <= steps; ++m) {
        const double t = static_cast<double>(m) * cfg.cadence;
        ScheduleEntry e;
        e.t = t;
        e.l_min = l_min_at(t);
        for (;;) {
            e.wb = try_count_hr(windows[j].peaks, e.l_min, cfg.l_b_max, t);
            if (j + 1 >= windows.size()) break;
            const double next_start = windows[j + 1].start;
            Advance why = Advance::None;
            if (e.wb && e.wb->left >= next_start - kTimeEps) why = Advance::LeftEndpoint;
            else if (!e.wb && t - e.l_min >= next_start - kTimeEps) why = Advance::NominalLeft;
            else if (t > windows[j].end + kTimeEps) why = Advance::Exhausted;
            if (why == Advance::None) break;
            if (e.advance == Advance::None) {
                e.advance = why;
                if (e.wb) e.trigger_left = e.wb->left;
            }
            ++j;
        }
        e.window = j;
        if (e.wb && !(e.wb->hr_bpm >= kSeriesMinHr && e.wb->hr_bpm <= kSeriesMaxHr)) e.wb.reset();

        if (e.wb) {
            series.points.push_back({t, e.wb->hr_bpm, e.wb->l_b, PointFlag::Ok});
            last_valid = e.wb->hr_bpm;
        } else if (last_valid) {
            const auto flag = windows[j].has_heartbeat ? PointFlag::CarryForward : PointFlag::NoHeartbeat;
            series.points.push_back({t, *last_valid, 0.0, flag});
        }
        schedule.push_back(std::move(e));
    }
    return {std::move(series), std::move(schedule)};
}

}  // namespace detail

/// `stage(window_samples, sample_rate, window_start_s)` returns the
/// heartbeat mode for one W_a, or nullopt when the window has none.
using HeartbeatStage =
    std::function<std::optional<std::vector<double>>(std::span<const double>, double, double)>;

/// Runs both counting passes. With `strict`, more than 50% carried points
/// raises DegradedQuality; otherwise the caller inspects carry_fraction().
inline CompositeRun run_composite_windows(const ChestMotionTrace& trace, const WindowConfig& cfg,
                                          const HeartbeatStage& stage, bool strict = true) {
    const double fs = trace.sample_rate;
    CompositeRun run;
    run.windows = plan_outer_windows(trace.duration(), cfg);
    for (auto& w : run.windows) {
        const auto i0 = static_cast<std::size_t>(std::llround(w.start * fs));
        const auto len = std::min(static_cast<std::size_t>(std::llround(cfg.l_a() * fs)), trace.size() - i0);
        const std::span<const double> samples(trace.samples.data() + i0, len);
        auto mode = stage(samples, fs, w.start);
        if (!mode) continue;
        w.has_heartbeat = true;
        w.peaks = detect_peaks(condition_heartbeat(*mode, fs), fs, w.start);
    }

    const double duration = trace.duration();
    auto [first, first_sched] = detail::sweep_counting_window(run.windows, cfg, duration,
                                                              [&](double) { return cfg.l_min; });
    auto adapted = [&](double t) {
        const HrPoint* p = first.at(t);
        return (p && !p->carried()) ? adapt_lmin(p->hr_bpm, cfg) : cfg.l_min;
    };
    auto [second, second_sched] = detail::sweep_counting_window(run.windows, cfg, duration, adapted);
    run.first_pass = std::move(first);
    run.first_schedule = std::move(first_sched);
    run.series = std::move(second);
    run.schedule = std::move(second_sched);

    if (strict && run.series.carry_fraction() > 0.5)
        throw DegradedQuality("more than 50% of output points carried forward", run.series.carry_fraction());
    return run;
}

/// Structural check of a sweep: W_b inside its W_a and every W_a change
/// justified by the advance rule. Returns human-readable violations.
inline std::vector<std::string> check_schedule(const CompositeRun& run, const WindowConfig& cfg,
                                               const std::vector<ScheduleEntry>& schedule) {
    using detail::kTimeEps;
    std::vector<std::string> bad;
    auto note = [&](double t, const std::string& s) { bad.push_back("t=" + std::to_string(t) + ": " + s); };
    for (std::size_t j = 1; j < run.windows.size(); ++j) {
        const auto& w = run.windows[j];
        if (std::abs(w.end - w.start - cfg.l_a()) > kTimeEps) note(w.start, "W_a length differs from l_a");
        if (!w.tail && std::abs(w.start - run.windows[j - 1].start - cfg.delta_l()) > kTimeEps)
            note(w.start, "W_a stride differs from dl");
    }
    std::size_t prev = 0;
    for (const auto& e : schedule) {
        const auto& w = run.windows[e.window];
        if (e.window < prev) note(e.t, "W_a moved backwards");
        if (e.window != prev && e.advance == Advance::None) note(e.t, "W_a changed without an advance reason");
        if (e.window == prev && e.advance != Advance::None) note(e.t, "advance recorded without a W_a change");
        if (e.advance == Advance::LeftEndpoint &&
            !(e.trigger_left && *e.trigger_left >= run.windows[prev + 1].start - kTimeEps))
            note(e.t, "left-endpoint advance without W_b reaching the next W_a");
        if (e.wb) {
            if (e.wb->left < w.start - kTimeEps || e.wb->right > w.end + kTimeEps) note(e.t, "W_b not contained in W_a");
            if (e.wb->l_b > cfg.l_b_max + kTimeEps) note(e.t, "l_b exceeds l_b_max");
            if (e.window + 1 < run.windows.size() && e.wb->left >= run.windows[e.window + 1].start - kTimeEps)
                note(e.t, "W_b left endpoint inside the next W_a but W_a did not advance");
        }
        prev = e.window;
    }
    return bad;
}

// ============================================================================
// Report
// ============================================================================

struct HrrReport {
    double initial_time = 0.0;
    double initial_hr = 0.0;
    double hr_at_60s = 0.0;
    double hrr_60 = 0.0;
    HrSeries curve;
    double carry_fraction = 0.0;
    // Populated when a ground-truth trajectory is supplied.
    std::optional<double> mean_abs_error;
    std::optional<double> max_abs_error;
    std::optional<double> truth_hrr_60;
};

inline constexpr double kRecoveryHorizon = 60.0;  // s

/// Mean of |truth(t) - estimate(t)| over the series.
inline double mean_abs_error(const HrSeries& series, const RateTrajectory& truth) {
    if (series.empty()) throw InvalidArgument("hr-estimate", "mean_abs_error: empty series");
    double acc = 0.0;
    for (const auto& p : series.points) acc += std::abs(truth(p.time_s) - p.hr_bpm);
    return acc / static_cast<double>(series.size());
}

inline HrrReport build_report(const HrSeries& series, const std::optional<RateTrajectory>& truth = std::nullopt) {
    if (series.empty() || series.points.back().time_s + detail::kTimeEps < kRecoveryHorizon)
        throw InvalidArgument("hr-estimate", "build_report: series must span at least 60 s");
    HrrReport r;
    r.curve = series;
    r.carry_fraction = series.carry_fraction();
    const auto first = std::find_if(series.points.begin(), series.points.end(), [](const auto& p) { return !p.carried(); });
    if (first == series.points.end()) throw InvalidArgument("hr-estimate", "build_report: series has no valid estimate");
    r.initial_time = first->time_s;
    r.initial_hr = first->hr_bpm;
    const HrPoint* at60 = nullptr;
    for (const auto& p : series.points)
        if (p.time_s <= kRecoveryHorizon + detail::kTimeEps) at60 = &p;
    r.hr_at_60s = at60->hr_bpm;
    r.hrr_60 = r.initial_hr - r.hr_at_60s;
    if (truth) {
        r.mean_abs_error = mean_abs_error(series, *truth);
        double worst = 0.0;
        for (const auto& p : series.points) worst = std::max(worst, std::abs((*truth)(p.time_s) - p.hr_bpm));
        r.max_abs_error = worst;
        r.truth_hrr_60 = (*truth)(r.initial_time) - (*truth)(at60->time_s);
    }
    return r;
}

}  // namespace mmhrr
