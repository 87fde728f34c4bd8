/**
 * End-to-end estimation: band-pass and difference the trace, then per outer
 * window pick alpha, decompose, label modes and hand the heartbeat mode to
 * the composite-window counter.
 */
#pragma once

#include "mmhrr/hr_estimate.hpp"
#include "mmhrr/mode_select.hpp"
#include "mmhrr/preprocess.hpp"
#include "mmhrr/radar_sim.hpp"
#include "mmhrr/vmd.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmhrr {

struct PipelineConfig {
    FilterSpec filter;
    VmdParams vmd{.K = 6};
    GateThresholds gates;
    AlphaRange alpha_range;
    SelectConfig select;
    WindowConfig windows;
    bool widest_alpha = true;

    void validate(double sample_rate) const {
        filter.validate(sample_rate);
        vmd.validate();
        gates.validate();
        alpha_range.validate();
        select.validate();
        windows.validate();
    }
};

struct ModeRow {
    std::size_t index = 0;
    double center_freq = 0.0;   // Hz, VMD centre
    double energy_share = 0.0;  // mode energy / input energy
    ModeLabel label;
};

struct WindowDiagnostics {
    double start = 0.0;
    double alpha = 0.0;
    double r_max = 0.0;
    double energy_loss = 0.0;
    int probes = 0;
    bool gate_relaxed = false;  // no probe met both gates; best probe used
    bool coincidence = false;
    std::optional<std::size_t> heartbeat;
    std::vector<ModeRow> modes;
    std::string failure;  // set when the window produced no heartbeat
};

struct PipelineResult {
    CompositeRun run;
    std::vector<WindowDiagnostics> windows;
    ChestMotionTrace conditioned;

    const HrSeries& series() const { return run.series; }
    double carry_fraction() const { return run.series.carry_fraction(); }
    bool degraded() const { return carry_fraction() > 0.5; }
};

/// One outer window: alpha search, decomposition, labelling. Fills `diag`
/// and returns the heartbeat mode, or nullopt when none qualifies.
inline std::optional<std::vector<double>> heartbeat_stage(std::span<const double> window, double sample_rate,
                                                          const PipelineConfig& cfg, WindowDiagnostics& diag) {
    AlphaSelection sel;
    try {
        sel = select_alpha(window, sample_rate, cfg.vmd, cfg.gates, cfg.alpha_range, cfg.widest_alpha);
    } catch (const InfeasibleAlpha& e) {
        sel = e.best();
        diag.gate_relaxed = true;
    }
    diag.alpha = sel.alpha;
    diag.r_max = sel.r_max;
    diag.energy_loss = sel.energy_loss;
    diag.probes = static_cast<int>(sel.probes.size());

    const auto energies = sel.modes.energies();
    auto rows = [&](const std::vector<ModeLabel>& labels) {
        diag.modes.clear();
        for (std::size_t k = 0; k < sel.modes.size(); ++k) {
            ModeRow row;
            row.index = k;
            row.center_freq = sel.modes.center_freqs[k];
            row.energy_share = sel.modes.input_energy > 0.0 ? energies[k] / sel.modes.input_energy : 0.0;
            if (k < labels.size()) row.label = labels[k];
            diag.modes.push_back(row);
        }
    };
    try {
        const auto cls = classify_modes(sel.modes, cfg.select);
        rows(cls.labels);
        diag.heartbeat = cls.heartbeat;
        diag.coincidence = cls.coincidence;
        return sel.modes.modes[cls.heartbeat];
    } catch (const NoHeartbeat& e) {
        rows({});
        diag.failure = e.what();
        return std::nullopt;
    }
}

/// Runs the full pipeline on a displacement trace. Never throws on carry-
/// forward; callers check degraded().
inline PipelineResult estimate_hr(const ChestMotionTrace& trace, const PipelineConfig& cfg = {}) {
    cfg.validate(trace.sample_rate);
    PipelineResult out;
    out.conditioned = preprocess(trace, cfg.filter);
    HeartbeatStage stage = [&](std::span<const double> w, double fs, double start) {
        WindowDiagnostics d;
        d.start = start;
        auto mode = heartbeat_stage(w, fs, cfg, d);
        out.windows.push_back(std::move(d));
        return mode;
    };
    out.run = run_composite_windows(out.conditioned, cfg.windows, stage, false);
    return out;
}

struct RadarInput {
    double expected_range = 1.0;  // m
    std::size_t search_width = 2;  // bins
};

inline ChestMotionTrace displacement_from_cube(const RadarCube& cube, const RadarInput& in) {
    return phase_to_displacement(track_target(cube, in.expected_range, in.search_width), cube.wavelength);
}

}  // namespace mmhrr
