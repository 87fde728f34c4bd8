// mmhrr: synthesise traces, simulate radar cubes, estimate heart-rate
// recovery, run evaluation sweeps and dump per-window mode tables.
//
// Exit codes: 0 ok, 1 usage, 2 input error, 3 pipeline failure,
// 4 degraded quality (outputs are still written).

#include "mmhrr/config.hpp"
#include "mmhrr/eval.hpp"
#include "mmhrr/io.hpp"
#include "mmhrr/pipeline.hpp"

#include <CLI11.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mmhrr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kPipeline = 3, kDegraded = 4 };

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;

    std::vector<std::pair<std::string, std::string>> overrides() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0)
                throw InvalidArgument("config", "--set expects key=value, got '" + s + "'");
            out.emplace_back(io::trim(s.substr(0, eq)), io::trim(s.substr(eq + 1)));
        }
        return out;
    }
    RunConfig resolve() const {
        return parse_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), overrides());
    }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.file, "key=value configuration file");
    cmd->add_option("-s,--set", args.sets, "override one key, e.g. --set mu1=0.5 (repeatable)");
}

void write_config(const fs::path& p, const RunConfig& cfg) {
    auto f = io::open_out(p);
    f << echo_config(cfg);
}

bool is_cube(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::string first;
    std::getline(f, first);
    return first == io::kCubeMagic;
}

// ---------------------------------------------------------------------------

int cmd_synth(const ConfigArgs& ca, const std::string& out) {
    const auto cfg = ca.resolve();
    io::write_trace(out, make_trace(cfg));
    write_config(out + ".config", cfg);
    std::cout << "wrote " << out << " (" << cfg.synth.duration << " s at " << cfg.synth.sample_rate << " Hz)\n";
    return kOk;
}

int cmd_simulate(const ConfigArgs& ca, const std::string& out) {
    const auto cfg = ca.resolve();
    const auto scene = make_scene(cfg);
    const auto cube = simulate_frames(cfg.radar.radar, scene, cfg.synth.duration, cfg.seed);
    io::write_cube(out, cube);
    for (std::size_t i = 0; i < scene.targets.size(); ++i) {
        io::KeyValues extra{{"target_range", io::fmt(scene.targets[i].base_range)}};
        io::write_trace(out + ".target_" + std::to_string(i + 1) + ".csv", scene.targets[i].trace, extra);
    }
    write_config(out + ".config", cfg);
    std::cout << "wrote " << out << " (" << cube.frames << " frames, " << scene.targets.size() << " target(s))\n";
    return kOk;
}

struct EstimateArgs {
    std::string input;
    std::string out_dir;
    std::string truth;
    std::optional<double> range;
    bool dump_modes = false;
};

/// Loads a trace or tracks a target in a cube; ground truth comes from the
/// trace metadata or from --truth.
ChestMotionTrace load_input(const EstimateArgs& ea, const RunConfig& cfg) {
    ChestMotionTrace trace;
    if (is_cube(ea.input)) {
        const auto cube = io::read_cube(ea.input);
        trace = displacement_from_cube(cube, {ea.range.value_or(cfg.radar.target_range), cfg.radar.search_width});
    } else {
        trace = io::read_trace(ea.input);
    }
    if (!ea.truth.empty()) trace.ground_truth = io::read_trace(ea.truth).ground_truth;
    return trace;
}

int cmd_estimate(const ConfigArgs& ca, const EstimateArgs& ea, bool modes_only) {
    const auto cfg = ca.resolve();
    const auto trace = load_input(ea, cfg);
    const fs::path dir = ea.out_dir;
    fs::create_directories(dir);
    write_config(dir / "config", cfg);

    const auto result = estimate_hr(trace, cfg.pipeline);
    if (modes_only || ea.dump_modes) io::write_mode_dump(dir, result.windows);
    auto degraded = [&] {
        std::cerr << "hr-estimate: degraded quality: carry-forward fraction " << io::fmt(result.carry_fraction())
                  << " exceeds 0.5\n";
        return kDegraded;
    };
    if (modes_only) return result.degraded() ? degraded() : kOk;

    io::write_series(dir / "hr.csv", result.series());
    std::optional<HrrReport> report;
    try {
        report = build_report(result.series(), io::truth_of(trace));
    } catch (const Error&) {
        if (result.degraded()) return degraded();  // no report is possible from a mostly empty series
        throw;
    }
    io::write_report_text(dir / "report", *report);
    io::write_report_json(dir / "report.json", *report);
    std::cout << "hrr_60=" << io::fmt(report->hrr_60) << " initial_hr=" << io::fmt(report->initial_hr)
              << " hr_at_60s=" << io::fmt(report->hr_at_60s);
    if (report->mean_abs_error) std::cout << " mean_abs_error=" << io::fmt(*report->mean_abs_error);
    std::cout << '\n';
    return result.degraded() ? degraded() : kOk;
}

struct EvalArgs {
    std::string out_dir;
    std::vector<std::string> only;
    int repetitions = 0;
    bool serial = false;
    bool list = false;
};

int cmd_eval(const ConfigArgs& ca, const EvalArgs& ea) {
    auto scenarios = default_scenarios();
    if (ea.list) {
        for (const auto& s : scenarios) std::cout << s.name << '\n';
        return kOk;
    }
    if (ea.repetitions != 0 && ea.repetitions < 3)
        throw InvalidArgument("config", "--repetitions must be >= 3");
    std::vector<std::pair<std::string, std::string>> overrides;
    if (!ca.file.empty())
        for (const auto& kv : io::read_key_values(ca.file, "config")) overrides.push_back(kv);
    for (const auto& kv : ca.overrides()) overrides.push_back(kv);

    std::vector<Scenario> chosen;
    for (auto& s : scenarios) {
        if (!ea.only.empty() && std::find(ea.only.begin(), ea.only.end(), s.name) == ea.only.end()) continue;
        for (const auto& [k, v] : overrides) set_config_value(s.config, k, v);
        if (ea.repetitions > 0) s.repetitions = ea.repetitions;
        chosen.push_back(std::move(s));
    }
    for (const auto& name : ea.only)
        if (std::none_of(chosen.begin(), chosen.end(), [&](const Scenario& s) { return s.name == name; }))
            throw InvalidArgument("config", "unknown scenario '" + name + "' (see eval --list)");

    const auto runs = sweep(chosen, !ea.serial);
    const auto reports = write_archive(ea.out_dir, runs);
    const auto table = score_table(runs);
    table.write_csv(std::cout);
    int failed = 0;
    for (const auto& r : table.rows) {
        failed += r.failed();
        for (const auto& f : r.failures)
            if (!f.empty()) std::cerr << r.scenario << ": " << f << '\n';
    }
    std::cerr << reports << " reports archived under " << ea.out_dir << '\n';
    return failed ? kPipeline : kOk;
}

int exit_code_for(const Error& e) {
    if (dynamic_cast<const DegradedQuality*>(&e)) return kDegraded;
    if (e.stage() == "config") return kUsage;
    if (dynamic_cast<const ParseError*>(&e) || e.stage() == "io") return kInput;
    if (dynamic_cast<const InvalidArgument*>(&e)) return kInput;
    return kPipeline;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heart-rate recovery estimation from radar chest-motion phase"};
    app.require_subcommand(1);
    bool show_keys = false;
    app.add_flag("--config-keys", show_keys, "list every configuration key and exit");

    ConfigArgs ca;
    std::string out;

    auto* synth = app.add_subcommand("synth", "synthesise a chest-displacement trace (CSV + .meta)");
    add_config_options(synth, ca);
    synth->add_option("-o,--output", out, "trace CSV path")->required();

    auto* simulate = app.add_subcommand("simulate", "simulate an FMCW radar cube of the configured scene");
    add_config_options(simulate, ca);
    simulate->add_option("-o,--output", out, "cube path")->required();

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "estimate the HR series and recovery report");
    add_config_options(estimate, ca);
    estimate->add_option("-i,--input", ea.input, "trace CSV or radar cube")->required();
    estimate->add_option("-o,--output", ea.out_dir, "output directory")->required();
    estimate->add_option("--truth", ea.truth, "trace whose metadata supplies the ground truth");
    estimate->add_option("--range", ea.range, "expected target range in m (cube input)");
    estimate->add_flag("--dump-modes", ea.dump_modes, "also write modes.csv, labels.csv and windows.csv");

    auto* dump = app.add_subcommand("dump-modes", "write per-window mode tables only");
    add_config_options(dump, ca);
    dump->add_option("-i,--input", ea.input, "trace CSV or radar cube")->required();
    dump->add_option("-o,--output", ea.out_dir, "output directory")->required();
    dump->add_option("--range", ea.range, "expected target range in m (cube input)");

    EvalArgs va;
    auto* eval = app.add_subcommand("eval", "run the scenario sweep and archive every repetition");
    add_config_options(eval, ca);
    eval->add_option("-o,--output", va.out_dir, "archive directory");
    eval->add_option("--scenario", va.only, "restrict to these scenarios (repeatable)");
    eval->add_option("--repetitions", va.repetitions, "override repetitions per scenario (>= 3)");
    eval->add_flag("--serial", va.serial, "run repetitions one at a time");
    eval->add_flag("--list", va.list, "list scenario names and exit");

    app.preparse_callback([&](std::size_t) {
        if (show_keys) {
            std::cout << config_help();
            std::exit(kOk);
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (show_keys) {
            std::cout << config_help();
            return kOk;
        }
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return cmd_synth(ca, out);
        if (*simulate) return cmd_simulate(ca, out);
        if (*estimate) return cmd_estimate(ca, ea, false);
        if (*dump) return cmd_estimate(ca, ea, true);
        if (*eval) {
            if (va.out_dir.empty() && !va.list) {
                std::cerr << "eval: --output is required\n";
                return kUsage;
            }
            return cmd_eval(ca, va);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPipeline;
    }
    return kUsage;
}
