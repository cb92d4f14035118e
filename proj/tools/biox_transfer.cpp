// Command-line front end for cross-modality transfer experiments.
//
// Exit codes: 0 success, 2 configuration/usage problem, 3 pipeline failure,
// 4 I/O failure. The BIOX_WORKERS environment variable caps worker threads.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "biox/experiment.hpp"

namespace {

using namespace biox;

struct SubOpts {
    CLI::App* cmd = nullptr;
    std::string config;
    uint64_t seed = 0;
    int64_t seeds = 0;
    std::string out;
    std::string format;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* seeds_opt = nullptr;
    CLI::Option* out_opt = nullptr;
};

SubOpts add_common(CLI::App& app, const std::string& name, const std::string& desc,
                   bool need_config = true) {
    SubOpts so;
    so.cmd = app.add_subcommand(name, desc);
    CLI::Option* c = so.cmd->add_option("--config", so.config,
                                        "experiment config (flat key=value with [section] headers)");
    if (need_config) c->required();
    so.seed_opt = so.cmd->add_option("--seed", so.seed, "override the base run seed");
    so.seeds_opt = so.cmd->add_option("--seeds", so.seeds, "override the number of seeds");
    so.out_opt = so.cmd->add_option("--out", so.out, "override the output directory");
    so.cmd->add_option("--format", so.format, "artifact format: json-lines|csv|text-table");
    return so;
}

ExperimentConfig make_config(const SubOpts& so) {
    ExperimentConfig cfg = load_config(so.config);
    if (so.seed_opt->count() > 0) cfg.base_seed = so.seed;
    if (so.seeds_opt->count() > 0) {
        if (so.seeds < 1) throw ConfigError("--seeds must be >= 1");
        cfg.seeds = so.seeds;
    }
    if (so.out_opt->count() > 0) cfg.out_dir = so.out;
    return cfg;
}

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs the full pipeline and emits artifacts: the text table goes to stdout,
// the canonical json-lines report plus the requested format (when different)
// go under the output directory, and timing goes to run_meta.json only.
int run_pipeline(const ExperimentConfig& cfg, const std::string& format_text) {
    auto t0 = std::chrono::steady_clock::now();
    TransferReport report = run_experiment(cfg);
    double wall = elapsed_seconds(t0);
    std::cout << render_report(report, ReportFormat::TextTable);
    if (!cfg.out_dir.empty()) {
        export_report(report, ReportFormat::JsonLines, cfg.out_dir);
        if (!format_text.empty()) {
            ReportFormat fmt = parse_report_format(format_text);
            if (fmt != ReportFormat::JsonLines) export_report(report, fmt, cfg.out_dir);
        }
        write_run_meta(cfg.out_dir, wall);
    }
    return 0;
}

int run_ablation(const ExperimentConfig& cfg, const std::string& kind,
                 const std::string& format_text) {
    auto t0 = std::chrono::steady_clock::now();
    std::string text, artifact;
    ReportFormat fmt = format_text.empty() ? ReportFormat::JsonLines : parse_report_format(format_text);
    if (kind == "positions") {
        PositionAblation table = fixed_position_ablation(cfg);
        text = render_position_ablation(table, ReportFormat::TextTable);
        artifact = render_position_ablation(table, fmt);
    } else {
        std::vector<SweepRow> rows;
        std::string label;
        if (kind == "rank") {
            rows = rank_ablation(cfg);
            label = "rank";
        } else if (kind == "prototypes") {
            rows = prototype_ablation(cfg);
            label = "prototypes";
        } else {
            rows = pair_fraction_ablation(cfg);
            label = "pair_fraction";
        }
        text = render_sweep(label, rows, ReportFormat::TextTable);
        artifact = render_sweep(label, rows, fmt);
    }
    double wall = elapsed_seconds(t0);
    std::cout << text;
    if (!cfg.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create output directory: " + cfg.out_dir);
        std::string ext = fmt == ReportFormat::JsonLines ? "jsonl"
                          : fmt == ReportFormat::Csv     ? "csv"
                                                         : "txt";
        write_text_file(
            (std::filesystem::path(cfg.out_dir) / ("ablation_" + kind + "." + ext)).string(), artifact);
        write_run_meta(cfg.out_dir, wall);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "biox-transfer: train and evaluate cross-modality transfer methods on "
        "synthetic paired biosignal data (BIOX_WORKERS caps worker threads)"};
    app.require_subcommand(1);

    SubOpts pretrain = add_common(app, "pretrain", "pretrain and freeze the source model per seed");
    SubOpts positions = add_common(app, "select-positions",
                                   "pick the transfer positions (input layer m, output layer l)");
    SubOpts bridge = add_common(app, "train-bridge", "train and evaluate the bridge method");
    SubOpts baseline = add_common(app, "train-baseline", "train and evaluate one baseline method");
    std::string baseline_method;
    baseline.cmd->add_option("--method", baseline_method, "kd|kd-contrast|random|oracle")
        ->required()
        ->check(CLI::IsMember({"kd", "kd-contrast", "random", "oracle"}));
    SubOpts evaluate = add_common(app, "evaluate", "run every configured method and emit the report");
    SubOpts ablate = add_common(app, "ablate", "sweep one knob and report the curve");
    std::string ablate_kind;
    ablate.cmd->add_option("kind", ablate_kind, "rank|prototypes|pairsize|positions")
        ->required()
        ->check(CLI::IsMember({"rank", "prototypes", "pairsize", "positions"}));
    SubOpts report = add_common(app, "report", "re-render a stored json-lines report",
                                /*need_config=*/false);
    report.out_opt->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pretrain.cmd) {
            ExperimentConfig cfg = make_config(pretrain);
            for (const SeedArtifacts& art : prepare_artifacts(cfg, /*want_positions=*/false)) {
                std::cout << "seed " << art.run_seed << ": source model pretrained and frozen";
                if (!art.teacher_path.empty()) std::cout << " -> " << art.teacher_path;
                std::cout << "\n";
            }
        } else if (*positions.cmd) {
            ExperimentConfig cfg = make_config(positions);
            for (const SeedArtifacts& art : prepare_artifacts(cfg, /*want_positions=*/true)) {
                std::cout << "seed " << art.run_seed << ": m=" << art.positions.input_layer
                          << " l=" << art.positions.output_layer;
                if (!art.positions_path.empty()) std::cout << " -> " << art.positions_path;
                std::cout << "\n";
                for (const std::string& w : art.positions.warnings) {
                    std::cout << "  warning: " << w << "\n";
                }
            }
        } else if (*bridge.cmd) {
            ExperimentConfig cfg = make_config(bridge);
            cfg.methods = {Method::Bridge};
            return run_pipeline(cfg, bridge.format);
        } else if (*baseline.cmd) {
            ExperimentConfig cfg = make_config(baseline);
            cfg.methods = {parse_method(baseline_method)};
            return run_pipeline(cfg, baseline.format);
        } else if (*evaluate.cmd) {
            ExperimentConfig cfg = make_config(evaluate);
            return run_pipeline(cfg, evaluate.format);
        } else if (*ablate.cmd) {
            ExperimentConfig cfg = make_config(ablate);
            return run_ablation(cfg, ablate_kind, ablate.format);
        } else if (*report.cmd) {
            TransferReport rep =
                load_report_jsonl((std::filesystem::path(report.out) / "report.jsonl").string());
            ReportFormat fmt =
                report.format.empty() ? ReportFormat::TextTable : parse_report_format(report.format);
            std::cout << render_report(rep, fmt);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
