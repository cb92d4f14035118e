#pragma once

// Experiment orchestration: a strict flat config schema, the per-seed
// pipeline (generate -> split -> pretrain teacher -> select positions ->
// train method -> evaluate on the held-out split), ablation sweeps, and
// deterministic report emission. Report bytes never contain wall-clock data;
// timing goes to a separate run_meta.json.

#include <array>
#include <cstdint>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biox/bridge.hpp"
#include "biox/data.hpp"
#include "biox/metrics.hpp"
#include "biox/model.hpp"
#include "biox/transfer.hpp"

namespace biox {

// Exit-code carriers: config problems map to exit 2, I/O problems to exit 4,
// anything else thrown from a pipeline stage to exit 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ArchId { ConvStack, AttentionStack };
enum class Method { Bridge, Kd, KdContrast, Random, Oracle };

std::string arch_name(ArchId arch);
std::string method_name(Method method);
ArchId parse_arch(const std::string& text);
Method parse_method(const std::string& text);

struct ExperimentConfig {
    // dataset
    std::string dataset_file;  // load instead of generating when nonempty
    int64_t classes = 3;
    int64_t latent_dim = 6;
    double noise_level = 0.3;
    int64_t samples_per_subject = 200;
    int64_t subjects = 15;
    uint64_t data_seed = 1;
    std::array<double, 4> split_weights{0.33, 0.22, 0.11, 0.33};
    SplitMode split_mode = SplitMode::SubjectDisjoint;
    double pair_fraction = 1.0;

    // models
    ArchId old_arch = ArchId::ConvStack;
    ArchId new_arch = ArchId::AttentionStack;
    int64_t old_dim = 16;
    int64_t new_dim = 12;
    int64_t pretrain_epochs = 10;
    double pretrain_lr = 1e-3;
    int64_t pretrain_batch = 32;

    // methods to run, in report order
    std::vector<Method> methods{Method::Bridge};

    // bridge
    int64_t rank = 16;
    int64_t prototypes = 100;
    int64_t bridge_epochs = 50;
    int64_t bridge_batch = 32;
    double bridge_lr = 1e-3;
    AlignKind bridge_loss = AlignKind::Cosine;
    BridgePool bridge_pool = BridgePool::Mean;
    BridgeInit bridge_init = BridgeInit::FromReference;
    int64_t align_layer = -1;
    std::vector<int64_t> rank_grid{std::begin(kDefaultRankGrid), std::end(kDefaultRankGrid)};
    std::vector<int64_t> prototype_grid{std::begin(kDefaultPrototypeGrid),
                                        std::end(kDefaultPrototypeGrid)};

    // distillation baselines
    int64_t kd_epochs = 20;
    int64_t kd_batch = 32;
    double kd_lr = 1e-3;
    double contrast_tau = kDefaultInfoNceTau;
    int64_t contrast_epochs = 20;
    int64_t contrast_batch = 32;
    double contrast_lr = 1e-3;

    // position selection
    double probe_l2 = kDefaultProbeL2;
    int64_t probe_folds = kDefaultProbeFolds;
    int64_t cka_row_cap = kDefaultCkaRowCap;
    SimilarityObjective cka_objective = SimilarityObjective::Maximize;

    // run
    int64_t seeds = 5;
    uint64_t base_seed = 1;
    std::string out_dir;

    // ablation sweeps
    std::vector<double> pair_fractions{1.0, 0.5, 0.2, 0.1};
};

// Strict flat key=value parser with [section] headers, '#'/';' comments.
// Unknown sections or keys, malformed lines, and bad values all raise
// ConfigError.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical text form of a config (every result-affecting field, fixed
// order); embedded in reports so a report pins the run that produced it.
// The output directory is omitted: it cannot change results.
std::string config_echo(const ExperimentConfig& cfg);

struct MethodReport {
    std::string method;
    std::string input_modality;  // modality consumed at inference time
    int64_t seeds = 0;
    double bacc_mean = 0.0;
    double f1m_mean = 0.0;
    double f1w_mean = 0.0;
    // Sample standard deviation across seeds; absent with fewer than 2 seeds.
    std::optional<double> bacc_std, f1m_std, f1w_std;
    int64_t params = 0;           // trainable parameters (max across seeds)
    int64_t input_layer = -1;     // m; -1 for methods without positions
    int64_t output_layer = -1;    // l
    std::vector<MetricSet> per_seed;
    std::vector<std::vector<double>> loss_history;  // one curve per seed
    std::vector<std::vector<double>> val_history;
    std::vector<std::vector<double>> probe_scores;  // bridge only, per seed
    std::vector<std::vector<double>> cka_scores;
    std::vector<std::string> warnings;
};

struct GridCell {
    int64_t rank = 0;
    int64_t prototypes = 0;
    int64_t params = 0;
    double percent_of_full = 0.0;  // relative to the full-rank projection
};

struct TransferReport {
    std::vector<MethodReport> methods;  // config order
    std::vector<GridCell> grid;         // bridge size table at the selected positions
    int64_t full_rank_params = 0;       // full-rank projection size at those positions
    int64_t class_count = 0;
    std::string config_text;            // normalized config echo
};

// Runs every configured method over every seed (seeds run in parallel worker
// slots) and aggregates. On failure, writes <out>/failure.json when an output
// directory is set, then rethrows.
TransferReport run_experiment(const ExperimentConfig& cfg);

struct SeedArtifacts {
    uint64_t run_seed = 0;
    std::string teacher_path;    // empty without an output directory
    std::string positions_path;  // empty unless positions were requested and saved
    bool has_positions = false;
    PositionSelection positions;
};

// Pretrains (or reloads) each seed's frozen source model and, when asked,
// runs position selection; artifacts land under the config's output
// directory when one is set.
std::vector<SeedArtifacts> prepare_artifacts(const ExperimentConfig& cfg, bool want_positions);

struct PositionCell {
    int64_t input_layer = 0;
    int64_t output_layer = 0;
    bool ok = false;
    std::string error;
    double bacc_mean = 0.0;
    double f1m_mean = 0.0;
    double f1w_mean = 0.0;
};

struct PositionAblation {
    std::vector<PositionCell> cells;  // always 9: {first, middle, last}^2
    int64_t completed = 0;
    double fixed_average_bacc = 0.0;  // mean over completed cells
    double selected_bacc = 0.0;       // two-stage-selected positions, same protocol
    int64_t selected_input_layer = 0;
    int64_t selected_output_layer = 0;
};

// Trains bridges at the nine fixed position combinations (middle layer =
// ceil(count/2)) plus the selected positions. Requires >= 3 layers per model.
PositionAblation fixed_position_ablation(const ExperimentConfig& cfg);

struct SweepRow {
    double x = 0.0;  // swept value (rank, prototype count, or pair fraction)
    int64_t rank = 0;
    int64_t prototypes = 0;
    int64_t params = 0;
    double bacc_mean = 0.0;
    std::optional<double> bacc_std;
};

std::vector<SweepRow> rank_ablation(const ExperimentConfig& cfg);
std::vector<SweepRow> prototype_ablation(const ExperimentConfig& cfg);
std::vector<SweepRow> pair_fraction_ablation(const ExperimentConfig& cfg);

enum class ReportFormat { JsonLines, Csv, TextTable };
ReportFormat parse_report_format(const std::string& text);

// Deterministic bytes for a report in one format. CSV columns are exactly:
// method, input_modality, bacc_mean, bacc_std, f1m_mean, f1m_std, f1w_mean,
// f1w_std, params, m, l, seeds.
std::string render_report(const TransferReport& report, ReportFormat format);
std::string render_position_ablation(const PositionAblation& table, ReportFormat format);
std::string render_sweep(const std::string& name, const std::vector<SweepRow>& rows, ReportFormat format);

// Writes report.<ext> under out_dir (jsonl, csv, or txt). Throws IoError.
void export_report(const TransferReport& report, ReportFormat format, const std::string& out_dir);
void write_text_file(const std::string& path, const std::string& bytes);  // IoError on failure

// Reads back a json-lines report; the exact inverse of render_report for
// that format, so a reloaded report re-renders to identical bytes.
TransferReport load_report_jsonl(const std::string& path);

// The only place wall-clock data is ever written.
void write_run_meta(const std::string& out_dir, double wall_seconds);

}  // namespace biox
