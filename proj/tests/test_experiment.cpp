#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "biox/experiment.hpp"

using namespace biox;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(# compact end-to-end run
[dataset]
classes = 3
latent_dim = 6
noise_level = 0.1
samples_per_subject = 30
subjects = 6
seed = 9

[models]
pretrain_epochs = 3

[method]
methods = oracle bridge kd kd-contrast random

[bridge]
rank = 4
prototypes = 8
epochs = 4
batch = 16
lr = 0.01
rank_grid = 2 4
prototype_grid = 4 8

[kd]
epochs = 2

[contrast]
epochs = 2

[run]
seeds = 2
seed = 5
)";

ExperimentConfig small_config() { return parse_config_text(kSmallConfig); }

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("config parser applies every recognized key") {
    const char* text = R"(
[dataset]
file = data.bin
classes = 4
latent_dim = 5
noise_level = 0.25
samples_per_subject = 12
subjects = 8
seed = 77
split_weights = 0.4 0.3 0.1 0.2
split_mode = sample
pair_fraction = 0.5
[models]
old_arch = attention
new_arch = conv
old_dim = 10
new_dim = 14
pretrain_epochs = 7
pretrain_lr = 0.002
pretrain_batch = 16
[method]
name = kd
[bridge]
rank = 3
prototypes = 9
epochs = 11
lr = 0.05
batch = 8
loss = mae
pool = max
init = random
align_layer = 2
rank_grid = 2 3
prototype_grid = 5 9 12
[kd]
epochs = 6
lr = 0.004
batch = 4
[contrast]
tau = 0.1
epochs = 5
lr = 0.003
batch = 6
[probe]
l2 = 0.5
folds = 3
[cka]
row_cap = 64
objective = minimize
[run]
seeds = 2
seed = 123
out = /tmp/somewhere
[ablation]
pair_fractions = 1.0 0.25
)";
    ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.dataset_file == "data.bin");
    CHECK(cfg.classes == 4);
    CHECK(cfg.latent_dim == 5);
    CHECK(cfg.noise_level == doctest::Approx(0.25));
    CHECK(cfg.samples_per_subject == 12);
    CHECK(cfg.subjects == 8);
    CHECK(cfg.data_seed == 77);
    CHECK(cfg.split_weights[0] == doctest::Approx(0.4));
    CHECK(cfg.split_weights[3] == doctest::Approx(0.2));
    CHECK(cfg.split_mode == SplitMode::SampleWise);
    CHECK(cfg.pair_fraction == doctest::Approx(0.5));
    CHECK(cfg.old_arch == ArchId::AttentionStack);
    CHECK(cfg.new_arch == ArchId::ConvStack);
    CHECK(cfg.old_dim == 10);
    CHECK(cfg.new_dim == 14);
    CHECK(cfg.pretrain_epochs == 7);
    CHECK(cfg.pretrain_lr == doctest::Approx(0.002));
    CHECK(cfg.pretrain_batch == 16);
    REQUIRE(cfg.methods.size() == 1);
    CHECK(cfg.methods[0] == Method::Kd);
    CHECK(cfg.rank == 3);
    CHECK(cfg.prototypes == 9);
    CHECK(cfg.bridge_epochs == 11);
    CHECK(cfg.bridge_lr == doctest::Approx(0.05));
    CHECK(cfg.bridge_batch == 8);
    CHECK(cfg.bridge_loss == AlignKind::Mae);
    CHECK(cfg.bridge_pool == BridgePool::Max);
    CHECK(cfg.bridge_init == BridgeInit::Random);
    CHECK(cfg.align_layer == 2);
    CHECK(cfg.rank_grid == std::vector<int64_t>{2, 3});
    CHECK(cfg.prototype_grid == std::vector<int64_t>{5, 9, 12});
    CHECK(cfg.kd_epochs == 6);
    CHECK(cfg.kd_lr == doctest::Approx(0.004));
    CHECK(cfg.kd_batch == 4);
    CHECK(cfg.contrast_tau == doctest::Approx(0.1));
    CHECK(cfg.contrast_epochs == 5);
    CHECK(cfg.contrast_lr == doctest::Approx(0.003));
    CHECK(cfg.contrast_batch == 6);
    CHECK(cfg.probe_l2 == doctest::Approx(0.5));
    CHECK(cfg.probe_folds == 3);
    CHECK(cfg.cka_row_cap == 64);
    CHECK(cfg.cka_objective == SimilarityObjective::Minimize);
    CHECK(cfg.seeds == 2);
    CHECK(cfg.base_seed == 123);
    CHECK(cfg.out_dir == "/tmp/somewhere");
    REQUIRE(cfg.pair_fractions.size() == 2);
    CHECK(cfg.pair_fractions[1] == doctest::Approx(0.25));
}

TEST_CASE("config parser rejects malformed documents") {
    CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nseeds = 2\nseeds = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nseeds = two\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nnoise_level = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seeds = 2\n"), ConfigError);          // key before any section
    CHECK_THROWS_AS(parse_config_text("[run\nseeds = 2\n"), ConfigError);    // unclosed header
    CHECK_THROWS_AS(parse_config_text("[run]\njust a line\n"), ConfigError); // no '='
    CHECK_THROWS_AS(parse_config_text("[run]\nseeds =\n"), ConfigError);     // empty value
    CHECK_THROWS_AS(parse_config_text("[method]\nname = bridge\nmethods = kd\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[method]\nname = teleport\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[models]\nold_arch = mlp\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nsplit_mode = nope\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nsplit_weights = 0.5 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\npair_fraction = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\npair_fraction = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nclasses = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\nseeds = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[bridge]\nrank = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[bridge]\nrank_grid = 4 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[contrast]\ntau = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[probe]\nfolds = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[ablation]\npair_fractions = 0.5 0\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/dir/conf.ini"), IoError);
    CHECK_THROWS_AS(parse_report_format("yaml"), ConfigError);
}

TEST_CASE("config echo is canonical and round-trips") {
    ExperimentConfig cfg = small_config();
    std::string echo1 = config_echo(cfg);
    std::string echo2 = config_echo(parse_config_text(echo1));
    CHECK(echo1 == echo2);
    CHECK(config_echo(small_config()) == echo1);

    // Defaults echo and parse back too.
    ExperimentConfig defaults;
    CHECK(config_echo(parse_config_text(config_echo(defaults))) == config_echo(defaults));
}

TEST_CASE("experiment report structure, aggregation, and byte determinism") {
    ExperimentConfig cfg = small_config();
    TransferReport rep = run_experiment(cfg);

    REQUIRE(rep.methods.size() == 5);
    CHECK(rep.methods[0].method == "oracle");
    CHECK(rep.methods[1].method == "bridge");
    CHECK(rep.methods[2].method == "kd");
    CHECK(rep.methods[3].method == "kd-contrast");
    CHECK(rep.methods[4].method == "random");
    CHECK(rep.class_count == 3);
    CHECK(rep.config_text == config_echo(cfg));

    CHECK(rep.methods[0].input_modality == "ecg");
    CHECK(rep.methods[1].input_modality == "emg");
    CHECK(rep.methods[2].input_modality == "emg");
    CHECK(rep.methods[3].input_modality == "emg");
    CHECK(rep.methods[4].input_modality == "none");

    for (const MethodReport& m : rep.methods) {
        CHECK(m.seeds == 2);
        REQUIRE(m.per_seed.size() == 2);
        REQUIRE(m.bacc_std.has_value());
        REQUIRE(m.f1m_std.has_value());
        REQUIRE(m.f1w_std.has_value());
        CHECK(m.bacc_mean >= 0.0);
        CHECK(m.bacc_mean <= 1.0);
        CHECK(m.f1m_mean >= 0.0);
        CHECK(m.f1m_mean <= 1.0);
        double mean_check =
            (m.per_seed[0].balanced_accuracy + m.per_seed[1].balanced_accuracy) / 2.0;
        CHECK(m.bacc_mean == doctest::Approx(mean_check).epsilon(1e-12));
        for (const MetricSet& s : m.per_seed) CHECK(s.confusion.size() == 3);
    }

    // Trainable-parameter bookkeeping per method.
    CHECK(rep.methods[0].params == 0);
    CHECK(rep.methods[1].params > 0);
    CHECK(rep.methods[2].params > 0);
    CHECK(rep.methods[3].params > rep.methods[2].params);  // contrast adds a projection
    CHECK(rep.methods[4].params == 0);

    // Only the bridge reports positions; both layers land in range.
    CHECK(rep.methods[1].input_layer >= 1);
    CHECK(rep.methods[1].input_layer <= 4);
    CHECK(rep.methods[1].output_layer >= 1);
    CHECK(rep.methods[1].output_layer <= 4);
    for (size_t i : {size_t(0), size_t(2), size_t(3), size_t(4)}) {
        CHECK(rep.methods[i].input_layer == -1);
        CHECK(rep.methods[i].output_layer == -1);
    }

    // Histories: one curve per seed, length == configured epochs.
    for (const auto& curve : rep.methods[1].loss_history) CHECK(curve.size() == 4);
    for (const auto& curve : rep.methods[1].val_history) CHECK(curve.size() == 4);
    for (const auto& curve : rep.methods[2].loss_history) CHECK(curve.size() == 2);
    for (const auto& curve : rep.methods[4].loss_history) CHECK(curve.empty());
    CHECK(rep.methods[1].probe_scores.size() == 2);
    CHECK(rep.methods[1].cka_scores.size() == 2);

    // Size grid: rank-major over {2,4} x {4,8}; the configured cell matches
    // the trained bridge's parameter count; everything sits under full rank.
    REQUIRE(rep.grid.size() == 4);
    CHECK(rep.full_rank_params > 0);
    CHECK(rep.grid[0].rank == 2);
    CHECK(rep.grid[0].prototypes == 4);
    CHECK(rep.grid[3].rank == 4);
    CHECK(rep.grid[3].prototypes == 8);
    for (const GridCell& c : rep.grid) {
        CHECK(c.params > 0);
        CHECK(c.params < rep.full_rank_params);
        CHECK(c.percent_of_full ==
              doctest::Approx(100.0 * double(c.params) / double(rep.full_rank_params)).epsilon(1e-12));
        if (c.rank == cfg.rank && c.prototypes == cfg.prototypes) {
            CHECK(c.params == rep.methods[1].params);
        }
    }

    // Byte determinism: a fresh run renders identically in every format.
    TransferReport rep2 = run_experiment(cfg);
    for (ReportFormat f : {ReportFormat::JsonLines, ReportFormat::Csv, ReportFormat::TextTable}) {
        CHECK(render_report(rep, f) == render_report(rep2, f));
    }

    // JSON lines round-trip bit-exactly through a parser.
    std::string jsonl = render_report(rep, ReportFormat::JsonLines);
    std::vector<std::string> lines = lines_of(jsonl);
    REQUIRE(lines.size() == 6);  // run record + five methods
    for (const std::string& line : lines) {
        nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.dump() == line);
    }
    CHECK(nlohmann::json::parse(lines[0]).at("record") == "run");
    CHECK(nlohmann::json::parse(lines[1]).at("method") == "oracle");

    // CSV: pinned header, one row per method, bridge row carries positions.
    std::vector<std::string> csv = lines_of(render_report(rep, ReportFormat::Csv));
    REQUIRE(csv.size() == 6);
    CHECK(csv[0] ==
          "method,input_modality,bacc_mean,bacc_std,f1m_mean,f1m_std,f1w_mean,f1w_std,params,m,l,seeds");
    CHECK(csv[1].substr(0, 7) == "oracle,");
    CHECK(csv[2].substr(0, 7) == "bridge,");
    CHECK(csv[5].substr(0, 12) == "random,none,");

    // Text table mentions every method and the size grid.
    std::string table = render_report(rep, ReportFormat::TextTable);
    for (const char* needle : {"oracle", "bridge", "kd-contrast", "random", "full-rank"}) {
        CHECK(table.find(needle) != std::string::npos);
    }
}

TEST_CASE("csv omits std and positions when they do not apply") {
    ExperimentConfig cfg = small_config();
    cfg.seeds = 1;
    cfg.methods = {Method::Oracle, Method::Random};
    TransferReport rep = run_experiment(cfg);
    REQUIRE(rep.methods.size() == 2);
    CHECK_FALSE(rep.methods[0].bacc_std.has_value());
    CHECK(rep.grid.empty());  // no bridge, no size grid
    std::vector<std::string> csv = lines_of(render_report(rep, ReportFormat::Csv));
    REQUIRE(csv.size() == 3);
    // method,input_modality,bacc_mean,<empty std>,f1m_mean,<empty>,f1w_mean,<empty>,0,<m>,<l>,1
    std::string row = csv[1];
    size_t commas = 0;
    for (char ch : row) commas += (ch == ',');
    CHECK(commas == 11);
    CHECK(row.find(",,") != std::string::npos);  // empty std cell present
    CHECK(row.substr(row.size() - 6) == ",0,,,1");  // params 0, no positions, 1 seed
}

TEST_CASE("failures leave a manifest before rethrowing") {
    TempDir tmp("biox_fail");
    ExperimentConfig cfg = small_config();
    cfg.dataset_file = (tmp.path / "missing.bin").string();
    cfg.out_dir = (tmp.path / "out").string();
    CHECK_THROWS_AS(run_experiment(cfg), IoError);
    fs::path manifest = fs::path(cfg.out_dir) / "failure.json";
    REQUIRE(fs::exists(manifest));
    nlohmann::json j = nlohmann::json::parse(slurp(manifest));
    CHECK(j.at("failed") == true);
    CHECK(j.at("stage") == "seed pipeline");
    CHECK(!j.at("error").get<std::string>().empty());
}

TEST_CASE("fixed position ablation emits all nine cells") {
    ExperimentConfig cfg = small_config();
    cfg.seeds = 1;
    cfg.bridge_epochs = 2;
    PositionAblation table = fixed_position_ablation(cfg);
    REQUIRE(table.cells.size() == 9);
    // Both stacks have four layers -> anchors {1, 2, 4} on each side.
    std::vector<std::pair<int64_t, int64_t>> expect = {
        {1, 1}, {1, 2}, {1, 4}, {2, 1}, {2, 2}, {2, 4}, {4, 1}, {4, 2}, {4, 4}};
    for (size_t i = 0; i < 9; ++i) {
        CHECK(table.cells[i].input_layer == expect[i].first);
        CHECK(table.cells[i].output_layer == expect[i].second);
    }
    CHECK(table.completed == 9);
    double sum = 0.0;
    for (const PositionCell& c : table.cells) {
        CHECK(c.ok);
        CHECK(c.bacc_mean >= 0.0);
        CHECK(c.bacc_mean <= 1.0);
        sum += c.bacc_mean;
    }
    CHECK(table.fixed_average_bacc == doctest::Approx(sum / 9.0).epsilon(1e-12));
    CHECK(table.selected_input_layer >= 1);
    CHECK(table.selected_input_layer <= 4);
    CHECK(table.selected_output_layer >= 1);
    CHECK(table.selected_output_layer <= 4);
    CHECK(table.selected_bacc >= 0.0);

    std::vector<std::string> csv = lines_of(render_position_ablation(table, ReportFormat::Csv));
    REQUIRE(csv.size() == 12);  // header + 9 cells + summary + selected
    CHECK(csv[0] == "m,l,status,bacc_mean,f1m_mean,f1w_mean,error");
    std::string jsonl = render_position_ablation(table, ReportFormat::JsonLines);
    for (const std::string& line : lines_of(jsonl)) {
        CHECK(nlohmann::json::parse(line).dump() == line);
    }
    CHECK(render_position_ablation(table, ReportFormat::TextTable).find("selected") !=
          std::string::npos);
}

TEST_CASE("sweeps vary exactly one knob at a time") {
    ExperimentConfig cfg = small_config();
    cfg.seeds = 1;
    cfg.bridge_epochs = 2;
    cfg.rank_grid = {2, 4};
    cfg.prototype_grid = {4, 8};
    cfg.pair_fractions = {1.0, 0.5};

    std::vector<SweepRow> ranks = rank_ablation(cfg);
    REQUIRE(ranks.size() == 2);
    CHECK(ranks[0].x == doctest::Approx(2.0));
    CHECK(ranks[1].x == doctest::Approx(4.0));
    CHECK(ranks[0].prototypes == cfg.prototypes);
    CHECK(ranks[1].prototypes == cfg.prototypes);
    CHECK(ranks[0].params < ranks[1].params);
    CHECK_FALSE(ranks[0].bacc_std.has_value());  // single seed

    std::vector<SweepRow> protos = prototype_ablation(cfg);
    REQUIRE(protos.size() == 2);
    CHECK(protos[0].rank == cfg.rank);
    CHECK(protos[1].rank == cfg.rank);
    CHECK(protos[0].params < protos[1].params);

    std::vector<SweepRow> fractions = pair_fraction_ablation(cfg);
    REQUIRE(fractions.size() == 2);
    CHECK(fractions[0].x == doctest::Approx(1.0));
    CHECK(fractions[1].x == doctest::Approx(0.5));
    CHECK(fractions[0].params == fractions[1].params);  // same bridge size
    for (const SweepRow& r : fractions) {
        CHECK(r.bacc_mean >= 0.0);
        CHECK(r.bacc_mean <= 1.0);
    }

    std::vector<std::string> csv = lines_of(render_sweep("rank", ranks, ReportFormat::Csv));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == "x,rank,prototypes,params,bacc_mean,bacc_std");
    for (const std::string& line : lines_of(render_sweep("rank", ranks, ReportFormat::JsonLines))) {
        CHECK(nlohmann::json::parse(line).dump() == line);
    }
    CHECK(render_sweep("rank", ranks, ReportFormat::TextTable).find("rank") == 0);
}

TEST_CASE("artifacts are reused and outputs stay byte-identical") {
    TempDir tmp("biox_artifacts");
    ExperimentConfig cfg = small_config();
    cfg.seeds = 1;
    cfg.methods = {Method::Bridge};
    cfg.bridge_epochs = 2;
    cfg.out_dir = (tmp.path / "out").string();

    TransferReport first = run_experiment(cfg);
    fs::path teacher = fs::path(cfg.out_dir) / "teacher_seed5.ckpt";
    fs::path positions = fs::path(cfg.out_dir) / "positions_seed5.json";
    REQUIRE(fs::exists(teacher));
    REQUIRE(fs::exists(positions));

    // Second run consumes the stored artifacts and reproduces the bytes.
    TransferReport second = run_experiment(cfg);
    CHECK(render_report(first, ReportFormat::JsonLines) ==
          render_report(second, ReportFormat::JsonLines));

    export_report(first, ReportFormat::Csv, cfg.out_dir);
    CHECK(slurp(fs::path(cfg.out_dir) / "report.csv") == render_report(first, ReportFormat::Csv));
    export_report(first, ReportFormat::JsonLines, cfg.out_dir);
    CHECK(slurp(fs::path(cfg.out_dir) / "report.jsonl") ==
          render_report(first, ReportFormat::JsonLines));

    write_run_meta(cfg.out_dir, 1.25);
    nlohmann::json meta = nlohmann::json::parse(slurp(fs::path(cfg.out_dir) / "run_meta.json"));
    CHECK(meta.contains("timestamp_utc"));
    CHECK(meta.at("wall_seconds") == doctest::Approx(1.25));
    CHECK(meta.at("workers").get<int64_t>() >= 1);
}
