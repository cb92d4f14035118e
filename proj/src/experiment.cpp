#include "biox/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "biox/checkpoint.hpp"
#include "biox/parallel.hpp"

namespace biox {

namespace {

using nlohmann::json;

// ------------------------------------------------------------ small helpers

std::string fmt_real(double v) {
    // Shortest representation that parses back to the same double.
    return json(v).dump();
}

struct Aggregate {
    double mean = 0.0;
    std::optional<double> std_dev;
};

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

// ------------------------------------------------------------ config schema

const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"dataset",
         {"file", "classes", "latent_dim", "noise_level", "samples_per_subject", "subjects", "seed",
          "split_weights", "split_mode", "pair_fraction"}},
        {"models",
         {"old_arch", "new_arch", "old_dim", "new_dim", "pretrain_epochs", "pretrain_lr",
          "pretrain_batch"}},
        {"method", {"name", "methods"}},
        {"bridge",
         {"rank", "prototypes", "epochs", "lr", "batch", "loss", "pool", "init", "align_layer",
          "rank_grid", "prototype_grid"}},
        {"kd", {"epochs", "lr", "batch"}},
        {"contrast", {"tau", "epochs", "lr", "batch"}},
        {"probe", {"l2", "folds"}},
        {"cka", {"row_cap", "objective"}},
        {"run", {"seeds", "seed", "out"}},
        {"ablation", {"pair_fractions"}},
    };
    return schema;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs an integer, got '" + value + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a nonnegative integer, got '" + value + "'");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a number, got '" + value + "'");
    }
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int64_t> out;
    for (const std::string& tok : split_ws(value)) out.push_back(parse_int(key, tok));
    if (out.empty()) throw ConfigError("config: key '" + key + "' needs at least one value");
    return out;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const std::string& tok : split_ws(value)) out.push_back(parse_real(key, tok));
    if (out.empty()) throw ConfigError("config: key '" + key + "' needs at least one value");
    return out;
}

}  // namespace

std::string arch_name(ArchId arch) {
    switch (arch) {
        case ArchId::ConvStack: return "conv";
        case ArchId::AttentionStack: return "attention";
    }
    throw std::logic_error("arch_name: unknown architecture");
}

ArchId parse_arch(const std::string& text) {
    if (text == "conv") return ArchId::ConvStack;
    if (text == "attention") return ArchId::AttentionStack;
    throw ConfigError("config: unknown architecture '" + text + "' (want conv|attention)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::Bridge: return "bridge";
        case Method::Kd: return "kd";
        case Method::KdContrast: return "kd-contrast";
        case Method::Random: return "random";
        case Method::Oracle: return "oracle";
    }
    throw std::logic_error("method_name: unknown method");
}

Method parse_method(const std::string& text) {
    if (text == "bridge") return Method::Bridge;
    if (text == "kd") return Method::Kd;
    if (text == "kd-contrast") return Method::KdContrast;
    if (text == "random") return Method::Random;
    if (text == "oracle") return Method::Oracle;
    throw ConfigError("config: unknown method '" + text +
                      "' (want bridge|kd|kd-contrast|random|oracle)");
}

ExperimentConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> raw;  // "section.key" -> value
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError("config: malformed section header at line " + std::to_string(line_no));
            }
            section = trim(t.substr(1, t.size() - 2));
            if (!config_schema().count(section)) {
                throw ConfigError("config: unknown section '" + section + "'");
            }
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected 'key = value' at line " + std::to_string(line_no));
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section.empty()) throw ConfigError("config: key '" + key + "' outside any section");
        if (key.empty() || value.empty()) {
            throw ConfigError("config: empty key or value at line " + std::to_string(line_no));
        }
        if (!config_schema().at(section).count(key)) {
            throw ConfigError("config: unknown key '" + section + "." + key + "'");
        }
        std::string full = section + "." + key;
        if (raw.count(full)) throw ConfigError("config: duplicate key '" + full + "'");
        raw[full] = value;
    }

    ExperimentConfig cfg;
    auto take = [&](const std::string& full) -> std::optional<std::string> {
        auto it = raw.find(full);
        if (it == raw.end()) return std::nullopt;
        return it->second;
    };

    if (auto v = take("dataset.file")) cfg.dataset_file = *v;
    if (auto v = take("dataset.classes")) cfg.classes = parse_int("dataset.classes", *v);
    if (auto v = take("dataset.latent_dim")) cfg.latent_dim = parse_int("dataset.latent_dim", *v);
    if (auto v = take("dataset.noise_level")) cfg.noise_level = parse_real("dataset.noise_level", *v);
    if (auto v = take("dataset.samples_per_subject")) {
        cfg.samples_per_subject = parse_int("dataset.samples_per_subject", *v);
    }
    if (auto v = take("dataset.subjects")) cfg.subjects = parse_int("dataset.subjects", *v);
    if (auto v = take("dataset.seed")) cfg.data_seed = parse_u64("dataset.seed", *v);
    if (auto v = take("dataset.split_weights")) {
        std::vector<double> w = parse_real_list("dataset.split_weights", *v);
        if (w.size() != 4) throw ConfigError("config: dataset.split_weights needs exactly 4 values");
        std::copy(w.begin(), w.end(), cfg.split_weights.begin());
    }
    if (auto v = take("dataset.split_mode")) {
        if (*v == "subject") cfg.split_mode = SplitMode::SubjectDisjoint;
        else if (*v == "sample") cfg.split_mode = SplitMode::SampleWise;
        else throw ConfigError("config: dataset.split_mode must be subject|sample");
    }
    if (auto v = take("dataset.pair_fraction")) {
        cfg.pair_fraction = parse_real("dataset.pair_fraction", *v);
    }

    if (auto v = take("models.old_arch")) cfg.old_arch = parse_arch(*v);
    if (auto v = take("models.new_arch")) cfg.new_arch = parse_arch(*v);
    if (auto v = take("models.old_dim")) cfg.old_dim = parse_int("models.old_dim", *v);
    if (auto v = take("models.new_dim")) cfg.new_dim = parse_int("models.new_dim", *v);
    if (auto v = take("models.pretrain_epochs")) {
        cfg.pretrain_epochs = parse_int("models.pretrain_epochs", *v);
    }
    if (auto v = take("models.pretrain_lr")) cfg.pretrain_lr = parse_real("models.pretrain_lr", *v);
    if (auto v = take("models.pretrain_batch")) {
        cfg.pretrain_batch = parse_int("models.pretrain_batch", *v);
    }

    auto name = take("method.name");
    auto list = take("method.methods");
    if (name && list) throw ConfigError("config: set method.name or method.methods, not both");
    if (name) cfg.methods = {parse_method(*name)};
    if (list) {
        cfg.methods.clear();
        for (const std::string& tok : split_ws(*list)) cfg.methods.push_back(parse_method(tok));
        if (cfg.methods.empty()) throw ConfigError("config: method.methods needs at least one method");
    }

    if (auto v = take("bridge.rank")) cfg.rank = parse_int("bridge.rank", *v);
    if (auto v = take("bridge.prototypes")) cfg.prototypes = parse_int("bridge.prototypes", *v);
    if (auto v = take("bridge.epochs")) cfg.bridge_epochs = parse_int("bridge.epochs", *v);
    if (auto v = take("bridge.lr")) cfg.bridge_lr = parse_real("bridge.lr", *v);
    if (auto v = take("bridge.batch")) cfg.bridge_batch = parse_int("bridge.batch", *v);
    if (auto v = take("bridge.loss")) {
        if (*v == "cosine") cfg.bridge_loss = AlignKind::Cosine;
        else if (*v == "mae") cfg.bridge_loss = AlignKind::Mae;
        else if (*v == "pooled-cosine") cfg.bridge_loss = AlignKind::PooledCosine;
        else throw ConfigError("config: bridge.loss must be cosine|mae|pooled-cosine");
    }
    if (auto v = take("bridge.pool")) {
        if (*v == "mean") cfg.bridge_pool = BridgePool::Mean;
        else if (*v == "max") cfg.bridge_pool = BridgePool::Max;
        else throw ConfigError("config: bridge.pool must be mean|max");
    }
    if (auto v = take("bridge.init")) {
        if (*v == "reference") cfg.bridge_init = BridgeInit::FromReference;
        else if (*v == "random") cfg.bridge_init = BridgeInit::Random;
        else throw ConfigError("config: bridge.init must be reference|random");
    }
    if (auto v = take("bridge.align_layer")) cfg.align_layer = parse_int("bridge.align_layer", *v);
    if (auto v = take("bridge.rank_grid")) cfg.rank_grid = parse_int_list("bridge.rank_grid", *v);
    if (auto v = take("bridge.prototype_grid")) {
        cfg.prototype_grid = parse_int_list("bridge.prototype_grid", *v);
    }

    if (auto v = take("kd.epochs")) cfg.kd_epochs = parse_int("kd.epochs", *v);
    if (auto v = take("kd.lr")) cfg.kd_lr = parse_real("kd.lr", *v);
    if (auto v = take("kd.batch")) cfg.kd_batch = parse_int("kd.batch", *v);

    if (auto v = take("contrast.tau")) cfg.contrast_tau = parse_real("contrast.tau", *v);
    if (auto v = take("contrast.epochs")) cfg.contrast_epochs = parse_int("contrast.epochs", *v);
    if (auto v = take("contrast.lr")) cfg.contrast_lr = parse_real("contrast.lr", *v);
    if (auto v = take("contrast.batch")) cfg.contrast_batch = parse_int("contrast.batch", *v);

    if (auto v = take("probe.l2")) cfg.probe_l2 = parse_real("probe.l2", *v);
    if (auto v = take("probe.folds")) cfg.probe_folds = parse_int("probe.folds", *v);

    if (auto v = take("cka.row_cap")) cfg.cka_row_cap = parse_int("cka.row_cap", *v);
    if (auto v = take("cka.objective")) {
        if (*v == "maximize") cfg.cka_objective = SimilarityObjective::Maximize;
        else if (*v == "minimize") cfg.cka_objective = SimilarityObjective::Minimize;
        else throw ConfigError("config: cka.objective must be maximize|minimize");
    }

    if (auto v = take("run.seeds")) cfg.seeds = parse_int("run.seeds", *v);
    if (auto v = take("run.seed")) cfg.base_seed = parse_u64("run.seed", *v);
    if (auto v = take("run.out")) cfg.out_dir = *v;

    if (auto v = take("ablation.pair_fractions")) {
        cfg.pair_fractions = parse_real_list("ablation.pair_fractions", *v);
    }

    // Cross-field validation.
    if (cfg.classes < 2) throw ConfigError("config: dataset.classes must be >= 2");
    if (cfg.latent_dim < 1) throw ConfigError("config: dataset.latent_dim must be >= 1");
    if (cfg.noise_level < 0) throw ConfigError("config: dataset.noise_level must be >= 0");
    if (cfg.samples_per_subject < 1 || cfg.subjects < 1) {
        throw ConfigError("config: dataset sizes must be positive");
    }
    if (!(cfg.pair_fraction > 0.0) || cfg.pair_fraction > 1.0) {
        throw ConfigError("config: dataset.pair_fraction must be in (0, 1]");
    }
    if (cfg.old_dim < 1 || cfg.new_dim < 1) throw ConfigError("config: model dims must be positive");
    if (cfg.pretrain_epochs < 0 || cfg.bridge_epochs < 0 || cfg.kd_epochs < 0 ||
        cfg.contrast_epochs < 0) {
        throw ConfigError("config: epoch counts must be >= 0");
    }
    if (cfg.pretrain_batch < 1 || cfg.bridge_batch < 1 || cfg.kd_batch < 1 || cfg.contrast_batch < 1) {
        throw ConfigError("config: batch sizes must be positive");
    }
    if (cfg.rank < 1 || cfg.prototypes < 1) throw ConfigError("config: bridge sizes must be positive");
    for (int64_t r : cfg.rank_grid) {
        if (r < 1) throw ConfigError("config: bridge.rank_grid values must be positive");
    }
    for (int64_t p : cfg.prototype_grid) {
        if (p < 1) throw ConfigError("config: bridge.prototype_grid values must be positive");
    }
    if (!(cfg.contrast_tau > 0.0)) throw ConfigError("config: contrast.tau must be positive");
    if (cfg.probe_folds < 2) throw ConfigError("config: probe.folds must be >= 2");
    if (cfg.cka_row_cap < 2) throw ConfigError("config: cka.row_cap must be >= 2");
    if (cfg.seeds < 1) throw ConfigError("config: run.seeds must be >= 1");
    for (double f : cfg.pair_fractions) {
        if (!(f > 0.0) || f > 1.0) {
            throw ConfigError("config: ablation.pair_fractions values must be in (0, 1]");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "[dataset]\n";
    if (!cfg.dataset_file.empty()) os << "file = " << cfg.dataset_file << "\n";
    os << "classes = " << cfg.classes << "\n";
    os << "latent_dim = " << cfg.latent_dim << "\n";
    os << "noise_level = " << fmt_real(cfg.noise_level) << "\n";
    os << "samples_per_subject = " << cfg.samples_per_subject << "\n";
    os << "subjects = " << cfg.subjects << "\n";
    os << "seed = " << cfg.data_seed << "\n";
    os << "split_weights =";
    for (double w : cfg.split_weights) os << " " << fmt_real(w);
    os << "\n";
    os << "split_mode = " << (cfg.split_mode == SplitMode::SubjectDisjoint ? "subject" : "sample") << "\n";
    os << "pair_fraction = " << fmt_real(cfg.pair_fraction) << "\n";
    os << "[models]\n";
    os << "old_arch = " << arch_name(cfg.old_arch) << "\n";
    os << "new_arch = " << arch_name(cfg.new_arch) << "\n";
    os << "old_dim = " << cfg.old_dim << "\n";
    os << "new_dim = " << cfg.new_dim << "\n";
    os << "pretrain_epochs = " << cfg.pretrain_epochs << "\n";
    os << "pretrain_lr = " << fmt_real(cfg.pretrain_lr) << "\n";
    os << "pretrain_batch = " << cfg.pretrain_batch << "\n";
    os << "[method]\n";
    os << "methods =";
    for (Method m : cfg.methods) os << " " << method_name(m);
    os << "\n";
    os << "[bridge]\n";
    os << "rank = " << cfg.rank << "\n";
    os << "prototypes = " << cfg.prototypes << "\n";
    os << "epochs = " << cfg.bridge_epochs << "\n";
    os << "lr = " << fmt_real(cfg.bridge_lr) << "\n";
    os << "batch = " << cfg.bridge_batch << "\n";
    os << "loss = "
       << (cfg.bridge_loss == AlignKind::Cosine
               ? "cosine"
               : (cfg.bridge_loss == AlignKind::Mae ? "mae" : "pooled-cosine"))
       << "\n";
    os << "pool = " << (cfg.bridge_pool == BridgePool::Mean ? "mean" : "max") << "\n";
    os << "init = " << (cfg.bridge_init == BridgeInit::FromReference ? "reference" : "random") << "\n";
    os << "align_layer = " << cfg.align_layer << "\n";
    os << "rank_grid =";
    for (int64_t r : cfg.rank_grid) os << " " << r;
    os << "\n";
    os << "prototype_grid =";
    for (int64_t p : cfg.prototype_grid) os << " " << p;
    os << "\n";
    os << "[kd]\n";
    os << "epochs = " << cfg.kd_epochs << "\n";
    os << "lr = " << fmt_real(cfg.kd_lr) << "\n";
    os << "batch = " << cfg.kd_batch << "\n";
    os << "[contrast]\n";
    os << "tau = " << fmt_real(cfg.contrast_tau) << "\n";
    os << "epochs = " << cfg.contrast_epochs << "\n";
    os << "lr = " << fmt_real(cfg.contrast_lr) << "\n";
    os << "batch = " << cfg.contrast_batch << "\n";
    os << "[probe]\n";
    os << "l2 = " << fmt_real(cfg.probe_l2) << "\n";
    os << "folds = " << cfg.probe_folds << "\n";
    os << "[cka]\n";
    os << "row_cap = " << cfg.cka_row_cap << "\n";
    os << "objective = "
       << (cfg.cka_objective == SimilarityObjective::Maximize ? "maximize" : "minimize") << "\n";
    // The output directory is deliberately omitted: it cannot affect results,
    // so reports stay byte-identical wherever the artifacts land.
    os << "[run]\n";
    os << "seeds = " << cfg.seeds << "\n";
    os << "seed = " << cfg.base_seed << "\n";
    os << "[ablation]\n";
    os << "pair_fractions =";
    for (double f : cfg.pair_fractions) os << " " << fmt_real(f);
    os << "\n";
    return os.str();
}

// ------------------------------------------------------------ seed pipeline

namespace {

std::vector<LayerSpec> arch_specs(ArchId arch, int64_t dim) {
    return arch == ArchId::ConvStack ? conv_stack_specs(dim) : attention_stack_specs(dim);
}

struct SeedContext {
    std::unique_ptr<PairedDataset> data;
    DatasetSplits splits;
    std::optional<EncoderModel> teacher;
    std::optional<TaskHead> head;
    std::optional<EncoderModel> new_enc;
    PositionSelection positions;
    bool has_positions = false;
    std::vector<Tensor> pair_a, pair_b;
    EvalSet val;
    std::vector<Tensor> eval_new, eval_old;
    std::vector<int64_t> y_eval;
    uint64_t rs = 0;
};

PairedDataset build_dataset(const ExperimentConfig& cfg, uint64_t rs) {
    if (!cfg.dataset_file.empty()) {
        try {
            return load_dataset(cfg.dataset_file);
        } catch (const std::runtime_error& e) {
            throw IoError(e.what());
        }
    }
    LatentTaskSpec task;
    if (cfg.classes == 3 && cfg.latent_dim == 6) {
        task = make_default_task();
        task.noise_level = cfg.noise_level;
        task.samples_per_subject = cfg.samples_per_subject;
        task.subject_count = cfg.subjects;
    } else {
        task = make_latent_task(cfg.classes, cfg.latent_dim, cfg.noise_level, cfg.samples_per_subject,
                                cfg.subjects);
    }
    ModalitySpec mod_a, mod_b;
    if (cfg.latent_dim == 6) {
        mod_a = default_old_modality();
        mod_b = default_new_modality();
    } else {
        mod_a = make_mixture_modality("ecg", 3, 48, cfg.latent_dim, 1.0, 6.0, 0.05, 0xA5EED001ULL);
        mod_b = make_mixture_modality("emg", 4, 36, cfg.latent_dim, 2.0, 9.0, 0.05, 0xA5EED002ULL);
    }
    return generate_paired_dataset(task, mod_a, mod_b, fork_seed(cfg.data_seed, rs));
}

std::string seed_tag(uint64_t rs) { return "seed" + std::to_string(rs); }

// Builds one seed's full pipeline state. When an artifact directory is given,
// the pretrained teacher and the selected positions are reused from disk when
// present and saved after computing otherwise.
std::unique_ptr<SeedContext> prepare_seed(const ExperimentConfig& cfg, int64_t index,
                                          bool want_positions, const std::string& artifact_dir) {
    auto ctx = std::make_unique<SeedContext>();
    ctx->rs = cfg.base_seed + static_cast<uint64_t>(index);
    ctx->data = std::make_unique<PairedDataset>(build_dataset(cfg, ctx->rs));

    ctx->splits = split_dataset(*ctx->data, cfg.split_weights, fork_seed(ctx->rs, 31), cfg.split_mode);
    if (cfg.pair_fraction < 1.0) {
        ctx->splits = subsample_pair_fraction(ctx->splits, cfg.pair_fraction, fork_seed(ctx->rs, 32));
    }

    const ModalitySpec& ma = ctx->data->mod_a;
    const ModalitySpec& mb = ctx->data->mod_b;
    std::filesystem::path teacher_path;
    bool teacher_loaded = false;
    if (!artifact_dir.empty()) {
        teacher_path = std::filesystem::path(artifact_dir) / ("teacher_" + seed_tag(ctx->rs) + ".ckpt");
        if (std::filesystem::exists(teacher_path)) {
            ModelCheckpoint ckpt = load_model_checkpoint(teacher_path.string());
            if (!ckpt.head) throw IoError("teacher checkpoint is missing the task head");
            ctx->teacher.emplace(std::move(ckpt.model));
            ctx->head.emplace(std::move(*ckpt.head));
            if (ctx->teacher->layer_count() !=
                    static_cast<int64_t>(arch_specs(cfg.old_arch, cfg.old_dim).size()) ||
                ctx->head->class_count() != ctx->data->task.class_count) {
                throw ConfigError("teacher checkpoint does not match the configured architecture");
            }
            teacher_loaded = true;
        }
    }
    if (!teacher_loaded) {
        ctx->teacher.emplace(ma.name, Shape{ma.seq_len, ma.channels}, arch_specs(cfg.old_arch, cfg.old_dim),
                             fork_seed(ctx->rs, 11));
        ctx->head.emplace(make_task_head(cfg.old_dim, ctx->data->task.class_count, fork_seed(ctx->rs, 12)));
        PretrainOptions popts;
        popts.epochs = cfg.pretrain_epochs;
        popts.lr = cfg.pretrain_lr;
        popts.batch = cfg.pretrain_batch;
        popts.seed = fork_seed(ctx->rs, 13);
        std::vector<Tensor> xs = ctx->splits.old_split.signals_a();
        std::vector<int64_t> ys = ctx->splits.old_split.training_labels();
        pretrain_supervised(*ctx->teacher, *ctx->head, xs, ys, popts);
        if (!artifact_dir.empty()) {
            std::filesystem::create_directories(artifact_dir);
            save_model_checkpoint(teacher_path.string(), *ctx->teacher, &*ctx->head);
        }
    }

    ctx->new_enc.emplace(mb.name, Shape{mb.seq_len, mb.channels}, arch_specs(cfg.new_arch, cfg.new_dim),
                         fork_seed(ctx->rs, 14));
    ctx->new_enc->freeze();

    ctx->pair_a = ctx->splits.pair_split.signals_a();
    ctx->pair_b = ctx->splits.pair_split.signals_b();
    ctx->val.xs = ctx->splits.val_split.signals_b();
    ctx->val.labels = ctx->splits.val_split.eval_labels();
    ctx->eval_new = ctx->splits.new_split.signals_b();
    ctx->eval_old = ctx->splits.new_split.signals_a();
    ctx->y_eval = ctx->splits.new_split.eval_labels();

    if (want_positions) {
        std::filesystem::path pos_path;
        bool loaded = false;
        if (!artifact_dir.empty()) {
            pos_path = std::filesystem::path(artifact_dir) / ("positions_" + seed_tag(ctx->rs) + ".json");
            if (std::filesystem::exists(pos_path)) {
                std::ifstream in(pos_path);
                if (!in) throw IoError("cannot open " + pos_path.string());
                json j = json::parse(in, nullptr, /*allow_exceptions=*/true);
                ctx->positions.input_layer = j.at("input_layer").get<int64_t>();
                ctx->positions.output_layer = j.at("output_layer").get<int64_t>();
                ctx->positions.probe_scores = j.at("probe_scores").get<std::vector<double>>();
                ctx->positions.cka_scores = j.at("cka_scores").get<std::vector<double>>();
                ctx->positions.probe_degenerate = j.at("probe_degenerate").get<bool>();
                ctx->positions.warnings = j.at("warnings").get<std::vector<std::string>>();
                loaded = true;
            }
        }
        if (!loaded) {
            PositionSelectionOptions popts;
            popts.probe_l2 = cfg.probe_l2;
            popts.probe_folds = cfg.probe_folds;
            popts.cka_row_cap = cfg.cka_row_cap;
            popts.seed = fork_seed(ctx->rs, 15);
            popts.objective = cfg.cka_objective;
            ctx->positions = select_positions(*ctx->teacher, *ctx->head, *ctx->new_enc, ctx->pair_a,
                                              ctx->pair_b, popts);
            if (!artifact_dir.empty()) {
                json j{{"input_layer", ctx->positions.input_layer},
                       {"output_layer", ctx->positions.output_layer},
                       {"probe_scores", ctx->positions.probe_scores},
                       {"cka_scores", ctx->positions.cka_scores},
                       {"probe_degenerate", ctx->positions.probe_degenerate},
                       {"warnings", ctx->positions.warnings}};
                write_text_file(pos_path.string(), j.dump(2) + "\n");
            }
        }
        ctx->has_positions = true;
    }
    return ctx;
}

struct BridgeRun {
    MetricSet metrics;
    int64_t params = 0;
    TrainingHistory history;
};

BridgeShapeSpec bridge_spec_at(const SeedContext& ctx, const PositionSelection& pos, int64_t rank,
                               int64_t prototypes) {
    const LayerShape& in_shape =
        ctx.new_enc->layer_shapes()[static_cast<size_t>(pos.input_layer - 1)];
    const LayerShape& out_shape =
        ctx.teacher->layer_shapes()[static_cast<size_t>(pos.output_layer - 1)];
    return BridgeShapeSpec{in_shape.second, out_shape.first, out_shape.second, rank, prototypes};
}

BridgeRun train_eval_bridge(const SeedContext& ctx, const ExperimentConfig& cfg,
                            const PositionSelection& pos, int64_t rank, int64_t prototypes,
                            std::span<const Tensor> pair_a, std::span<const Tensor> pair_b) {
    BridgeShapeSpec spec = bridge_spec_at(ctx, pos, rank, prototypes);
    BridgeParams bridge = [&] {
        if (cfg.bridge_init == BridgeInit::FromReference) {
            Tensor ref = ctx.teacher->forward_prefix(stack_batch(pair_a), pos.output_layer);
            return init_bridge(spec, BridgeInit::FromReference, fork_seed(ctx.rs, 17), &ref);
        }
        return init_bridge(spec, BridgeInit::Random, fork_seed(ctx.rs, 17));
    }();

    TransferTrainOptions topts;
    topts.epochs = cfg.bridge_epochs;
    topts.batch = cfg.bridge_batch;
    topts.lr = cfg.bridge_lr;
    topts.loss_kind = cfg.bridge_loss;
    topts.pool = cfg.bridge_pool;
    topts.align_layer = cfg.align_layer;
    topts.seed = fork_seed(ctx.rs, 18);
    topts.val = &ctx.val;

    BridgeRun run;
    run.history = train_bridge(*ctx.teacher, *ctx.new_enc, *ctx.head, pair_a, pair_b, pos, bridge, topts);
    Tensor probs = bridged_predict(*ctx.teacher, *ctx.new_enc, *ctx.head, bridge, pos,
                                   stack_batch(ctx.eval_new), cfg.bridge_pool);
    run.metrics = compute_metrics(ctx.y_eval, predicted_labels(probs), ctx.data->task.class_count);
    run.params = bridge.param_count();
    return run;
}

struct SeedMethodResult {
    MetricSet metrics;
    int64_t params = 0;
    TrainingHistory history;
};

struct SeedRun {
    std::vector<SeedMethodResult> methods;  // aligned with cfg.methods
    PositionSelection positions;
    bool has_positions = false;
    int64_t class_count = 0;
    int64_t grid_in_tokens = 0;  // N_m at the selected input layer
    BridgeShapeSpec grid_spec;   // dims at the selected positions (rank/protos from cfg)
    std::string old_modality, new_modality;
};

SeedRun run_one_seed(const ExperimentConfig& cfg, int64_t index) {
    bool want_positions =
        std::count(cfg.methods.begin(), cfg.methods.end(), Method::Bridge) > 0;
    std::unique_ptr<SeedContext> ctx = prepare_seed(cfg, index, want_positions, cfg.out_dir);

    SeedRun out;
    out.class_count = ctx->data->task.class_count;
    out.old_modality = ctx->data->mod_a.name;
    out.new_modality = ctx->data->mod_b.name;
    if (want_positions) {
        out.positions = ctx->positions;
        out.has_positions = true;
        out.grid_spec = bridge_spec_at(*ctx, ctx->positions, cfg.rank, cfg.prototypes);
        out.grid_in_tokens =
            ctx->new_enc->layer_shapes()[static_cast<size_t>(ctx->positions.input_layer - 1)].first;
    }

    for (Method method : cfg.methods) {
        SeedMethodResult res;
        switch (method) {
            case Method::Oracle: {
                Tensor probs = predict(*ctx->teacher, *ctx->head, stack_batch(ctx->eval_old));
                res.metrics = compute_metrics(ctx->y_eval, predicted_labels(probs),
                                              ctx->data->task.class_count);
                break;
            }
            case Method::Random: {
                std::vector<int64_t> guess =
                    random_baseline(ctx->data->task.class_count,
                                    static_cast<int64_t>(ctx->y_eval.size()), fork_seed(ctx->rs, 16));
                res.metrics = compute_metrics(ctx->y_eval, guess, ctx->data->task.class_count);
                break;
            }
            case Method::Bridge: {
                BridgeRun run = train_eval_bridge(*ctx, cfg, ctx->positions, cfg.rank, cfg.prototypes,
                                                  ctx->pair_a, ctx->pair_b);
                res.metrics = run.metrics;
                res.params = run.params;
                res.history = std::move(run.history);
                break;
            }
            case Method::Kd: {
                KdOptions kopts;
                kopts.epochs = cfg.kd_epochs;
                kopts.batch = cfg.kd_batch;
                kopts.lr = cfg.kd_lr;
                kopts.seed = fork_seed(ctx->rs, 19);
                kopts.val = &ctx->val;
                StudentResult kd = train_kd(*ctx->new_enc, *ctx->teacher, *ctx->head, ctx->pair_a,
                                            ctx->pair_b, kopts);
                Tensor probs = predict(kd.student, kd.head, stack_batch(ctx->eval_new));
                res.metrics = compute_metrics(ctx->y_eval, predicted_labels(probs),
                                              ctx->data->task.class_count);
                res.params = kd.trainable_params;
                res.history = std::move(kd.history);
                break;
            }
            case Method::KdContrast: {
                KdContrastOptions copts;
                copts.tau = cfg.contrast_tau;
                copts.epochs = cfg.contrast_epochs;
                copts.batch = cfg.contrast_batch;
                copts.lr = cfg.contrast_lr;
                copts.seed = fork_seed(ctx->rs, 20);
                copts.val = &ctx->val;
                copts.old_head = &*ctx->head;
                ContrastResult cr = train_kd_contrast(*ctx->new_enc, *ctx->teacher, ctx->pair_a,
                                                      ctx->pair_b, copts);
                Tensor probs = kd_contrast_predict(cr.student, cr.proj_w->value, cr.proj_b->value,
                                                   *ctx->head, stack_batch(ctx->eval_new));
                res.metrics = compute_metrics(ctx->y_eval, predicted_labels(probs),
                                              ctx->data->task.class_count);
                res.params = cr.trainable_params;
                res.history = std::move(cr.history);
                break;
            }
        }
        out.methods.push_back(std::move(res));
    }
    return out;
}

void write_failure_manifest(const std::string& out_dir, const std::string& stage,
                            const std::string& message) {
    if (out_dir.empty()) return;
    try {
        std::filesystem::create_directories(out_dir);
        json j{{"failed", true}, {"stage", stage}, {"error", message}};
        write_text_file((std::filesystem::path(out_dir) / "failure.json").string(), j.dump(2) + "\n");
    } catch (...) {
        // Failure reporting must not mask the original error.
    }
}

MethodReport aggregate_method(Method method, const std::vector<SeedRun>& runs, size_t method_index) {
    MethodReport rep;
    rep.method = method_name(method);
    switch (method) {
        case Method::Oracle: rep.input_modality = runs.front().old_modality; break;
        case Method::Random: rep.input_modality = "none"; break;
        default: rep.input_modality = runs.front().new_modality; break;
    }
    rep.seeds = static_cast<int64_t>(runs.size());

    std::vector<double> bacc, f1m, f1w;
    for (const SeedRun& run : runs) {
        const SeedMethodResult& res = run.methods[method_index];
        bacc.push_back(res.metrics.balanced_accuracy);
        f1m.push_back(res.metrics.f1_macro);
        f1w.push_back(res.metrics.f1_weighted);
        rep.per_seed.push_back(res.metrics);
        rep.loss_history.push_back(res.history.loss);
        rep.val_history.push_back(res.history.val_metric);
        rep.params = std::max(rep.params, res.params);
        if (method == Method::Bridge && run.has_positions) {
            rep.probe_scores.push_back(run.positions.probe_scores);
            rep.cka_scores.push_back(run.positions.cka_scores);
            for (const std::string& w : run.positions.warnings) rep.warnings.push_back(w);
        }
    }
    Aggregate ab = aggregate(bacc), am = aggregate(f1m), aw = aggregate(f1w);
    rep.bacc_mean = ab.mean;
    rep.f1m_mean = am.mean;
    rep.f1w_mean = aw.mean;
    rep.bacc_std = ab.std_dev;
    rep.f1m_std = am.std_dev;
    rep.f1w_std = aw.std_dev;
    if (method == Method::Bridge && runs.front().has_positions) {
        rep.input_layer = runs.front().positions.input_layer;
        rep.output_layer = runs.front().positions.output_layer;
    }
    return rep;
}

}  // namespace

TransferReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw ConfigError("config: no methods configured");

    std::vector<SeedRun> runs(static_cast<size_t>(cfg.seeds));
    try {
        parallel_for(cfg.seeds, [&](int64_t i) { runs[static_cast<size_t>(i)] = run_one_seed(cfg, i); });
    } catch (const std::exception& e) {
        write_failure_manifest(cfg.out_dir, "seed pipeline", e.what());
        throw;
    }

    TransferReport report;
    report.class_count = runs.front().class_count;
    report.config_text = config_echo(cfg);
    for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        report.methods.push_back(aggregate_method(cfg.methods[mi], runs, mi));
    }
    if (runs.front().has_positions) {
        const SeedRun& first = runs.front();
        report.full_rank_params = full_rank_param_count(first.grid_in_tokens, first.grid_spec);
        for (int64_t r : cfg.rank_grid) {
            for (int64_t p : cfg.prototype_grid) {
                BridgeShapeSpec spec = first.grid_spec;
                spec.rank = r;
                spec.prototypes = p;
                GridCell cell;
                cell.rank = r;
                cell.prototypes = p;
                cell.params = bridge_param_count(spec);
                cell.percent_of_full = 100.0 * static_cast<double>(cell.params) /
                                       static_cast<double>(report.full_rank_params);
                report.grid.push_back(cell);
            }
        }
    }
    return report;
}

std::vector<SeedArtifacts> prepare_artifacts(const ExperimentConfig& cfg, bool want_positions) {
    std::vector<SeedArtifacts> out(static_cast<size_t>(cfg.seeds));
    try {
        parallel_for(cfg.seeds, [&](int64_t i) {
            std::unique_ptr<SeedContext> ctx = prepare_seed(cfg, i, want_positions, cfg.out_dir);
            SeedArtifacts& art = out[static_cast<size_t>(i)];
            art.run_seed = ctx->rs;
            if (!cfg.out_dir.empty()) {
                std::filesystem::path dir(cfg.out_dir);
                art.teacher_path = (dir / ("teacher_" + seed_tag(ctx->rs) + ".ckpt")).string();
                if (want_positions) {
                    art.positions_path = (dir / ("positions_" + seed_tag(ctx->rs) + ".json")).string();
                }
            }
            if (want_positions) {
                art.has_positions = true;
                art.positions = ctx->positions;
            }
        });
    } catch (const std::exception& e) {
        write_failure_manifest(cfg.out_dir, "seed pipeline", e.what());
        throw;
    }
    return out;
}

PositionAblation fixed_position_ablation(const ExperimentConfig& cfg) {
    int64_t old_layers = static_cast<int64_t>(arch_specs(cfg.old_arch, cfg.old_dim).size());
    int64_t new_layers = static_cast<int64_t>(arch_specs(cfg.new_arch, cfg.new_dim).size());
    if (old_layers < 3 || new_layers < 3) {
        throw ConfigError("position ablation: both models need at least 3 layers");
    }

    std::vector<std::unique_ptr<SeedContext>> contexts(static_cast<size_t>(cfg.seeds));
    try {
        parallel_for(cfg.seeds, [&](int64_t i) {
            contexts[static_cast<size_t>(i)] = prepare_seed(cfg, i, /*want_positions=*/true, cfg.out_dir);
        });
    } catch (const std::exception& e) {
        write_failure_manifest(cfg.out_dir, "seed pipeline", e.what());
        throw;
    }

    auto anchors = [](int64_t count) {
        return std::array<int64_t, 3>{1, (count + 1) / 2, count};
    };
    std::array<int64_t, 3> ms = anchors(new_layers);
    std::array<int64_t, 3> ls = anchors(old_layers);

    // fixed == nullptr trains each seed's bridge at that seed's own selected
    // positions; otherwise every seed uses the given fixed cell.
    auto bacc_at = [&](const PositionSelection* fixed, double* f1m, double* f1w) {
        std::vector<double> bs, f1ms, f1ws;
        for (const auto& ctx : contexts) {
            const PositionSelection& pos = fixed ? *fixed : ctx->positions;
            BridgeRun run =
                train_eval_bridge(*ctx, cfg, pos, cfg.rank, cfg.prototypes, ctx->pair_a, ctx->pair_b);
            bs.push_back(run.metrics.balanced_accuracy);
            f1ms.push_back(run.metrics.f1_macro);
            f1ws.push_back(run.metrics.f1_weighted);
        }
        *f1m = aggregate(f1ms).mean;
        *f1w = aggregate(f1ws).mean;
        return aggregate(bs).mean;
    };

    PositionAblation table;
    double sum = 0.0;
    for (int64_t m : ms) {
        for (int64_t l : ls) {
            PositionCell cell;
            cell.input_layer = m;
            cell.output_layer = l;
            PositionSelection pos;
            pos.input_layer = m;
            pos.output_layer = l;
            try {
                cell.bacc_mean = bacc_at(&pos, &cell.f1m_mean, &cell.f1w_mean);
                cell.ok = true;
                sum += cell.bacc_mean;
                table.completed += 1;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            table.cells.push_back(std::move(cell));
        }
    }
    if (table.completed > 0) table.fixed_average_bacc = sum / static_cast<double>(table.completed);

    double sf1m = 0.0, sf1w = 0.0;
    table.selected_bacc = bacc_at(nullptr, &sf1m, &sf1w);
    table.selected_input_layer = contexts.front()->positions.input_layer;
    table.selected_output_layer = contexts.front()->positions.output_layer;
    return table;
}

namespace {

std::vector<SweepRow> sweep_over(const ExperimentConfig& cfg,
                                 const std::vector<std::pair<double, std::array<int64_t, 2>>>& points,
                                 bool sweep_fraction) {
    std::vector<std::unique_ptr<SeedContext>> contexts(static_cast<size_t>(cfg.seeds));
    try {
        parallel_for(cfg.seeds, [&](int64_t i) {
            contexts[static_cast<size_t>(i)] = prepare_seed(cfg, i, /*want_positions=*/true, cfg.out_dir);
        });
    } catch (const std::exception& e) {
        write_failure_manifest(cfg.out_dir, "seed pipeline", e.what());
        throw;
    }

    std::vector<SweepRow> rows;
    for (const auto& [x, rp] : points) {
        SweepRow row;
        row.x = x;
        row.rank = rp[0];
        row.prototypes = rp[1];
        std::vector<double> bs;
        for (const auto& ctx : contexts) {
            std::vector<Tensor> pa = ctx->pair_a, pb = ctx->pair_b;
            if (sweep_fraction) {
                DatasetSplits reduced = subsample_pair_fraction(ctx->splits, x, fork_seed(ctx->rs, 33));
                pa = reduced.pair_split.signals_a();
                pb = reduced.pair_split.signals_b();
            }
            BridgeRun run = train_eval_bridge(*ctx, cfg, ctx->positions, row.rank, row.prototypes, pa, pb);
            bs.push_back(run.metrics.balanced_accuracy);
            row.params = std::max(row.params, run.params);
        }
        Aggregate agg = aggregate(bs);
        row.bacc_mean = agg.mean;
        row.bacc_std = agg.std_dev;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<SweepRow> rank_ablation(const ExperimentConfig& cfg) {
    std::vector<std::pair<double, std::array<int64_t, 2>>> points;
    for (int64_t r : cfg.rank_grid) {
        points.push_back({static_cast<double>(r), {r, cfg.prototypes}});
    }
    return sweep_over(cfg, points, /*sweep_fraction=*/false);
}

std::vector<SweepRow> prototype_ablation(const ExperimentConfig& cfg) {
    std::vector<std::pair<double, std::array<int64_t, 2>>> points;
    for (int64_t p : cfg.prototype_grid) {
        points.push_back({static_cast<double>(p), {cfg.rank, p}});
    }
    return sweep_over(cfg, points, /*sweep_fraction=*/false);
}

std::vector<SweepRow> pair_fraction_ablation(const ExperimentConfig& cfg) {
    std::vector<std::pair<double, std::array<int64_t, 2>>> points;
    for (double f : cfg.pair_fractions) {
        points.push_back({f, {cfg.rank, cfg.prototypes}});
    }
    return sweep_over(cfg, points, /*sweep_fraction=*/true);
}

// ------------------------------------------------------------ rendering

ReportFormat parse_report_format(const std::string& text) {
    if (text == "json-lines" || text == "jsonl") return ReportFormat::JsonLines;
    if (text == "csv") return ReportFormat::Csv;
    if (text == "text-table" || text == "text") return ReportFormat::TextTable;
    throw ConfigError("config: unknown report format '" + text + "' (want json-lines|csv|text-table)");
}

namespace {

json metrics_json(const MetricSet& m) {
    return json{{"bacc", m.balanced_accuracy}, {"f1_macro", m.f1_macro},
                {"f1_weighted", m.f1_weighted}, {"precision", m.precision},
                {"recall", m.recall},           {"f1", m.f1},
                {"confusion", m.confusion},     {"warnings", m.warnings}};
}

json method_json(const MethodReport& m) {
    json j{{"record", "method"},
           {"method", m.method},
           {"input_modality", m.input_modality},
           {"seeds", m.seeds},
           {"bacc_mean", m.bacc_mean},
           {"f1m_mean", m.f1m_mean},
           {"f1w_mean", m.f1w_mean},
           {"params", m.params},
           {"m", m.input_layer},
           {"l", m.output_layer},
           {"loss_history", m.loss_history},
           {"val_history", m.val_history},
           {"probe_scores", m.probe_scores},
           {"cka_scores", m.cka_scores},
           {"warnings", m.warnings}};
    j["bacc_std"] = m.bacc_std ? json(*m.bacc_std) : json(nullptr);
    j["f1m_std"] = m.f1m_std ? json(*m.f1m_std) : json(nullptr);
    j["f1w_std"] = m.f1w_std ? json(*m.f1w_std) : json(nullptr);
    j["per_seed"] = json::array();
    for (const MetricSet& s : m.per_seed) j["per_seed"].push_back(metrics_json(s));
    return j;
}

std::string csv_cell_real(double v) { return fmt_real(v); }

std::string csv_cell_opt(const std::optional<double>& v) { return v ? fmt_real(*v) : ""; }

std::string csv_cell_layer(int64_t v) { return v < 0 ? "" : std::to_string(v); }

std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

std::string pad(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_report(const TransferReport& report, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::JsonLines: {
            json head{{"record", "run"},
                      {"classes", report.class_count},
                      {"full_rank_params", report.full_rank_params},
                      {"config", report.config_text}};
            head["grid"] = json::array();
            for (const GridCell& c : report.grid) {
                head["grid"].push_back(json{{"rank", c.rank},
                                            {"prototypes", c.prototypes},
                                            {"params", c.params},
                                            {"percent_of_full", c.percent_of_full}});
            }
            os << head.dump() << "\n";
            for (const MethodReport& m : report.methods) os << method_json(m).dump() << "\n";
            break;
        }
        case ReportFormat::Csv: {
            os << "method,input_modality,bacc_mean,bacc_std,f1m_mean,f1m_std,f1w_mean,f1w_std,"
                  "params,m,l,seeds\n";
            for (const MethodReport& m : report.methods) {
                os << m.method << "," << m.input_modality << "," << csv_cell_real(m.bacc_mean) << ","
                   << csv_cell_opt(m.bacc_std) << "," << csv_cell_real(m.f1m_mean) << ","
                   << csv_cell_opt(m.f1m_std) << "," << csv_cell_real(m.f1w_mean) << ","
                   << csv_cell_opt(m.f1w_std) << "," << m.params << ","
                   << csv_cell_layer(m.input_layer) << "," << csv_cell_layer(m.output_layer) << ","
                   << m.seeds << "\n";
            }
            break;
        }
        case ReportFormat::TextTable: {
            os << pad("method", 14) << pad("input", 8) << pad("bacc", 18) << pad("f1-macro", 18)
               << pad("f1-weighted", 18) << pad("params", 12) << pad("m", 4) << pad("l", 4) << "seeds\n";
            for (const MethodReport& m : report.methods) {
                auto with_std = [](double mean, const std::optional<double>& sd) {
                    return sd ? fixed4(mean) + " +/- " + fixed4(*sd) : fixed4(mean);
                };
                os << pad(m.method, 14) << pad(m.input_modality, 8)
                   << pad(with_std(m.bacc_mean, m.bacc_std), 18)
                   << pad(with_std(m.f1m_mean, m.f1m_std), 18)
                   << pad(with_std(m.f1w_mean, m.f1w_std), 18) << pad(std::to_string(m.params), 12)
                   << pad(csv_cell_layer(m.input_layer), 4) << pad(csv_cell_layer(m.output_layer), 4)
                   << m.seeds << "\n";
            }
            if (!report.grid.empty()) {
                os << "\nbridge size vs full-rank projection (" << report.full_rank_params
                   << " params)\n";
                os << pad("rank", 8) << pad("prototypes", 12) << pad("params", 12) << "% of full\n";
                for (const GridCell& c : report.grid) {
                    os << pad(std::to_string(c.rank), 8) << pad(std::to_string(c.prototypes), 12)
                       << pad(std::to_string(c.params), 12) << fixed4(c.percent_of_full) << "\n";
                }
            }
            break;
        }
    }
    return os.str();
}

std::string render_position_ablation(const PositionAblation& table, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::JsonLines: {
            for (const PositionCell& c : table.cells) {
                json j{{"record", "cell"},     {"m", c.input_layer},      {"l", c.output_layer},
                       {"ok", c.ok},           {"bacc_mean", c.bacc_mean}, {"f1m_mean", c.f1m_mean},
                       {"f1w_mean", c.f1w_mean}, {"error", c.error}};
                os << j.dump() << "\n";
            }
            json s{{"record", "summary"},
                   {"completed", table.completed},
                   {"fixed_average_bacc", table.fixed_average_bacc},
                   {"selected_bacc", table.selected_bacc},
                   {"selected_m", table.selected_input_layer},
                   {"selected_l", table.selected_output_layer}};
            os << s.dump() << "\n";
            break;
        }
        case ReportFormat::Csv: {
            os << "m,l,status,bacc_mean,f1m_mean,f1w_mean,error\n";
            for (const PositionCell& c : table.cells) {
                os << c.input_layer << "," << c.output_layer << "," << (c.ok ? "ok" : "failed") << ","
                   << (c.ok ? csv_cell_real(c.bacc_mean) : "") << ","
                   << (c.ok ? csv_cell_real(c.f1m_mean) : "") << ","
                   << (c.ok ? csv_cell_real(c.f1w_mean) : "") << "," << c.error << "\n";
            }
            os << "summary,,," << csv_cell_real(table.fixed_average_bacc) << ",,,\n";
            os << "selected," << table.selected_input_layer << "," << table.selected_output_layer << ","
               << csv_cell_real(table.selected_bacc) << ",,,\n";
            break;
        }
        case ReportFormat::TextTable: {
            os << pad("m", 4) << pad("l", 4) << pad("status", 9) << pad("bacc", 9) << pad("f1-macro", 10)
               << "f1-weighted\n";
            for (const PositionCell& c : table.cells) {
                os << pad(std::to_string(c.input_layer), 4) << pad(std::to_string(c.output_layer), 4)
                   << pad(c.ok ? "ok" : "failed", 9) << pad(c.ok ? fixed4(c.bacc_mean) : "-", 9)
                   << pad(c.ok ? fixed4(c.f1m_mean) : "-", 10) << (c.ok ? fixed4(c.f1w_mean) : "-");
                if (!c.ok) os << "  " << c.error;
                os << "\n";
            }
            os << "fixed average bacc over " << table.completed
               << " cells: " << fixed4(table.fixed_average_bacc) << "\n";
            os << "selected (m=" << table.selected_input_layer << ", l=" << table.selected_output_layer
               << ") bacc: " << fixed4(table.selected_bacc) << "\n";
            break;
        }
    }
    return os.str();
}

std::string render_sweep(const std::string& name, const std::vector<SweepRow>& rows,
                         ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::JsonLines: {
            for (const SweepRow& r : rows) {
                json j{{"record", name},   {"x", r.x},
                       {"rank", r.rank},   {"prototypes", r.prototypes},
                       {"params", r.params}, {"bacc_mean", r.bacc_mean}};
                j["bacc_std"] = r.bacc_std ? json(*r.bacc_std) : json(nullptr);
                os << j.dump() << "\n";
            }
            break;
        }
        case ReportFormat::Csv: {
            os << "x,rank,prototypes,params,bacc_mean,bacc_std\n";
            for (const SweepRow& r : rows) {
                os << csv_cell_real(r.x) << "," << r.rank << "," << r.prototypes << "," << r.params
                   << "," << csv_cell_real(r.bacc_mean) << "," << csv_cell_opt(r.bacc_std) << "\n";
            }
            break;
        }
        case ReportFormat::TextTable: {
            os << name << "\n";
            os << pad("x", 10) << pad("rank", 6) << pad("protos", 8) << pad("params", 12) << "bacc\n";
            for (const SweepRow& r : rows) {
                std::string bacc = fixed4(r.bacc_mean);
                if (r.bacc_std) bacc += " +/- " + fixed4(*r.bacc_std);
                os << pad(fixed4(r.x), 10) << pad(std::to_string(r.rank), 6)
                   << pad(std::to_string(r.prototypes), 8) << pad(std::to_string(r.params), 12) << bacc
                   << "\n";
            }
            break;
        }
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

void export_report(const TransferReport& report, ReportFormat format, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    std::string ext = format == ReportFormat::JsonLines ? "jsonl"
                      : format == ReportFormat::Csv     ? "csv"
                                                        : "txt";
    write_text_file((std::filesystem::path(out_dir) / ("report." + ext)).string(),
                    render_report(report, format));
}

namespace {

std::optional<double> opt_real(const json& j, const char* key) {
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

MetricSet metrics_from_json(const json& j) {
    MetricSet m;
    m.balanced_accuracy = j.at("bacc").get<double>();
    m.f1_macro = j.at("f1_macro").get<double>();
    m.f1_weighted = j.at("f1_weighted").get<double>();
    m.precision = j.at("precision").get<std::vector<double>>();
    m.recall = j.at("recall").get<std::vector<double>>();
    m.f1 = j.at("f1").get<std::vector<double>>();
    m.confusion = j.at("confusion").get<std::vector<std::vector<int64_t>>>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    return m;
}

}  // namespace

TransferReport load_report_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report: " + path);
    TransferReport report;
    std::string line;
    bool saw_run = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("report: bad json at line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            std::string record = j.at("record").get<std::string>();
            if (record == "run") {
                saw_run = true;
                report.class_count = j.at("classes").get<int64_t>();
                report.full_rank_params = j.at("full_rank_params").get<int64_t>();
                report.config_text = j.at("config").get<std::string>();
                for (const json& c : j.at("grid")) {
                    GridCell cell;
                    cell.rank = c.at("rank").get<int64_t>();
                    cell.prototypes = c.at("prototypes").get<int64_t>();
                    cell.params = c.at("params").get<int64_t>();
                    cell.percent_of_full = c.at("percent_of_full").get<double>();
                    report.grid.push_back(cell);
                }
            } else if (record == "method") {
                MethodReport m;
                m.method = j.at("method").get<std::string>();
                m.input_modality = j.at("input_modality").get<std::string>();
                m.seeds = j.at("seeds").get<int64_t>();
                m.bacc_mean = j.at("bacc_mean").get<double>();
                m.f1m_mean = j.at("f1m_mean").get<double>();
                m.f1w_mean = j.at("f1w_mean").get<double>();
                m.bacc_std = opt_real(j, "bacc_std");
                m.f1m_std = opt_real(j, "f1m_std");
                m.f1w_std = opt_real(j, "f1w_std");
                m.params = j.at("params").get<int64_t>();
                m.input_layer = j.at("m").get<int64_t>();
                m.output_layer = j.at("l").get<int64_t>();
                m.loss_history = j.at("loss_history").get<std::vector<std::vector<double>>>();
                m.val_history = j.at("val_history").get<std::vector<std::vector<double>>>();
                m.probe_scores = j.at("probe_scores").get<std::vector<std::vector<double>>>();
                m.cka_scores = j.at("cka_scores").get<std::vector<std::vector<double>>>();
                m.warnings = j.at("warnings").get<std::vector<std::string>>();
                for (const json& s : j.at("per_seed")) m.per_seed.push_back(metrics_from_json(s));
                report.methods.push_back(std::move(m));
            } else {
                throw IoError("report: unknown record type '" + record + "'");
            }
        } catch (const json::exception& e) {
            throw IoError("report: line " + std::to_string(line_no) + " is missing fields: " + e.what());
        }
    }
    if (!saw_run) throw IoError("report: no run record in " + path);
    return report;
}

void write_run_meta(const std::string& out_dir, double wall_seconds) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json j{{"timestamp_utc", stamp}, {"wall_seconds", wall_seconds}, {"workers", worker_count()}};
    write_text_file((std::filesystem::path(out_dir) / "run_meta.json").string(), j.dump(2) + "\n");
}

}  // namespace biox
