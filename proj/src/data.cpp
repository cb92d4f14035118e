#include "biox/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <utility>

#include "biox/parallel.hpp"
#include "biox/serialize.hpp"

namespace biox {

namespace {

void validate_task(const LatentTaskSpec& task) {
    if (task.class_count < 2) throw std::invalid_argument("task: class count must be at least 2");
    if (task.latent_dim < 1) throw std::invalid_argument("task: latent dimension must be positive");
    if (!(task.noise_level >= 0.0)) throw std::invalid_argument("task: noise level must be >= 0");
    if (task.samples_per_subject < 1) throw std::invalid_argument("task: samples per subject must be positive");
    if (task.subject_count < 1) throw std::invalid_argument("task: subject count must be positive");
    if (static_cast<int64_t>(task.class_means.size()) != task.class_count ||
        static_cast<int64_t>(task.class_covs.size()) != task.class_count) {
        throw std::invalid_argument("task: need one mean and one covariance per class");
    }
    for (int64_t c = 0; c < task.class_count; ++c) {
        const Tensor& mean = task.class_means[static_cast<size_t>(c)];
        const Tensor& cov = task.class_covs[static_cast<size_t>(c)];
        if (mean.shape() != Shape{task.latent_dim}) {
            throw ShapeError("task: class mean has wrong shape");
        }
        if (cov.shape() != Shape{task.latent_dim, task.latent_dim}) {
            throw ShapeError("task: class covariance has wrong shape");
        }
    }
}

void validate_modality(const ModalitySpec& mod, int64_t latent_dim) {
    if (mod.channels < 1) throw std::invalid_argument("modality: channel count must be positive");
    if (mod.seq_len < 2) throw std::invalid_argument("modality: sequence length must be at least 2");
    if (!(mod.band_lo > 0.0) || !(mod.band_hi >= mod.band_lo)) {
        throw std::invalid_argument("modality: frequency band must satisfy 0 < lo <= hi");
    }
    if (!(mod.noise >= 0.0)) throw std::invalid_argument("modality: noise must be >= 0");
    Shape want{mod.channels, latent_dim};
    if (mod.mixing.shape() != want || mod.phases.shape() != want) {
        throw ShapeError("modality: mixing/phases must be (channels, latent_dim)");
    }
}

}  // namespace

Tensor cholesky_lower(const Tensor& cov) {
    if (cov.rank() != 2 || cov.dim(0) != cov.dim(1)) {
        throw ShapeError("cholesky: matrix must be square");
    }
    const int64_t n = cov.dim(0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            if (std::abs(cov.at({i, j}) - cov.at({j, i})) > 1e-9) {
                throw std::invalid_argument("cholesky: matrix is not symmetric");
            }
        }
    }
    Tensor l(Shape{n, n});
    for (int64_t j = 0; j < n; ++j) {
        double d = cov.at({j, j});
        for (int64_t k = 0; k < j; ++k) d -= l.at({j, k}) * l.at({j, k});
        if (!(d > 1e-12)) {
            throw std::runtime_error("degenerate covariance: matrix is not positive definite");
        }
        l.at({j, j}) = std::sqrt(d);
        for (int64_t i = j + 1; i < n; ++i) {
            double s = cov.at({i, j});
            for (int64_t k = 0; k < j; ++k) s -= l.at({i, k}) * l.at({j, k});
            l.at({i, j}) = s / l.at({j, j});
        }
    }
    return l;
}

ModalitySpec make_mixture_modality(std::string name, int64_t channels, int64_t seq_len,
                                   int64_t latent_dim, double band_lo, double band_hi, double noise,
                                   uint64_t seed) {
    if (latent_dim < 1) throw std::invalid_argument("modality: latent dimension must be positive");
    ModalitySpec mod;
    mod.name = std::move(name);
    mod.channels = channels;
    mod.seq_len = seq_len;
    mod.band_lo = band_lo;
    mod.band_hi = band_hi;
    mod.noise = noise;
    Rng rng(seed);
    mod.mixing = rng.normal_tensor({channels, latent_dim}, 0.0,
                                   1.0 / std::sqrt(static_cast<double>(latent_dim)));
    mod.phases = Tensor(Shape{channels, latent_dim});
    for (int64_t i = 0; i < mod.phases.numel(); ++i) {
        mod.phases[i] = rng.uniform() * 2.0 * std::numbers::pi;
    }
    validate_modality(mod, latent_dim);
    return mod;
}

LatentTaskSpec make_default_task() {
    LatentTaskSpec task;
    task.class_count = 3;
    task.latent_dim = 6;
    task.noise_level = 0.3;
    task.samples_per_subject = 200;
    task.subject_count = 15;
    task.class_means = {
        Tensor({1.2, 0.0, 1.0, -0.5, 0.0, 0.5}),
        Tensor({-1.2, 1.2, -0.5, 1.0, 0.5, 0.0}),
        Tensor({0.0, -1.2, -0.5, -1.0, -1.0, -0.5}),
    };
    task.class_covs = {Tensor::eye(6), Tensor::eye(6), Tensor::eye(6)};
    return task;
}

LatentTaskSpec make_latent_task(int64_t classes, int64_t latent_dim, double noise_level,
                                int64_t samples_per_subject, int64_t subject_count) {
    LatentTaskSpec task;
    task.class_count = classes;
    task.latent_dim = latent_dim;
    task.noise_level = noise_level;
    task.samples_per_subject = samples_per_subject;
    task.subject_count = subject_count;
    if (classes < 2 || latent_dim < 1) {
        throw std::invalid_argument("task factory: need at least 2 classes and 1 latent dimension");
    }
    for (int64_t c = 0; c < classes; ++c) {
        Rng rng(fork_seed(0xC1A55ULL, static_cast<uint64_t>(c)));
        Tensor mean(Shape{latent_dim});
        double norm = 0.0;
        for (int64_t k = 0; k < latent_dim; ++k) {
            mean[k] = rng.normal();
            norm += mean[k] * mean[k];
        }
        norm = std::sqrt(norm);
        for (int64_t k = 0; k < latent_dim; ++k) mean[k] *= 2.2 / norm;
        task.class_means.push_back(mean);
        task.class_covs.push_back(Tensor::eye(latent_dim));
    }
    return task;
}

ModalitySpec default_old_modality() {
    return make_mixture_modality("ecg", 3, 48, 6, 1.0, 6.0, 0.05, 0xA5EED001ULL);
}

ModalitySpec default_new_modality() {
    return make_mixture_modality("emg", 4, 36, 6, 2.0, 9.0, 0.05, 0xA5EED002ULL);
}

Tensor render_signal(const ModalitySpec& mod, const Tensor& latent, uint64_t noise_seed) {
    if (latent.rank() != 1 || latent.dim(0) != mod.mixing.dim(1)) {
        throw ShapeError("render: latent dimension does not match the modality mixing matrix");
    }
    const int64_t t_len = mod.seq_len;
    const int64_t channels = mod.channels;
    const int64_t k_dim = latent.dim(0);

    // Squash the latent so the observation is a nonlinear (but monotone) view
    // of the shared state.
    std::vector<double> gain(static_cast<size_t>(k_dim));
    std::vector<double> freq(static_cast<size_t>(k_dim));
    for (int64_t k = 0; k < k_dim; ++k) {
        gain[static_cast<size_t>(k)] = std::tanh(latent[k]);
        double frac = k_dim > 1 ? static_cast<double>(k) / static_cast<double>(k_dim - 1) : 0.0;
        freq[static_cast<size_t>(k)] = mod.band_lo + (mod.band_hi - mod.band_lo) * frac;
    }

    Tensor x(Shape{t_len, channels});
    Rng noise(noise_seed);
    for (int64_t t = 0; t < t_len; ++t) {
        double pos = (static_cast<double>(t) + 0.5) / static_cast<double>(t_len);
        for (int64_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (int64_t k = 0; k < k_dim; ++k) {
                double angle = 2.0 * std::numbers::pi * freq[static_cast<size_t>(k)] * pos +
                               mod.phases.at({c, k});
                s += mod.mixing.at({c, k}) * gain[static_cast<size_t>(k)] * std::sin(angle);
            }
            x.at({t, c}) = s + mod.noise * noise.normal();
        }
    }
    return x;
}

PairedDataset generate_paired_dataset(const LatentTaskSpec& task, const ModalitySpec& mod_a,
                                      const ModalitySpec& mod_b, uint64_t seed) {
    validate_task(task);
    validate_modality(mod_a, task.latent_dim);
    validate_modality(mod_b, task.latent_dim);

    std::vector<Tensor> chol;
    chol.reserve(static_cast<size_t>(task.class_count));
    for (const Tensor& cov : task.class_covs) chol.push_back(cholesky_lower(cov));

    PairedDataset data;
    data.task = task;
    data.mod_a = mod_a;
    data.mod_b = mod_b;
    data.seed = seed;
    const int64_t per = task.samples_per_subject;
    data.samples.resize(static_cast<size_t>(task.subject_count * per));

    parallel_for(task.subject_count, [&](int64_t s) {
        for (int64_t i = 0; i < per; ++i) {
            int64_t g = s * per + i;
            int64_t label = i % task.class_count;
            uint64_t sample_seed = fork_seed(seed, static_cast<uint64_t>(g) + 1);
            Rng rng(sample_seed);

            const Tensor& mean = task.class_means[static_cast<size_t>(label)];
            const Tensor& l = chol[static_cast<size_t>(label)];
            Tensor eps(Shape{task.latent_dim});
            for (int64_t k = 0; k < task.latent_dim; ++k) eps[k] = rng.normal();
            Tensor z(Shape{task.latent_dim});
            for (int64_t k = 0; k < task.latent_dim; ++k) {
                double spread = 0.0;
                for (int64_t j = 0; j <= k; ++j) spread += l.at({k, j}) * eps[j];
                z[k] = mean[k] + task.noise_level * spread;
            }

            PairedSample& out = data.samples[static_cast<size_t>(g)];
            out.latent = z;
            out.label = label;
            out.subject = s;
            out.sample_seed = sample_seed;
            out.x_a = render_signal(mod_a, z, fork_seed(sample_seed, 11));
            out.x_b = render_signal(mod_b, z, fork_seed(sample_seed, 12));
        }
    });
    return data;
}

bool pairing_intact(const PairedDataset& data) {
    for (const PairedSample& s : data.samples) {
        Tensor a = render_signal(data.mod_a, s.latent, fork_seed(s.sample_seed, 11));
        Tensor b = render_signal(data.mod_b, s.latent, fork_seed(s.sample_seed, 12));
        if (max_abs_diff(a, s.x_a) != 0.0 || max_abs_diff(b, s.x_b) != 0.0) return false;
    }
    return true;
}

std::string split_role_name(SplitRole role) {
    switch (role) {
        case SplitRole::Old: return "old";
        case SplitRole::New: return "new";
        case SplitRole::Val: return "val";
        case SplitRole::Pair: return "pair";
    }
    throw std::logic_error("split_role_name: unknown role");
}

SplitView::SplitView(const PairedDataset* data, SplitRole role, std::vector<int64_t> indices)
    : data_(data), role_(role), indices_(std::move(indices)) {
    for (int64_t idx : indices_) {
        if (idx < 0 || idx >= static_cast<int64_t>(data_->samples.size())) {
            throw std::out_of_range("split view: sample index out of range");
        }
    }
}

const PairedSample& SplitView::at(int64_t i) const {
    if (data_ == nullptr) throw std::logic_error("split view: empty view");
    if (i < 0 || i >= size()) throw std::out_of_range("split view: index out of range");
    return data_->samples[static_cast<size_t>(indices_[static_cast<size_t>(i)])];
}

const Tensor& SplitView::signal_a(int64_t i) const { return at(i).x_a; }
const Tensor& SplitView::signal_b(int64_t i) const { return at(i).x_b; }
int64_t SplitView::subject(int64_t i) const { return at(i).subject; }

int64_t SplitView::training_label(int64_t i) const {
    if (role_ != SplitRole::Old) {
        throw LabelAccessError("split '" + split_role_name(role_) +
                               "' does not expose labels for training");
    }
    return at(i).label;
}

int64_t SplitView::eval_label(int64_t i) const {
    if (role_ == SplitRole::Pair) {
        throw LabelAccessError("split 'pair' carries no labels at all");
    }
    return at(i).label;
}

std::vector<Tensor> SplitView::signals_a() const {
    std::vector<Tensor> out;
    out.reserve(indices_.size());
    for (int64_t i = 0; i < size(); ++i) out.push_back(signal_a(i));
    return out;
}

std::vector<Tensor> SplitView::signals_b() const {
    std::vector<Tensor> out;
    out.reserve(indices_.size());
    for (int64_t i = 0; i < size(); ++i) out.push_back(signal_b(i));
    return out;
}

std::vector<int64_t> SplitView::training_labels() const {
    std::vector<int64_t> out;
    out.reserve(indices_.size());
    for (int64_t i = 0; i < size(); ++i) out.push_back(training_label(i));
    return out;
}

std::vector<int64_t> SplitView::eval_labels() const {
    std::vector<int64_t> out;
    out.reserve(indices_.size());
    for (int64_t i = 0; i < size(); ++i) out.push_back(eval_label(i));
    return out;
}

std::array<int64_t, 4> largest_remainder_counts(const std::array<double, 4>& weights, int64_t total) {
    if (total < 0) throw std::invalid_argument("apportionment: total must be >= 0");
    std::array<int64_t, 4> counts{};
    std::array<double, 4> remainder{};
    int64_t assigned = 0;
    for (size_t i = 0; i < 4; ++i) {
        if (!(weights[i] >= 0.0)) throw std::invalid_argument("apportionment: weights must be >= 0");
        double quota = weights[i] * static_cast<double>(total);
        counts[i] = static_cast<int64_t>(std::floor(quota));
        remainder[i] = quota - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<size_t, 4> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a < b;
    });
    int64_t seats = total - assigned;
    for (size_t pos = 0; seats > 0; pos = (pos + 1) % 4, --seats) counts[order[pos]] += 1;
    return counts;
}

DatasetSplits split_dataset(const PairedDataset& data, const std::array<double, 4>& weights,
                            uint64_t seed, SplitMode mode) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("split: weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 0.02) {
        throw std::invalid_argument("split: weights must sum to 1 (within 2%)");
    }
    std::array<double, 4> norm{};
    for (size_t i = 0; i < 4; ++i) norm[i] = weights[i] / total;

    const int64_t n = static_cast<int64_t>(data.samples.size());
    std::array<std::vector<int64_t>, 4> index_lists;
    std::array<std::vector<int64_t>, 4> subject_lists;

    if (mode == SplitMode::SubjectDisjoint) {
        const int64_t subjects = data.task.subject_count;
        if (subjects < 4) throw std::runtime_error("split: need at least 4 subjects");
        std::array<int64_t, 4> counts = largest_remainder_counts(norm, subjects);
        for (size_t i = 0; i < 4; ++i) {
            if (norm[i] > 0.0 && counts[i] == 0) {
                throw std::runtime_error("split: too few subjects to populate all splits");
            }
        }
        std::vector<int64_t> ids(static_cast<size_t>(subjects));
        for (int64_t s = 0; s < subjects; ++s) ids[static_cast<size_t>(s)] = s;
        Rng rng(fork_seed(seed, 101));
        rng.shuffle(ids);

        std::vector<int> role_of(static_cast<size_t>(subjects), -1);
        int64_t cursor = 0;
        for (size_t r = 0; r < 4; ++r) {
            for (int64_t k = 0; k < counts[r]; ++k, ++cursor) {
                int64_t s = ids[static_cast<size_t>(cursor)];
                role_of[static_cast<size_t>(s)] = static_cast<int>(r);
                subject_lists[r].push_back(s);
            }
            std::sort(subject_lists[r].begin(), subject_lists[r].end());
        }
        for (int64_t i = 0; i < n; ++i) {
            int64_t s = data.samples[static_cast<size_t>(i)].subject;
            if (s < 0 || s >= subjects || role_of[static_cast<size_t>(s)] < 0) {
                throw std::logic_error("split: sample subject outside the subject universe");
            }
            index_lists[static_cast<size_t>(role_of[static_cast<size_t>(s)])].push_back(i);
        }
        // Partition sanity: subject sets disjoint and exhaustive, samples
        // distributed exactly once.
        int64_t subj_total = 0, sample_total = 0;
        for (size_t r = 0; r < 4; ++r) {
            subj_total += static_cast<int64_t>(subject_lists[r].size());
            sample_total += static_cast<int64_t>(index_lists[r].size());
        }
        if (subj_total != subjects || sample_total != n) {
            throw std::logic_error("split: partition check failed");
        }
    } else {
        if (n < 4) throw std::runtime_error("split: need at least 4 samples");
        std::array<int64_t, 4> counts = largest_remainder_counts(norm, n);
        for (size_t i = 0; i < 4; ++i) {
            if (norm[i] > 0.0 && counts[i] == 0) {
                throw std::runtime_error("split: too few samples to populate all splits");
            }
        }
        std::vector<int64_t> ids(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
        Rng rng(fork_seed(seed, 202));
        rng.shuffle(ids);
        int64_t cursor = 0;
        for (size_t r = 0; r < 4; ++r) {
            for (int64_t k = 0; k < counts[r]; ++k, ++cursor) {
                index_lists[r].push_back(ids[static_cast<size_t>(cursor)]);
            }
            std::sort(index_lists[r].begin(), index_lists[r].end());
            std::set<int64_t> subj;
            for (int64_t idx : index_lists[r]) {
                subj.insert(data.samples[static_cast<size_t>(idx)].subject);
            }
            subject_lists[r].assign(subj.begin(), subj.end());
        }
    }

    DatasetSplits out;
    out.old_split = SplitView(&data, SplitRole::Old, std::move(index_lists[0]));
    out.new_split = SplitView(&data, SplitRole::New, std::move(index_lists[1]));
    out.val_split = SplitView(&data, SplitRole::Val, std::move(index_lists[2]));
    out.pair_split = SplitView(&data, SplitRole::Pair, std::move(index_lists[3]));
    out.split_subjects = std::move(subject_lists);
    return out;
}

DatasetSplits subsample_pair_fraction(const DatasetSplits& splits, double fraction, uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("pair subsampling: fraction must be in (0, 1]");
    }
    const int64_t n = splits.pair_split.size();
    int64_t keep = static_cast<int64_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (keep <= 0) throw std::runtime_error("pair subsampling: fraction yields 0 samples");
    DatasetSplits out = splits;
    if (keep >= n) return out;

    Rng rng(fork_seed(seed, 777));
    std::vector<int64_t> picks = rng.sample_without_replacement(n, keep);
    std::sort(picks.begin(), picks.end());
    std::vector<int64_t> kept;
    kept.reserve(picks.size());
    for (int64_t p : picks) kept.push_back(splits.pair_split.indices()[static_cast<size_t>(p)]);

    out.pair_split = SplitView(splits.pair_split.data(), SplitRole::Pair, std::move(kept));
    std::set<int64_t> subj;
    for (int64_t i = 0; i < out.pair_split.size(); ++i) subj.insert(out.pair_split.subject(i));
    out.split_subjects[3].assign(subj.begin(), subj.end());
    return out;
}

namespace {

constexpr char kDatasetMagic[8] = {'B', 'I', 'O', 'X', 'D', 'A', 'T', '1'};

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_modality_header(std::ostringstream& os, const std::string& prefix, const ModalitySpec& m) {
    os << prefix << ".name=" << m.name << "\n";
    os << prefix << ".channels=" << m.channels << "\n";
    os << prefix << ".seq_len=" << m.seq_len << "\n";
    os << prefix << ".band_lo=" << format_double(m.band_lo) << "\n";
    os << prefix << ".band_hi=" << format_double(m.band_hi) << "\n";
    os << prefix << ".noise=" << format_double(m.noise) << "\n";
}

class HeaderParser {
  public:
    explicit HeaderParser(const std::string& text) : in_(text) {}

    std::string field(const std::string& key) {
        std::string line;
        if (!std::getline(in_, line)) throw std::runtime_error("dataset file: missing field " + key);
        std::string prefix = key + "=";
        if (line.rfind(prefix, 0) != 0) {
            throw std::runtime_error("dataset file: expected field " + key + ", got '" + line + "'");
        }
        return line.substr(prefix.size());
    }

    int64_t integer(const std::string& key) { return std::stoll(field(key)); }
    double real(const std::string& key) { return std::stod(field(key)); }

  private:
    std::istringstream in_;
};

Tensor tensor_from(const std::vector<double>& flat, size_t offset, Shape shape) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = flat[offset + static_cast<size_t>(i)];
    return t;
}

}  // namespace

void save_dataset(const std::string& path, const PairedDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dataset file: cannot open for writing: " + path);
    io::write_magic(out, kDatasetMagic);

    const int64_t n = static_cast<int64_t>(data.samples.size());
    std::ostringstream head;
    head << "version=1\n";
    head << "seed=" << data.seed << "\n";
    head << "classes=" << data.task.class_count << "\n";
    head << "latent_dim=" << data.task.latent_dim << "\n";
    head << "noise_level=" << format_double(data.task.noise_level) << "\n";
    head << "samples_per_subject=" << data.task.samples_per_subject << "\n";
    head << "subjects=" << data.task.subject_count << "\n";
    write_modality_header(head, "mod_a", data.mod_a);
    write_modality_header(head, "mod_b", data.mod_b);
    head << "samples=" << n << "\n";
    io::write_text(out, head.str());

    std::vector<double> means, covs;
    for (const Tensor& m : data.task.class_means) {
        for (int64_t i = 0; i < m.numel(); ++i) means.push_back(m[i]);
    }
    for (const Tensor& c : data.task.class_covs) {
        for (int64_t i = 0; i < c.numel(); ++i) covs.push_back(c[i]);
    }
    io::write_f64_block(out, means);
    io::write_f64_block(out, covs);
    for (const ModalitySpec* m : {&data.mod_a, &data.mod_b}) {
        std::vector<double> mix, ph;
        for (int64_t i = 0; i < m->mixing.numel(); ++i) mix.push_back(m->mixing[i]);
        for (int64_t i = 0; i < m->phases.numel(); ++i) ph.push_back(m->phases[i]);
        io::write_f64_block(out, mix);
        io::write_f64_block(out, ph);
    }

    std::vector<double> latents;
    std::vector<uint64_t> seeds;
    std::vector<int32_t> labels, subjects;
    std::vector<float> sig_a, sig_b;
    for (const PairedSample& s : data.samples) {
        for (int64_t i = 0; i < s.latent.numel(); ++i) latents.push_back(s.latent[i]);
        seeds.push_back(s.sample_seed);
        labels.push_back(static_cast<int32_t>(s.label));
        subjects.push_back(static_cast<int32_t>(s.subject));
        for (int64_t i = 0; i < s.x_a.numel(); ++i) sig_a.push_back(static_cast<float>(s.x_a[i]));
        for (int64_t i = 0; i < s.x_b.numel(); ++i) sig_b.push_back(static_cast<float>(s.x_b[i]));
    }
    io::write_f64_block(out, latents);
    io::write_u64_block(out, seeds);
    io::write_i32_block(out, labels);
    io::write_i32_block(out, subjects);
    io::write_f32_block(out, sig_a);
    io::write_f32_block(out, sig_b);
    if (!out) throw std::runtime_error("dataset file: write failed: " + path);
}

PairedDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset file: cannot open for reading: " + path);
    io::check_magic(in, kDatasetMagic, "dataset");

    HeaderParser head(io::read_text(in));
    if (head.integer("version") != 1) throw std::runtime_error("dataset file: unsupported version");

    PairedDataset data;
    data.seed = static_cast<uint64_t>(head.integer("seed"));
    data.task.class_count = head.integer("classes");
    data.task.latent_dim = head.integer("latent_dim");
    data.task.noise_level = head.real("noise_level");
    data.task.samples_per_subject = head.integer("samples_per_subject");
    data.task.subject_count = head.integer("subjects");
    for (ModalitySpec* m : {&data.mod_a, &data.mod_b}) {
        std::string prefix = (m == &data.mod_a) ? "mod_a" : "mod_b";
        m->name = head.field(prefix + ".name");
        m->channels = head.integer(prefix + ".channels");
        m->seq_len = head.integer(prefix + ".seq_len");
        m->band_lo = head.real(prefix + ".band_lo");
        m->band_hi = head.real(prefix + ".band_hi");
        m->noise = head.real(prefix + ".noise");
    }
    const int64_t n = head.integer("samples");

    const int64_t d = data.task.latent_dim;
    std::vector<double> means = io::read_f64_block(in);
    std::vector<double> covs = io::read_f64_block(in);
    if (static_cast<int64_t>(means.size()) != data.task.class_count * d ||
        static_cast<int64_t>(covs.size()) != data.task.class_count * d * d) {
        throw std::runtime_error("dataset file: spec block size mismatch");
    }
    for (int64_t c = 0; c < data.task.class_count; ++c) {
        data.task.class_means.push_back(tensor_from(means, static_cast<size_t>(c * d), Shape{d}));
        data.task.class_covs.push_back(tensor_from(covs, static_cast<size_t>(c * d * d), Shape{d, d}));
    }
    for (ModalitySpec* m : {&data.mod_a, &data.mod_b}) {
        std::vector<double> mix = io::read_f64_block(in);
        std::vector<double> ph = io::read_f64_block(in);
        if (static_cast<int64_t>(mix.size()) != m->channels * d ||
            static_cast<int64_t>(ph.size()) != m->channels * d) {
            throw std::runtime_error("dataset file: modality block size mismatch");
        }
        m->mixing = tensor_from(mix, 0, Shape{m->channels, d});
        m->phases = tensor_from(ph, 0, Shape{m->channels, d});
    }

    std::vector<double> latents = io::read_f64_block(in);
    std::vector<uint64_t> seeds = io::read_u64_block(in);
    std::vector<int32_t> labels = io::read_i32_block(in);
    std::vector<int32_t> subjects = io::read_i32_block(in);
    std::vector<float> sig_a = io::read_f32_block(in);
    std::vector<float> sig_b = io::read_f32_block(in);
    const int64_t na = data.mod_a.seq_len * data.mod_a.channels;
    const int64_t nb = data.mod_b.seq_len * data.mod_b.channels;
    if (static_cast<int64_t>(latents.size()) != n * d || static_cast<int64_t>(seeds.size()) != n ||
        static_cast<int64_t>(labels.size()) != n || static_cast<int64_t>(subjects.size()) != n ||
        static_cast<int64_t>(sig_a.size()) != n * na || static_cast<int64_t>(sig_b.size()) != n * nb) {
        throw std::runtime_error("dataset file: sample block size mismatch");
    }

    data.samples.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        PairedSample& s = data.samples[static_cast<size_t>(i)];
        s.latent = tensor_from(latents, static_cast<size_t>(i * d), Shape{d});
        s.sample_seed = seeds[static_cast<size_t>(i)];
        s.label = labels[static_cast<size_t>(i)];
        s.subject = subjects[static_cast<size_t>(i)];
        s.x_a = Tensor(Shape{data.mod_a.seq_len, data.mod_a.channels});
        for (int64_t j = 0; j < na; ++j) {
            s.x_a[j] = static_cast<double>(sig_a[static_cast<size_t>(i * na + j)]);
        }
        s.x_b = Tensor(Shape{data.mod_b.seq_len, data.mod_b.channels});
        for (int64_t j = 0; j < nb; ++j) {
            s.x_b[j] = static_cast<double>(sig_b[static_cast<size_t>(i * nb + j)]);
        }
    }
    return data;
}

}  // namespace biox
