#pragma once

// Synthetic paired two-modality time-series generator. Each sample draws a
// class-conditional latent state; both modality signals are deterministic
// oscillatory renderings of that one latent plus per-modality noise, so the
// two views of a sample are genuinely synchronized. Datasets are partitioned
// into four roles with label access walls that mirror how each partition may
// legally be used: pretraining (labeled, modality A), final evaluation
// (labels for metrics only), validation (labels for metrics only), and the
// unlabeled paired pool that alignment training consumes.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "biox/tensor.hpp"

namespace biox {

// Thrown when code asks a split for labels its role does not grant.
struct LabelAccessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LatentTaskSpec {
    int64_t class_count = 3;
    int64_t latent_dim = 6;
    std::vector<Tensor> class_means;  // one (latent_dim) vector per class
    std::vector<Tensor> class_covs;   // one SPD (latent_dim, latent_dim) per class
    double noise_level = 0.3;         // scales the class-conditional spread
    int64_t samples_per_subject = 200;
    int64_t subject_count = 15;
};

struct ModalitySpec {
    std::string name;
    int64_t channels = 0;
    int64_t seq_len = 0;
    Tensor mixing;  // (channels, latent_dim): per-channel oscillator gains
    Tensor phases;  // (channels, latent_dim): per-channel oscillator phases
    double band_lo = 1.0;  // slowest oscillator, in cycles per window
    double band_hi = 8.0;  // fastest oscillator, in cycles per window
    double noise = 0.05;   // additive observation noise per time step
};

// Draws random mixing gains and phases so the two modalities of a task are
// distinct observations of the same latent.
ModalitySpec make_mixture_modality(std::string name, int64_t channels, int64_t seq_len,
                                   int64_t latent_dim, double band_lo, double band_hi, double noise,
                                   uint64_t seed);

// Stock configuration: 3 well-separated classes in a 6-dim latent, 15
// subjects at 200 samples each, and two modalities with different channel
// counts, window lengths, and frequency bands.
LatentTaskSpec make_default_task();
ModalitySpec default_old_modality();
ModalitySpec default_new_modality();

// General factory for other class counts / latent sizes: class means are
// deterministic well-separated directions, covariances are identity.
LatentTaskSpec make_latent_task(int64_t classes, int64_t latent_dim, double noise_level,
                                int64_t samples_per_subject, int64_t subject_count);

struct PairedSample {
    Tensor x_a;  // (seq_len_a, channels_a)
    Tensor x_b;  // (seq_len_b, channels_b)
    int64_t label = 0;
    int64_t subject = 0;
    Tensor latent;            // the shared state both signals render
    uint64_t sample_seed = 0; // per-sample stream; regenerates both signals
};

struct PairedDataset {
    LatentTaskSpec task;
    ModalitySpec mod_a;
    ModalitySpec mod_b;
    uint64_t seed = 0;
    std::vector<PairedSample> samples;
};

// Lower-triangular factor of an SPD matrix; throws on non-positive-definite
// input ("degenerate covariance").
Tensor cholesky_lower(const Tensor& cov);

// Deterministic rendering of one latent through one modality. The noise seed
// fully determines the additive noise, so stored signals can be re-derived.
Tensor render_signal(const ModalitySpec& mod, const Tensor& latent, uint64_t noise_seed);

// Labels are dealt round-robin within each subject, so every subject sees a
// balanced class mix. Bit-deterministic per seed; subjects render in
// parallel when workers are available.
PairedDataset generate_paired_dataset(const LatentTaskSpec& task, const ModalitySpec& mod_a,
                                      const ModalitySpec& mod_b, uint64_t seed);

// Re-renders every sample from its stored latent + seed and compares bits.
bool pairing_intact(const PairedDataset& data);

enum class SplitRole { Old, New, Val, Pair };
enum class SplitMode { SubjectDisjoint, SampleWise };

std::string split_role_name(SplitRole role);

// A view into a dataset partition. Signals are always accessible; labels are
// guarded by role: the pretraining split exposes labels for training and
// evaluation, the evaluation and validation splits expose them for metric
// computation only, and the paired pool exposes none at all.
class SplitView {
  public:
    SplitView() = default;
    SplitView(const PairedDataset* data, SplitRole role, std::vector<int64_t> indices);

    int64_t size() const { return static_cast<int64_t>(indices_.size()); }
    SplitRole role() const { return role_; }
    const std::vector<int64_t>& indices() const { return indices_; }
    const PairedDataset* data() const { return data_; }

    const Tensor& signal_a(int64_t i) const;
    const Tensor& signal_b(int64_t i) const;
    int64_t subject(int64_t i) const;

    int64_t training_label(int64_t i) const;  // Old only
    int64_t eval_label(int64_t i) const;      // Old, New, Val

    std::vector<Tensor> signals_a() const;
    std::vector<Tensor> signals_b() const;
    std::vector<int64_t> training_labels() const;
    std::vector<int64_t> eval_labels() const;

  private:
    const PairedSample& at(int64_t i) const;

    const PairedDataset* data_ = nullptr;
    SplitRole role_ = SplitRole::Pair;
    std::vector<int64_t> indices_;
};

struct DatasetSplits {
    SplitView old_split;
    SplitView new_split;
    SplitView val_split;
    SplitView pair_split;
    // Sorted subject ids actually present in each role (Old, New, Val, Pair).
    std::array<std::vector<int64_t>, 4> split_subjects;
};

// Apportions `total` seats to four weights by largest remainder; ties go to
// the lower index.
std::array<int64_t, 4> largest_remainder_counts(const std::array<double, 4>& weights, int64_t total);

// Partitions by subject (default) or by sample. Weights must be nonnegative
// and sum to 1 within 2%; they are renormalized before apportionment. Every
// positive-weight role must receive at least one subject (or sample), and in
// subject mode the roles are subject-disjoint by construction — verified
// before returning.
DatasetSplits split_dataset(const PairedDataset& data, const std::array<double, 4>& weights,
                            uint64_t seed, SplitMode mode = SplitMode::SubjectDisjoint);

// Shrinks the paired pool to ceil(fraction * size) uniformly chosen samples;
// the other three roles are untouched.
DatasetSplits subsample_pair_fraction(const DatasetSplits& splits, double fraction, uint64_t seed);

// Container format: magic + structured-text header (version, task and
// modality scalars, counts) + f64 blocks for spec matrices and latents +
// little-endian f32 signal blocks + i32 label/subject arrays + u64 sample
// seeds. Byte layout is deterministic for a given dataset.
void save_dataset(const std::string& path, const PairedDataset& data);
PairedDataset load_dataset(const std::string& path);

}  // namespace biox
