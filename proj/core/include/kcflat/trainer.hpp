#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kcflat/config.hpp"
#include "kcflat/dataset.hpp"
#include "kcflat/eval.hpp"
#include "kcflat/kcnet.hpp"

namespace kcflat {

struct TrainConfig {
    double learning_rate = 1e-3;
    double lr_decay = 0.1;
    int lr_step = 8;  // epochs between decays
    int epochs = 24;
    int batch_size = 32;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool hflip = false;  // mirror images at random; labels follow (segment column swaps)

    // learning_rate * lr_decay ^ floor(epoch / lr_step), epochs counted from 0.
    double lr_at(int epoch) const;
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Model and training settings read from a key-value file. Recognized keys:
//   [model]  backbone, base_width, head_widths, input_resolution, pretrained_weights
//   [train]  learning_rate, lr_decay, lr_step, epochs, batch_size, momentum, weight_decay, seed, hflip
// Unknown keys are rejected. Values not present keep the defaults of `base`.
struct ExperimentConfig {
    KCNetConfig model;
    TrainConfig train;

    static ExperimentConfig from_config(const KeyValueConfig& cfg, ExperimentConfig base = {});
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;  // percent, from the train-mode forward passes
    double learning_rate = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainingCurve {
    std::vector<EpochRecord> epochs;

    // Header "epoch,train_loss,train_accuracy,learning_rate".
    std::string to_csv() const;
    bool operator==(const TrainingCurve&) const = default;
};

struct ModelArtifact {
    KCNetConfig config;
    TrainConfig train_config;
    int fold_id = 0;
    std::string dataset_fingerprint;
    std::set<GarmentInstance> train_instances;
    double max_depth_mm = 2000.0;
    std::vector<NamedTensor> tensors;

    bool operator==(const ModelArtifact&) const = default;
};

// Binary file: "KCNETART", u32 version, u64 header length, JSON header, raw little-endian float32 data.
void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_artifact(const std::filesystem::path& path);
KCNet<float> instantiate(const ModelArtifact& artifact);

// Images of a subset of manifest entries, normalized and stacked for one modality.
struct SampleSet {
    Modality modality;
    int channels = 0;
    int resolution = 0;
    std::vector<float> values;  // [sample][channel][y][x]
    std::vector<int> labels;    // flat class index
    std::vector<GarmentInstance> instances;
    std::vector<std::size_t> entries;  // manifest row of each sample

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t sample_size() const noexcept {
        return static_cast<std::size_t>(channels) * resolution * resolution;
    }
};

// Loads the listed entries (all entries when `entries` is empty). Throws ConfigError when the
// modality needs RGB the manifest does not provide.
SampleSet load_samples(const DatasetManifest& manifest, Modality modality, std::span<const std::size_t> entries = {});
SampleSet subset(const SampleSet& samples, const std::set<GarmentInstance>& instances);

struct TrainHooks {
    // Called with the manifest rows of every optimization batch.
    std::function<void(int epoch, std::span<const std::size_t> entries)> on_batch;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    ModelArtifact artifact;
    TrainingCurve curve;
};

// Trains on the captures of the fold's training instances only.
TrainResult train_fold(const FoldSplit& fold, const DatasetManifest& manifest, const KCNetConfig& model_config,
                       const TrainConfig& train_config, const TrainHooks& hooks = {});
// As above on preloaded samples (every sample must come from the manifest the fingerprint names).
TrainResult train_fold(const FoldSplit& fold, const SampleSet& samples, const std::string& fingerprint,
                       double max_depth_mm, const KCNetConfig& model_config, const TrainConfig& train_config,
                       const TrainHooks& hooks = {});

struct EvalResult {
    std::array<double, kCategoryCount> category_accuracy{};  // percent; NaN for categories with no samples
    std::array<long, kCategoryCount> category_total{};
    std::vector<long> confusion = std::vector<long>(kClassCount * kClassCount, 0);  // [true][predicted]
    double overall_accuracy = 0.0;  // percent
    long total = 0;

    long confusion_at(int truth, int predicted) const {
        return confusion[static_cast<std::size_t>(truth) * kClassCount + static_cast<std::size_t>(predicted)];
    }
};

// Accuracy over the captures of `test_instances`. Throws LeakageError when any of them was used to
// train the artifact, ConfigError when the modality differs from the artifact's.
EvalResult evaluate(const ModelArtifact& artifact, const DatasetManifest& manifest,
                    const std::set<GarmentInstance>& test_instances, Modality modality);
EvalResult evaluate(const ModelArtifact& artifact, const SampleSet& test_samples);

// Folds the per-sample predictions into the accuracy arrays and confusion matrix.
EvalResult tally_predictions(std::span<const int> truth, std::span<const int> predicted);

struct KFoldResult {
    EvalReport report;
    std::vector<FoldSplit> folds;
    std::vector<ModelArtifact> artifacts;
    std::vector<TrainingCurve> curves;
    std::vector<EvalResult> evaluations;
};

struct KFoldHooks {
    TrainHooks train;
    std::function<void(int fold, const EvalResult&)> on_fold;
};

// Instance-held-out k-fold experiment for one modality (model_config.modality). Fold f trains with
// seed derived from train_config.seed and f.
KFoldResult run_kfold(const DatasetManifest& manifest, const KCNetConfig& model_config, const TrainConfig& train_config,
                      int k = 4, const KFoldHooks& hooks = {});

}  // namespace kcflat
