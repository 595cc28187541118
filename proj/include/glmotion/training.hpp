#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glmotion/checkpoint.hpp"
#include "glmotion/mpdp.hpp"

namespace glmotion {

enum class OptimAlgorithm { adamw, adam };

struct OptimConfig {
  OptimAlgorithm algorithm = OptimAlgorithm::adamw;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // ignored by adam
};

/// Bias-corrected adaptive moments; adamw applies decoupled weight decay.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimConfig config);

  /// Reads each parameter's gradient (absent = zero). Throws NumericError
  /// before touching any parameter if a gradient is not finite.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps() const { return steps_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

/// Rescales gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

/// "natural" keeps true lengths with PAD masking; "sampled:N" resamples
/// every sequence to N frames.
struct InputMode {
  std::size_t sampled_frames = 0;

  bool natural() const { return sampled_frames == 0; }
  std::string to_string() const;
  static InputMode parse(const std::string& text);
};

struct AugmentConfig {
  bool shear = true;
  double shear_amplitude = 0.5;
  bool interpolate = true;
  double interp_frac = 0.1;
  double corrupt = 0.0;  // joint corruption proportion
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 120;
  std::size_t batch_size = 128;
  double lr = 5e-4;
  double lr_decay = 0.99;  // per epoch
  double weight_decay = 0.01;
  double clip_norm = 5.0;  // 0 disables
  std::size_t max_steps = 0;  // 0: no limit
  std::size_t checkpoint_every = 0;  // epochs; 0: final checkpoint only
  AugmentConfig augment;
  InputRepresentation representation = InputRepresentation::disentangled;
  InputMode input_mode;

  std::size_t probe_epochs = 100;
  std::size_t probe_batch_size = 128;
  double probe_lr = 3e-3;

  double finetune_lr = 1e-4;
  std::size_t finetune_epochs = 30;
  double label_fraction = 1.0;

  std::size_t threads = 1;  // forward-only feature extraction

  nlohmann::json to_json() const;
};

std::string to_string(InputRepresentation mode);
InputRepresentation representation_from_string(const std::string& name);

/// Worker cap from GLMOTION_THREADS (default 1).
std::size_t env_threads();

/// Deterministic derived generator for a named stream of a run.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

/// Augmentation (training only), resampling for sampled input mode, and
/// the chosen input representation.
DisentangledSequence prepare_sequence(const RawSequence& seq, const RunConfig& run, std::size_t t_max, Rng* augment_rng);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean of batch losses
  std::vector<double> dir_acc, mag_acc;  // per interval
  double lr = 0.0;
  double wall_ms = 0.0;
  std::size_t steps = 0;
};

/// One line per epoch: epoch, loss, dir_acc@n..., mag_acc@n..., lr, wall_ms.
std::string metrics_header(const MpdpConfig& cfg);
std::string metrics_line(const EpochMetrics& m);

struct PretrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// MPDP pretraining with AdamW, per-epoch lr decay and gradient clipping.
/// Throws DataError for an empty dataset.
PretrainResult pretrain(const std::vector<RawSequence>& data, ModelParams& params, MpdpHeads& heads,
                        const ModelConfig& model, const MpdpConfig& mpdp, const RunConfig& run,
                        const EpochCallback& on_epoch = {});

/// Mean MPDP loss over the dataset without augmentation.
double mpdp_dataset_loss(const std::vector<RawSequence>& data, const ModelParams& params, const MpdpHeads& heads,
                         const ModelConfig& model, const MpdpConfig& mpdp, const RunConfig& run);

/// Pooled representations [N, E] under no-grad, no augmentation.
Tensor extract_features(const std::vector<RawSequence>& data, const ModelParams& params, const ModelConfig& model,
                        const RunConfig& run);

struct LinearClassifier {
  Tensor weight;  // [C, E]
  Tensor bias;    // [C]
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t classes = 0;
  LinearClassifier classifier;
};

/// Number of classes (max label + 1). Throws DataError for unlabeled data or
/// when some class in [0, C) of either split never occurs in `train`.
std::size_t class_count(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test);

/// Single affine classifier trained with Adam on precomputed features.
ProbeResult train_probe(const Tensor& train_features, const std::vector<int>& train_labels,
                        const Tensor& test_features, const std::vector<int>& test_labels, std::size_t classes,
                        const RunConfig& run);

/// Frozen backbone -> pooled features -> linear classifier.
ProbeResult linear_probe(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test,
                         const ModelParams& params, const ModelConfig& model, const RunConfig& run);

/// Class-stratified subset: round(fraction * n_c) samples per class, drawn
/// with `rng`. Throws DataError when a class would get zero samples.
std::vector<std::size_t> stratified_subset(const std::vector<RawSequence>& data, double fraction, Rng& rng);

struct FinetuneResult {
  double test_accuracy = 0.0;
  std::size_t train_samples = 0;
  std::vector<std::size_t> per_class;
};

/// End-to-end training of a copy of `params` plus a linear classifier on
/// a stratified label fraction.
FinetuneResult finetune_semi(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test,
                             const ModelParams& params, const ModelConfig& model, const RunConfig& run);

double classifier_accuracy(const Tensor& features, const std::vector<int>& labels, const LinearClassifier& clf);

/// Backbone + heads checkpoint with both configs in the metadata.
struct Pretrained {
  ModelConfig model;
  MpdpConfig mpdp;
  ModelParams params;
  MpdpHeads heads;
  nlohmann::json meta;
};

void save_pretrained(const std::filesystem::path& path, const ModelParams& params, const MpdpHeads& heads,
                     const ModelConfig& model, const MpdpConfig& mpdp, const nlohmann::json& extra = {});
Pretrained load_pretrained(const std::filesystem::path& path);

ModelParams clone_params(const ModelParams& params);

/// FNV-1a hash over the bytes of every backbone value, for freeze checks.
std::uint64_t parameter_checksum(const ModelParams& params);

}  // namespace glmotion
