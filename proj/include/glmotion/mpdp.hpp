#pragma once

#include <vector>

#include "glmotion/model.hpp"

namespace glmotion {

inline constexpr std::size_t kDirectionClasses = 27;
inline constexpr int kNeutralDirection = 13;

struct MpdpConfig {
  std::vector<std::size_t> intervals{1, 5, 10};
  std::size_t magnitude_classes = 8;
  double eps_dir = 0.005;               // meters, per axis
  std::vector<double> magnitude_edges;  // empty: log-spaced eps_dir .. 1.0
  double lambda_dir = 1.0;
  double lambda_mag = 1.0;

  /// The magnitude_classes - 1 ascending bin edges in use.
  std::vector<double> edges() const;
  /// Throws ShapeError for invalid settings.
  void validate() const;

  nlohmann::json to_json() const;
  static MpdpConfig from_json(const nlohmann::json& j);
};

/// Per axis: 0 below -eps, 1 within [-eps, eps], 2 above eps;
/// class = 9 s_x + 3 s_y + s_z.
int direction_class(const Vec3& disp, double eps_dir);

/// Bin of the Euclidean norm: bin 0 = [0, e_1), bin i = [e_i, e_{i+1}),
/// last bin open-ended (the number of edges <= norm).
int magnitude_class(const Vec3& disp, std::span<const double> edges);

/// Class targets laid out [T][P][K][I]; joint 0 is the global translation.
struct MpdpTargets {
  std::size_t frames = 0;
  std::size_t persons = 0;
  std::size_t joints = 0;
  std::size_t intervals = 0;
  std::vector<int> dir;
  std::vector<int> mag;
  Mask loss_mask;  // [T]

  std::size_t index(std::size_t t, std::size_t p, std::size_t k, std::size_t i) const {
    return ((t * persons + p) * joints + k) * intervals + i;
  }
};

/// Frames with 0-based index below the interval have zero displacement.
MpdpTargets build_targets(const DisentangledSequence& d, const MpdpConfig& cfg);

/// Stacks per-sequence targets into [B*T_max] frames; padded frames are
/// unmasked filler (class 13 / bin 0) with loss_mask 0.
MpdpTargets stack_targets(std::span<const MpdpTargets> targets, std::size_t t_max);

struct MpdpHeads {
  // one weight/bias pair per interval: dir [PK*27, E], mag [PK*C_sigma, E]
  std::vector<Tensor> dir_weight, dir_bias, mag_weight, mag_bias;

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> trainable() const;
};

/// Uniform(+-1/sqrt(E)) weights and zero biases; `zero` gives all-zero heads.
MpdpHeads init_heads(const ModelConfig& model, const MpdpConfig& cfg, Rng& rng, bool zero = false);

struct MpdpLogits {
  // per interval, [B, T, P, K, C]
  std::vector<Tensor> dir;
  std::vector<Tensor> mag;
};

/// Raw logits from F [B, T, E].
MpdpLogits heads_forward(const Tensor& features, const MpdpHeads& heads, const ModelConfig& model,
                         const MpdpConfig& cfg);

/// Sum over valid (t, p, n) of lambda_dir * mean_k CE_dir + lambda_mag * mean_k CE_mag,
/// divided by the number of valid (t, p, n) triples. Targets must be
/// stacked to match the logits' [B, T]. Throws MaskError when no frame is valid.
Tensor mpdp_loss(const MpdpLogits& logits, const MpdpTargets& targets, const MpdpConfig& cfg);

struct MpdpAccuracy {
  // per interval: correct argmax predictions and counted rows over valid frames
  std::vector<std::size_t> dir_correct, mag_correct;
  std::size_t rows = 0;  // per interval

  void merge(const MpdpAccuracy& other);
  double dir(std::size_t i) const { return rows ? static_cast<double>(dir_correct[i]) / static_cast<double>(rows) : 0.0; }
  double mag(std::size_t i) const { return rows ? static_cast<double>(mag_correct[i]) / static_cast<double>(rows) : 0.0; }
};

MpdpAccuracy mpdp_accuracy(const MpdpLogits& logits, const MpdpTargets& targets);

}  // namespace glmotion
