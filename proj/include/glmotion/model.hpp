#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glmotion/ops.hpp"
#include "glmotion/skeleton.hpp"
#include "json.hpp"

namespace glmotion {

enum class PositionalMode {
  trainable_tight,   // M re-injected before spatial and temporal MHA of every block
  trainable_once,    // M added once, before the first block
  fixed_sinusoidal,  // sine/cosine table added once, not trained
};

std::string to_string(PositionalMode mode);
PositionalMode positional_mode_from_string(const std::string& name);

struct ModelConfig {
  std::size_t joints = 25;  // K, including the center joint
  std::size_t persons = 2;  // P
  std::size_t embed_dim = 6;  // D
  std::size_t blocks = 4;   // N
  std::size_t spatial_heads = 2;
  std::size_t temporal_heads = 8;
  std::size_t spatial_head_dim = 0;   // 0: D / spatial_heads
  std::size_t temporal_head_dim = 0;  // 0: floor(P*K*D / temporal_heads)
  std::size_t mlp_hidden = 0;         // 0: 4 * P*K*D
  std::size_t t_max = 300;
  double ln_eps = 1e-5;
  PositionalMode positional_mode = PositionalMode::trainable_tight;
  bool p2p_attention = true;

  std::size_t tokens() const { return persons * joints; }
  std::size_t frame_width() const { return persons * joints * embed_dim; }
  std::size_t d_spatial() const;
  std::size_t d_temporal() const;
  std::size_t hidden() const;

  /// Throws ShapeError for inconsistent settings.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct BlockParams {
  Tensor ln_spatial_gamma, ln_spatial_beta;    // [D]
  Tensor spatial_query, spatial_key, spatial_value;  // [D, h_s*d_s]
  Tensor spatial_out;                           // [h_s*d_s, D]
  Tensor ln_temporal_gamma, ln_temporal_beta;  // [E]
  Tensor temporal_query, temporal_key, temporal_value;  // [E, h_t*d_t]
  Tensor temporal_out;                          // [h_t*d_t, E]
  Tensor ln_mlp_gamma, ln_mlp_beta;            // [E]
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;        // [H, E], [H], [E, H], [E]
};

/// Every weight of the backbone. E = P*K*D is the width of a vectorized frame.
struct ModelParams {
  Tensor global_weight, global_bias;  // W_g [D, 3], b_g [D]
  Tensor joint_weight, joint_bias;    // W_r [D, 3], b_r [D]
  Tensor positional;                  // M [T_max, P*K, D]
  std::vector<BlockParams> blocks;
  Tensor final_w1, final_b1, final_w2, final_b2;  // output 2-layer MLP

  /// Stable names ("block1.temporal_query", ...) in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Tensors updated by training (excludes a fixed sinusoidal table).
  std::vector<Tensor> trainable() const;
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit LayerNorm gains,
/// zero positional tensor (or the sinusoid table in fixed mode).
ModelParams init_model(const ModelConfig& config, Rng& rng);

/// Total element count of all tensors in ModelParams, from the config alone.
std::size_t parameter_count(const ModelConfig& config);

/// Standard alternating sine/cosine table over the flattened
/// (frame, joint-token) position index; shape [T_max, P*K, D].
Tensor sinusoidal_table(std::size_t frames, std::size_t tokens, std::size_t dim);

struct ForwardOutput {
  std::size_t batch = 0;
  std::size_t frames = 0;
  Tensor features;                     // F [B, T, E]
  std::vector<Tensor> block_outputs;   // Z^n [B, T, E], one per block
  // Post-softmax maps, detached; filled only when capture was requested.
  std::vector<Tensor> spatial_attention;   // per block [B, T, h_s, PK, PK]
  std::vector<Tensor> temporal_attention;  // per block [B, h_t, T, T]
  Mask valid;                          // [B*T]
};

/// Embeds a batch into Z^0 [B, T, P*K, D]: per person the global token
/// followed by the K-1 local joint tokens, persons in index order.
Tensor embed_tokens(const Batch& batch, const ModelParams& params, const ModelConfig& config);

/// Pre-LN multi-head self-attention over the joint tokens of each frame.
/// z: [frames, P*K, D]. Returns the attention output before the residual.
Tensor spatial_mha(const Tensor& z, const BlockParams& block, const ModelConfig& config,
                   Tensor* attention = nullptr);

/// Pre-LN multi-head self-attention over frames; keys at invalid frames are
/// masked. s: [B, T, E], valid: [B*T]. Returns the output before the residual.
Tensor temporal_mha(const Tensor& s, std::span<const std::uint8_t> valid, const BlockParams& block,
                    const ModelConfig& config, Tensor* attention = nullptr);

/// One block: Z^{n-1} [B, T, E] -> Z^n [B, T, E]. `index` is 0-based.
Tensor gl_block(const Tensor& z, const Tensor& positional, std::span<const std::uint8_t> valid,
                const BlockParams& block, std::size_t index, const ModelConfig& config,
                Tensor* spatial_attention = nullptr, Tensor* temporal_attention = nullptr);

/// Full backbone. Batches may be shorter than config.t_max; the first
/// batch.t_max rows of M are used.
ForwardOutput model_forward(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                            bool capture_attention = false);

/// Mean of F over valid frames only -> [B, E].
Tensor pooled_representation(const ForwardOutput& out);

}  // namespace glmotion
