#include "glmotion/model.hpp"

#include <algorithm>
#include <cmath>

#include "glmotion/errors.hpp"

namespace glmotion {

std::string to_string(PositionalMode mode) {
  switch (mode) {
    case PositionalMode::trainable_tight: return "tight";
    case PositionalMode::trainable_once: return "once";
    case PositionalMode::fixed_sinusoidal: return "sinusoidal";
  }
  return "tight";
}

PositionalMode positional_mode_from_string(const std::string& name) {
  if (name == "tight") return PositionalMode::trainable_tight;
  if (name == "once") return PositionalMode::trainable_once;
  if (name == "sinusoidal") return PositionalMode::fixed_sinusoidal;
  throw UsageError("unknown positional mode '" + name + "' (tight|once|sinusoidal)");
}

std::size_t ModelConfig::d_spatial() const {
  return spatial_head_dim ? spatial_head_dim : embed_dim / std::max<std::size_t>(spatial_heads, 1);
}

std::size_t ModelConfig::d_temporal() const {
  return temporal_head_dim ? temporal_head_dim : frame_width() / std::max<std::size_t>(temporal_heads, 1);
}

std::size_t ModelConfig::hidden() const { return mlp_hidden ? mlp_hidden : 4 * frame_width(); }

void ModelConfig::validate() const {
  if (joints < 1 || persons < 1 || embed_dim < 1 || blocks < 1 || t_max < 1)
    throw ShapeError("model config: K, P, D, N and T_max must be positive");
  if (spatial_heads < 1 || temporal_heads < 1) throw ShapeError("model config: head counts must be positive");
  if (d_spatial() < 1) throw ShapeError("model config: spatial head dimension is zero");
  if (d_temporal() < 1) throw ShapeError("model config: temporal head dimension is zero");
  if (!(ln_eps >= 0)) throw ShapeError("model config: negative LayerNorm epsilon");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"joints", joints},
          {"persons", persons},
          {"embed_dim", embed_dim},
          {"blocks", blocks},
          {"spatial_heads", spatial_heads},
          {"temporal_heads", temporal_heads},
          {"spatial_head_dim", d_spatial()},
          {"temporal_head_dim", d_temporal()},
          {"mlp_hidden", hidden()},
          {"t_max", t_max},
          {"ln_eps", ln_eps},
          {"positional_mode", to_string(positional_mode)},
          {"p2p_attention", p2p_attention}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.joints = j.at("joints");
    c.persons = j.at("persons");
    c.embed_dim = j.at("embed_dim");
    c.blocks = j.at("blocks");
    c.spatial_heads = j.at("spatial_heads");
    c.temporal_heads = j.at("temporal_heads");
    c.spatial_head_dim = j.at("spatial_head_dim");
    c.temporal_head_dim = j.at("temporal_head_dim");
    c.mlp_hidden = j.at("mlp_hidden");
    c.t_max = j.at("t_max");
    c.ln_eps = j.at("ln_eps");
    c.positional_mode = positional_mode_from_string(j.at("positional_mode"));
    c.p2p_attention = j.at("p2p_attention");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"global_weight", global_weight}, {"global_bias", global_bias},
      {"joint_weight", joint_weight},   {"joint_bias", joint_bias},
      {"positional", positional},
  };
  for (std::size_t n = 0; n < blocks.size(); ++n) {
    const auto& b = blocks[n];
    std::string p = "block" + std::to_string(n + 1) + ".";
    out.insert(out.end(), {
                              {p + "ln_spatial_gamma", b.ln_spatial_gamma},
                              {p + "ln_spatial_beta", b.ln_spatial_beta},
                              {p + "spatial_query", b.spatial_query},
                              {p + "spatial_key", b.spatial_key},
                              {p + "spatial_value", b.spatial_value},
                              {p + "spatial_out", b.spatial_out},
                              {p + "ln_temporal_gamma", b.ln_temporal_gamma},
                              {p + "ln_temporal_beta", b.ln_temporal_beta},
                              {p + "temporal_query", b.temporal_query},
                              {p + "temporal_key", b.temporal_key},
                              {p + "temporal_value", b.temporal_value},
                              {p + "temporal_out", b.temporal_out},
                              {p + "ln_mlp_gamma", b.ln_mlp_gamma},
                              {p + "ln_mlp_beta", b.ln_mlp_beta},
                              {p + "mlp_w1", b.mlp_w1},
                              {p + "mlp_b1", b.mlp_b1},
                              {p + "mlp_w2", b.mlp_w2},
                              {p + "mlp_b2", b.mlp_b2},
                          });
  }
  out.insert(out.end(), {{"final_w1", final_w1}, {"final_b1", final_b1}, {"final_w2", final_w2}, {"final_b2", final_b2}});
  return out;
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

namespace {

Tensor uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

}  // namespace

Tensor sinusoidal_table(std::size_t frames, std::size_t tokens, std::size_t dim) {
  std::vector<double> v(frames * tokens * dim);
  for (std::size_t pos = 0; pos < frames * tokens; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      double rate = std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(dim));
      double angle = static_cast<double>(pos) / rate;
      v[pos * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({frames, tokens, dim}, std::move(v), false);
}

ModelParams init_model(const ModelConfig& c, Rng& rng) {
  c.validate();
  const std::size_t D = c.embed_dim, E = c.frame_width(), H = c.hidden();
  const std::size_t ws = c.spatial_heads * c.d_spatial(), wt = c.temporal_heads * c.d_temporal();
  ModelParams p;
  p.global_weight = uniform(rng, {D, 3}, 3);
  p.global_bias = zeros_param({D});
  p.joint_weight = uniform(rng, {D, 3}, 3);
  p.joint_bias = zeros_param({D});
  p.positional = c.positional_mode == PositionalMode::fixed_sinusoidal
                     ? sinusoidal_table(c.t_max, c.tokens(), D)
                     : zeros_param({c.t_max, c.tokens(), D});
  for (std::size_t n = 0; n < c.blocks; ++n) {
    BlockParams b;
    b.ln_spatial_gamma = ones_param({D});
    b.ln_spatial_beta = zeros_param({D});
    b.spatial_query = uniform(rng, {D, ws}, D);
    b.spatial_key = uniform(rng, {D, ws}, D);
    b.spatial_value = uniform(rng, {D, ws}, D);
    b.spatial_out = uniform(rng, {ws, D}, ws);
    b.ln_temporal_gamma = ones_param({E});
    b.ln_temporal_beta = zeros_param({E});
    b.temporal_query = uniform(rng, {E, wt}, E);
    b.temporal_key = uniform(rng, {E, wt}, E);
    b.temporal_value = uniform(rng, {E, wt}, E);
    b.temporal_out = uniform(rng, {wt, E}, wt);
    b.ln_mlp_gamma = ones_param({E});
    b.ln_mlp_beta = zeros_param({E});
    b.mlp_w1 = uniform(rng, {H, E}, E);
    b.mlp_b1 = zeros_param({H});
    b.mlp_w2 = uniform(rng, {E, H}, H);
    b.mlp_b2 = zeros_param({E});
    p.blocks.push_back(std::move(b));
  }
  p.final_w1 = uniform(rng, {H, E}, E);
  p.final_b1 = zeros_param({H});
  p.final_w2 = uniform(rng, {E, H}, H);
  p.final_b2 = zeros_param({E});
  return p;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t D = c.embed_dim, E = c.frame_width(), H = c.hidden();
  const std::size_t ws = c.spatial_heads * c.d_spatial(), wt = c.temporal_heads * c.d_temporal();
  std::size_t embed = 2 * (3 * D + D);
  std::size_t positional = c.t_max * c.tokens() * D;
  std::size_t mlp = H * E + H + E * H + E;
  std::size_t block = 2 * D + 4 * D * ws + 2 * E + 4 * E * wt + 2 * E + mlp;
  return embed + positional + c.blocks * block + mlp;
}

Tensor embed_tokens(const Batch& batch, const ModelParams& params, const ModelConfig& c) {
  if (batch.persons != c.persons || batch.joints_local + 1 != c.joints)
    throw ShapeError("batch has P=" + std::to_string(batch.persons) + ", K=" +
                     std::to_string(batch.joints_local + 1) + " but the model expects P=" +
                     std::to_string(c.persons) + ", K=" + std::to_string(c.joints));
  const std::size_t B = batch.size, T = batch.t_max, P = c.persons, Kl = batch.joints_local, D = c.embed_dim;
  Tensor g = Tensor::from({B * T * P, 3}, batch.g);
  Tensor eg = reshape(linear(g, params.global_weight, params.global_bias), {B * T * P, 1, D});
  if (Kl == 0) return reshape(eg, {B, T, P, D});
  Tensor r = Tensor::from({B * T * P * Kl, 3}, batch.r);
  Tensor er = reshape(linear(r, params.joint_weight, params.joint_bias), {B * T * P, Kl, D});
  return reshape(concat({eg, er}, 1), {B, T, P * (Kl + 1), D});
}

namespace {

// [N, L, h*d] -> [N*h, L, d]
Tensor split_heads(const Tensor& x, std::size_t heads, std::size_t d) {
  std::size_t n = x.dim(0), l = x.dim(1);
  return reshape(permute(reshape(x, {n, l, heads, d}), {0, 2, 1, 3}), {n * heads, l, d});
}

// [N*h, L, d] -> [N, L, h*d]
Tensor merge_heads(const Tensor& x, std::size_t heads) {
  std::size_t n = x.dim(0) / heads, l = x.dim(1), d = x.dim(2);
  return reshape(permute(reshape(x, {n, heads, l, d}), {0, 2, 1, 3}), {n, l, heads * d});
}

Mask person_block_mask(const ModelConfig& c) {
  const std::size_t PK = c.tokens();
  Mask m(PK * PK, 0);
  for (std::size_t i = 0; i < PK; ++i)
    for (std::size_t j = 0; j < PK; ++j) m[i * PK + j] = i / c.joints == j / c.joints;
  return m;
}

}  // namespace

Tensor spatial_mha(const Tensor& z, const BlockParams& b, const ModelConfig& c, Tensor* attention) {
  const std::size_t h = c.spatial_heads, d = c.d_spatial();
  Tensor x = layer_norm(z, b.ln_spatial_gamma, b.ln_spatial_beta, c.ln_eps);
  Tensor q = split_heads(matmul(x, b.spatial_query), h, d);
  Tensor k = split_heads(matmul(x, b.spatial_key), h, d);
  Tensor v = split_heads(matmul(x, b.spatial_value), h, d);
  Tensor logits = scale(batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
  Mask mask;
  if (!c.p2p_attention && c.persons > 1) mask = person_block_mask(c);
  Tensor a = softmax_masked(logits, mask);
  if (attention) *attention = a.detach();
  return matmul(merge_heads(batched_matmul(a, v), h), b.spatial_out);
}

Tensor temporal_mha(const Tensor& s, std::span<const std::uint8_t> valid, const BlockParams& b,
                    const ModelConfig& c, Tensor* attention) {
  const std::size_t h = c.temporal_heads, d = c.d_temporal();
  const std::size_t B = s.dim(0), T = s.dim(1);
  if (valid.size() != B * T) throw ShapeError("temporal_mha: validity mask does not match [B, T]");
  Tensor x = layer_norm(s, b.ln_temporal_gamma, b.ln_temporal_beta, c.ln_eps);
  // heads-major layout [h*B, T, d] so the [B, T, T] key mask repeats per head
  auto heads_major = [&](const Tensor& y) {
    return reshape(permute(reshape(y, {B, T, h, d}), {2, 0, 1, 3}), {h * B, T, d});
  };
  Tensor q = heads_major(matmul(x, b.temporal_query));
  Tensor k = heads_major(matmul(x, b.temporal_key));
  Tensor v = heads_major(matmul(x, b.temporal_value));
  Tensor logits = scale(batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
  Mask mask(B * T * T);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t qi = 0; qi < T; ++qi)
      for (std::size_t ki = 0; ki < T; ++ki) mask[(bi * T + qi) * T + ki] = valid[bi * T + ki] != 0;
  Tensor a = softmax_masked(logits, mask);
  if (attention) *attention = permute(reshape(a.detach(), {h, B, T, T}), {1, 0, 2, 3});
  Tensor o = reshape(permute(reshape(batched_matmul(a, v), {h, B, T, d}), {1, 2, 0, 3}), {B, T, h * d});
  return matmul(o, b.temporal_out);
}

Tensor gl_block(const Tensor& z, const Tensor& positional, std::span<const std::uint8_t> valid,
                const BlockParams& b, std::size_t index, const ModelConfig& c, Tensor* spatial_attention,
                Tensor* temporal_attention) {
  const std::size_t B = z.dim(0), T = z.dim(1), PK = c.tokens(), D = c.embed_dim, E = c.frame_width();
  const bool tight = c.positional_mode == PositionalMode::trainable_tight;
  Tensor u = reshape(z, {B * T, PK, D});
  if (tight || index == 0) u = reshape(add(reshape(z, {B, T, PK, D}), positional), {B * T, PK, D});
  Tensor s = add(spatial_mha(u, b, c, spatial_attention), u);
  Tensor sv = reshape(s, {B, T, E});
  if (tight) sv = add(sv, reshape(positional, {T, E}));
  Tensor zbar = add(temporal_mha(sv, valid, b, c, temporal_attention), sv);
  Tensor x = layer_norm(zbar, b.ln_mlp_gamma, b.ln_mlp_beta, c.ln_eps);
  Tensor m = linear(gelu(linear(x, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
  if (spatial_attention)
    *spatial_attention = reshape(*spatial_attention, {B, T, c.spatial_heads, PK, PK});
  return add(m, zbar);
}

ForwardOutput model_forward(const Batch& batch, const ModelParams& params, const ModelConfig& c,
                            bool capture_attention) {
  c.validate();
  if (batch.size == 0) throw DataError("model_forward: empty batch");
  if (batch.t_max > c.t_max)
    throw LengthError("batch length " + std::to_string(batch.t_max) + " exceeds T_max " + std::to_string(c.t_max));
  if (params.blocks.size() != c.blocks) throw ShapeError("model_forward: parameter/config block count mismatch");
  const std::size_t B = batch.size, T = batch.t_max, E = c.frame_width();
  ForwardOutput out;
  out.batch = B;
  out.frames = T;
  out.valid = batch.valid;
  Tensor positional = slice(params.positional, 0, T);
  Tensor z = reshape(embed_tokens(batch, params, c), {B, T, E});
  for (std::size_t n = 0; n < c.blocks; ++n) {
    Tensor sa, ta;
    z = gl_block(z, positional, out.valid, params.blocks[n], n, c, capture_attention ? &sa : nullptr,
                 capture_attention ? &ta : nullptr);
    out.block_outputs.push_back(z);
    if (capture_attention) {
      out.spatial_attention.push_back(sa);
      out.temporal_attention.push_back(ta);
    }
  }
  out.features = linear(gelu(linear(z, params.final_w1, params.final_b1)), params.final_w2, params.final_b2);
  return out;
}

Tensor pooled_representation(const ForwardOutput& out) { return masked_time_mean(out.features, out.valid); }

}  // namespace glmotion
