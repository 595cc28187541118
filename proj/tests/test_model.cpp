#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "glmotion/checkpoint.hpp"
#include "glmotion/errors.hpp"
#include "glmotion/model.hpp"
#include "glmotion/synth.hpp"
#include "test_util.hpp"

using namespace glmotion;

namespace {

ModelConfig tiny_config(std::size_t K = 3, std::size_t P = 1, std::size_t D = 4, std::size_t N = 2) {
  ModelConfig c;
  c.joints = K;
  c.persons = P;
  c.embed_dim = D;
  c.blocks = N;
  c.spatial_heads = 2;
  c.temporal_heads = 2;
  c.t_max = 40;
  return c;
}

std::vector<DisentangledSequence> random_sequences(Rng& rng, std::size_t count, std::size_t K, std::size_t P,
                                                   std::size_t min_t, std::size_t max_t) {
  std::uniform_int_distribution<std::size_t> len(min_t, max_t);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<DisentangledSequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    DisentangledSequence d;
    d.frames = len(rng);
    d.persons = P;
    d.joints_local = K - 1;
    d.g.resize(d.frames * P * 3);
    d.r.resize(d.frames * P * (K - 1) * 3);
    for (auto& v : d.g) v = u(rng);
    for (auto& v : d.r) v = u(rng);
    out.push_back(d);
  }
  return out;
}

// Perturbs every parameter so LayerNorm affine terms, biases and M are nonzero.
void jitter(ModelParams& p, Rng& rng, double amp = 0.3) {
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& [name, t] : p.named())
    if (t.requires_grad())
      for (auto& v : t.mutable_data()) v += u(rng);
}

// Independent nested-loop forward of one sequence (all frames valid).
using Mat = std::vector<std::vector<double>>;

Mat layer_norm_rows(const Mat& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double m = 0, v = 0;
    for (double a : x[i]) m += a;
    m /= static_cast<double>(x[i].size());
    for (double a : x[i]) v += (a - m) * (a - m);
    v /= static_cast<double>(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - m) / std::sqrt(v + eps) * gamma.data()[j] + beta.data()[j];
  }
  return out;
}

// x [n][in] times W stored [in][out]
Mat times(const Mat& x, const Tensor& w) {
  std::size_t in = w.dim(0), outw = w.dim(1);
  Mat out(x.size(), std::vector<double>(outw, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < outw; ++o)
      for (std::size_t k = 0; k < in; ++k) out[i][o] += x[i][k] * w.data()[k * outw + o];
  return out;
}

// x [n][in], W stored [out][in], bias [out]
Mat affine(const Mat& x, const Tensor& w, const Tensor& b) {
  std::size_t outw = w.dim(0), in = w.dim(1);
  Mat out(x.size(), std::vector<double>(outw, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < outw; ++o) {
      double s = b.data()[o];
      for (std::size_t k = 0; k < in; ++k) s += x[i][k] * w.data()[o * in + k];
      out[i][o] = s;
    }
  return out;
}

Mat gelu_rows(Mat x) {
  for (auto& row : x)
    for (auto& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return x;
}

Mat attention(const Mat& x, const Tensor& wq, const Tensor& wk, const Tensor& wv, const Tensor& wo,
              std::size_t heads) {
  Mat q = times(x, wq), k = times(x, wk), v = times(x, wv);
  std::size_t n = x.size(), d = wq.dim(1) / heads;
  Mat o(n, std::vector<double>(heads * d, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logit(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += q[i][h * d + c] * k[j][h * d + c];
        logit[j] = s / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, logit[j]);
      }
      double z = 0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) o[i][h * d + c] += logit[j] / z * v[j][h * d + c];
    }
  return times(o, wo);
}

Mat naive_forward(const DisentangledSequence& s, const ModelParams& p, const ModelConfig& c) {
  const std::size_t T = s.frames, P = c.persons, K = c.joints, D = c.embed_dim, PK = P * K;
  const bool tight = c.positional_mode == PositionalMode::trainable_tight;
  auto M = [&](std::size_t t, std::size_t j, std::size_t e) { return p.positional.data()[(t * PK + j) * D + e]; };
  // tokens[t][j][e]
  std::vector<Mat> z(T, Mat(PK, std::vector<double>(D)));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t pp = 0; pp < P; ++pp)
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t e = 0; e < D; ++e) {
          const Tensor& w = k == 0 ? p.global_weight : p.joint_weight;
          const Tensor& b = k == 0 ? p.global_bias : p.joint_bias;
          double acc = b.data()[e];
          for (std::size_t a = 0; a < 3; ++a) {
            double x = k == 0 ? s.g[s.g_offset(t, pp) + a] : s.r[s.r_offset(t, pp, k - 1) + a];
            acc += w.data()[e * 3 + a] * x;
          }
          z[t][pp * K + k][e] = acc;
        }
  for (std::size_t n = 0; n < c.blocks; ++n) {
    const auto& b = p.blocks[n];
    Mat frames(T, std::vector<double>(PK * D));
    for (std::size_t t = 0; t < T; ++t) {
      Mat u = z[t];
      if (tight || n == 0)
        for (std::size_t j = 0; j < PK; ++j)
          for (std::size_t e = 0; e < D; ++e) u[j][e] += M(t, j, e);
      Mat a = attention(layer_norm_rows(u, b.ln_spatial_gamma, b.ln_spatial_beta, c.ln_eps), b.spatial_query,
                        b.spatial_key, b.spatial_value, b.spatial_out, c.spatial_heads);
      for (std::size_t j = 0; j < PK; ++j)
        for (std::size_t e = 0; e < D; ++e)
          frames[t][j * D + e] = a[j][e] + u[j][e] + (tight ? M(t, j, e) : 0.0);
    }
    Mat a = attention(layer_norm_rows(frames, b.ln_temporal_gamma, b.ln_temporal_beta, c.ln_eps), b.temporal_query,
                      b.temporal_key, b.temporal_value, b.temporal_out, c.temporal_heads);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < PK * D; ++i) a[t][i] += frames[t][i];
    Mat m = affine(gelu_rows(affine(layer_norm_rows(a, b.ln_mlp_gamma, b.ln_mlp_beta, c.ln_eps), b.mlp_w1, b.mlp_b1)),
                   b.mlp_w2, b.mlp_b2);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < PK; ++j)
        for (std::size_t e = 0; e < D; ++e) z[t][j][e] = m[t][j * D + e] + a[t][j * D + e];
  }
  Mat flat(T, std::vector<double>(PK * D));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < PK; ++j)
      for (std::size_t e = 0; e < D; ++e) flat[t][j * D + e] = z[t][j][e];
  return affine(gelu_rows(affine(flat, p.final_w1, p.final_b1)), p.final_w2, p.final_b2);
}

}  // namespace

TEST_CASE("parameter count") {
  ModelConfig ntu;  // K=25, P=2, D=6, N=4, T_max=300
  // embeddings 48; M 300*50*6 = 90000; per block: spatial LN 12 + 4 6x6 = 144,
  // temporal LN 600 + 3*300*296 + 296*300 = 355200, MLP LN 600 + 2*1200*300 + 1500;
  // final MLP 721500
  std::size_t block_ntu = 12 + 144 + 600 + 355200 + 600 + 721500;
  CHECK(parameter_count(ntu) == 48 + 90000 + 4 * block_ntu + 721500);
  CHECK(parameter_count(ntu) == 5123772);

  ModelConfig ucla;
  ucla.joints = 20;
  ucla.persons = 1;
  // E = 120, d_t = 15, H = 480
  std::size_t block_ucla = 12 + 144 + 240 + 4 * 120 * 120 + 240 + (2 * 480 * 120 + 480 + 120);
  std::size_t final_ucla = 2 * 480 * 120 + 480 + 120;
  CHECK(parameter_count(ucla) == 48 + 300 * 20 * 6 + 4 * block_ucla + final_ucla);
  CHECK(parameter_count(ucla) == 847992);

  for (const auto& cfg : {ntu, ucla, tiny_config()}) {
    Rng rng(1);
    std::size_t total = 0;
    for (auto& [name, t] : init_model(cfg, rng).named()) total += t.numel();
    CHECK(total == parameter_count(cfg));
  }
  CHECK(ntu.frame_width() == 300);
  CHECK(ntu.tokens() == 50);
  CHECK(ntu.d_temporal() == 37);
}

TEST_CASE("embed_tokens") {
  ModelConfig c = tiny_config(3, 2, 6, 1);
  Rng rng(2);
  ModelParams p = init_model(c, rng);
  std::vector<DisentangledSequence> seqs = random_sequences(rng, 1, 3, 2, 2, 2);

  SUBCASE("zero inputs with zero biases give zero tokens") {
    for (auto& v : seqs[0].g) v = 0;
    for (auto& v : seqs[0].r) v = 0;
    Batch b = pad_and_mask(seqs, 2);
    Tensor z = embed_tokens(b, p, c);
    for (double v : z.data()) CHECK(v == 0.0);
  }
  SUBCASE("identity-like W_g") {
    for (auto& v : p.global_weight.mutable_data()) v = 0;
    for (std::size_t i = 0; i < 3; ++i) p.global_weight.mutable_data()[i * 3 + i] = 1;
    seqs[0].g[0] = 1, seqs[0].g[1] = 2, seqs[0].g[2] = 3;
    Batch b = pad_and_mask(seqs, 2);
    Tensor z = embed_tokens(b, p, c);
    CHECK(z.shape() == Shape{1, 2, 6, 6});
    std::vector<double> first(z.data().begin(), z.data().begin() + 6);
    CHECK(first == std::vector<double>{1, 2, 3, 0, 0, 0});
  }
  SUBCASE("token order: person 0 global, locals, then person 1") {
    Batch b = pad_and_mask(seqs, 2);
    Tensor z = embed_tokens(b, p, c);
    auto token = [&](std::size_t t, std::size_t j) {
      return std::vector<double>(z.data().begin() + (t * 6 + j) * 6, z.data().begin() + (t * 6 + j + 1) * 6);
    };
    auto expect = [&](const Tensor& w, const double* x) {
      std::vector<double> e(6);
      for (std::size_t i = 0; i < 6; ++i) e[i] = w.data()[i * 3] * x[0] + w.data()[i * 3 + 1] * x[1] + w.data()[i * 3 + 2] * x[2];
      return e;
    };
    const auto& s = seqs[0];
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t pp = 0; pp < 2; ++pp) {
        auto tg = token(t, pp * 3), eg = expect(p.global_weight, &s.g[s.g_offset(t, pp)]);
        for (std::size_t i = 0; i < 6; ++i) CHECK(tg[i] == doctest::Approx(eg[i]).epsilon(1e-14));
        for (std::size_t k = 0; k < 2; ++k) {
          auto tr = token(t, pp * 3 + 1 + k), er = expect(p.joint_weight, &s.r[s.r_offset(t, pp, k)]);
          for (std::size_t i = 0; i < 6; ++i) CHECK(tr[i] == doctest::Approx(er[i]).epsilon(1e-14));
        }
      }
  }
  SUBCASE("NTU token count") {
    ModelConfig ntu;
    ntu.t_max = 4;
    Rng r2(5);
    ModelParams pn = init_model(ntu, r2);
    Batch b = pad_and_mask(random_sequences(r2, 1, 25, 2, 3, 3), 4);
    CHECK(embed_tokens(b, pn, ntu).shape() == Shape{1, 4, 50, 6});
  }
}

TEST_CASE("forward matches a nested-loop oracle") {
  for (auto mode : {PositionalMode::trainable_tight, PositionalMode::trainable_once, PositionalMode::fixed_sinusoidal}) {
    CAPTURE(to_string(mode));
    ModelConfig c = tiny_config(3, 2, 4, 2);
    c.positional_mode = mode;
    Rng rng(7);
    ModelParams p = init_model(c, rng);
    jitter(p, rng);
    auto seqs = random_sequences(rng, 1, 3, 2, 6, 6);
    auto out = model_forward(pad_and_mask(seqs, 6), p, c);
    Mat expect = naive_forward(seqs[0], p, c);
    const std::size_t E = c.frame_width();
    CHECK(out.features.shape() == Shape{1, 6, E});
    double worst = 0;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t i = 0; i < E; ++i) worst = std::max(worst, std::abs(out.features.data()[t * E + i] - expect[t][i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("padding and batching invariance") {
  ModelConfig c = tiny_config(3, 1, 4, 2);
  c.t_max = 40;
  Rng rng(11);
  ModelParams p = init_model(c, rng);
  jitter(p, rng);
  auto seqs = random_sequences(rng, 3, 3, 1, 5, 12);
  const std::size_t E = c.frame_width();

  std::vector<DisentangledSequence> one{seqs[0]};
  auto a = model_forward(pad_and_mask(one, 20), p, c);
  auto b = model_forward(pad_and_mask(one, 40), p, c);
  auto mixed = model_forward(pad_and_mask(seqs, 40), p, c);
  for (std::size_t t = 0; t < seqs[0].frames; ++t)
    for (std::size_t i = 0; i < E; ++i) {
      double fa = a.features.data()[t * E + i];
      CHECK(std::abs(fa - b.features.data()[t * E + i]) <= 1e-9);
      CHECK(std::abs(fa - mixed.features.data()[t * E + i]) <= 1e-9);
    }
  Tensor pa = pooled_representation(a), pb = pooled_representation(b);
  for (std::size_t i = 0; i < E; ++i) CHECK(std::abs(pa.data()[i] - pb.data()[i]) <= 1e-12);

  SUBCASE("garbage in pad slots does not reach valid frames") {
    Batch batch = pad_and_mask(one, 20);
    auto clean = model_forward(batch, p, c);
    for (std::size_t t = seqs[0].frames; t < 20; ++t) {
      for (std::size_t i = 0; i < 3; ++i) batch.g[t * 3 + i] = 1e6 * static_cast<double>(t + i);
      for (std::size_t i = 0; i < 6; ++i) batch.r[t * 6 + i] = -3e5;
    }
    auto dirty = model_forward(batch, p, c);
    for (std::size_t t = 0; t < seqs[0].frames; ++t)
      for (std::size_t i = 0; i < E; ++i) CHECK(clean.features.data()[t * E + i] == dirty.features.data()[t * E + i]);
  }
  SUBCASE("deterministic") {
    auto again = model_forward(pad_and_mask(seqs, 40), p, c);
    CHECK(again.features.values() == mixed.features.values());
  }
}

TEST_CASE("attention maps") {
  ModelConfig c = tiny_config(3, 2, 4, 2);
  Rng rng(13);
  ModelParams p = init_model(c, rng);
  jitter(p, rng);
  auto seqs = random_sequences(rng, 2, 3, 2, 4, 9);
  Batch batch = pad_and_mask(seqs, 10);
  auto out = model_forward(batch, p, c, true);
  const std::size_t B = 2, T = 10, PK = 6;
  REQUIRE(out.spatial_attention.size() == 2);
  REQUIRE(out.temporal_attention.size() == 2);
  for (std::size_t n = 0; n < 2; ++n) {
    const auto& s = out.spatial_attention[n];
    CHECK(s.shape() == Shape{B, T, 2, PK, PK});
    for (std::size_t row = 0; row < s.numel() / PK; ++row) {
      double sum = 0;
      for (std::size_t k = 0; k < PK; ++k) sum += s.data()[row * PK + k];
      CHECK(std::abs(sum - 1) < 1e-12);
    }
    const auto& t = out.temporal_attention[n];
    CHECK(t.shape() == Shape{B, 2, T, T});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t q = 0; q < T; ++q) {
          double sum = 0;
          for (std::size_t k = 0; k < T; ++k) {
            double a = t.data()[((b * 2 + h) * T + q) * T + k];
            if (k >= seqs[b].frames) CHECK(a == 0.0);
            sum += a;
          }
          CHECK(std::abs(sum - 1) < 1e-12);
        }
  }

  SUBCASE("p2p off: cross-person attention is exactly zero") {
    c.p2p_attention = false;
    auto masked = model_forward(batch, p, c, true);
    for (const auto& s : masked.spatial_attention)
      for (std::size_t m = 0; m < s.numel() / (PK * PK); ++m)
        for (std::size_t i = 0; i < PK; ++i)
          for (std::size_t j = 0; j < PK; ++j)
            if (i / 3 != j / 3) CHECK(s.data()[(m * PK + i) * PK + j] == 0.0);
  }
  SUBCASE("single valid frame attends to itself") {
    auto short_seqs = random_sequences(rng, 1, 3, 2, 1, 1);
    auto o = model_forward(pad_and_mask(short_seqs, 4), p, c, true);
    for (const auto& t : o.temporal_attention)
      for (std::size_t h = 0; h < 2; ++h) CHECK(t.data()[h * 16] == 1.0);
  }
  SUBCASE("zero query weights give uniform temporal attention") {
    for (auto& blk : p.blocks)
      for (auto& v : blk.temporal_query.mutable_data()) v = 0;
    auto five = random_sequences(rng, 1, 3, 2, 5, 5);
    auto o = model_forward(pad_and_mask(five, 8), p, c, true);
    for (const auto& t : o.temporal_attention)
      for (std::size_t q = 0; q < 5; ++q)
        for (std::size_t k = 0; k < 5; ++k) CHECK(t.data()[q * 8 + k] == doctest::Approx(0.2).epsilon(1e-14));
  }
}

TEST_CASE("spatial_mha") {
  ModelConfig c = tiny_config(3, 2, 4, 1);
  Rng rng(17);
  ModelParams p = init_model(c, rng);
  jitter(p, rng);
  const auto& blk = p.blocks[0];

  SUBCASE("identical tokens give identical rows") {
    std::vector<double> v(6 * 4);
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t e = 0; e < 4; ++e) v[j * 4 + e] = 0.1 * static_cast<double>(e) - 0.2;
    Tensor out = spatial_mha(Tensor::from({1, 6, 4}, v), blk, c);
    for (std::size_t j = 1; j < 6; ++j)
      for (std::size_t e = 0; e < 4; ++e) CHECK(out.data()[j * 4 + e] == out.data()[e]);
  }
  SUBCASE("single token: weight 1, output is the value path") {
    ModelConfig one = tiny_config(1, 1, 4, 1);
    Rng r1(3);
    ModelParams p1 = init_model(one, r1);
    jitter(p1, r1);
    Tensor x = testing::random_tensor(r1, {1, 1, 4}, false);
    Tensor att;
    Tensor out = spatial_mha(x, p1.blocks[0], one, &att);
    CHECK(att.values() == std::vector<double>{1.0, 1.0});
    const auto& b = p1.blocks[0];
    Tensor expect = matmul(matmul(layer_norm(x, b.ln_spatial_gamma, b.ln_spatial_beta), b.spatial_value), b.spatial_out);
    for (std::size_t e = 0; e < 4; ++e) CHECK(out.data()[e] == doctest::Approx(expect.data()[e]).epsilon(1e-14));
  }
  SUBCASE("p2p off: person 1 outputs do not depend on person 2 inputs") {
    c.p2p_attention = false;
    Tensor x = testing::random_tensor(rng, {2, 6, 4});
    Tensor out = spatial_mha(x, blk, c);
    Tensor first = slice(reshape(permute(reshape(out, {2, 2, 3, 4}), {1, 0, 2, 3}), {2, 24}), 0, 1);
    sum(first).backward();
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t j = 3; j < 6; ++j)
        for (std::size_t e = 0; e < 4; ++e) CHECK(x.grad()[(f * 6 + j) * 4 + e] == 0.0);
    bool some_nonzero = false;
    for (std::size_t i = 0; i < 12; ++i) some_nonzero |= x.grad()[i] != 0.0;
    CHECK(some_nonzero);
  }
}

TEST_CASE("gl_block residual arithmetic and positional modes") {
  ModelConfig c = tiny_config(3, 1, 4, 2);
  Rng rng(19);
  ModelParams p = init_model(c, rng);
  jitter(p, rng);

  SUBCASE("zero attention, value and MLP weights: Z + M + M_bar") {
    auto& b = p.blocks[0];
    for (Tensor* t : {&b.spatial_query, &b.spatial_key, &b.spatial_value, &b.spatial_out, &b.temporal_query,
                      &b.temporal_key, &b.temporal_value, &b.temporal_out, &b.mlp_w1, &b.mlp_b1, &b.mlp_w2, &b.mlp_b2})
      for (auto& v : t->mutable_data()) v = 0;
    Tensor z = testing::random_tensor(rng, {1, 5, 12}, false);
    Tensor m = slice(p.positional, 0, 5);
    Mask valid(5, 1);
    Tensor out = gl_block(z, m, valid, b, 0, c);
    for (std::size_t i = 0; i < 60; ++i) CHECK(out.data()[i] == z.data()[i] + m.data()[i] + m.data()[i]);
    c.positional_mode = PositionalMode::trainable_once;
    Tensor once0 = gl_block(z, m, valid, b, 0, c);
    Tensor once1 = gl_block(z, m, valid, b, 1, c);
    for (std::size_t i = 0; i < 60; ++i) {
      CHECK(once0.data()[i] == z.data()[i] + m.data()[i]);
      CHECK(once1.data()[i] == z.data()[i]);
    }
  }
  SUBCASE("M receives gradient from every block only in tight mode") {
    auto seqs = random_sequences(rng, 1, 3, 1, 4, 4);
    Batch batch = pad_and_mask(seqs, 4);
    for (auto mode : {PositionalMode::trainable_tight, PositionalMode::trainable_once}) {
      c.positional_mode = mode;
      // Gradient of a block-2-only quantity with respect to M, through the
      // block-1 output detached: nonzero only when M is re-injected in block 2.
      Tensor positional = slice(p.positional, 0, 4);
      Tensor z1 = model_forward(batch, p, c).block_outputs[0].detach();
      p.positional.zero_grad();
      Tensor z2 = gl_block(z1, positional, batch.valid, p.blocks[1], 1, c);
      sum(mul(z2, z2)).backward();
      bool any = false;
      for (double g : p.positional.grad()) any |= g != 0.0;
      CHECK(any == (mode == PositionalMode::trainable_tight));
    }
  }
  SUBCASE("sinusoidal mode: M is fixed") {
    c.positional_mode = PositionalMode::fixed_sinusoidal;
    Rng r2(1);
    ModelParams ps = init_model(c, r2);
    CHECK_FALSE(ps.positional.requires_grad());
    CHECK(ps.trainable().size() + 1 == ps.named().size());
    CHECK(ps.positional.data()[0] == 0.0);  // sin(0)
    CHECK(ps.positional.data()[1] == 1.0);  // cos(0)
  }
}

TEST_CASE("forward errors") {
  ModelConfig c = tiny_config(3, 1, 4, 1);
  c.t_max = 8;
  Rng rng(23);
  ModelParams p = init_model(c, rng);
  auto seqs = random_sequences(rng, 1, 3, 1, 4, 4);
  CHECK_THROWS_AS(model_forward(pad_and_mask(seqs, 9), p, c), LengthError);
  auto wrong_k = random_sequences(rng, 1, 4, 1, 4, 4);
  CHECK_THROWS_AS(model_forward(pad_and_mask(wrong_k, 4), p, c), ShapeError);
  Batch batch = pad_and_mask(seqs, 4);
  std::fill(batch.valid.begin(), batch.valid.end(), 0);
  CHECK_THROWS_AS(model_forward(batch, p, c), MaskError);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig c = tiny_config(3, 2, 4, 2);
  Rng rng(29);
  ModelParams p = init_model(c, rng);
  jitter(p, rng);
  Checkpoint ck;
  ck.meta["model"] = c.to_json();
  ck.tensors = p.named();
  auto path = std::filesystem::temp_directory_path() / "glmotion_test_model.ckpt";
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  ModelConfig c2 = ModelConfig::from_json(back.meta["model"]);
  CHECK(c2.to_json() == c.to_json());
  Rng other(99);
  ModelParams p2 = init_model(c2, other);
  restore_tensors(back, p2.named());
  auto a = p.named(), b = p2.named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.values() == b[i].second.values());
  }
  auto seqs = random_sequences(rng, 2, 3, 2, 3, 7);
  Batch batch = pad_and_mask(seqs, 7);
  CHECK(model_forward(batch, p, c).features.values() == model_forward(batch, p2, c2).features.values());

  {
    std::ofstream junk(path, std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}
