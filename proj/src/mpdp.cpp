#include "glmotion/mpdp.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "glmotion/errors.hpp"

namespace glmotion {

std::vector<double> MpdpConfig::edges() const {
  if (!magnitude_edges.empty()) return magnitude_edges;
  std::vector<double> e;
  if (magnitude_classes < 2) return e;
  const std::size_t n = magnitude_classes - 1;
  if (n == 1) return {eps_dir};
  const double ratio = std::log(1.0 / eps_dir);
  for (std::size_t i = 0; i < n; ++i)
    e.push_back(eps_dir * std::exp(ratio * static_cast<double>(i) / static_cast<double>(n - 1)));
  e.back() = 1.0;
  return e;
}

void MpdpConfig::validate() const {
  if (intervals.empty()) throw ShapeError("mpdp: at least one interval is required");
  std::set<std::size_t> seen;
  for (auto n : intervals) {
    if (n == 0) throw ShapeError("mpdp: intervals must be positive");
    if (!seen.insert(n).second) throw ShapeError("mpdp: intervals must be distinct");
  }
  if (magnitude_classes < 1) throw ShapeError("mpdp: at least one magnitude class is required");
  if (!(eps_dir >= 0)) throw ShapeError("mpdp: eps_dir must be non-negative");
  auto e = edges();
  if (e.size() + 1 != magnitude_classes)
    throw ShapeError("mpdp: " + std::to_string(magnitude_classes) + " magnitude classes need " +
                     std::to_string(magnitude_classes - 1) + " edges, got " + std::to_string(e.size()));
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!(e[i] > 0)) throw ShapeError("mpdp: magnitude edges must be positive");
    if (i && !(e[i] > e[i - 1])) throw ShapeError("mpdp: magnitude edges must be strictly ascending");
  }
  if (!(lambda_dir >= 0) || !(lambda_mag >= 0)) throw ShapeError("mpdp: loss weights must be non-negative");
}

nlohmann::json MpdpConfig::to_json() const {
  return {{"intervals", intervals},   {"magnitude_classes", magnitude_classes},
          {"eps_dir", eps_dir},       {"magnitude_edges", edges()},
          {"lambda_dir", lambda_dir}, {"lambda_mag", lambda_mag}};
}

MpdpConfig MpdpConfig::from_json(const nlohmann::json& j) {
  MpdpConfig c;
  try {
    c.intervals = j.at("intervals").get<std::vector<std::size_t>>();
    c.magnitude_classes = j.at("magnitude_classes");
    c.eps_dir = j.at("eps_dir");
    c.magnitude_edges = j.at("magnitude_edges").get<std::vector<double>>();
    c.lambda_dir = j.at("lambda_dir");
    c.lambda_mag = j.at("lambda_mag");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mpdp config: ") + e.what());
  }
  c.validate();
  return c;
}

int direction_class(const Vec3& disp, double eps_dir) {
  int index = 0;
  for (double a : disp) {
    int s = a < -eps_dir ? 0 : (a > eps_dir ? 2 : 1);
    index = index * 3 + s;
  }
  return index;
}

int magnitude_class(const Vec3& disp, std::span<const double> edges) {
  const double m = std::sqrt(disp[0] * disp[0] + disp[1] * disp[1] + disp[2] * disp[2]);
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), m) - edges.begin());
}

MpdpTargets build_targets(const DisentangledSequence& d, const MpdpConfig& cfg) {
  const auto edges = cfg.edges();
  MpdpTargets out;
  out.frames = d.frames;
  out.persons = d.persons;
  out.joints = d.joints_local + 1;
  out.intervals = cfg.intervals.size();
  out.dir.assign(out.frames * out.persons * out.joints * out.intervals, kNeutralDirection);
  out.mag.assign(out.dir.size(), 0);
  out.loss_mask.assign(d.frames, 1);
  for (std::size_t t = 0; t < d.frames; ++t)
    for (std::size_t p = 0; p < d.persons; ++p)
      for (std::size_t i = 0; i < out.intervals; ++i) {
        const std::size_t n = cfg.intervals[i];
        if (t < n) continue;
        for (std::size_t k = 0; k < out.joints; ++k) {
          Vec3 now = k == 0 ? d.global(t, p) : d.local(t, p, k - 1);
          Vec3 then = k == 0 ? d.global(t - n, p) : d.local(t - n, p, k - 1);
          Vec3 disp{now[0] - then[0], now[1] - then[1], now[2] - then[2]};
          out.dir[out.index(t, p, k, i)] = direction_class(disp, cfg.eps_dir);
          out.mag[out.index(t, p, k, i)] = magnitude_class(disp, edges);
        }
      }
  return out;
}

MpdpTargets stack_targets(std::span<const MpdpTargets> targets, std::size_t t_max) {
  if (targets.empty()) throw DataError("stack_targets: no sequences");
  MpdpTargets out;
  out.persons = targets[0].persons;
  out.joints = targets[0].joints;
  out.intervals = targets[0].intervals;
  out.frames = targets.size() * t_max;
  const std::size_t per_frame = out.persons * out.joints * out.intervals;
  out.dir.assign(out.frames * per_frame, kNeutralDirection);
  out.mag.assign(out.frames * per_frame, 0);
  out.loss_mask.assign(out.frames, 0);
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto& t = targets[b];
    if (t.persons != out.persons || t.joints != out.joints || t.intervals != out.intervals)
      throw ShapeError("stack_targets: sequences disagree on P, K or interval count");
    if (t.frames > t_max)
      throw LengthError("stack_targets: sequence of " + std::to_string(t.frames) + " frames exceeds " +
                        std::to_string(t_max));
    std::copy(t.dir.begin(), t.dir.end(), out.dir.begin() + static_cast<std::ptrdiff_t>(b * t_max * per_frame));
    std::copy(t.mag.begin(), t.mag.end(), out.mag.begin() + static_cast<std::ptrdiff_t>(b * t_max * per_frame));
    std::copy(t.loss_mask.begin(), t.loss_mask.end(), out.loss_mask.begin() + static_cast<std::ptrdiff_t>(b * t_max));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> MpdpHeads::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < dir_weight.size(); ++i) {
    std::string p = "head" + std::to_string(i + 1) + ".";
    out.insert(out.end(), {{p + "dir_weight", dir_weight[i]},
                           {p + "dir_bias", dir_bias[i]},
                           {p + "mag_weight", mag_weight[i]},
                           {p + "mag_bias", mag_bias[i]}});
  }
  return out;
}

std::vector<Tensor> MpdpHeads::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

MpdpHeads init_heads(const ModelConfig& model, const MpdpConfig& cfg, Rng& rng, bool zero) {
  cfg.validate();
  const std::size_t E = model.frame_width(), PK = model.tokens();
  const double bound = 1.0 / std::sqrt(static_cast<double>(E));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto weight = [&](std::size_t rows) {
    std::vector<double> v(rows * E, 0.0);
    if (!zero)
      for (auto& x : v) x = dist(rng);
    return Tensor::from({rows, E}, std::move(v), true);
  };
  MpdpHeads h;
  for (std::size_t i = 0; i < cfg.intervals.size(); ++i) {
    h.dir_weight.push_back(weight(PK * kDirectionClasses));
    h.dir_bias.push_back(Tensor::zeros({PK * kDirectionClasses}, true));
    h.mag_weight.push_back(weight(PK * cfg.magnitude_classes));
    h.mag_bias.push_back(Tensor::zeros({PK * cfg.magnitude_classes}, true));
  }
  return h;
}

MpdpLogits heads_forward(const Tensor& features, const MpdpHeads& heads, const ModelConfig& model,
                         const MpdpConfig& cfg) {
  if (features.rank() != 3 || features.dim(2) != model.frame_width())
    throw ShapeError("heads_forward: expected F [B, T, " + std::to_string(model.frame_width()) + "], got " +
                     shape_str(features.shape()));
  if (heads.dir_weight.size() != cfg.intervals.size())
    throw ShapeError("heads_forward: " + std::to_string(heads.dir_weight.size()) + " heads for " +
                     std::to_string(cfg.intervals.size()) + " intervals");
  const std::size_t B = features.dim(0), T = features.dim(1), P = model.persons, K = model.joints;
  MpdpLogits out;
  for (std::size_t i = 0; i < cfg.intervals.size(); ++i) {
    if (heads.dir_weight[i].dim(0) != P * K * kDirectionClasses ||
        heads.mag_weight[i].dim(0) != P * K * cfg.magnitude_classes)
      throw ShapeError("heads_forward: head widths do not match P, K and class counts");
    out.dir.push_back(reshape(linear(features, heads.dir_weight[i], heads.dir_bias[i]), {B, T, P, K, kDirectionClasses}));
    out.mag.push_back(
        reshape(linear(features, heads.mag_weight[i], heads.mag_bias[i]), {B, T, P, K, cfg.magnitude_classes}));
  }
  return out;
}

namespace {

void check_layout(const MpdpLogits& logits, const MpdpTargets& targets) {
  if (logits.dir.empty() || logits.dir.size() != targets.intervals || logits.mag.size() != targets.intervals)
    throw ShapeError("mpdp: logits and targets disagree on the interval count");
  const Shape& s = logits.dir[0].shape();
  if (s.size() != 5 || s[0] * s[1] != targets.frames || s[2] != targets.persons || s[3] != targets.joints)
    throw ShapeError("mpdp: logits " + shape_str(s) + " do not match stacked targets");
}

std::vector<int> interval_targets(const std::vector<int>& all, const MpdpTargets& t, std::size_t i) {
  std::vector<int> out(t.frames * t.persons * t.joints);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = all[r * t.intervals + i];
  return out;
}

}  // namespace

Tensor mpdp_loss(const MpdpLogits& logits, const MpdpTargets& targets, const MpdpConfig& cfg) {
  check_layout(logits, targets);
  const std::size_t P = targets.persons, K = targets.joints, I = targets.intervals;
  const std::size_t valid_frames =
      static_cast<std::size_t>(std::count_if(targets.loss_mask.begin(), targets.loss_mask.end(), [](auto v) { return v != 0; }));
  if (valid_frames == 0) throw MaskError("mpdp_loss: every frame is masked");
  const double triples = static_cast<double>(valid_frames * P * I);
  const std::size_t rows = targets.frames * P * K;

  auto row_weights = [&](double lambda) {
    std::vector<double> w(rows, 0.0);
    const double v = lambda / (static_cast<double>(K) * triples);
    for (std::size_t r = 0; r < rows; ++r)
      if (targets.loss_mask[r / (P * K)]) w[r] = v;
    return w;
  };
  const auto w_dir = row_weights(cfg.lambda_dir);
  const auto w_mag = row_weights(cfg.lambda_mag);

  Tensor total;
  auto accumulate = [&](Tensor term) { total = total.defined() ? add(total, term) : term; };
  for (std::size_t i = 0; i < I; ++i) {
    if (cfg.lambda_dir != 0)
      accumulate(weighted_cross_entropy(reshape(logits.dir[i], {rows, kDirectionClasses}),
                                        interval_targets(targets.dir, targets, i), w_dir));
    if (cfg.lambda_mag != 0)
      accumulate(weighted_cross_entropy(reshape(logits.mag[i], {rows, logits.mag[i].shape().back()}),
                                        interval_targets(targets.mag, targets, i), w_mag));
  }
  if (!total.defined()) total = Tensor::scalar(0.0);
  return total;
}

void MpdpAccuracy::merge(const MpdpAccuracy& other) {
  if (dir_correct.empty()) {
    *this = other;
    return;
  }
  for (std::size_t i = 0; i < dir_correct.size(); ++i) {
    dir_correct[i] += other.dir_correct[i];
    mag_correct[i] += other.mag_correct[i];
  }
  rows += other.rows;
}

MpdpAccuracy mpdp_accuracy(const MpdpLogits& logits, const MpdpTargets& targets) {
  check_layout(logits, targets);
  const std::size_t P = targets.persons, K = targets.joints, I = targets.intervals;
  MpdpAccuracy acc;
  acc.dir_correct.assign(I, 0);
  acc.mag_correct.assign(I, 0);
  auto argmax = [](const double* row, std::size_t n) {
    return static_cast<int>(std::max_element(row, row + n) - row);
  };
  for (std::size_t f = 0; f < targets.frames; ++f) {
    if (!targets.loss_mask[f]) continue;
    acc.rows += P * K;
    for (std::size_t i = 0; i < I; ++i) {
      const std::size_t cm = logits.mag[i].shape().back();
      for (std::size_t j = 0; j < P * K; ++j) {
        const std::size_t row = f * P * K + j;
        if (argmax(logits.dir[i].data().data() + row * kDirectionClasses, kDirectionClasses) ==
            targets.dir[row * I + i])
          ++acc.dir_correct[i];
        if (argmax(logits.mag[i].data().data() + row * cm, cm) == targets.mag[row * I + i]) ++acc.mag_correct[i];
      }
    }
  }
  return acc;
}

}  // namespace glmotion
