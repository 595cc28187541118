#include "glmotion/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <numeric>
#include <thread>

#include "glmotion/errors.hpp"

namespace glmotion {

Optimizer::Optimizer(std::vector<Tensor> params, OptimConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const auto& p : params_)
    for (double g : p.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; optimizer step aborted");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const bool decay = config_.algorithm == OptimAlgorithm::adamw && config_.weight_decay != 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      if (decay) w[j] -= config_.lr * config_.weight_decay * w[j];
      w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params)
      if (p.has_grad())
        for (double& g : p.impl()->grad_buffer()) g *= s;
  }
  return norm;
}

std::string InputMode::to_string() const {
  return natural() ? "natural" : "sampled:" + std::to_string(sampled_frames);
}

InputMode InputMode::parse(const std::string& text) {
  if (text == "natural") return {};
  const std::string prefix = "sampled:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string n = text.substr(prefix.size());
    if (!n.empty() && std::all_of(n.begin(), n.end(), [](unsigned char c) { return std::isdigit(c); })) {
      InputMode m;
      m.sampled_frames = std::stoul(n);
      if (m.sampled_frames >= 2) return m;
    }
  }
  throw UsageError("input mode must be 'natural' or 'sampled:<N>' with N >= 2, got '" + text + "'");
}

std::string to_string(InputRepresentation mode) {
  switch (mode) {
    case InputRepresentation::disentangled: return "disentangled";
    case InputRepresentation::local_only: return "local_only";
    case InputRepresentation::entangled: return "entangled";
  }
  return "disentangled";
}

InputRepresentation representation_from_string(const std::string& name) {
  if (name == "disentangled") return InputRepresentation::disentangled;
  if (name == "local_only") return InputRepresentation::local_only;
  if (name == "entangled") return InputRepresentation::entangled;
  throw UsageError("unknown representation '" + name + "' (disentangled|local_only|entangled)");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"lr_decay", lr_decay},
          {"weight_decay", weight_decay},
          {"clip_norm", clip_norm},
          {"max_steps", max_steps},
          {"checkpoint_every", checkpoint_every},
          {"shear", augment.shear},
          {"shear_amplitude", augment.shear_amplitude},
          {"interpolate", augment.interpolate},
          {"interp_frac", augment.interp_frac},
          {"corrupt", augment.corrupt},
          {"representation", to_string(representation)},
          {"input_mode", input_mode.to_string()},
          {"probe_epochs", probe_epochs},
          {"probe_batch_size", probe_batch_size},
          {"probe_lr", probe_lr},
          {"finetune_lr", finetune_lr},
          {"finetune_epochs", finetune_epochs},
          {"label_fraction", label_fraction}};
}

std::size_t env_threads() {
  const char* v = std::getenv("GLMOTION_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

DisentangledSequence prepare_sequence(const RawSequence& seq, const RunConfig& run, std::size_t t_max,
                                      Rng* augment_rng) {
  RawSequence s = seq;
  if (augment_rng) {
    if (run.augment.shear) s = shear_augment(s, *augment_rng, run.augment.shear_amplitude);
    if (run.augment.interpolate && run.input_mode.natural() && s.frames >= 2)
      s = resample_interp(s, *augment_rng, run.augment.interp_frac, t_max);
  }
  if (!run.input_mode.natural()) s = resample_to_length(s, run.input_mode.sampled_frames);
  if (augment_rng && run.augment.corrupt > 0) s = corrupt_joints(s, *augment_rng, run.augment.corrupt);
  return represent(s, run.representation);
}

std::string metrics_header(const MpdpConfig& cfg) {
  std::string h = "epoch,loss";
  for (auto n : cfg.intervals) h += ",dir_acc@" + std::to_string(n);
  for (auto n : cfg.intervals) h += ",mag_acc@" + std::to_string(n);
  return h + ",lr,wall_ms";
}

std::string metrics_line(const EpochMetrics& m) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string line = std::to_string(m.epoch) + "," + num(m.loss);
  for (double a : m.dir_acc) line += "," + num(a);
  for (double a : m.mag_acc) line += "," + num(a);
  line += "," + num(m.lr);
  std::snprintf(buf, sizeof buf, "%.3f", m.wall_ms);
  return line + "," + buf;
}

namespace {

Batch batch_of(const std::vector<DisentangledSequence>& seqs) {
  std::size_t t = 0;
  for (const auto& s : seqs) t = std::max(t, s.frames);
  return pad_and_mask(seqs, t);
}

MpdpTargets targets_of(const std::vector<DisentangledSequence>& seqs, const MpdpConfig& cfg, std::size_t t_max) {
  std::vector<MpdpTargets> per;
  per.reserve(seqs.size());
  for (const auto& s : seqs) per.push_back(build_targets(s, cfg));
  return stack_targets(per, t_max);
}

std::vector<Tensor> joined(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

std::vector<int> labels_of(const std::vector<RawSequence>& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    if (!s.label) throw DataError("sequence '" + s.id + "' has no label");
    out.push_back(*s.label);
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t e = x.dim(1);
  std::vector<double> v(rows.size() * e);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * e), e, v.begin() + static_cast<std::ptrdiff_t>(i * e));
  return Tensor::from({rows.size(), e}, std::move(v));
}

}  // namespace

PretrainResult pretrain(const std::vector<RawSequence>& data, ModelParams& params, MpdpHeads& heads,
                        const ModelConfig& model, const MpdpConfig& mpdp, const RunConfig& run,
                        const EpochCallback& on_epoch) {
  if (data.empty()) throw DataError("pretrain: empty dataset");
  model.validate();
  mpdp.validate();
  if (run.batch_size == 0) throw UsageError("batch size must be positive");
  Rng rng = stream_rng(run.seed, 1);
  auto trainable = joined(params.trainable(), heads.trainable());
  Optimizer opt(trainable, {OptimAlgorithm::adamw, run.lr, 0.9, 0.999, 1e-8, run.weight_decay});
  PretrainResult result;
  std::vector<std::size_t> order(data.size());
  std::size_t steps = 0;
  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    MpdpAccuracy acc;
    for (std::size_t begin = 0; begin < order.size(); begin += run.batch_size) {
      const std::size_t end = std::min(order.size(), begin + run.batch_size);
      std::vector<DisentangledSequence> seqs;
      for (std::size_t i = begin; i < end; ++i) seqs.push_back(prepare_sequence(data[order[i]], run, model.t_max, &rng));
      Batch batch = batch_of(seqs);
      MpdpTargets targets = targets_of(seqs, mpdp, batch.t_max);
      auto logits = heads_forward(model_forward(batch, params, model).features, heads, model, mpdp);
      Tensor loss = mpdp_loss(logits, targets, mpdp);
      acc.merge(mpdp_accuracy(logits, targets));
      opt.zero_grad();
      backward(loss);
      if (run.clip_norm > 0) clip_grad_norm(trainable, run.clip_norm);
      opt.step();
      const double l = loss.item();
      if (!std::isfinite(l)) throw NumericError("pretrain: loss is not finite at step " + std::to_string(steps + 1));
      result.step_losses.push_back(l);
      loss_sum += l;
      ++batches;
      if (run.max_steps && ++steps >= run.max_steps) break;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(batches);
    for (std::size_t i = 0; i < mpdp.intervals.size(); ++i) {
      m.dir_acc.push_back(acc.dir(i));
      m.mag_acc.push_back(acc.mag(i));
    }
    m.lr = opt.lr();
    m.steps = opt.steps();
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
    opt.set_lr(opt.lr() * run.lr_decay);
    if (run.max_steps && steps >= run.max_steps) break;
  }
  return result;
}

double mpdp_dataset_loss(const std::vector<RawSequence>& data, const ModelParams& params, const MpdpHeads& heads,
                         const ModelConfig& model, const MpdpConfig& mpdp, const RunConfig& run) {
  if (data.empty()) throw DataError("mpdp_dataset_loss: empty dataset");
  NoGradGuard guard;
  const std::size_t bs = std::max<std::size_t>(run.batch_size, 1);
  double weighted = 0.0, triples = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += bs) {
    std::vector<DisentangledSequence> seqs;
    for (std::size_t i = begin; i < std::min(data.size(), begin + bs); ++i)
      seqs.push_back(prepare_sequence(data[i], run, model.t_max, nullptr));
    Batch batch = batch_of(seqs);
    MpdpTargets targets = targets_of(seqs, mpdp, batch.t_max);
    auto logits = heads_forward(model_forward(batch, params, model).features, heads, model, mpdp);
    double n = static_cast<double>(std::count(batch.valid.begin(), batch.valid.end(), 1));
    weighted += mpdp_loss(logits, targets, mpdp).item() * n;
    triples += n;
  }
  return weighted / triples;
}

Tensor extract_features(const std::vector<RawSequence>& data, const ModelParams& params, const ModelConfig& model,
                        const RunConfig& run) {
  if (data.empty()) throw DataError("extract_features: empty dataset");
  constexpr std::size_t kChunk = 32;
  const std::size_t E = model.frame_width();
  const std::size_t chunks = (data.size() + kChunk - 1) / kChunk;
  std::vector<double> out(data.size() * E);
  std::vector<std::exception_ptr> errors(chunks);
  auto work = [&](std::size_t c) {
    try {
      NoGradGuard guard;
      std::vector<DisentangledSequence> seqs;
      for (std::size_t i = c * kChunk; i < std::min(data.size(), (c + 1) * kChunk); ++i)
        seqs.push_back(prepare_sequence(data[i], run, model.t_max, nullptr));
      Tensor pooled = pooled_representation(model_forward(batch_of(seqs), params, model));
      std::copy(pooled.data().begin(), pooled.data().end(), out.begin() + static_cast<std::ptrdiff_t>(c * kChunk * E));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(run.threads, 1), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) work(c);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return Tensor::from({data.size(), E}, std::move(out));
}

std::size_t class_count(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test) {
  auto tr = labels_of(train), te = labels_of(test);
  if (tr.empty()) throw DataError("no labeled training sequences");
  int max_label = 0;
  for (int l : tr) max_label = std::max(max_label, l);
  for (int l : te) max_label = std::max(max_label, l);
  std::vector<bool> present(static_cast<std::size_t>(max_label) + 1, false);
  for (int l : tr) {
    if (l < 0) throw DataError("negative class label");
    present[static_cast<std::size_t>(l)] = true;
  }
  for (std::size_t c = 0; c < present.size(); ++c)
    if (!present[c]) throw DataError("class " + std::to_string(c) + " is absent from the training split");
  return present.size();
}

double classifier_accuracy(const Tensor& features, const std::vector<int>& labels, const LinearClassifier& clf) {
  if (labels.empty()) return 0.0;
  NoGradGuard guard;
  Tensor logits = linear(features, clf.weight, clf.bias);
  const std::size_t C = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data().data() + i * C;
    if (std::max_element(row, row + C) - row == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

ProbeResult train_probe(const Tensor& train_features, const std::vector<int>& train_labels,
                        const Tensor& test_features, const std::vector<int>& test_labels, std::size_t classes,
                        const RunConfig& run) {
  const std::size_t N = train_features.dim(0), E = train_features.dim(1);
  if (N == 0) throw DataError("probe: empty training set");
  ProbeResult r;
  r.classes = classes;
  r.classifier.weight = Tensor::zeros({classes, E}, true);
  r.classifier.bias = Tensor::zeros({classes}, true);
  Optimizer opt({r.classifier.weight, r.classifier.bias}, {OptimAlgorithm::adam, run.probe_lr, 0.9, 0.999, 1e-8, 0.0});
  Rng rng = stream_rng(run.seed, 2);
  std::vector<std::size_t> order(N);
  const std::size_t bs = std::max<std::size_t>(run.probe_batch_size, 1);
  for (std::size_t epoch = 0; epoch < run.probe_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < N; begin += bs) {
      std::span<const std::size_t> rows(order.data() + begin, std::min(N, begin + bs) - begin);
      std::vector<int> y;
      for (auto i : rows) y.push_back(train_labels[i]);
      Tensor loss = cross_entropy_logits(linear(gather_rows(train_features, rows), r.classifier.weight, r.classifier.bias), y);
      opt.zero_grad();
      backward(loss);
      opt.step();
    }
  }
  r.train_accuracy = classifier_accuracy(train_features, train_labels, r.classifier);
  r.test_accuracy = classifier_accuracy(test_features, test_labels, r.classifier);
  return r;
}

ProbeResult linear_probe(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test,
                         const ModelParams& params, const ModelConfig& model, const RunConfig& run) {
  const std::size_t classes = class_count(train, test);
  Tensor ftr = extract_features(train, params, model, run);
  Tensor fte = test.empty() ? Tensor::zeros({0, model.frame_width()}) : extract_features(test, params, model, run);
  return train_probe(ftr, labels_of(train), fte, labels_of(test), classes, run);
}

std::vector<std::size_t> stratified_subset(const std::vector<RawSequence>& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("label fraction must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].label) throw DataError("sequence '" + data[i].id + "' has no label");
    by_class[*data[i].label].push_back(i);
  }
  if (by_class.empty()) throw DataError("no labeled sequences");
  std::vector<std::size_t> out;
  for (auto& [label, idx] : by_class) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (take == 0)
      throw DataError("label fraction " + std::to_string(fraction) + " leaves class " + std::to_string(label) +
                      " with no samples");
    shuffle(idx, rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

FinetuneResult finetune_semi(const std::vector<RawSequence>& train, const std::vector<RawSequence>& test,
                             const ModelParams& params, const ModelConfig& model, const RunConfig& run) {
  const std::size_t classes = class_count(train, test);
  Rng rng = stream_rng(run.seed, 3);
  auto subset = stratified_subset(train, run.label_fraction, rng);
  FinetuneResult r;
  r.train_samples = subset.size();
  r.per_class.assign(classes, 0);
  for (auto i : subset) ++r.per_class[static_cast<std::size_t>(*train[i].label)];

  ModelParams p = clone_params(params);
  LinearClassifier clf{Tensor::zeros({classes, model.frame_width()}, true), Tensor::zeros({classes}, true)};
  auto trainable = joined(p.trainable(), {clf.weight, clf.bias});
  Optimizer opt(trainable, {OptimAlgorithm::adamw, run.finetune_lr, 0.9, 0.999, 1e-8, run.weight_decay});
  const std::size_t bs = std::max<std::size_t>(run.batch_size, 1);
  for (std::size_t epoch = 0; epoch < run.finetune_epochs; ++epoch) {
    shuffle(subset, rng);
    for (std::size_t begin = 0; begin < subset.size(); begin += bs) {
      std::vector<DisentangledSequence> seqs;
      std::vector<int> y;
      for (std::size_t i = begin; i < std::min(subset.size(), begin + bs); ++i) {
        seqs.push_back(prepare_sequence(train[subset[i]], run, model.t_max, &rng));
        y.push_back(*train[subset[i]].label);
      }
      Tensor pooled = pooled_representation(model_forward(batch_of(seqs), p, model));
      Tensor loss = cross_entropy_logits(linear(pooled, clf.weight, clf.bias), y);
      opt.zero_grad();
      backward(loss);
      if (run.clip_norm > 0) clip_grad_norm(trainable, run.clip_norm);
      opt.step();
    }
  }
  if (!test.empty()) r.test_accuracy = classifier_accuracy(extract_features(test, p, model, run), labels_of(test), clf);
  return r;
}

void save_pretrained(const std::filesystem::path& path, const ModelParams& params, const MpdpHeads& heads,
                     const ModelConfig& model, const MpdpConfig& mpdp, const nlohmann::json& extra) {
  Checkpoint ck;
  ck.meta = extra.is_object() ? extra : nlohmann::json::object();
  ck.meta["kind"] = "glmotion-pretrained";
  ck.meta["model"] = model.to_json();
  ck.meta["mpdp"] = mpdp.to_json();
  ck.meta["heads"] = heads.dir_weight.size();
  ck.tensors = params.named();
  auto hn = heads.named();
  ck.tensors.insert(ck.tensors.end(), hn.begin(), hn.end());
  save_checkpoint(path, ck);
}

Pretrained load_pretrained(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("model") || !ck.meta.contains("mpdp"))
    throw FormatError(path.string() + " is not a pretrained-model checkpoint");
  Pretrained p;
  p.model = ModelConfig::from_json(ck.meta["model"]);
  p.mpdp = MpdpConfig::from_json(ck.meta["mpdp"]);
  Rng unused(0);
  p.params = init_model(p.model, unused);
  p.heads = init_heads(p.model, p.mpdp, unused, true);
  restore_tensors(ck, p.params.named());
  restore_tensors(ck, p.heads.named());
  p.meta = std::move(ck.meta);
  return p;
}

ModelParams clone_params(const ModelParams& src) {
  auto copy = [](const Tensor& t) { return Tensor::from(t.shape(), t.values(), t.requires_grad()); };
  ModelParams p;
  p.global_weight = copy(src.global_weight);
  p.global_bias = copy(src.global_bias);
  p.joint_weight = copy(src.joint_weight);
  p.joint_bias = copy(src.joint_bias);
  p.positional = copy(src.positional);
  for (const auto& b : src.blocks) {
    BlockParams c;
    for (auto [dst, from] : std::initializer_list<std::pair<Tensor*, const Tensor*>>{
             {&c.ln_spatial_gamma, &b.ln_spatial_gamma}, {&c.ln_spatial_beta, &b.ln_spatial_beta},
             {&c.spatial_query, &b.spatial_query},       {&c.spatial_key, &b.spatial_key},
             {&c.spatial_value, &b.spatial_value},       {&c.spatial_out, &b.spatial_out},
             {&c.ln_temporal_gamma, &b.ln_temporal_gamma}, {&c.ln_temporal_beta, &b.ln_temporal_beta},
             {&c.temporal_query, &b.temporal_query},     {&c.temporal_key, &b.temporal_key},
             {&c.temporal_value, &b.temporal_value},     {&c.temporal_out, &b.temporal_out},
             {&c.ln_mlp_gamma, &b.ln_mlp_gamma},         {&c.ln_mlp_beta, &b.ln_mlp_beta},
             {&c.mlp_w1, &b.mlp_w1},                     {&c.mlp_b1, &b.mlp_b1},
             {&c.mlp_w2, &b.mlp_w2},                     {&c.mlp_b2, &b.mlp_b2}})
      *dst = copy(*from);
    p.blocks.push_back(std::move(c));
  }
  p.final_w1 = copy(src.final_w1);
  p.final_b1 = copy(src.final_b1);
  p.final_w2 = copy(src.final_w2);
  p.final_b2 = copy(src.final_b2);
  return p;
}

std::uint64_t parameter_checksum(const ModelParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : params.named())
    for (double v : t.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) h = (h ^ b) * 1099511628211ULL;
    }
  return h;
}

}  // namespace glmotion
