#include "glmotion/cli_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

namespace glmotion {

CliConfig::CliConfig() {
  model.joints = 0;
  model.persons = 0;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
    throw UsageError("invalid value for " + key + ": '" + v + "' (expected a non-negative integer)");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
    throw UsageError("invalid value for " + key + ": '" + v + "' (expected a number)");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw UsageError("invalid value for " + key + ": '" + v + "' (expected true/false)");
}

std::string from_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Entry {
  ConfigKey key;
  std::function<void(CliConfig&, const std::string&)> set;
  std::function<std::string(const CliConfig&)> get;
};

#define SIZE_KEY(name, field, help)                                                             \
  Entry{{name, help}, [](CliConfig& c, const std::string& v) { c.field = to_size(name, v); }, \
        [](const CliConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(name, field, help)                                                             \
  Entry{{name, help}, [](CliConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const CliConfig& c) { return from_double(c.field); }}
#define BOOL_KEY(name, field, help)                                                             \
  Entry{{name, help}, [](CliConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
        [](const CliConfig& c) { return from_bool(c.field); }}
#define STRING_KEY(name, field, help) \
  Entry{{name, help}, [](CliConfig& c, const std::string& v) { c.field = v; }, [](const CliConfig& c) { return c.field; }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      STRING_KEY("data", data, "dataset directory (uses <data>/train when present)"),
      STRING_KEY("test-data", test_data, "evaluation dataset (default <data>/test)"),
      STRING_KEY("out", out, "output directory"),
      STRING_KEY("checkpoint", checkpoint, "pretrained checkpoint; empty = random backbone"),
      STRING_KEY("input", input, "NTU .skeleton file or directory"),
      SIZE_KEY("seed", run.seed, "master seed"),

      SIZE_KEY("joints", model.joints, "K incl. center joint; 0 = from data"),
      SIZE_KEY("persons", model.persons, "P; 0 = from data"),
      SIZE_KEY("embed-dim", model.embed_dim, "D, per-token width"),
      SIZE_KEY("blocks", model.blocks, "N, number of GL blocks"),
      SIZE_KEY("spatial-heads", model.spatial_heads, "spatial attention heads"),
      SIZE_KEY("temporal-heads", model.temporal_heads, "temporal attention heads"),
      SIZE_KEY("spatial-head-dim", model.spatial_head_dim, "0 = D / spatial-heads"),
      SIZE_KEY("temporal-head-dim", model.temporal_head_dim, "0 = P*K*D / temporal-heads"),
      SIZE_KEY("mlp-hidden", model.mlp_hidden, "0 = 4 * P*K*D"),
      SIZE_KEY("t-max", model.t_max, "maximum frames"),
      DOUBLE_KEY("ln-eps", model.ln_eps, "LayerNorm epsilon"),
      Entry{{"positional-mode", "tight | once | sinusoidal"},
            [](CliConfig& c, const std::string& v) { c.model.positional_mode = positional_mode_from_string(v); },
            [](const CliConfig& c) { return to_string(c.model.positional_mode); }},
      BOOL_KEY("p2p", model.p2p_attention, "attention between persons"),

      Entry{{"intervals", "MPDP frame intervals, comma list"},
            [](CliConfig& c, const std::string& v) { c.mpdp.intervals = parse_size_list(v); },
            [](const CliConfig& c) { return join(c.mpdp.intervals); }},
      SIZE_KEY("magnitude-classes", mpdp.magnitude_classes, "magnitude bins C_sigma"),
      DOUBLE_KEY("eps-dir", mpdp.eps_dir, "direction dead zone (m)"),
      DOUBLE_KEY("lambda-dir", mpdp.lambda_dir, "direction loss weight"),
      DOUBLE_KEY("lambda-sigma", mpdp.lambda_mag, "magnitude loss weight; 0 disables"),

      SIZE_KEY("epochs", run.epochs, "pretraining epochs"),
      SIZE_KEY("batch-size", run.batch_size, "pretraining batch size"),
      DOUBLE_KEY("lr", run.lr, "pretraining learning rate"),
      DOUBLE_KEY("lr-decay", run.lr_decay, "per-epoch lr factor"),
      DOUBLE_KEY("weight-decay", run.weight_decay, "AdamW decoupled decay"),
      DOUBLE_KEY("clip-norm", run.clip_norm, "global gradient norm cap; 0 disables"),
      SIZE_KEY("max-steps", run.max_steps, "stop after this many steps; 0 = no limit"),
      SIZE_KEY("checkpoint-every", run.checkpoint_every, "epochs between checkpoints; 0 = final only"),
      BOOL_KEY("shear", run.augment.shear, "shear augmentation"),
      DOUBLE_KEY("shear-amplitude", run.augment.shear_amplitude, "shear off-diagonal bound"),
      BOOL_KEY("interpolate", run.augment.interpolate, "length-interpolation augmentation"),
      DOUBLE_KEY("interp-frac", run.augment.interp_frac, "length change bound"),
      DOUBLE_KEY("corrupt", run.augment.corrupt, "joint corruption proportion"),
      Entry{{"representation", "disentangled | local_only | entangled"},
            [](CliConfig& c, const std::string& v) { c.run.representation = representation_from_string(v); },
            [](const CliConfig& c) { return to_string(c.run.representation); }},
      Entry{{"input-mode", "natural | sampled:<N>"},
            [](CliConfig& c, const std::string& v) { c.run.input_mode = InputMode::parse(v); },
            [](const CliConfig& c) { return c.run.input_mode.to_string(); }},
      SIZE_KEY("probe-epochs", run.probe_epochs, "linear probe epochs"),
      SIZE_KEY("probe-batch-size", run.probe_batch_size, "linear probe batch size"),
      DOUBLE_KEY("probe-lr", run.probe_lr, "linear probe learning rate"),
      DOUBLE_KEY("finetune-lr", run.finetune_lr, "fine-tuning learning rate"),
      SIZE_KEY("finetune-epochs", run.finetune_epochs, "fine-tuning epochs"),
      DOUBLE_KEY("label-fraction", run.label_fraction, "labeled fraction for fine-tuning"),

      SIZE_KEY("classes", synth.n_classes, "synthetic classes"),
      SIZE_KEY("per-class", synth.n_per_class, "synthetic training sequences per class"),
      SIZE_KEY("test-per-class", test_per_class, "synthetic test sequences per class"),
      SIZE_KEY("synth-joints", synth.joints, "synthetic K"),
      SIZE_KEY("synth-persons", synth.persons, "synthetic P"),
      SIZE_KEY("min-frames", synth.min_frames, "synthetic minimum length"),
      SIZE_KEY("max-frames", synth.max_frames, "synthetic maximum length"),
      DOUBLE_KEY("noise", synth.noise_sigma, "synthetic coordinate noise (m)"),

      SIZE_KEY("samples", analysis_samples, "sequences averaged by analyze"),
      SIZE_KEY("window", analysis_window, "analysis frame window"),
      STRING_KEY("posemb-frames", posemb_frames, "frames whose embedding similarity is exported"),
  };
  return table;
}

const Entry& find(const std::string& key) {
  static const std::map<std::string, const Entry*> index = [] {
    std::map<std::string, const Entry*> m;
    for (const auto& e : entries()) m[e.key.name] = &e;
    return m;
  }();
  auto it = index.find(key);
  if (it == index.end()) throw UsageError("unknown config key '" + key + "'");
  return *it->second;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void apply_setting(CliConfig& cfg, const std::string& key, const std::string& value) {
  find(key).set(cfg, trim(value));
}

std::string get_setting(const CliConfig& cfg, const std::string& key) { return find(key).get(cfg); }

void apply_config_text(CliConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string config_to_text(const CliConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(cfg) + "\n";
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_size("list", trim(item)));
  if (out.empty()) throw UsageError("empty list");
  return out;
}

}  // namespace glmotion
