// glmotion: synthetic data, NTU import, pretraining, evaluation and analysis.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "glmotion/analysis.hpp"
#include "glmotion/cli_config.hpp"
#include "glmotion/io.hpp"
#include "glmotion/verify.hpp"

namespace fs = std::filesystem;
using namespace glmotion;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

// defaults < config file < flags
CliConfig resolve(const Command& cmd) {
  CliConfig cfg;
  if (!cmd.config_file.empty()) apply_config_text(cfg, read_file(cmd.config_file));
  for (const auto& key : config_keys()) {
    auto* opt = cmd.app->get_option("--" + key.name);
    if (opt->count() > 0) apply_setting(cfg, key.name, cmd.values.at(key.name));
  }
  return cfg;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required --") + flag);
}

std::vector<RawSequence> load_train(const CliConfig& cfg) {
  require(cfg.data, "data");
  const fs::path dir = cfg.data;
  return read_dataset(fs::exists(dir / "train" / "manifest.txt") ? dir / "train" : dir);
}

std::vector<RawSequence> load_test(const CliConfig& cfg) {
  if (!cfg.test_data.empty()) return read_dataset(cfg.test_data);
  require(cfg.data, "data");
  const fs::path dir = fs::path(cfg.data) / "test";
  if (!fs::exists(dir / "manifest.txt")) throw DataError("no test split: pass --test-data or provide " + dir.string());
  return read_dataset(dir);
}

void infer_shape(ModelConfig& model, const std::vector<RawSequence>& data) {
  if (data.empty()) throw DataError("empty dataset");
  if (model.joints == 0) model.joints = data.front().joints;
  if (model.persons == 0) model.persons = data.front().persons;
}

// Pretrained backbone from --checkpoint, or a seeded random one.
Pretrained backbone(CliConfig& cfg, const std::vector<RawSequence>& data) {
  if (!cfg.checkpoint.empty()) {
    Pretrained p = load_pretrained(cfg.checkpoint);
    cfg.model = p.model;
    cfg.mpdp = p.mpdp;
    return p;
  }
  infer_shape(cfg.model, data);
  cfg.model.validate();
  Rng rng = stream_rng(cfg.run.seed, 0);
  Pretrained p;
  p.model = cfg.model;
  p.mpdp = cfg.mpdp;
  p.params = init_model(cfg.model, rng);
  p.heads = init_heads(cfg.model, cfg.mpdp, rng);
  return p;
}

fs::path prepare_out(const CliConfig& cfg) {
  require(cfg.out, "out");
  fs::create_directories(cfg.out);
  return cfg.out;
}

void record_run(const fs::path& out, const CliConfig& cfg) {
  write_file(out / "config.txt", config_to_text(cfg));
  write_file(out / "seed.txt", std::to_string(cfg.run.seed) + "\n");
}

int cmd_synth(CliConfig cfg) {
  const fs::path out = prepare_out(cfg);
  Rng rng(cfg.run.seed);
  auto train = synth_generate(rng, cfg.synth);
  SynthConfig test_cfg = cfg.synth;
  test_cfg.n_per_class = cfg.test_per_class;
  auto test = synth_generate(rng, test_cfg);
  write_dataset(out / "train", train);
  if (!test.empty()) write_dataset(out / "test", test);
  record_run(out, cfg);
  std::printf("wrote %zu train and %zu test sequences to %s\n", train.size(), test.size(), out.c_str());
  return kOk;
}

int cmd_import_ntu(CliConfig cfg) {
  require(cfg.input, "input");
  const fs::path out = prepare_out(cfg);
  std::vector<fs::path> files;
  if (fs::is_directory(cfg.input)) {
    for (const auto& e : fs::directory_iterator(cfg.input))
      if (e.path().extension() == ".skeleton") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(cfg.input);
  }
  if (files.empty()) throw DataError("no .skeleton files in " + cfg.input);
  const std::size_t persons = cfg.model.persons ? cfg.model.persons : 2;
  static const std::regex action("A(\\d{3})");
  std::vector<RawSequence> seqs;
  for (const auto& f : files) {
    RawSequence s = parse_ntu_skeleton_file(f, kNtuSpineJoint, persons);
    std::smatch m;
    const std::string stem = f.stem().string();
    if (std::regex_search(stem, m, action)) s.label = std::stoi(m[1]) - 1;
    seqs.push_back(std::move(s));
  }
  write_dataset(out, seqs);
  std::printf("imported %zu sequences to %s\n", seqs.size(), out.c_str());
  return kOk;
}

int cmd_pretrain(CliConfig cfg) {
  auto data = load_train(cfg);
  infer_shape(cfg.model, data);
  cfg.model.validate();
  cfg.mpdp.validate();
  const fs::path out = prepare_out(cfg);
  record_run(out, cfg);

  Rng rng = stream_rng(cfg.run.seed, 0);
  ModelParams params = init_model(cfg.model, rng);
  MpdpHeads heads = init_heads(cfg.model, cfg.mpdp, rng);

  std::ofstream log(out / "metrics.csv");
  log << metrics_header(cfg.mpdp) << "\n";
  auto meta = [&](std::size_t epoch) {
    return nlohmann::json{{"seed", cfg.run.seed}, {"epoch", epoch}, {"config", config_to_text(cfg)}};
  };
  auto on_epoch = [&](const EpochMetrics& m) {
    log << metrics_line(m) << "\n" << std::flush;
    std::printf("epoch %zu loss %.6f\n", m.epoch, m.loss);
    if (cfg.run.checkpoint_every && m.epoch % cfg.run.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch%04zu.glm", m.epoch);
      save_pretrained(out / name, params, heads, cfg.model, cfg.mpdp, meta(m.epoch));
    }
  };
  auto result = pretrain(data, params, heads, cfg.model, cfg.mpdp, cfg.run, on_epoch);
  save_pretrained(out / "model.glm", params, heads, cfg.model, cfg.mpdp, meta(result.epochs.size()));
  std::printf("saved %s (%zu steps)\n", (out / "model.glm").c_str(), result.step_losses.size());
  return kOk;
}

int cmd_probe(CliConfig cfg) {
  auto train = load_train(cfg);
  auto test = load_test(cfg);
  Pretrained p = backbone(cfg, train);
  cfg.run.threads = env_threads();
  ProbeResult r = linear_probe(train, test, p.params, p.model, cfg.run);
  std::printf("train_accuracy %.6f\ntest_accuracy %.6f\n", r.train_accuracy, r.test_accuracy);
  if (!cfg.out.empty()) {
    const fs::path out = prepare_out(cfg);
    record_run(out, cfg);
    nlohmann::json j{{"train_accuracy", r.train_accuracy}, {"test_accuracy", r.test_accuracy}, {"classes", r.classes}};
    write_file(out / "probe.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_finetune(CliConfig cfg) {
  auto train = load_train(cfg);
  auto test = load_test(cfg);
  Pretrained p = backbone(cfg, train);
  cfg.run.threads = env_threads();
  FinetuneResult r = finetune_semi(train, test, p.params, p.model, cfg.run);
  std::printf("train_samples %zu\ntest_accuracy %.6f\n", r.train_samples, r.test_accuracy);
  if (!cfg.out.empty()) {
    const fs::path out = prepare_out(cfg);
    record_run(out, cfg);
    nlohmann::json j{{"test_accuracy", r.test_accuracy}, {"train_samples", r.train_samples}, {"per_class", r.per_class}};
    write_file(out / "finetune.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_analyze(CliConfig cfg) {
  std::vector<RawSequence> data;
  if (!cfg.test_data.empty() || (!cfg.data.empty() && fs::exists(fs::path(cfg.data) / "test" / "manifest.txt")))
    data = load_test(cfg);
  else
    data = load_train(cfg);
  Pretrained p = backbone(cfg, data);
  const fs::path out = prepare_out(cfg);
  record_run(out, cfg);
  auto summary = average_attention(data, p.params, p.model, cfg.run, cfg.analysis_samples, cfg.analysis_window);
  auto files = export_attention(out / "attention", summary);
  auto pos = export_posemb(out / "posemb", posemb_similarity(p.params.positional), parse_size_list(cfg.posemb_frames));
  for (std::size_t b = 0; b < summary.blocks; ++b) {
    std::printf("block %zu mean attended distance:", b + 1);
    for (double d : summary.mean_distance[b]) std::printf(" %.4f", d);
    std::printf("\n");
  }
  std::printf("wrote %zu files to %s\n", files.size() + pos.size(), out.c_str());
  return kOk;
}

int cmd_gradcheck(CliConfig cfg) {
  GradCheckReport r = toy_gradcheck(cfg.run.seed ? cfg.run.seed : 13, 1e-3);
  std::printf("checked %zu entries\nmax relative error %.3e (worst %s)\n%s\n", r.checked, r.max_rel_error,
              r.worst.c_str(), r.passed ? "PASS" : "FAIL");
  return r.passed ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"global-local skeleton motion transformer: pretraining, evaluation, analysis"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand all subcommand help");

  using Handler = int (*)(CliConfig);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"synth", "generate a labeled synthetic dataset (train/ and test/)", cmd_synth},
      {"import-ntu", "convert NTU .skeleton files to the canonical format", cmd_import_ntu},
      {"pretrain", "MPDP pretraining; writes a run directory", cmd_pretrain},
      {"probe", "linear evaluation on a frozen backbone", cmd_probe},
      {"finetune", "semi-supervised fine-tuning on a label fraction", cmd_finetune},
      {"analyze", "attention and positional-embedding exports", cmd_analyze},
      {"gradcheck", "finite-difference check of the toy model", cmd_gradcheck},
  };

  std::vector<Command> cmds(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    Command& c = cmds[i];
    c.app = app.add_subcommand(std::get<0>(commands[i]), std::get<1>(commands[i]));
    c.app->add_option("--config", c.config_file, "key = value config file (flags override it)");
    for (const auto& key : config_keys()) c.app->add_option("--" + key.name, c.values[key.name], key.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    for (std::size_t i = 0; i < cmds.size(); ++i)
      if (cmds[i].app->parsed()) return std::get<2>(commands[i])(resolve(cmds[i]));
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DeterminismError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
