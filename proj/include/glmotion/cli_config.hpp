#pragma once

#include <string>
#include <vector>

#include "glmotion/synth.hpp"
#include "glmotion/training.hpp"

namespace glmotion {

/// Everything a command-line run can set. Model joints/persons of 0 are
/// filled in from the dataset.
struct CliConfig {
  ModelConfig model;
  MpdpConfig mpdp;
  RunConfig run;
  SynthConfig synth;
  std::size_t test_per_class = 50;

  std::string data;        // dataset directory
  std::string test_data;   // default: <data>/test when present
  std::string out;         // output / run directory
  std::string checkpoint;  // pretrained checkpoint for probe/finetune/analyze
  std::string input;       // import-ntu source (file or directory)
  std::size_t analysis_samples = 300;
  std::size_t analysis_window = 30;
  std::string posemb_frames = "0,10,20";

  CliConfig();
};

struct ConfigKey {
  std::string name;  // also the --flag name
  std::string help;
};

/// Every recognised key, in the order they are echoed.
const std::vector<ConfigKey>& config_keys();

/// Throws UsageError for an unknown key or an unparsable value.
void apply_setting(CliConfig& cfg, const std::string& key, const std::string& value);
std::string get_setting(const CliConfig& cfg, const std::string& key);

/// "key = value" lines; blank lines and '#' comments are ignored.
void apply_config_text(CliConfig& cfg, const std::string& text);

/// Resolved config in the file format, one line per key; feeding it back
/// through apply_config_text reproduces `cfg` exactly.
std::string config_to_text(const CliConfig& cfg);

std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace glmotion
