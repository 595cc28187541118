#pragma once

#include <vector>

#include "glmotion/skeleton.hpp"

namespace glmotion {

enum class TrajectoryFamily { stationary, line, circle };

/// What makes one synthetic action class: a global trajectory family and the
/// frequency of the per-joint oscillation around the rest skeleton.
struct ClassProfile {
  TrajectoryFamily family = TrajectoryFamily::stationary;
  double frequency_hz = 1.0;
  double phase_step = 0.7;  // per-joint phase offset, radians
};

struct SynthConfig {
  std::size_t n_classes = 4;
  std::size_t n_per_class = 100;
  std::size_t joints = 5;
  std::size_t persons = 1;
  std::size_t min_frames = 30;
  std::size_t max_frames = 50;
  double noise_sigma = 0.01;  // meters
  double fps = 30.0;
  double amplitude = 0.1;     // local oscillation amplitude, meters
  double speed = 0.5;         // line speed (m/s) and circle radius (m)
};

/// Classes alternate slow (0.5 Hz) / fast (2 Hz) oscillation within each
/// trajectory family: (stationary, 0.5), (stationary, 2), (line, 0.5), ...
/// Beyond six classes the frequencies are scaled up so every pair differs.
std::vector<ClassProfile> default_class_profiles(std::size_t n_classes);

/// Labeled sequences ordered class by class. Center joint is 0.
std::vector<RawSequence> synth_generate(Rng& rng, const SynthConfig& config);
std::vector<RawSequence> synth_generate(Rng& rng, const SynthConfig& config,
                                        const std::vector<ClassProfile>& profiles);

}  // namespace glmotion
