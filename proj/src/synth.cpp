#include "glmotion/synth.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace glmotion {

std::vector<ClassProfile> default_class_profiles(std::size_t n_classes) {
  static constexpr TrajectoryFamily families[] = {TrajectoryFamily::stationary, TrajectoryFamily::line,
                                                  TrajectoryFamily::circle};
  std::vector<ClassProfile> profiles;
  for (std::size_t c = 0; c < n_classes; ++c) {
    ClassProfile p;
    p.family = families[(c / 2) % 3];
    const double round = static_cast<double>(c / 6);
    p.frequency_hz = (c % 2 == 0 ? 0.5 : 2.0) * (1.0 + 0.3 * round);
    p.phase_step = 0.7 + 0.4 * round;
    profiles.push_back(p);
  }
  return profiles;
}

namespace {

// Fixed rest skeleton: joint 0 is the center, the others sit on a ring
// around it at increasing heights.
Vec3 rest_offset(std::size_t k, std::size_t joints) {
  if (k == 0) return {0.0, 0.0, 0.0};
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k - 1) / static_cast<double>(joints - 1);
  return {0.3 * std::cos(angle), 0.3 * std::sin(angle), 0.1 * static_cast<double>(k)};
}

// Oscillation axis for joint k (unit vector).
Vec3 swing_axis(std::size_t k) {
  switch (k % 3) {
    case 0: return {1.0, 0.0, 0.0};
    case 1: return {0.0, 1.0, 0.0};
    default: return {0.0, 0.0, 1.0};
  }
}

}  // namespace

std::vector<RawSequence> synth_generate(Rng& rng, const SynthConfig& config) {
  return synth_generate(rng, config, default_class_profiles(config.n_classes));
}

std::vector<RawSequence> synth_generate(Rng& rng, const SynthConfig& config,
                                        const std::vector<ClassProfile>& profiles) {
  if (config.n_classes < 2) throw DataError("synth_generate: need at least 2 classes");
  if (profiles.size() != config.n_classes) throw DataError("synth_generate: one profile per class required");
  if (config.joints < 2 || config.persons < 1) throw DataError("synth_generate: need K >= 2 and P >= 1");
  if (config.min_frames < 1 || config.min_frames > config.max_frames) {
    throw DataError("synth_generate: invalid frame range");
  }
  std::uniform_int_distribution<std::size_t> length(config.min_frames, config.max_frames);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<RawSequence> out;
  out.reserve(config.n_classes * config.n_per_class);
  for (std::size_t c = 0; c < config.n_classes; ++c) {
    const ClassProfile& profile = profiles[c];
    for (std::size_t i = 0; i < config.n_per_class; ++i) {
      RawSequence seq;
      seq.id = "synth_c" + std::to_string(c) + "_" + std::to_string(i);
      seq.label = static_cast<int>(c);
      seq.frames = length(rng);
      seq.persons = config.persons;
      seq.joints = config.joints;
      seq.center_joint = 0;
      seq.coords.assign(seq.frames * seq.persons * seq.joints * 3, 0.0);
      for (std::size_t p = 0; p < seq.persons; ++p) {
        const Vec3 start{2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 1.0};
        const double heading = two_pi * unit(rng);
        const double phase0 = two_pi * unit(rng);
        for (std::size_t t = 0; t < seq.frames; ++t) {
          const double time = static_cast<double>(t) / config.fps;
          Vec3 center = start;
          switch (profile.family) {
            case TrajectoryFamily::stationary:
              break;
            case TrajectoryFamily::line:
              center[0] += config.speed * time * std::cos(heading);
              center[1] += config.speed * time * std::sin(heading);
              break;
            case TrajectoryFamily::circle: {
              // half a turn per second, starting on the circle at `heading`
              const double a = heading + std::numbers::pi * time;
              center[0] += config.speed * (std::cos(a) - std::cos(heading));
              center[1] += config.speed * (std::sin(a) - std::sin(heading));
              break;
            }
          }
          for (std::size_t k = 0; k < seq.joints; ++k) {
            Vec3 q = center;
            const Vec3 rest = rest_offset(k, seq.joints);
            if (k != 0) {
              const double phase = two_pi * profile.frequency_hz * time + phase0 +
                                   profile.phase_step * static_cast<double>(k);
              const double swing = config.amplitude * std::sin(phase);
              const Vec3 axis = swing_axis(k);
              for (int a = 0; a < 3; ++a) q[a] += rest[a] + swing * axis[a];
            }
            if (config.noise_sigma > 0.0) {
              for (int a = 0; a < 3; ++a) q[a] += config.noise_sigma * noise(rng);
            }
            seq.set_joint(t, p, k, q);
          }
        }
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

}  // namespace glmotion
