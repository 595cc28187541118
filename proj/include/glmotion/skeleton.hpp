#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "glmotion/errors.hpp"

namespace glmotion {

using Vec3 = std::array<double, 3>;
using Rng = std::mt19937_64;

/// Joint coordinates of one motion clip, row-major [T][P][K][xyz] in meters.
struct RawSequence {
  std::string id;
  std::optional<int> label;
  std::size_t frames = 0;
  std::size_t persons = 0;
  std::size_t joints = 0;
  std::size_t center_joint = 0;
  std::vector<double> coords;

  std::size_t offset(std::size_t t, std::size_t p, std::size_t k) const {
    return ((t * persons + p) * joints + k) * 3;
  }
  Vec3 joint(std::size_t t, std::size_t p, std::size_t k) const {
    const std::size_t o = offset(t, p, k);
    return {coords[o], coords[o + 1], coords[o + 2]};
  }
  void set_joint(std::size_t t, std::size_t p, std::size_t k, const Vec3& v) {
    const std::size_t o = offset(t, p, k);
    coords[o] = v[0];
    coords[o + 1] = v[1];
    coords[o + 2] = v[2];
  }

  /// Throws FormatError when an invariant is broken (T >= 1, P >= 1, K >= 2,
  /// center < K, finite coordinates, matching storage size). A nonzero
  /// `max_frames` also bounds T.
  void validate(std::size_t max_frames = 0) const;

  bool operator==(const RawSequence&) const = default;
};

/// Global center-joint trajectory g[T][P][xyz] and center-relative joint
/// offsets r[T][P][K-1][xyz]; the center joint itself is dropped from r and
/// the remaining joints keep their original order.
struct DisentangledSequence {
  std::string id;
  std::optional<int> label;
  std::size_t frames = 0;
  std::size_t persons = 0;
  std::size_t joints_local = 0;  // K - 1
  std::vector<double> g;
  std::vector<double> r;

  std::size_t g_offset(std::size_t t, std::size_t p) const { return (t * persons + p) * 3; }
  std::size_t r_offset(std::size_t t, std::size_t p, std::size_t k) const {
    return ((t * persons + p) * joints_local + k) * 3;
  }
  Vec3 global(std::size_t t, std::size_t p) const {
    const std::size_t o = g_offset(t, p);
    return {g[o], g[o + 1], g[o + 2]};
  }
  Vec3 local(std::size_t t, std::size_t p, std::size_t k) const {
    const std::size_t o = r_offset(t, p, k);
    return {r[o], r[o + 1], r[o + 2]};
  }
};

/// Fixed-length stack of sequences. Frames at t >= lengths[b] are [PAD]
/// frames: zero-filled and flagged invalid.
struct Batch {
  std::size_t size = 0;
  std::size_t t_max = 0;
  std::size_t persons = 0;
  std::size_t joints_local = 0;
  std::vector<double> g;               // [B][T_max][P][3]
  std::vector<double> r;               // [B][T_max][P][K-1][3]
  std::vector<std::uint8_t> valid;     // [B][T_max]
  std::vector<std::size_t> lengths;    // [B]
  std::vector<std::optional<int>> labels;
};

/// How raw coordinates are turned into the (global, local) token inputs.
enum class InputRepresentation {
  disentangled,  // g = center - center at frame 0, r = joint - center
  local_only,    // r as above, g forced to zero
  entangled,     // raw coordinates: g slot holds the center joint, r the others
};

DisentangledSequence disentangle(const RawSequence& seq);

/// Maps a raw sequence onto token inputs for the chosen representation.
DisentangledSequence represent(const RawSequence& seq, InputRepresentation mode);

/// Inverse of disentangle given each person's frame-0 center position.
RawSequence reassemble(const DisentangledSequence& d, std::span<const Vec3> origin,
                       std::size_t center_joint);

/// Frame-0 center position per person; the information disentangle drops.
std::vector<Vec3> center_origin(const RawSequence& seq);

Batch pad_and_mask(std::span<const DisentangledSequence> seqs, std::size_t t_max);

/// q -> S q with unit diagonal and off-diagonals ~ U[-amplitude, amplitude];
/// one matrix per sequence.
using Mat3 = std::array<std::array<double, 3>, 3>;
Mat3 sample_shear(Rng& rng, double amplitude);
RawSequence apply_linear(const RawSequence& seq, const Mat3& m);
RawSequence shear_augment(const RawSequence& seq, Rng& rng, double amplitude = 0.5);

/// Linear interpolation onto a uniform grid of `new_frames` frames; the
/// first and last frames are copied exactly.
RawSequence resample_to_length(const RawSequence& seq, std::size_t new_frames);

/// Random-length resampling: T' ~ U{ceil((1-frac)T) .. floor((1+frac)T)},
/// clamped to [2, t_max].
RawSequence resample_interp(const RawSequence& seq, Rng& rng, double frac = 0.10,
                            std::size_t t_max = 300);

/// Each (t, p, k) slot becomes (0,0,0) independently with probability
/// `proportion`.
RawSequence corrupt_joints(const RawSequence& seq, Rng& rng, double proportion);

}  // namespace glmotion
