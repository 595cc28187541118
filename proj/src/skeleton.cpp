#include "glmotion/skeleton.hpp"

#include <algorithm>
#include <cmath>

namespace glmotion {

void RawSequence::validate(std::size_t max_frames) const {
  if (frames < 1) throw FormatError("sequence '" + id + "': T must be >= 1");
  if (max_frames && frames > max_frames) {
    throw FormatError("sequence '" + id + "': T = " + std::to_string(frames) + " exceeds T_max = " +
                      std::to_string(max_frames));
  }
  if (persons < 1) throw FormatError("sequence '" + id + "': P must be >= 1");
  if (joints < 2) throw FormatError("sequence '" + id + "': K must be >= 2");
  if (center_joint >= joints) throw FormatError("sequence '" + id + "': center joint out of range");
  if (coords.size() != frames * persons * joints * 3) {
    throw FormatError("sequence '" + id + "': coordinate count does not match T*P*K*3");
  }
  for (double v : coords) {
    if (!std::isfinite(v)) throw FormatError("sequence '" + id + "': non-finite coordinate");
  }
}

namespace {

DisentangledSequence empty_like(const RawSequence& seq) {
  DisentangledSequence d;
  d.id = seq.id;
  d.label = seq.label;
  d.frames = seq.frames;
  d.persons = seq.persons;
  d.joints_local = seq.joints - 1;
  d.g.assign(seq.frames * seq.persons * 3, 0.0);
  d.r.assign(seq.frames * seq.persons * d.joints_local * 3, 0.0);
  return d;
}

}  // namespace

DisentangledSequence disentangle(const RawSequence& seq) {
  seq.validate();
  DisentangledSequence d = empty_like(seq);
  const std::size_t c = seq.center_joint;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t p = 0; p < seq.persons; ++p) {
      const Vec3 center = seq.joint(t, p, c);
      const Vec3 origin = seq.joint(0, p, c);
      for (int a = 0; a < 3; ++a) d.g[d.g_offset(t, p) + a] = center[a] - origin[a];
      std::size_t local = 0;
      for (std::size_t k = 0; k < seq.joints; ++k) {
        if (k == c) continue;
        const Vec3 q = seq.joint(t, p, k);
        for (int a = 0; a < 3; ++a) d.r[d.r_offset(t, p, local) + a] = q[a] - center[a];
        ++local;
      }
    }
  }
  return d;
}

DisentangledSequence represent(const RawSequence& seq, InputRepresentation mode) {
  switch (mode) {
    case InputRepresentation::disentangled:
      return disentangle(seq);
    case InputRepresentation::local_only: {
      DisentangledSequence d = disentangle(seq);
      std::fill(d.g.begin(), d.g.end(), 0.0);
      return d;
    }
    case InputRepresentation::entangled: {
      seq.validate();
      DisentangledSequence d = empty_like(seq);
      for (std::size_t t = 0; t < seq.frames; ++t) {
        for (std::size_t p = 0; p < seq.persons; ++p) {
          std::size_t local = 0;
          for (std::size_t k = 0; k < seq.joints; ++k) {
            const Vec3 q = seq.joint(t, p, k);
            double* dst = k == seq.center_joint ? &d.g[d.g_offset(t, p)]
                                                : &d.r[d.r_offset(t, p, local++)];
            std::copy(q.begin(), q.end(), dst);
          }
        }
      }
      return d;
    }
  }
  throw FormatError("represent: unknown input representation");
}

std::vector<Vec3> center_origin(const RawSequence& seq) {
  std::vector<Vec3> origin(seq.persons);
  for (std::size_t p = 0; p < seq.persons; ++p) origin[p] = seq.joint(0, p, seq.center_joint);
  return origin;
}

RawSequence reassemble(const DisentangledSequence& d, std::span<const Vec3> origin,
                       std::size_t center_joint) {
  if (origin.size() != d.persons) throw FormatError("reassemble: one origin per person required");
  RawSequence seq;
  seq.id = d.id;
  seq.label = d.label;
  seq.frames = d.frames;
  seq.persons = d.persons;
  seq.joints = d.joints_local + 1;
  seq.center_joint = center_joint;
  if (center_joint >= seq.joints) throw FormatError("reassemble: center joint out of range");
  seq.coords.assign(seq.frames * seq.persons * seq.joints * 3, 0.0);
  for (std::size_t t = 0; t < d.frames; ++t) {
    for (std::size_t p = 0; p < d.persons; ++p) {
      const Vec3 gt = d.global(t, p);
      Vec3 center{};
      for (int a = 0; a < 3; ++a) center[a] = gt[a] + origin[p][a];
      seq.set_joint(t, p, center_joint, center);
      std::size_t local = 0;
      for (std::size_t k = 0; k < seq.joints; ++k) {
        if (k == center_joint) continue;
        const Vec3 rk = d.local(t, p, local++);
        seq.set_joint(t, p, k, {rk[0] + center[0], rk[1] + center[1], rk[2] + center[2]});
      }
    }
  }
  return seq;
}

Batch pad_and_mask(std::span<const DisentangledSequence> seqs, std::size_t t_max) {
  if (seqs.empty()) throw DataError("pad_and_mask: empty batch");
  Batch batch;
  batch.size = seqs.size();
  batch.t_max = t_max;
  batch.persons = seqs.front().persons;
  batch.joints_local = seqs.front().joints_local;
  const std::size_t g_frame = batch.persons * 3;
  const std::size_t r_frame = batch.persons * batch.joints_local * 3;
  batch.g.assign(batch.size * t_max * g_frame, 0.0);
  batch.r.assign(batch.size * t_max * r_frame, 0.0);
  batch.valid.assign(batch.size * t_max, 0);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto& s = seqs[b];
    if (s.frames > t_max) {
      throw LengthError("pad_and_mask: sequence '" + s.id + "' has " + std::to_string(s.frames) +
                        " frames, T_max is " + std::to_string(t_max));
    }
    if (s.persons != batch.persons || s.joints_local != batch.joints_local) {
      throw ShapeError("pad_and_mask: sequence '" + s.id + "' has a different skeleton layout");
    }
    std::copy(s.g.begin(), s.g.end(), batch.g.begin() + static_cast<std::ptrdiff_t>(b * t_max * g_frame));
    std::copy(s.r.begin(), s.r.end(), batch.r.begin() + static_cast<std::ptrdiff_t>(b * t_max * r_frame));
    std::fill_n(batch.valid.begin() + static_cast<std::ptrdiff_t>(b * t_max), s.frames, 1);
    batch.lengths.push_back(s.frames);
    batch.labels.push_back(s.label);
  }
  return batch;
}

Mat3 sample_shear(Rng& rng, double amplitude) {
  std::uniform_real_distribution<double> off(-amplitude, amplitude);
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = i == j ? 1.0 : (amplitude > 0.0 ? off(rng) : 0.0);
  }
  return m;
}

RawSequence apply_linear(const RawSequence& seq, const Mat3& m) {
  RawSequence out = seq;
  for (std::size_t o = 0; o < out.coords.size(); o += 3) {
    const double x = seq.coords[o], y = seq.coords[o + 1], z = seq.coords[o + 2];
    for (int i = 0; i < 3; ++i) out.coords[o + i] = m[i][0] * x + m[i][1] * y + m[i][2] * z;
  }
  return out;
}

RawSequence shear_augment(const RawSequence& seq, Rng& rng, double amplitude) {
  if (amplitude < 0.0) throw FormatError("shear_augment: amplitude must be >= 0");
  if (amplitude == 0.0) return seq;
  return apply_linear(seq, sample_shear(rng, amplitude));
}

RawSequence resample_to_length(const RawSequence& seq, std::size_t new_frames) {
  if (seq.frames < 2) throw LengthError("resample: need at least 2 frames");
  if (new_frames < 2) throw LengthError("resample: target length must be >= 2");
  if (new_frames == seq.frames) return seq;
  RawSequence out = seq;
  out.frames = new_frames;
  const std::size_t frame_size = seq.persons * seq.joints * 3;
  out.coords.assign(new_frames * frame_size, 0.0);
  const double ratio = static_cast<double>(seq.frames - 1) / static_cast<double>(new_frames - 1);
  for (std::size_t i = 0; i < new_frames; ++i) {
    double* dst = out.coords.data() + i * frame_size;
    if (i == 0 || i == new_frames - 1) {
      const std::size_t src = i == 0 ? 0 : seq.frames - 1;
      std::copy_n(seq.coords.data() + src * frame_size, frame_size, dst);
      continue;
    }
    const double pos = static_cast<double>(i) * ratio;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), seq.frames - 2);
    const double w = pos - static_cast<double>(lo);
    const double* a = seq.coords.data() + lo * frame_size;
    const double* b = a + frame_size;
    for (std::size_t j = 0; j < frame_size; ++j) dst[j] = a[j] + w * (b[j] - a[j]);
  }
  return out;
}

RawSequence resample_interp(const RawSequence& seq, Rng& rng, double frac, std::size_t t_max) {
  if (seq.frames < 2) throw LengthError("resample_interp: need at least 2 frames");
  const double t = static_cast<double>(seq.frames);
  auto lo = static_cast<std::size_t>(std::ceil((1.0 - frac) * t - 1e-9));
  auto hi = static_cast<std::size_t>(std::floor((1.0 + frac) * t + 1e-9));
  lo = std::clamp<std::size_t>(lo, 2, std::max<std::size_t>(t_max, 2));
  hi = std::clamp<std::size_t>(hi, lo, std::max<std::size_t>(t_max, 2));
  const std::size_t target = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  return resample_to_length(seq, target);
}

RawSequence corrupt_joints(const RawSequence& seq, Rng& rng, double proportion) {
  if (proportion < 0.0 || proportion > 1.0) throw FormatError("corrupt_joints: proportion must be in [0, 1]");
  if (proportion == 0.0) return seq;
  RawSequence out = seq;
  std::bernoulli_distribution hit(proportion);
  for (std::size_t o = 0; o < out.coords.size(); o += 3) {
    if (hit(rng)) out.coords[o] = out.coords[o + 1] = out.coords[o + 2] = 0.0;
  }
  return out;
}

}  // namespace glmotion
