#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "glmotion/skeleton.hpp"

namespace glmotion {

inline constexpr std::size_t kNtuJoints = 25;
/// Middle-of-spine joint (1-based id 2 in the NTU joint list).
inline constexpr std::size_t kNtuSpineJoint = 1;
inline constexpr int kCanonicalVersion = 1;

/// Reads the public NTU RGB+D `.skeleton` text layout. Only x y z of each
/// joint line are kept. The result always has `max_persons` persons: extra
/// bodies are dropped by order, missing ones are zero-filled, and the
/// per-frame body count is appended to the id as a run-length note
/// ("name@bodies=2x40,1x3").
RawSequence parse_ntu_skeleton(std::istream& in, std::size_t center_joint = kNtuSpineJoint,
                               std::size_t max_persons = 2, std::string id = "ntu");
RawSequence parse_ntu_skeleton_file(const std::filesystem::path& path,
                                    std::size_t center_joint = kNtuSpineJoint,
                                    std::size_t max_persons = 2);

/// Canonical sequence file: one JSON object with exactly the fields
/// version, id, label, T, P, K, center_joint, coords.
std::string write_canonical(const RawSequence& seq);
RawSequence read_canonical(std::string_view text);

void save_sequence(const RawSequence& seq, const std::filesystem::path& path);
RawSequence load_sequence(const std::filesystem::path& path);

/// Dataset directory: canonical files plus manifest.txt listing their paths
/// relative to the directory, one per line.
void write_dataset(const std::filesystem::path& dir, const std::vector<RawSequence>& seqs);
std::vector<RawSequence> read_dataset(const std::filesystem::path& dir);

}  // namespace glmotion
