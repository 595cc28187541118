#pragma once

#include "glmotion/gradcheck.hpp"
#include "glmotion/mpdp.hpp"

namespace glmotion {

/// Toy setting for the end-to-end gradient check: T=4 with one PAD frame,
/// P=1, K=3, D=4, one block, 2 spatial and 2 temporal heads, intervals {1,2}.
struct ToyProblem {
  ModelConfig model;
  MpdpConfig mpdp;
  ModelParams params;
  MpdpHeads heads;
  Batch batch;
  MpdpTargets targets;

  Tensor loss() const;
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// Random parameters (including a nonzero positional tensor and head biases)
/// so that no gradient is trivially zero.
ToyProblem make_toy_problem(std::uint64_t seed);

/// Central differences over every trainable parameter and head.
GradCheckReport toy_gradcheck(std::uint64_t seed = 13, double tol = 1e-3);

}  // namespace glmotion
