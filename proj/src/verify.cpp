#include "glmotion/verify.hpp"

#include <random>

namespace glmotion {

Tensor ToyProblem::loss() const {
  return mpdp_loss(heads_forward(model_forward(batch, params, model).features, heads, model, mpdp), targets, mpdp);
}

std::vector<std::pair<std::string, Tensor>> ToyProblem::named() const {
  auto all = params.named();
  for (auto& h : heads.named()) all.push_back(h);
  return all;
}

ToyProblem make_toy_problem(std::uint64_t seed) {
  ToyProblem p;
  p.model.joints = 3;
  p.model.persons = 1;
  p.model.embed_dim = 4;
  p.model.blocks = 1;
  p.model.spatial_heads = 2;
  p.model.temporal_heads = 2;
  p.model.t_max = 4;
  p.mpdp.intervals = {1, 2};

  Rng rng(seed);
  p.params = init_model(p.model, rng);
  p.heads = init_heads(p.model, p.mpdp, rng);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& [name, t] : p.params.named())
    for (double& v : t.mutable_data()) v += u(rng);
  for (auto* group : {&p.heads.dir_bias, &p.heads.mag_bias})
    for (auto& t : *group)
      for (double& v : t.mutable_data()) v = u(rng);

  // 3 valid frames + 1 PAD; displacements of a few centimeters so that
  // several direction and magnitude classes occur.
  RawSequence seq;
  seq.id = "toy";
  seq.frames = 3;
  seq.persons = 1;
  seq.joints = 3;
  seq.center_joint = 0;
  std::normal_distribution<double> n(0.0, 0.05);
  seq.coords.resize(3 * 3 * 3);
  for (double& v : seq.coords) v = n(rng);
  std::vector<DisentangledSequence> seqs{disentangle(seq)};
  p.batch = pad_and_mask(seqs, 4);
  std::vector<MpdpTargets> t{build_targets(seqs[0], p.mpdp)};
  p.targets = stack_targets(t, 4);
  return p;
}

GradCheckReport toy_gradcheck(std::uint64_t seed, double tol) {
  ToyProblem p = make_toy_problem(seed);
  return grad_check_params([&] { return p.loss(); }, p.named(), {.step = 1e-5, .tol = tol, .abs_floor = 1e-8});
}

}  // namespace glmotion
