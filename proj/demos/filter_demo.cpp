// Sample a random HMM, roll out one trajectory, and compare the forward
// filter against path enumeration on its first few steps.
#include "hmmlab/filtering.hpp"
#include "hmmlab/rollout.hpp"

#include <cstdio>

int main() {
  using namespace hmmlab;
  ModelSpec spec;
  spec.kind = ModelKind::hmm;
  spec.n = 4;
  spec.m = 3;
  spec.seed = 42;
  const ModelInstance model = make_model(spec);

  const Trajectory tr = rollout(model, 10, /*seed=*/7, TargetKind::belief, /*index=*/0);
  const std::vector<int> prefix(tr.obs.begin(), tr.obs.begin() + 6);
  const auto brute = brute_force_posterior(model.hmm(), prefix);

  for (std::size_t t = 0; t < tr.targets.size(); ++t) {
    std::printf("t=%2zu obs=%d belief=[", t + 1, tr.obs[t]);
    for (Eigen::Index i = 0; i < tr.targets[t].size(); ++i) std::printf("%s%.4f", i ? " " : "", tr.targets[t](i));
    std::printf("]");
    if (t < brute.size()) std::printf("  |filter - enumeration| = %.2e", linf_gap(brute[t], tr.targets[t]));
    std::printf("\n");
  }
}
