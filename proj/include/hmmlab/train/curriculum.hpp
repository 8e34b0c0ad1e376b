#pragma once

#include "hmmlab/core.hpp"

#include <algorithm>
#include <vector>

namespace hmmlab::train {

struct CurriculumPlan {
  std::vector<int> lengths;
  std::vector<int> epochs;

  int total_epochs() const {
    int s = 0;
    for (int e : epochs) s += e;
    return s;
  }

  // Training length in effect at a global epoch index.
  int length_at(int epoch) const {
    int acc = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      acc += epochs[i];
      if (epoch < acc) return lengths[i];
    }
    return lengths.empty() ? 0 : lengths.back();
  }

  void validate(int T) const {
    require(!lengths.empty() && lengths.size() == epochs.size(), "curriculum needs one epoch count per stage");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      require(lengths[i] >= 1 && lengths[i] <= T, "curriculum length out of range");
      require(i == 0 || lengths[i] > lengths[i - 1], "curriculum lengths must increase");
      require(epochs[i] >= 0, "curriculum epochs must be nonnegative");
    }
    require(lengths.back() == T, "curriculum must end at the full horizon");
  }
};

// 8 - L stages starting at 2^L and doubling, capped at T. Stages that collapse
// onto the same length after capping are merged and keep their epochs; the
// remainder of the even split goes to the last stage.
inline CurriculumPlan curriculum_plan(int L, int T, int total_epochs) {
  if (L < 1 || L > 7) throw ParameterError("curriculum depth must lie in [1, 7]");
  require(T >= 1 && total_epochs >= 0, "curriculum needs T >= 1 and epochs >= 0");
  const int stages = 8 - L;
  const int per = total_epochs / stages;
  CurriculumPlan p;
  long len = 1L << L;
  for (int i = 0; i < stages; ++i, len *= 2) {
    int cur = static_cast<int>(std::min<long>(len, T));
    if (i == stages - 1) cur = T;
    if (!p.lengths.empty() && p.lengths.back() == cur) {
      p.epochs.back() += per;
    } else {
      p.lengths.push_back(cur);
      p.epochs.push_back(per);
    }
  }
  p.epochs.back() += total_epochs - per * stages;
  return p;
}

// Single stage at the full horizon.
inline CurriculumPlan flat_plan(int T, int epochs) { return {{T}, {epochs}}; }

}  // namespace hmmlab::train
