// Loss-augmented inference. Lives apart from the chain decoders because
// the path-constrained variants fall back to the exact path engine:
// the loss-augmented unary tables are position-dependent, which the
// subset DP handles exactly, so a tie-flooded list search is not the
// end of the road.

#include <algorithm>

#include "seqrec/decode.hpp"
#include "seqrec/pathopt.hpp"

namespace seqrec {

ScoredTrajectory most_violating(const ChainScores& scores,
                                const std::vector<Trajectory>& truths,
                                ModelVariant variant, const Trajectory& truth,
                                std::int64_t max_expansions) {
  SequencePredicate predicate = SequencePredicate::any();
  bool path_constrained = false;
  switch (variant) {
    case ModelVariant::SP:
      predicate = SequencePredicate::any();
      break;
    case ModelVariant::SPpath:
      predicate = SequencePredicate::path();
      path_constrained = true;
      break;
    case ModelVariant::SR:
      predicate = SequencePredicate::not_in(truths);
      break;
    case ModelVariant::SRpath:
      predicate = SequencePredicate::path_and_not_in(truths);
      path_constrained = true;
      break;
    case ModelVariant::PoiRank:
      throw std::invalid_argument("most_violating: PoiRank has no structured training");
  }
  if (variant == ModelVariant::SR || variant == ModelVariant::SRpath) {
    if (std::find(truths.begin(), truths.end(), truth) == truths.end()) {
      throw std::invalid_argument("most_violating: truth must be a member of truths");
    }
  }

  const ChainScores augmented = loss_augment(scores, truth);

  const bool exact_backup =
      path_constrained && exact_path_affordable(scores.n_pois(), scores.length);
  // Long chains rank so many looped sequences above the best path that
  // probing the list decoder first is wasted work.
  const bool skip_probe = exact_backup && scores.length >= 10;
  if (!skip_probe) {
    const std::int64_t probe =
        exact_backup ? std::min<std::int64_t>(max_expansions, 50'000) : max_expansions;
    const ListViterbiResult found = list_viterbi(augmented, 1, predicate, probe);
    if (!found.items.empty()) return found.items.front();
    if (!exact_backup) {
      throw SearchExhaustedError("loss-augmented inference found no feasible sequence");
    }
  }

  std::vector<PathCut> cuts;
  if (variant == ModelVariant::SRpath) {
    for (const Trajectory& y : truths) cuts.push_back({y});
  }
  const auto top = top_k_paths_exact(augmented, 1, cuts);
  if (top.empty()) {
    throw SearchExhaustedError("no feasible path outside the ground-truth set");
  }
  return top.front();
}

}  // namespace seqrec
