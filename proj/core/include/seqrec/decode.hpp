// Exact chain decoding: forward-backward score tables, Viterbi, and the
// serial list Viterbi algorithm (SLVA) that enumerates the k highest
// scoring sequences with optional loop-freedom and exclusion predicates.

#pragma once

#include <cstdint>
#include <vector>

#include "seqrec/domain.hpp"

namespace seqrec {

inline constexpr std::int64_t kDefaultMaxExpansions = 1'000'000;

struct DecodeTables {
  Matrix alpha;                  // length x m, max-score of prefixes ending at (t, p)
  Matrix beta;                   // length x m, max-score of suffixes from (t, p)
  std::vector<Matrix> f_merge;   // per t in [0, l-1): alpha[t][i] + pairwise[i][j]
                                 //   + unary[t+1][j] + beta[t+1][j]
};

enum class PredicateKind { Any, Path, NotIn, PathAndNotIn };

// Acceptance test applied to candidate sequences as SLVA pops them.
class SequencePredicate {
 public:
  static SequencePredicate any() { return SequencePredicate(PredicateKind::Any, {}); }
  static SequencePredicate path() { return SequencePredicate(PredicateKind::Path, {}); }
  static SequencePredicate not_in(std::vector<Trajectory> excluded) {
    return SequencePredicate(PredicateKind::NotIn, std::move(excluded));
  }
  static SequencePredicate path_and_not_in(std::vector<Trajectory> excluded) {
    return SequencePredicate(PredicateKind::PathAndNotIn, std::move(excluded));
  }

  bool accepts(const Trajectory& y) const;
  PredicateKind kind() const { return kind_; }
  std::size_t exclusion_count() const { return excluded_.size(); }

 private:
  SequencePredicate(PredicateKind kind, std::vector<Trajectory> excluded);

  PredicateKind kind_;
  std::vector<Trajectory> excluded_;  // sorted for binary search
};

struct ScoredTrajectory {
  Trajectory sequence;
  double score = 0.0;
};

struct ListViterbiResult {
  std::vector<ScoredTrajectory> items;  // non-increasing score, lexicographic on ties
  bool exhausted = false;               // fewer than k found before the search ran out
  std::int64_t expansions = 0;          // heap pops consumed
};

// Max-recurrence forward/backward tables per the chain decomposition.
// max over p of alpha(l-1, p) is the Viterbi optimum.
DecodeTables forward_backward(const ChainScores& scores);

// Best sequence of the given chain, repeats allowed. Ties resolved by
// preferring the lowest POI id at every step.
ScoredTrajectory viterbi(const ChainScores& scores);

// Top-k distinct sequences satisfying the predicate, in non-increasing
// score order (ties lexicographic). Serial list Viterbi with
// partition-index and exclude-set bookkeeping; stops early when the
// heap empties, the algorithm's own pop bound is hit, or
// max_expansions pops are consumed, flagging the result as exhausted.
ListViterbiResult list_viterbi(const ChainScores& scores, std::int64_t k,
                               const SequencePredicate& predicate,
                               std::int64_t max_expansions = kDefaultMaxExpansions);

// Adds the Hamming loss against `truth` to the unary tables so that the
// chain score of any sequence equals model score + Hamming distance.
ChainScores loss_augment(const ChainScores& scores, const Trajectory& truth);

// Loss-augmented argmax over the variant's feasible set:
//   SP -> any sequence, SR -> sequences outside `truths`,
//   SPpath -> paths, SRpath -> paths outside `truths`.
// Throws SearchExhaustedError when no feasible sequence is found.
ScoredTrajectory most_violating(const ChainScores& scores,
                                const std::vector<Trajectory>& truths,
                                ModelVariant variant, const Trajectory& truth,
                                std::int64_t max_expansions = kDefaultMaxExpansions);

bool has_repeats(const Trajectory& y);

// Counting helpers, saturating at INT64_MAX: sequences of length l from
// a fixed start over m POIs, and the loop-free subset of them.
std::int64_t count_sequences(std::size_t m, int l);
std::int64_t count_paths(std::size_t m, int l);

}  // namespace seqrec
