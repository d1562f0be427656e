#include "seqrec/decode.hpp"

#include <algorithm>
#include <queue>

namespace seqrec {

namespace {

// Saturating multiply; the SLVA pop bound involves m^(l-1), which
// overflows for long sequences.
std::int64_t sat_mul(std::int64_t a, std::int64_t b) {
  if (a == 0 || b == 0) return 0;
  if (a > std::numeric_limits<std::int64_t>::max() / b) {
    return std::numeric_limits<std::int64_t>::max();
  }
  return a * b;
}

// POI exclusion set as a dynamic bitmask.
class PoiMask {
 public:
  explicit PoiMask(std::size_t n_pois) : words_((n_pois + 63) / 64, 0) {}

  void set(PoiId p) { words_[static_cast<std::size_t>(p) >> 6] |= 1ULL << (p & 63); }
  bool test(PoiId p) const {
    return (words_[static_cast<std::size_t>(p) >> 6] >> (p & 63)) & 1ULL;
  }

 private:
  std::vector<std::uint64_t> words_;
};

struct HeapEntry {
  double score = 0.0;
  Trajectory sequence;
  int partition = 0;  // 1-based deviation position, 0 for NIL
  PoiMask exclude;

  HeapEntry(double s, Trajectory y, int part, PoiMask excl)
      : score(s), sequence(std::move(y)), partition(part), exclude(std::move(excl)) {}
};

// Max-heap order: higher score first, lexicographically smaller
// sequence first among ties.
struct EntryLess {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.score != b.score) return a.score < b.score;
    return a.sequence > b.sequence;
  }
};

// argmax over POIs of f(from, .), preferring the lowest id on ties;
// returns -1 when every POI is excluded.
PoiId argmax_next(const Matrix& f, PoiId from, const PoiMask* excluded) {
  PoiId best = -1;
  double best_score = kNegInf;
  const std::size_t m = f.cols();
  for (std::size_t p = 0; p < m; ++p) {
    if (excluded && excluded->test(static_cast<PoiId>(p))) continue;
    const double s = f(static_cast<std::size_t>(from), p);
    if (best < 0 || s > best_score) {
      best = static_cast<PoiId>(p);
      best_score = s;
    }
  }
  return best;
}

ScoredTrajectory viterbi_from_tables(const ChainScores& scores, const DecodeTables& tables) {
  const int l = scores.length;
  Trajectory y(static_cast<std::size_t>(l));
  y[0] = scores.start;
  for (int t = 1; t < l; ++t) {
    y[static_cast<std::size_t>(t)] =
        argmax_next(tables.f_merge[static_cast<std::size_t>(t - 1)],
                    y[static_cast<std::size_t>(t - 1)], nullptr);
  }
  double best = kNegInf;
  for (std::size_t p = 0; p < scores.n_pois(); ++p) {
    best = std::max(best, tables.alpha(static_cast<std::size_t>(l - 1), p));
  }
  return {std::move(y), best};
}

}  // namespace

bool has_repeats(const Trajectory& y) {
  Trajectory sorted = y;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

SequencePredicate::SequencePredicate(PredicateKind kind, std::vector<Trajectory> excluded)
    : kind_(kind), excluded_(std::move(excluded)) {
  std::sort(excluded_.begin(), excluded_.end());
}

bool SequencePredicate::accepts(const Trajectory& y) const {
  switch (kind_) {
    case PredicateKind::Any:
      return true;
    case PredicateKind::Path:
      return !has_repeats(y);
    case PredicateKind::NotIn:
      return !std::binary_search(excluded_.begin(), excluded_.end(), y);
    case PredicateKind::PathAndNotIn:
      return !has_repeats(y) && !std::binary_search(excluded_.begin(), excluded_.end(), y);
  }
  return false;
}

DecodeTables forward_backward(const ChainScores& scores) {
  const std::size_t l = static_cast<std::size_t>(scores.length);
  const std::size_t m = scores.n_pois();

  DecodeTables tables;
  tables.alpha = Matrix(l, m, kNegInf);
  tables.beta = Matrix(l, m, 0.0);

  for (std::size_t p = 0; p < m; ++p) tables.alpha(0, p) = scores.unary(0, p);
  for (std::size_t t = 1; t < l; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = kNegInf;
      for (std::size_t i = 0; i < m; ++i) {
        best = std::max(best, tables.alpha(t - 1, i) + scores.pairwise(i, j));
      }
      tables.alpha(t, j) = best + scores.unary(t, j);
    }
  }

  for (std::size_t t = l - 1; t-- > 0;) {
    for (std::size_t i = 0; i < m; ++i) {
      double best = kNegInf;
      for (std::size_t j = 0; j < m; ++j) {
        best = std::max(best,
                        scores.pairwise(i, j) + scores.unary(t + 1, j) + tables.beta(t + 1, j));
      }
      tables.beta(t, i) = best;
    }
  }

  tables.f_merge.reserve(l - 1);
  for (std::size_t t = 0; t + 1 < l; ++t) {
    Matrix f(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        f(i, j) = tables.alpha(t, i) + scores.pairwise(i, j) + scores.unary(t + 1, j) +
                  tables.beta(t + 1, j);
      }
    }
    tables.f_merge.push_back(std::move(f));
  }
  return tables;
}

ScoredTrajectory viterbi(const ChainScores& scores) {
  return viterbi_from_tables(scores, forward_backward(scores));
}

std::int64_t count_sequences(std::size_t m, int l) {
  std::int64_t n = 1;
  for (int t = 1; t < l; ++t) n = sat_mul(n, static_cast<std::int64_t>(m));
  return n;
}

std::int64_t count_paths(std::size_t m, int l) {
  std::int64_t n = 1;
  for (int t = 2; t <= l; ++t) {
    const std::int64_t factor = static_cast<std::int64_t>(m) - t + 1;
    if (factor <= 0) return 0;
    n = sat_mul(n, factor);
  }
  return n;
}

ListViterbiResult list_viterbi(const ChainScores& scores, std::int64_t k,
                               const SequencePredicate& predicate,
                               std::int64_t max_expansions) {
  ListViterbiResult result;
  if (k <= 0) return result;

  const int l = scores.length;
  const std::size_t m = scores.n_pois();
  const DecodeTables tables = forward_backward(scores);

  // Pop bound from the serial algorithm: in the worst case every
  // non-path sequence and every excluded sequence is popped before the
  // k-th acceptable one shows up.
  const std::int64_t required =
      k + static_cast<std::int64_t>(predicate.exclusion_count());
  std::int64_t bound = count_sequences(m, l) - count_paths(m, l);
  if (bound > std::numeric_limits<std::int64_t>::max() - required) {
    bound = std::numeric_limits<std::int64_t>::max();
  } else {
    bound += required;
  }

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, EntryLess> heap;
  {
    ScoredTrajectory best = viterbi_from_tables(scores, tables);
    heap.emplace(best.score, std::move(best.sequence), 0, PoiMask(m));
  }

  std::int64_t pops = 0;
  while (!heap.empty() && pops < bound && pops < max_expansions) {
    HeapEntry entry = heap.top();
    heap.pop();
    ++pops;

    if (predicate.accepts(entry.sequence)) {
      result.items.push_back({entry.sequence, entry.score});
      if (static_cast<std::int64_t>(result.items.size()) == k) {
        result.expansions = pops;
        return result;
      }
    }

    const int first = entry.partition == 0 ? 2 : entry.partition;
    for (int t = first; t <= l; ++t) {
      const std::size_t ti = static_cast<std::size_t>(t - 1);  // 0-based position
      PoiMask excl = (t == first) ? entry.exclude : PoiMask(m);
      excl.set(entry.sequence[ti]);

      const Matrix& f_dev = tables.f_merge[ti - 1];
      const PoiId prev = entry.sequence[ti - 1];
      const PoiId sibling = argmax_next(f_dev, prev, &excl);
      if (sibling < 0) continue;

      Trajectory next(entry.sequence.begin(), entry.sequence.begin() + t - 1);
      next.resize(static_cast<std::size_t>(l));
      next[ti] = sibling;
      for (int j = t + 1; j <= l; ++j) {
        const std::size_t ji = static_cast<std::size_t>(j - 1);
        next[ji] = argmax_next(tables.f_merge[ji - 1], next[ji - 1], nullptr);
      }

      const double score =
          entry.score + f_dev(static_cast<std::size_t>(prev), static_cast<std::size_t>(sibling)) -
          f_dev(static_cast<std::size_t>(prev), static_cast<std::size_t>(entry.sequence[ti]));
      heap.emplace(score, std::move(next), t, std::move(excl));
    }
  }

  result.exhausted = true;
  result.expansions = pops;
  return result;
}

ChainScores loss_augment(const ChainScores& scores, const Trajectory& truth) {
  if (static_cast<int>(truth.size()) != scores.length || truth.empty() ||
      truth.front() != scores.start) {
    throw NonConforming("truth does not conform to the query of the score tables");
  }
  ChainScores augmented = scores;
  const std::size_t m = scores.n_pois();
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      if (static_cast<PoiId>(p) != truth[t]) augmented.unary(t, p) += 1.0;
    }
  }
  return augmented;
}

}  // namespace seqrec
