#include "seqrec/pathopt.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <queue>

namespace seqrec {

namespace {

// Cost-to-go tables for loop-free completion. States are (mask of
// visited non-start POIs, last POI); the layer of a state is the mask
// popcount, which pins the sequence position. Layers are flat arrays
// indexed by the colex rank of the mask, so memory is exactly
// sum_c C(m-1, c) * c doubles.
class PathDp {
 public:
  PathDp(const ChainScores& scores) : scores_(scores), l_(scores.length) {
    const std::size_t m = scores.n_pois();
    bit_of_poi_.assign(m, -1);
    for (std::size_t p = 0; p < m; ++p) {
      if (static_cast<PoiId>(p) == scores.start) continue;
      bit_of_poi_[p] = static_cast<int>(nonstart_.size());
      nonstart_.push_back(static_cast<PoiId>(p));
    }
    build();
  }

  int n_bits() const { return static_cast<int>(nonstart_.size()); }
  PoiId poi(int bit) const { return nonstart_[static_cast<std::size_t>(bit)]; }
  int bit(PoiId p) const { return bit_of_poi_[static_cast<std::size_t>(p)]; }
  double root_value() const { return root_value_; }

  // Completion value of the state reached after placing `last_bit` as
  // the (c+1)-th element with visited-mask `mask` (last bit included).
  double value(int c, std::uint32_t mask, int last_bit) const {
    if (c >= l_ - 1) return 0.0;
    const std::int64_t rank = colex_rank(mask);
    const int li = std::popcount(mask & ((1u << last_bit) - 1));
    return layers_[static_cast<std::size_t>(c)]
                  [static_cast<std::size_t>(rank) * static_cast<std::size_t>(c) +
                   static_cast<std::size_t>(li)];
  }

  // Score of extending a prefix ending at `prev` (mask excludes the
  // candidate) with non-start POI `b` at 1-based position t.
  double extension(std::uint32_t mask, PoiId prev, int t, int b) const {
    const PoiId p = poi(b);
    return scores_.pairwise(static_cast<std::size_t>(prev), static_cast<std::size_t>(p)) +
           scores_.unary(static_cast<std::size_t>(t - 1), static_cast<std::size_t>(p)) +
           value(t - 1, mask | (1u << b), b);
  }

  // Best extension at position t, skipping prefix POIs and the exclude
  // mask; lowest POI id wins ties. Returns -1 when none remain.
  int argmax_extension(std::uint32_t prefix_mask, PoiId prev, int t,
                       std::uint32_t exclude_mask) const {
    int best = -1;
    double best_score = kNegInf;
    for (int b = 0; b < n_bits(); ++b) {
      const std::uint32_t bitmask = 1u << b;
      if ((prefix_mask & bitmask) || (exclude_mask & bitmask)) continue;
      const double s = extension(prefix_mask, prev, t, b);
      if (best < 0 || s > best_score) {
        best = b;
        best_score = s;
      }
    }
    return best;
  }

 private:
  static const std::array<std::array<std::int64_t, 34>, 34>& binomials() {
    static const auto table = [] {
      std::array<std::array<std::int64_t, 34>, 34> c{};
      for (int n = 0; n < 34; ++n) {
        c[static_cast<std::size_t>(n)][0] = 1;
        for (int k = 1; k <= n; ++k) {
          c[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] =
              c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k - 1)] +
              c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k)];
        }
      }
      return c;
    }();
    return table;
  }

  // Rank of a mask among same-popcount masks in increasing numeric
  // order: sum over sorted set bits b_i of C(b_i, i+1).
  std::int64_t colex_rank(std::uint32_t mask) const {
    const auto& ch = binomials();
    std::int64_t rank = 0;
    int i = 1;
    while (mask) {
      const int b = std::countr_zero(mask);
      rank += ch[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
      mask &= mask - 1;
      ++i;
    }
    return rank;
  }

  void build() {
    if (l_ < 2) {
      root_value_ = 0.0;
      return;
    }
    const int n = n_bits();
    const auto& ch = binomials();
    layers_.resize(static_cast<std::size_t>(std::max(0, l_ - 1)));
    // Layers c = l-2 .. 1; layer l-1 is implicitly zero.
    for (int c = l_ - 2; c >= 1; --c) {
      auto& layer = layers_[static_cast<std::size_t>(c)];
      layer.assign(static_cast<std::size_t>(ch[static_cast<std::size_t>(n)]
                                              [static_cast<std::size_t>(c)]) *
                       static_cast<std::size_t>(c),
                   kNegInf);
      const bool next_is_terminal = (c + 1 >= l_ - 1);
      const auto& next_layer =
          next_is_terminal ? layer : layers_[static_cast<std::size_t>(c + 1)];

      std::array<int, 32> bits{};
      std::array<std::int64_t, 33> prefix_lo{};   // sum C(bits[j], j+1), j < i
      std::array<std::int64_t, 33> suffix_hi{};   // sum C(bits[j], j+2), j >= i
      std::array<std::size_t, 32> succ_slot{};    // layer c+1 slot of (mask|b, b)

      std::uint32_t mask = (1u << c) - 1;
      std::int64_t rank = 0;
      const std::uint32_t limit = n >= 32 ? 0xffffffffu : (1u << n);
      while (mask < limit) {
        {
          std::uint32_t rest = mask;
          for (int i = 0; i < c; ++i) {
            bits[static_cast<std::size_t>(i)] = std::countr_zero(rest);
            rest &= rest - 1;
          }
          prefix_lo[0] = 0;
          for (int i = 0; i < c; ++i) {
            prefix_lo[static_cast<std::size_t>(i + 1)] =
                prefix_lo[static_cast<std::size_t>(i)] +
                ch[static_cast<std::size_t>(bits[static_cast<std::size_t>(i)])]
                  [static_cast<std::size_t>(i + 1)];
          }
          suffix_hi[static_cast<std::size_t>(c)] = 0;
          for (int i = c - 1; i >= 0; --i) {
            suffix_hi[static_cast<std::size_t>(i)] =
                suffix_hi[static_cast<std::size_t>(i + 1)] +
                ch[static_cast<std::size_t>(bits[static_cast<std::size_t>(i)])]
                  [static_cast<std::size_t>(i + 2)];
          }
          if (!next_is_terminal) {
            int pos = 0;  // insertion index of b among the sorted bits
            for (int b = 0; b < n; ++b) {
              if (mask & (1u << b)) {
                ++pos;
                continue;
              }
              const std::int64_t succ_rank =
                  prefix_lo[static_cast<std::size_t>(pos)] +
                  ch[static_cast<std::size_t>(b)][static_cast<std::size_t>(pos + 1)] +
                  suffix_hi[static_cast<std::size_t>(pos)];
              succ_slot[static_cast<std::size_t>(b)] =
                  static_cast<std::size_t>(succ_rank) * static_cast<std::size_t>(c + 1) +
                  static_cast<std::size_t>(pos);
            }
          }
        }

        for (int li = 0; li < c; ++li) {
          const PoiId last_poi = poi(bits[static_cast<std::size_t>(li)]);
          double best = kNegInf;
          for (int b = 0; b < n; ++b) {
            if (mask & (1u << b)) continue;
            const PoiId p = poi(b);
            // Position of `last` is c+1; the extension lands at c+2.
            double s =
                scores_.pairwise(static_cast<std::size_t>(last_poi), static_cast<std::size_t>(p)) +
                scores_.unary(static_cast<std::size_t>(c + 1), static_cast<std::size_t>(p));
            if (!next_is_terminal) s += next_layer[succ_slot[static_cast<std::size_t>(b)]];
            best = std::max(best, s);
          }
          layer[static_cast<std::size_t>(rank) * static_cast<std::size_t>(c) +
                static_cast<std::size_t>(li)] = best;
        }

        // Gosper's hack: next mask with the same popcount.
        const std::uint32_t low = mask & (0u - mask);
        const std::uint32_t ripple = mask + low;
        mask = (((ripple ^ mask) >> 2) / low) | ripple;
        ++rank;
      }
    }
    root_value_ = kNegInf;
    for (int b = 0; b < n; ++b) {
      root_value_ = std::max(root_value_, extension(0, scores_.start, 2, b));
    }
  }

  const ChainScores& scores_;
  int l_;
  std::vector<PoiId> nonstart_;
  std::vector<int> bit_of_poi_;
  std::vector<std::vector<double>> layers_;
  double root_value_ = 0.0;
};

struct PathEntry {
  double score = 0.0;
  Trajectory sequence;
  int partition = 0;  // 1-based deviation position, 0 for NIL
  std::uint32_t exclude = 0;
};

struct PathEntryLess {
  bool operator()(const PathEntry& a, const PathEntry& b) const {
    if (a.score != b.score) return a.score < b.score;
    return a.sequence > b.sequence;
  }
};

void check_feasible(const ChainScores& scores) {
  if (scores.length < 1) throw std::invalid_argument("path decoding needs length >= 1");
  if (static_cast<std::size_t>(scores.length) > scores.n_pois()) {
    throw Infeasible("no loop-free sequence of length " + std::to_string(scores.length) +
                     " over " + std::to_string(scores.n_pois()) + " POIs");
  }
  if (!exact_path_affordable(scores.n_pois(), scores.length)) {
    throw TooLarge("subset DP state space for " + std::to_string(scores.n_pois()) +
                   " POIs at length " + std::to_string(scores.length) +
                   " exceeds the engine budget");
  }
}

Trajectory greedy_complete(const PathDp& dp, const ChainScores& scores, Trajectory prefix) {
  std::uint32_t mask = 0;
  for (std::size_t i = 1; i < prefix.size(); ++i) mask |= 1u << dp.bit(prefix[i]);
  for (int t = static_cast<int>(prefix.size()) + 1; t <= scores.length; ++t) {
    const int b = dp.argmax_extension(mask, prefix.back(), t, 0);
    prefix.push_back(dp.poi(b));
    mask |= 1u << b;
  }
  return prefix;
}

}  // namespace

std::int64_t exact_path_state_count(std::size_t n_pois, int length) {
  if (n_pois == 0 || length < 2) return 0;
  const std::int64_t n = static_cast<std::int64_t>(n_pois) - 1;
  std::int64_t total = 0;
  // Materialized layers hold C(n, c) * c entries for c = 1 .. l-2.
  for (int c = 1; c <= length - 2 && c <= n; ++c) {
    double binom = 1.0;
    for (int i = 0; i < c; ++i) binom *= static_cast<double>(n - i) / (i + 1);
    const double entries = binom * c;
    if (entries > 4e18 || total > std::numeric_limits<std::int64_t>::max() -
                                      static_cast<std::int64_t>(entries)) {
      return std::numeric_limits<std::int64_t>::max();
    }
    total += static_cast<std::int64_t>(entries);
  }
  return total;
}

bool exact_path_affordable(std::size_t n_pois, int length) {
  return n_pois <= kMaxExactPathPois &&
         exact_path_state_count(n_pois, length) <= kMaxExactPathStates;
}

std::vector<ScoredTrajectory> top_k_paths_exact(const ChainScores& scores, std::int64_t k,
                                                std::span<const PathCut> cuts) {
  check_feasible(scores);
  std::vector<ScoredTrajectory> out;
  if (k <= 0) return out;

  const PathDp dp(scores);
  const int l = scores.length;

  std::vector<Trajectory> forbidden;
  forbidden.reserve(cuts.size());
  for (const PathCut& cut : cuts) forbidden.push_back(cut.forbidden);
  std::sort(forbidden.begin(), forbidden.end());

  std::priority_queue<PathEntry, std::vector<PathEntry>, PathEntryLess> heap;
  heap.push({dp.root_value(), greedy_complete(dp, scores, {scores.start}), 0, 0});

  while (!heap.empty()) {
    PathEntry entry = heap.top();
    heap.pop();

    if (!std::binary_search(forbidden.begin(), forbidden.end(), entry.sequence)) {
      out.push_back({entry.sequence, entry.score});
      if (static_cast<std::int64_t>(out.size()) == k) break;
    }

    const int first = entry.partition == 0 ? 2 : entry.partition;
    for (int t = first; t <= l; ++t) {
      const std::size_t ti = static_cast<std::size_t>(t - 1);
      const std::uint32_t old_bit = 1u << dp.bit(entry.sequence[ti]);
      const std::uint32_t exclude = (t == first) ? (entry.exclude | old_bit) : old_bit;

      std::uint32_t prefix_mask = 0;
      for (std::size_t i = 1; i < ti; ++i) prefix_mask |= 1u << dp.bit(entry.sequence[i]);

      const PoiId prev = entry.sequence[ti - 1];
      const int sibling = dp.argmax_extension(prefix_mask, prev, t, exclude);
      if (sibling < 0) continue;

      const double f_new = dp.extension(prefix_mask, prev, t, sibling);
      const double f_old = dp.extension(prefix_mask, prev, t, dp.bit(entry.sequence[ti]));

      Trajectory prefix(entry.sequence.begin(), entry.sequence.begin() + t - 1);
      prefix.push_back(dp.poi(sibling));
      heap.push({entry.score + f_new - f_old, greedy_complete(dp, scores, std::move(prefix)), t,
                 exclude});
    }
  }
  return out;
}

ScoredTrajectory best_path_exact(const ChainScores& scores) {
  auto top = top_k_paths_exact(scores, 1);
  if (top.empty()) throw Infeasible("no feasible path");
  return top.front();
}

IlpModel build_ilp(const ChainScores& scores, std::span<const PathCut> cuts) {
  if (scores.length < 2) throw Infeasible("the path ILP is defined for length >= 2");
  if (static_cast<std::size_t>(scores.length) > scores.n_pois()) {
    throw Infeasible("no loop-free sequence of length " + std::to_string(scores.length) +
                     " over " + std::to_string(scores.n_pois()) + " POIs");
  }

  IlpModel model;
  model.m = scores.n_pois();
  model.length = scores.length;
  model.index_to_poi.push_back(scores.start);
  for (std::size_t p = 0; p < model.m; ++p) {
    if (static_cast<PoiId>(p) != scores.start) model.index_to_poi.push_back(static_cast<PoiId>(p));
  }

  std::vector<std::size_t> poi_to_index(model.m);
  for (std::size_t i = 0; i < model.m; ++i) {
    poi_to_index[static_cast<std::size_t>(model.index_to_poi[i])] = i;
  }

  // Unary term of the objective uses the position-2 row: position 1 is
  // the clamped start and contributes a constant.
  model.objective = Matrix(model.m, model.m);
  for (std::size_t j = 0; j < model.m; ++j) {
    for (std::size_t kk = 0; kk < model.m; ++kk) {
      const std::size_t pj = static_cast<std::size_t>(model.index_to_poi[j]);
      const std::size_t pk = static_cast<std::size_t>(model.index_to_poi[kk]);
      model.objective(j, kk) = scores.unary(1, pk) + scores.pairwise(pj, pk);
    }
  }

  for (const PathCut& cut : cuts) {
    if (static_cast<int>(cut.forbidden.size()) != scores.length) {
      throw std::invalid_argument("path cut length does not match the query length");
    }
    Trajectory mapped;
    mapped.reserve(cut.forbidden.size());
    for (PoiId p : cut.forbidden) {
      mapped.push_back(static_cast<PoiId>(poi_to_index[static_cast<std::size_t>(p)]));
    }
    model.cuts.push_back(std::move(mapped));
  }
  return model;
}

namespace {

std::string fmt_coeff(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

// Appends "+/- |c| name" to a running linear expression.
void append_term(std::string& expr, double coeff, const std::string& name, bool& leading) {
  if (leading) {
    expr += coeff < 0 ? "- " : "";
    leading = false;
  } else {
    expr += coeff < 0 ? " - " : " + ";
  }
  expr += fmt_coeff(std::abs(coeff));
  expr += " ";
  expr += name;
}

std::string u_name(std::size_t j, std::size_t k) {
  return "u_" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
}

}  // namespace

std::string ilp_to_lp_format(const IlpModel& model) {
  const std::size_t m = model.m;
  const int l = model.length;
  std::string lp;
  lp += "\\ loop-free path model: length " + std::to_string(l) + " over " + std::to_string(m) +
        " POIs, index 1 is the start\n";
  for (std::size_t i = 0; i < m; ++i) {
    lp += "\\ index " + std::to_string(i + 1) + " -> poi " + std::to_string(model.index_to_poi[i]) +
          "\n";
  }

  lp += "Maximize\n obj: ";
  bool leading = true;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      append_term(lp, model.objective(j, k), u_name(j, k), leading);
    }
  }
  lp += "\n";

  lp += "Subject To\n";
  {
    // One outgoing transition from the start, none into it, and the
    // start is never the terminal.
    std::string row = " c_start_out: ";
    leading = true;
    for (std::size_t k = 1; k < m; ++k) append_term(row, 1.0, u_name(0, k), leading);
    lp += row + " = 1\n";
    row = " c_start_in: ";
    leading = true;
    for (std::size_t j = 1; j < m; ++j) append_term(row, 1.0, u_name(j, 0), leading);
    lp += row + " = 0\n";
    lp += " c_start_term: 1 z_1 = 0\n";
  }
  {
    // Exactly l-1 transitions, no self loops.
    std::string row = " c_transitions: ";
    leading = true;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) append_term(row, 1.0, u_name(j, k), leading);
    }
    lp += row + " = " + std::to_string(l - 1) + "\n";
    row = " c_no_self: ";
    leading = true;
    for (std::size_t j = 0; j < m; ++j) append_term(row, 1.0, u_name(j, j), leading);
    lp += row + " = 0\n";
  }
  for (std::size_t i = 1; i < m; ++i) {
    // Visit each point at most once: in-degree capped at one, and
    // out-degree plus the terminal indicator balancing the in-degree.
    std::string row = " c_indegree_" + std::to_string(i + 1) + ": ";
    leading = true;
    for (std::size_t j = 0; j < m; ++j) append_term(row, 1.0, u_name(j, i), leading);
    lp += row + " <= 1\n";

    row = " c_degree_" + std::to_string(i + 1) + ": ";
    leading = true;
    for (std::size_t j = 0; j < m; ++j) append_term(row, 1.0, u_name(j, i), leading);
    for (std::size_t k = 1; k < m; ++k) append_term(row, -1.0, u_name(i, k), leading);
    append_term(row, -1.0, "z_" + std::to_string(i + 1), leading);
    lp += row + " = 0\n";
  }
  // MTZ ordering: v_j - v_k + (m-1) u_jk <= m-2 eliminates subtours.
  for (std::size_t j = 1; j < m; ++j) {
    for (std::size_t k = 1; k < m; ++k) {
      if (j == k) continue;
      std::string row = " c_order_" + std::to_string(j + 1) + "_" + std::to_string(k + 1) + ": ";
      leading = true;
      append_term(row, 1.0, "v_" + std::to_string(j + 1), leading);
      append_term(row, -1.0, "v_" + std::to_string(k + 1), leading);
      append_term(row, static_cast<double>(m - 1), u_name(j, k), leading);
      lp += row + " <= " + std::to_string(m - 2) + "\n";
    }
  }
  // One cut per forbidden path: its l-1 transitions cannot all be used.
  for (std::size_t c = 0; c < model.cuts.size(); ++c) {
    const Trajectory& y = model.cuts[c];
    std::string row = " c_cut_" + std::to_string(c + 1) + ": ";
    leading = true;
    for (std::size_t t = 0; t + 1 < y.size(); ++t) {
      append_term(row, 1.0,
                  u_name(static_cast<std::size_t>(y[t]), static_cast<std::size_t>(y[t + 1])),
                  leading);
    }
    lp += row + " <= " + std::to_string(l - 2) + "\n";
  }

  lp += "Bounds\n";
  for (std::size_t j = 0; j < m; ++j) {
    lp += " 0 <= v_" + std::to_string(j + 1) + " <= " + std::to_string(m) + "\n";
  }

  lp += "Binaries\n";
  for (std::size_t j = 0; j < m; ++j) {
    std::string row;
    for (std::size_t k = 0; k < m; ++k) row += " " + u_name(j, k);
    lp += row + "\n";
  }
  {
    std::string row;
    for (std::size_t j = 0; j < m; ++j) row += " z_" + std::to_string(j + 1);
    lp += row + "\n";
  }
  lp += "Generals\n";
  {
    std::string row;
    for (std::size_t j = 0; j < m; ++j) row += " v_" + std::to_string(j + 1);
    lp += row + "\n";
  }
  lp += "End\n";
  return lp;
}

void export_ilp(const ChainScores& scores, std::span<const PathCut> cuts,
                const std::filesystem::path& out) {
  const IlpModel model = build_ilp(scores, cuts);
  std::ofstream file(out, std::ios::binary);
  if (!file) throw IoError("cannot open for writing: " + out.string());
  file << ilp_to_lp_format(model);
  if (!file) throw IoError("write failed: " + out.string());
}

Engine select_engine(const Query& query, int ilp_threshold) {
  return query.length >= ilp_threshold ? Engine::ExactPath : Engine::Slva;
}

}  // namespace seqrec
