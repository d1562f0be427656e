// Shared fixtures: deterministic random score tables, brute-force
// enumeration oracles, and small synthetic corpora. The oracles stay
// independent of the production decoders on purpose.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "seqrec/decode.hpp"
#include "seqrec/domain.hpp"
#include "seqrec/features.hpp"
#include "seqrec/ingest.hpp"

namespace seqrec::testing {

// Uniform [0,1) from the raw 64-bit stream; avoids distribution
// implementation differences.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline ChainScores random_scores(std::size_t m, int length, PoiId start, std::mt19937_64& rng,
                                 double scale = 1.0) {
  ChainScores cs = ChainScores::zeros(start, length, m);
  for (int t = 1; t < length; ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      cs.unary(static_cast<std::size_t>(t), p) = scale * uniform01(rng);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) cs.pairwise(i, j) = scale * uniform01(rng);
  }
  return cs;
}

// Every sequence of the chain: start fixed, all m^(l-1) continuations.
inline std::vector<Trajectory> enumerate_sequences(std::size_t m, int length, PoiId start) {
  std::vector<Trajectory> out;
  Trajectory y(static_cast<std::size_t>(length));
  y[0] = start;
  const std::function<void(int)> rec = [&](int t) {
    if (t == length) {
      out.push_back(y);
      return;
    }
    for (std::size_t p = 0; p < m; ++p) {
      y[static_cast<std::size_t>(t)] = static_cast<PoiId>(p);
      rec(t + 1);
    }
  };
  rec(1);
  return out;
}

inline std::vector<Trajectory> enumerate_paths(std::size_t m, int length, PoiId start) {
  std::vector<Trajectory> out;
  for (Trajectory& y : enumerate_sequences(m, length, start)) {
    Trajectory sorted = y;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) {
      out.push_back(std::move(y));
    }
  }
  return out;
}

struct ScoredSeq {
  Trajectory seq;
  double score;
};

// Sorted (score desc, sequence lex asc) scored enumeration.
inline std::vector<ScoredSeq> oracle_ranking(const ChainScores& cs,
                                             const std::vector<Trajectory>& candidates) {
  std::vector<ScoredSeq> out;
  for (const Trajectory& y : candidates) out.push_back({y, cs.score(y)});
  std::sort(out.begin(), out.end(), [](const ScoredSeq& a, const ScoredSeq& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.seq < b.seq;
  });
  return out;
}

// A corpus that SP training can separate: truths are unconstrained
// chain optima of a planted model (so they dominate every sequence at
// scale), planted in the fitted feature space with repeat-penalizing
// pairwise diagonals so those optima are loop-free. Retries the plant
// until enough queries qualify.
Dataset separable_corpus(std::size_t m, int n_queries, std::mt19937_64& rng,
                         Model* planted_out = nullptr);

// A small POI table with spread-out coordinates and cycling categories.
inline PoiTable toy_table(std::size_t m, int n_categories = 3, int n_clusters = 2,
                          int n_bins = 3) {
  std::vector<Poi> pois;
  std::vector<std::string> cats;
  for (int c = 0; c < n_categories; ++c) cats.push_back("cat" + std::to_string(c));
  for (std::size_t i = 0; i < m; ++i) {
    Poi p;
    p.id = static_cast<PoiId>(i);
    p.category = cats[i % cats.size()];
    p.lon = static_cast<double>(i) * 0.01;
    p.lat = static_cast<double>(i % 7) * 0.02;
    p.popularity = static_cast<std::int64_t>(10 + 3 * i);
    p.n_visits = static_cast<std::int64_t>(20 + 5 * i);
    p.avg_duration = 60.0 * static_cast<double>(1 + (i % 4));
    p.cluster_id = static_cast<int>(i) % n_clusters;
    p.pop_bin = static_cast<int>(i) % n_bins;
    p.visit_bin = static_cast<int>((i + 1)) % n_bins;
    p.duration_bin = static_cast<int>(i) % n_bins;
    pois.push_back(std::move(p));
  }
  std::sort(cats.begin(), cats.end());
  return PoiTable(std::move(pois), std::move(cats), n_clusters, n_bins);
}

inline Dataset separable_corpus(std::size_t m, int n_queries, std::mt19937_64& rng,
                                Model* planted_out) {
  Dataset d;
  d.pois = toy_table(m, 4, 3, 3);

  // Normalizer over all candidate queries; truths are irrelevant to it.
  Dataset probe;
  probe.pois = d.pois;
  for (std::size_t s = 0; s < m; ++s) {
    for (int l : {3, 4, 5}) {
      probe.examples.push_back({Query{static_cast<PoiId>(s), l}, {{static_cast<PoiId>(s)}}});
    }
  }
  const FeatureMeta meta = fit_normalizer(probe);

  for (int attempt = 0; attempt < 64; ++attempt) {
    Model planted = zero_model(ModelVariant::SP, 1.0, meta);
    for (auto& w : planted.unary_weights) w = 4.0 * (uniform01(rng) - 0.5);
    for (auto& t : planted.pairwise_weights) {
      for (auto& w : t.data()) w = 4.0 * (uniform01(rng) - 0.5);
      for (std::size_t v = 0; v < t.rows(); ++v) t(v, v) -= 3.0;
    }

    d.examples.clear();
    for (const auto& cand : probe.examples) {
      const ChainScores cs = build_chain_scores(planted, cand.query, d.pois);
      const ScoredTrajectory free_best = viterbi(cs);
      if (has_repeats(free_best.sequence)) continue;
      d.examples.push_back({cand.query, {free_best.sequence}});
      if (static_cast<int>(d.examples.size()) == n_queries) break;
    }
    if (static_cast<int>(d.examples.size()) == n_queries) {
      if (planted_out) *planted_out = planted;
      break;
    }
  }
  d.raw_trajectory_count = d.total_truths();
  return d;
}

}  // namespace seqrec::testing
