// Max-margin training of the structured chain models, the RankSVM
// ranking baseline, and the popularity/random baselines, plus top-k
// path prediction shared by all of them.

#pragma once

#include <cstdint>
#include <vector>

#include "seqrec/decode.hpp"
#include "seqrec/domain.hpp"
#include "seqrec/pathopt.hpp"

namespace seqrec {

enum class Formulation { NSlack, OneSlack };

struct TrainConfig {
  double reg_c = 1.0;
  ModelVariant variant = ModelVariant::SP;
  int max_epochs = 200;
  double tol = 1e-2;  // on length-normalized violation
  std::uint64_t seed = 0;
  Formulation formulation = Formulation::NSlack;
  std::int64_t max_expansions = kDefaultMaxExpansions;
};

struct EpochDiagnostics {
  int epoch = 0;
  double max_violation = 0.0;
  double objective = 0.0;
  double seconds = 0.0;
};

struct TrainDiagnostics {
  std::vector<EpochDiagnostics> epochs;
  std::int64_t ground_truth_constraints = 0;  // generated constraints that hit a ground truth
  std::int64_t looped_constraints = 0;        // generated constraints containing a repeat
  bool converged = false;
  double final_violation = 0.0;
};

// Constraint-generation training of SP/SR/SPpath/SRpath by epoch-wise
// subgradient steps: every epoch decodes the most violating sequence
// for each (example, truth) pair under the variant's feasible set and
// steps with rate 1/(lambda t), lambda = 1/C, on the 1/N-normalized
// hinge objective. Stops when the maximum length-normalized violation
// drops to tol. Throws SearchExhaustedError naming the query when
// loss-augmented inference runs out of budget, NonPositiveC for a bad
// regularizer.
Model train_structured(const Dataset& train, const TrainConfig& config,
                       TrainDiagnostics* diagnostics = nullptr);

// Ranked POI pairs per example: (p, p') present iff p occurs strictly
// more often than p' across the example's ground-truth trajectories.
struct RankPairSet {
  std::vector<std::vector<std::pair<PoiId, PoiId>>> pairs;  // per example

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& v : pairs) n += v.size();
    return n;
  }
};

RankPairSet build_rank_pairs(const Dataset& train);

// Squared-hinge RankSVM over unary features, solved by full-gradient
// descent with backtracking line search to gradient norm <= 1e-5.
// The returned model has zero pairwise weights.
Model train_poirank(const Dataset& train, double reg_c);

struct PredictOptions {
  int ilp_threshold = 10;  // route to the exact path engine at this length
  std::int64_t max_expansions = kDefaultMaxExpansions;
};

struct TopKResult {
  std::vector<Trajectory> items;
  bool exhausted = false;  // fewer than k paths delivered
};

// Score tables a model induces for prediction; PoiRank scores are
// turned into log-probabilities so that path scores add up to the
// log-likelihood of the path.
ChainScores build_prediction_scores(const Model& model, const Query& query,
                                    const PoiTable& table);

// Top-k loop-free paths under the given chain scores, routed through
// select_engine; the exact engine falls back to list Viterbi when the
// POI universe exceeds its size cap.
TopKResult top_k_paths(const ChainScores& scores, std::int64_t k,
                       const PredictOptions& options = {});

// Top-k loop-free paths for any model variant. Throws Infeasible when
// the query length exceeds the POI count.
TopKResult predict_topk(const Model& model, const Query& query, std::int64_t k,
                        const PoiTable& table, const PredictOptions& options = {});

// Paths scored by accumulated POI popularity.
TopKResult baseline_popularity(const Dataset& train, const Query& query, std::int64_t k,
                               const PredictOptions& options = {});

// k independent uniform draws of loop-free continuations of the start.
std::vector<Trajectory> baseline_random(const Query& query, std::int64_t k, std::uint64_t seed,
                                        const PoiTable& table);

int hamming_distance(const Trajectory& a, const Trajectory& b);

void save_diagnostics_jsonl(const TrainDiagnostics& diagnostics, const std::string& path);

}  // namespace seqrec
