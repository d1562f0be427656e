// Sequence metrics (point F1, pair F1, Kendall tau-b over POI ranks)
// and the evaluation protocol: leave-one-query-out cross validation
// with Monte Carlo regularizer tuning and best-of-top-k scoring.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqrec/domain.hpp"
#include "seqrec/learn.hpp"

namespace seqrec {

// F1 over the sets of distinct POIs, order-insensitive.
double f1_points(const Trajectory& truth, const Trajectory& pred);

// F1 over the sets of ordered POI pairs {(y_i, y_j) : i < j}.
double f1_pairs(const Trajectory& truth, const Trajectory& pred);

// Kendall tau-b of the POI ranks induced by sequence position: position
// j gets rank m - j + 1, unvisited POIs rank 0. A degenerate
// denominator (l = m = 1) returns 1.0 by convention.
double kendall_tau_b(const Trajectory& truth, const Trajectory& pred, int m);

struct MonteCarloConfig {
  double train_frac = 0.8;
  int repeats = 5;
};

// A named trainer+predictor pair evaluate_loqo can drive. `fit` returns
// the predictor closure; non-tunable methods ignore the regularizer.
struct Method {
  std::string name;
  bool tunable = false;
  std::function<std::function<TopKResult(const Query&, std::int64_t)>(
      const Dataset& train, double reg_c, std::uint64_t seed)>
      fit;
};

// Methods by name: random, popularity, poirank, sp, sr, sppath, srpath.
Method make_method(const std::string& name, const TrainConfig& base_config = {},
                   const PredictOptions& options = {});

struct QueryOutcome {
  Query query;
  double f1_points = 0.0;
  double f1_pairs = 0.0;
  double tau_b = 0.0;
  double chosen_c = 0.0;
  bool failed = false;
  std::string error;
};

struct Aggregate {
  double mean = 0.0;
  double std_error = 0.0;
};

struct MetricReport {
  std::string method;
  std::int64_t k = 1;
  std::vector<QueryOutcome> per_query;
  Aggregate f1_points;
  Aggregate f1_pairs;
  Aggregate tau_b;
  int evaluated = 0;
  int failed = 0;
};

// Leave-one-query-out evaluation: every held-out query is predicted by
// a model trained on the remaining examples (with C tuned on Monte
// Carlo splits of those when the method is tunable), and each metric
// takes the best value over (ground truth x top-k prediction). Queries
// of length 1 are skipped; per-query failures are recorded and excluded
// from the aggregates.
MetricReport evaluate_loqo(const Dataset& dataset, const Method& method, std::int64_t k,
                           const std::vector<double>& c_grid, const MonteCarloConfig& mc,
                           std::uint64_t seed, int threads = 0);

inline const std::vector<double>& default_c_grid() {
  static const std::vector<double> grid = {1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};
  return grid;
}

std::string query_id(const Query& q);

// Per-query rows followed by one `mean` row per method/k.
void write_report_csv(const std::vector<MetricReport>& reports,
                      const std::filesystem::path& path);

// Aggregates per method/k.
void write_report_json(const std::vector<MetricReport>& reports,
                       const std::filesystem::path& path);

// SEQREC_THREADS when set, hardware concurrency otherwise.
int thread_budget();

}  // namespace seqrec
