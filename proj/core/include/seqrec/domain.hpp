// Core value types for sequence recommendation over a POI universe.
// Everything here is immutable after construction and safe to share
// across threads.

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqrec {

using PoiId = std::int32_t;

// A candidate sequence; element j is the POI visited at position j+1.
using Trajectory = std::vector<PoiId>;

// Most-negative finite double stands in for minus infinity in score
// tables so that max/argmax stay total and NaN never appears.
inline constexpr double kNegInf = std::numeric_limits<double>::lowest();

struct Poi {
  PoiId id = 0;
  std::string category;
  double lon = 0.0;
  double lat = 0.0;
  std::int64_t popularity = 0;  // distinct users that visited
  std::int64_t n_visits = 0;    // total visit records
  double avg_duration = 0.0;    // seconds, 0 when timestamps absent
  int cluster_id = 0;
  int pop_bin = 0;
  int visit_bin = 0;
  int duration_bin = 0;
};

// Dense row-major matrix of scores. Deliberately minimal; decoders
// index it in tight loops.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// The POI universe plus the statistics derived at ingest time.
// Ids are dense 0-based indices into the table.
class PoiTable {
 public:
  PoiTable() = default;
  PoiTable(std::vector<Poi> pois, std::vector<std::string> categories,
           int n_clusters, int n_bins,
           std::vector<std::pair<double, double>> cluster_centroids = {},
           std::map<std::string, std::vector<double>> bin_edges = {});

  std::size_t size() const { return pois_.size(); }
  bool contains(PoiId id) const { return id >= 0 && static_cast<std::size_t>(id) < pois_.size(); }
  const Poi& operator[](PoiId id) const { return pois_[static_cast<std::size_t>(id)]; }
  const std::vector<Poi>& pois() const { return pois_; }

  const std::vector<std::string>& categories() const { return categories_; }
  int n_categories() const { return static_cast<int>(categories_.size()); }
  int n_clusters() const { return n_clusters_; }
  int n_bins() const { return n_bins_; }
  int category_index(PoiId id) const { return category_index_[static_cast<std::size_t>(id)]; }

  const std::vector<std::pair<double, double>>& cluster_centroids() const { return cluster_centroids_; }
  const std::map<std::string, std::vector<double>>& bin_edges() const { return bin_edges_; }

 private:
  std::vector<Poi> pois_;                    // index == id
  std::vector<std::string> categories_;      // sorted vocabulary
  std::vector<int> category_index_;          // per poi, index into categories_
  int n_clusters_ = 0;
  int n_bins_ = 0;
  std::vector<std::pair<double, double>> cluster_centroids_;  // (lon, lat)
  std::map<std::string, std::vector<double>> bin_edges_;      // per binned attribute
};

// The input of every model: start POI and requested sequence length
// (counting the start).
struct Query {
  PoiId start = 0;
  int length = 1;

  bool operator==(const Query&) const = default;
  auto operator<=>(const Query&) const = default;
};

// All observed output sequences for one query.
struct GroundTruthSet {
  Query query;
  std::vector<Trajectory> trajectories;  // distinct, sorted for determinism
};

struct Dataset {
  PoiTable pois;
  std::vector<GroundTruthSet> examples;
  // Trajectory records seen at ingest before per-query deduplication.
  std::int64_t raw_trajectory_count = 0;

  std::int64_t total_truths() const;  // N = sum of n_i
};

// Sufficient statistics for every decoder: per-position unary scores
// and a POI-by-POI transition score table. Row 0 (position 1) is
// clamped: 0 at the start POI, kNegInf elsewhere.
struct ChainScores {
  PoiId start = 0;
  int length = 1;      // l
  Matrix unary;        // length x m
  Matrix pairwise;     // m x m

  std::size_t n_pois() const { return pairwise.rows(); }

  // Score of a conforming sequence under these tables.
  double score(const Trajectory& y) const;

  static ChainScores zeros(PoiId start, int length, std::size_t n_pois);
};

enum class ModelVariant { SP, SR, SPpath, SRpath, PoiRank };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

// Normalization constants and vocabulary metadata captured at training
// time; everything needed to reproduce the feature space.
struct FeatureMeta {
  std::vector<std::string> categories;
  int n_clusters = 0;
  int n_bins = 0;
  std::vector<double> mean;    // per unary dimension
  std::vector<double> stdev;   // per unary dimension, 1.0 where degenerate
  std::vector<std::pair<double, double>> cluster_centroids;
  std::map<std::string, std::vector<double>> bin_edges;

  int n_unary_dims() const { return static_cast<int>(mean.size()); }
  bool operator==(const FeatureMeta&) const = default;
};

// Names and value cardinalities of the pairwise factor features, in
// serialization order.
inline const std::vector<std::string>& pairwise_feature_names() {
  static const std::vector<std::string> names = {
      "category", "neighbourhood", "pop_bin", "visit_bin", "duration_bin"};
  return names;
}

struct Model {
  ModelVariant variant = ModelVariant::SP;
  double reg_c = 1.0;
  std::vector<double> unary_weights;
  std::vector<Matrix> pairwise_weights;  // one value x value table per pairwise feature
  FeatureMeta meta;

  bool operator==(const Model&) const = default;
};

std::string serialize_model(const Model& m);
Model deserialize_model(const std::string& json_text);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

struct Violation {
  int example = -1;  // index into Dataset::examples, -1 for table-level
  std::string rule;
  std::string detail;
};

// Returns one entry per violated invariant; empty iff the dataset is
// well formed. Pure: never throws on bad data.
std::vector<Violation> validate_dataset(const Dataset& dataset);

// Error taxonomy shared by the modules.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownPoi : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonConforming : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewExamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoPairs : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonPositiveC : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SearchExhaustedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace seqrec
