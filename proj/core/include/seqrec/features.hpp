// POI-query unary features, pairwise factor features, the joint feature
// map and its induced score tables.

#pragma once

#include <vector>

#include "seqrec/domain.hpp"

namespace seqrec {

// Unary feature layout, after the category and cluster one-hot blocks.
// Real-valued entries are z-scored by FeatureMeta; one-hot blocks pass
// through untouched.
enum UnaryOffset : int {
  kLogPopularity = 0,
  kLogNVisits,
  kLogAvgDuration,
  kTrajLen,
  kSameCatStart,
  kSameNeighbourhoodStart,
  kDiffPopStart,
  kDiffNVisitStart,
  kDiffDurationStart,
  kDistStart,
  kNumScalarFeatures,
};

double haversine_km(double lon1, double lat1, double lon2, double lat2);

int unary_dimension(const PoiTable& table);

// Raw (unstandardized) feature vector of a POI with respect to a query.
std::vector<double> raw_unary_features(const Poi& poi, const Query& query,
                                       const PoiTable& table);

// Standardized features under the fitted meta.
std::vector<double> unary_features(const Poi& poi, const Query& query, const PoiTable& table,
                                   const FeatureMeta& meta);

// Per-dimension population mean/std over every (poi, query) pair drawn
// from the training queries; degenerate dimensions get std 1 and
// one-hot blocks are left with mean 0, std 1.
FeatureMeta fit_normalizer(const Dataset& train);

// Value of pairwise feature `f` (index into pairwise_feature_names) at
// a POI, and the cardinality of that feature's value space.
int pairwise_value(const PoiTable& table, PoiId p, std::size_t f);
int pairwise_cardinality(const FeatureMeta& meta, std::size_t f);

// Joint feature map: the summed unary features of positions 2..l
// concatenated with the flattened transition-count table of each
// pairwise feature. The model score of y is exactly the dot product of
// the weights against this vector.
std::vector<double> joint_feature_map(const Query& query, const Trajectory& y,
                                      const PoiTable& table, const FeatureMeta& meta);

std::size_t joint_dimension(const FeatureMeta& meta);

// <w, Psi(x, y)> without materializing Psi.
double model_score(const Model& model, const Query& query, const Trajectory& y,
                   const PoiTable& table);

// Unary and pairwise score tables for the decoders: linear in the model
// weights, with the position-1 row clamped to the start.
ChainScores build_chain_scores(const Model& model, const Query& query, const PoiTable& table);

// A zero-weight model over the feature space of `meta`.
Model zero_model(ModelVariant variant, double reg_c, const FeatureMeta& meta);

}  // namespace seqrec
