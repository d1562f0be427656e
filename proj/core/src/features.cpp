#include "seqrec/features.hpp"

#include <cmath>
#include <numbers>

namespace seqrec {

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double kDegToRad = std::numbers::pi / 180.0;
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlambda = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

int unary_dimension(const PoiTable& table) {
  return table.n_categories() + table.n_clusters() + kNumScalarFeatures;
}

std::vector<double> raw_unary_features(const Poi& poi, const Query& query,
                                       const PoiTable& table) {
  if (!table.contains(poi.id) || !table.contains(query.start)) {
    throw UnknownPoi("feature request references a POI outside the table");
  }
  const Poi& start = table[query.start];
  const int n_cat = table.n_categories();
  const int n_clu = table.n_clusters();

  std::vector<double> x(static_cast<std::size_t>(unary_dimension(table)), 0.0);
  x[static_cast<std::size_t>(table.category_index(poi.id))] = 1.0;
  x[static_cast<std::size_t>(n_cat + poi.cluster_id)] = 1.0;

  double* scalars = x.data() + n_cat + n_clu;
  scalars[kLogPopularity] = std::log1p(static_cast<double>(poi.popularity));
  scalars[kLogNVisits] = std::log1p(static_cast<double>(poi.n_visits));
  scalars[kLogAvgDuration] = std::log1p(poi.avg_duration);
  scalars[kTrajLen] = static_cast<double>(query.length);
  scalars[kSameCatStart] = poi.category == start.category ? 1.0 : -1.0;
  scalars[kSameNeighbourhoodStart] = poi.cluster_id == start.cluster_id ? 1.0 : -1.0;
  scalars[kDiffPopStart] = static_cast<double>(poi.popularity - start.popularity);
  scalars[kDiffNVisitStart] = static_cast<double>(poi.n_visits - start.n_visits);
  scalars[kDiffDurationStart] = poi.avg_duration - start.avg_duration;
  scalars[kDistStart] = haversine_km(poi.lon, poi.lat, start.lon, start.lat);
  return x;
}

std::vector<double> unary_features(const Poi& poi, const Query& query, const PoiTable& table,
                                   const FeatureMeta& meta) {
  std::vector<double> x = raw_unary_features(poi, query, table);
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = (x[d] - meta.mean[d]) / meta.stdev[d];
  }
  return x;
}

FeatureMeta fit_normalizer(const Dataset& train) {
  if (train.examples.empty()) throw EmptyDataset("fit_normalizer needs a non-empty dataset");
  const PoiTable& table = train.pois;
  const std::size_t dim = static_cast<std::size_t>(unary_dimension(table));
  const std::size_t onehot = static_cast<std::size_t>(table.n_categories() + table.n_clusters());

  std::vector<double> mean(dim, 0.0), sqsum(dim, 0.0);
  std::size_t count = 0;
  for (const auto& ex : train.examples) {
    for (const Poi& p : table.pois()) {
      const std::vector<double> x = raw_unary_features(p, ex.query, table);
      for (std::size_t d = 0; d < dim; ++d) {
        mean[d] += x[d];
        sqsum[d] += x[d] * x[d];
      }
      ++count;
    }
  }
  FeatureMeta meta;
  meta.categories = table.categories();
  meta.n_clusters = table.n_clusters();
  meta.n_bins = table.n_bins();
  meta.cluster_centroids = table.cluster_centroids();
  for (const auto& [name, edges] : table.bin_edges()) meta.bin_edges[name] = edges;
  meta.mean.assign(dim, 0.0);
  meta.stdev.assign(dim, 1.0);
  for (std::size_t d = onehot; d < dim; ++d) {
    const double mu = mean[d] / static_cast<double>(count);
    const double var = std::max(0.0, sqsum[d] / static_cast<double>(count) - mu * mu);
    const double sd = std::sqrt(var);
    meta.mean[d] = mu;
    meta.stdev[d] = sd > 0.0 ? sd : 1.0;
  }
  return meta;
}

int pairwise_value(const PoiTable& table, PoiId p, std::size_t f) {
  const Poi& poi = table[p];
  switch (f) {
    case 0: return table.category_index(p);
    case 1: return poi.cluster_id;
    case 2: return poi.pop_bin;
    case 3: return poi.visit_bin;
    case 4: return poi.duration_bin;
    default: throw std::out_of_range("pairwise feature index");
  }
}

int pairwise_cardinality(const FeatureMeta& meta, std::size_t f) {
  switch (f) {
    case 0: return static_cast<int>(meta.categories.size());
    case 1: return meta.n_clusters;
    case 2:
    case 3:
    case 4: return meta.n_bins;
    default: throw std::out_of_range("pairwise feature index");
  }
}

std::size_t joint_dimension(const FeatureMeta& meta) {
  std::size_t dim = meta.mean.size();
  for (std::size_t f = 0; f < pairwise_feature_names().size(); ++f) {
    const std::size_t card = static_cast<std::size_t>(pairwise_cardinality(meta, f));
    dim += card * card;
  }
  return dim;
}

std::vector<double> joint_feature_map(const Query& query, const Trajectory& y,
                                      const PoiTable& table, const FeatureMeta& meta) {
  if (y.empty() || y.front() != query.start ||
      static_cast<int>(y.size()) != query.length) {
    throw NonConforming("trajectory does not conform to the query");
  }
  std::vector<double> psi(joint_dimension(meta), 0.0);
  const std::size_t unary_dim = meta.mean.size();

  // The position-1 unary term is constant given the query and is
  // dropped, matching the clamped score tables.
  for (std::size_t t = 1; t < y.size(); ++t) {
    const std::vector<double> x = unary_features(table[y[t]], query, table, meta);
    for (std::size_t d = 0; d < unary_dim; ++d) psi[d] += x[d];
  }

  std::size_t offset = unary_dim;
  for (std::size_t f = 0; f < pairwise_feature_names().size(); ++f) {
    const std::size_t card = static_cast<std::size_t>(pairwise_cardinality(meta, f));
    for (std::size_t t = 0; t + 1 < y.size(); ++t) {
      const std::size_t vi = static_cast<std::size_t>(pairwise_value(table, y[t], f));
      const std::size_t vj = static_cast<std::size_t>(pairwise_value(table, y[t + 1], f));
      psi[offset + vi * card + vj] += 1.0;
    }
    offset += card * card;
  }
  return psi;
}

double model_score(const Model& model, const Query& query, const Trajectory& y,
                   const PoiTable& table) {
  if (y.empty() || y.front() != query.start ||
      static_cast<int>(y.size()) != query.length) {
    throw NonConforming("trajectory does not conform to the query");
  }
  double s = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const std::vector<double> x = unary_features(table[y[t]], query, table, model.meta);
    for (std::size_t d = 0; d < x.size(); ++d) s += model.unary_weights[d] * x[d];
  }
  for (std::size_t f = 0; f < model.pairwise_weights.size(); ++f) {
    const Matrix& w = model.pairwise_weights[f];
    for (std::size_t t = 0; t + 1 < y.size(); ++t) {
      s += w(static_cast<std::size_t>(pairwise_value(table, y[t], f)),
             static_cast<std::size_t>(pairwise_value(table, y[t + 1], f)));
    }
  }
  return s;
}

ChainScores build_chain_scores(const Model& model, const Query& query, const PoiTable& table) {
  const std::size_t m = table.size();
  ChainScores cs = ChainScores::zeros(query.start, query.length, m);

  // Tied weights make every row below position 1 identical.
  std::vector<double> row(m, 0.0);
  for (std::size_t p = 0; p < m; ++p) {
    const std::vector<double> x =
        unary_features(table[static_cast<PoiId>(p)], query, table, model.meta);
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s += model.unary_weights[d] * x[d];
    row[p] = s;
  }
  for (int t = 1; t < query.length; ++t) {
    for (std::size_t p = 0; p < m; ++p) cs.unary(static_cast<std::size_t>(t), p) = row[p];
  }

  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = 0; q < m; ++q) {
      double s = 0.0;
      for (std::size_t f = 0; f < model.pairwise_weights.size(); ++f) {
        s += model.pairwise_weights[f](
            static_cast<std::size_t>(pairwise_value(table, static_cast<PoiId>(p), f)),
            static_cast<std::size_t>(pairwise_value(table, static_cast<PoiId>(q), f)));
      }
      cs.pairwise(p, q) = s;
    }
  }
  return cs;
}

Model zero_model(ModelVariant variant, double reg_c, const FeatureMeta& meta) {
  Model m;
  m.variant = variant;
  m.reg_c = reg_c;
  m.unary_weights.assign(meta.mean.size(), 0.0);
  for (std::size_t f = 0; f < pairwise_feature_names().size(); ++f) {
    const std::size_t card = static_cast<std::size_t>(pairwise_cardinality(meta, f));
    m.pairwise_weights.emplace_back(card, card);
  }
  m.meta = meta;
  return m;
}

}  // namespace seqrec
