#include "seqrec/domain.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace seqrec {

using nlohmann::json;

PoiTable::PoiTable(std::vector<Poi> pois, std::vector<std::string> categories,
                   int n_clusters, int n_bins,
                   std::vector<std::pair<double, double>> cluster_centroids,
                   std::map<std::string, std::vector<double>> bin_edges)
    : pois_(std::move(pois)),
      categories_(std::move(categories)),
      n_clusters_(n_clusters),
      n_bins_(n_bins),
      cluster_centroids_(std::move(cluster_centroids)),
      bin_edges_(std::move(bin_edges)) {
  std::sort(categories_.begin(), categories_.end());
  categories_.erase(std::unique(categories_.begin(), categories_.end()), categories_.end());
  category_index_.reserve(pois_.size());
  for (const Poi& p : pois_) {
    auto it = std::lower_bound(categories_.begin(), categories_.end(), p.category);
    if (it == categories_.end() || *it != p.category) {
      throw std::invalid_argument("PoiTable: category not in vocabulary: " + p.category);
    }
    category_index_.push_back(static_cast<int>(it - categories_.begin()));
  }
}

std::int64_t Dataset::total_truths() const {
  std::int64_t n = 0;
  for (const auto& ex : examples) n += static_cast<std::int64_t>(ex.trajectories.size());
  return n;
}

double ChainScores::score(const Trajectory& y) const {
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += unary(t, static_cast<std::size_t>(y[t]));
  }
  for (std::size_t t = 0; t + 1 < y.size(); ++t) {
    s += pairwise(static_cast<std::size_t>(y[t]), static_cast<std::size_t>(y[t + 1]));
  }
  return s;
}

ChainScores ChainScores::zeros(PoiId start, int length, std::size_t n_pois) {
  ChainScores cs;
  cs.start = start;
  cs.length = length;
  cs.unary = Matrix(static_cast<std::size_t>(length), n_pois, 0.0);
  cs.pairwise = Matrix(n_pois, n_pois, 0.0);
  for (std::size_t p = 0; p < n_pois; ++p) {
    cs.unary(0, p) = (static_cast<PoiId>(p) == start) ? 0.0 : kNegInf;
  }
  return cs;
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::SP: return "SP";
    case ModelVariant::SR: return "SR";
    case ModelVariant::SPpath: return "SPpath";
    case ModelVariant::SRpath: return "SRpath";
    case ModelVariant::PoiRank: return "PoiRank";
  }
  throw std::logic_error("bad ModelVariant");
}

ModelVariant variant_from_string(const std::string& s) {
  std::string k;
  for (char c : s) k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (k == "sp") return ModelVariant::SP;
  if (k == "sr") return ModelVariant::SR;
  if (k == "sppath") return ModelVariant::SPpath;
  if (k == "srpath") return ModelVariant::SRpath;
  if (k == "poirank") return ModelVariant::PoiRank;
  throw std::invalid_argument("unknown model variant: " + s);
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw ParseError("ragged matrix in model file");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

json meta_to_json(const FeatureMeta& meta) {
  json j;
  j["categories"] = meta.categories;
  j["n_clusters"] = meta.n_clusters;
  j["n_bins"] = meta.n_bins;
  j["mean"] = meta.mean;
  j["stdev"] = meta.stdev;
  json cents = json::array();
  for (const auto& [lon, lat] : meta.cluster_centroids) cents.push_back({lon, lat});
  j["cluster_centroids"] = std::move(cents);
  j["bin_edges"] = meta.bin_edges;
  return j;
}

FeatureMeta meta_from_json(const json& j) {
  FeatureMeta meta;
  meta.categories = j.at("categories").get<std::vector<std::string>>();
  meta.n_clusters = j.at("n_clusters").get<int>();
  meta.n_bins = j.at("n_bins").get<int>();
  meta.mean = j.at("mean").get<std::vector<double>>();
  meta.stdev = j.at("stdev").get<std::vector<double>>();
  for (const auto& c : j.at("cluster_centroids")) {
    meta.cluster_centroids.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  }
  meta.bin_edges = j.at("bin_edges").get<std::map<std::string, std::vector<double>>>();
  return meta;
}

}  // namespace

std::string serialize_model(const Model& m) {
  json j;
  j["version"] = 1;
  j["variant"] = to_string(m.variant);
  j["reg_c"] = m.reg_c;
  j["feature_meta"] = meta_to_json(m.meta);
  j["unary_weights"] = m.unary_weights;
  json pw;
  const auto& names = pairwise_feature_names();
  for (std::size_t f = 0; f < m.pairwise_weights.size(); ++f) {
    pw[names.at(f)] = matrix_to_json(m.pairwise_weights[f]);
  }
  j["pairwise_weights"] = std::move(pw);
  return j.dump(2) + "\n";
}

Model deserialize_model(const std::string& json_text) {
  json j = json::parse(json_text);
  if (j.at("version").get<int>() != 1) throw ParseError("unsupported model file version");
  Model m;
  m.variant = variant_from_string(j.at("variant").get<std::string>());
  m.reg_c = j.at("reg_c").get<double>();
  m.meta = meta_from_json(j.at("feature_meta"));
  m.unary_weights = j.at("unary_weights").get<std::vector<double>>();
  const auto& pw = j.at("pairwise_weights");
  for (const auto& name : pairwise_feature_names()) {
    if (pw.contains(name)) m.pairwise_weights.push_back(matrix_from_json(pw.at(name)));
  }
  return m;
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << serialize_model(m);
  if (!out) throw IoError("write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

std::vector<Violation> validate_dataset(const Dataset& dataset) {
  std::vector<Violation> out;
  const PoiTable& table = dataset.pois;
  const int bins = table.n_bins();

  for (const Poi& p : table.pois()) {
    if (p.popularity > p.n_visits) {
      out.push_back({-1, "poi.popularity<=n_visits",
                     "poi " + std::to_string(p.id) + " has popularity " +
                         std::to_string(p.popularity) + " > n_visits " +
                         std::to_string(p.n_visits)});
    }
    if (p.popularity < 0 || p.n_visits < 0 || p.avg_duration < 0) {
      out.push_back({-1, "poi.nonnegative_counts", "poi " + std::to_string(p.id)});
    }
    for (auto [bin, name] : {std::pair{p.pop_bin, "pop_bin"},
                             std::pair{p.visit_bin, "visit_bin"},
                             std::pair{p.duration_bin, "duration_bin"}}) {
      if (bin < 0 || bin >= bins) {
        out.push_back({-1, "poi.bin_range",
                       "poi " + std::to_string(p.id) + " " + name + "=" +
                           std::to_string(bin) + " outside [0," + std::to_string(bins) + ")"});
      }
    }
  }

  std::set<Query> seen_queries;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    const int idx = static_cast<int>(i);
    if (!seen_queries.insert(ex.query).second) {
      out.push_back({idx, "dataset.unique_queries",
                     "duplicate query (start=" + std::to_string(ex.query.start) +
                         ", length=" + std::to_string(ex.query.length) + ")"});
    }
    if (!table.contains(ex.query.start)) {
      out.push_back({idx, "query.start_exists", "start " + std::to_string(ex.query.start)});
    }
    if (ex.query.length < 1) {
      out.push_back({idx, "query.length>=1", "length " + std::to_string(ex.query.length)});
    }
    if (ex.trajectories.empty()) {
      out.push_back({idx, "ground_truth.nonempty", "no trajectories"});
    }
    std::set<Trajectory> distinct;
    for (const Trajectory& y : ex.trajectories) {
      if (y.empty()) {
        out.push_back({idx, "trajectory.nonempty", "empty trajectory"});
        continue;
      }
      if (!distinct.insert(y).second) {
        out.push_back({idx, "ground_truth.duplicate_free", "duplicate trajectory"});
      }
      for (PoiId p : y) {
        if (!table.contains(p)) {
          out.push_back({idx, "trajectory.pois_exist", "unknown poi " + std::to_string(p)});
        }
      }
      if (y.front() != ex.query.start) {
        out.push_back({idx, "ground_truth.start_matches",
                       "trajectory starts at " + std::to_string(y.front())});
      }
      if (static_cast<int>(y.size()) != ex.query.length) {
        out.push_back({idx, "ground_truth.length_matches",
                       "trajectory length " + std::to_string(y.size()) + " != query length " +
                           std::to_string(ex.query.length)});
      }
    }
  }

  if (dataset.total_truths() < static_cast<std::int64_t>(dataset.examples.size())) {
    out.push_back({-1, "dataset.N>=n", "fewer trajectories than examples"});
  }
  return out;
}

}  // namespace seqrec
