#include "seqrec/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace seqrec {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::int64_t parse_int(const std::string& s, const char* what, std::size_t line_no) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("line ") + std::to_string(line_no) + ": bad " + what + " '" + s +
                     "'");
  }
  return value;
}

double parse_double(const std::string& s, const char* what, std::size_t line_no) {
  try {
    std::size_t consumed = 0;
    const double value = std::stod(s, &consumed);
    if (consumed != s.size()) throw std::invalid_argument(s);
    return value;
  } catch (const std::exception&) {
    throw ParseError(std::string("line ") + std::to_string(line_no) + ": bad " + what + " '" + s +
                     "'");
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Seeded Lloyd iterations on (lon, lat); returns dense labels in order
// of first occurrence so the labeling never depends on the draw order.
struct KmeansResult {
  std::vector<int> labels;
  std::vector<std::pair<double, double>> centroids;
  bool degenerate = false;
};

KmeansResult kmeans_lonlat(const std::vector<std::pair<double, double>>& points, int k,
                           std::uint64_t seed) {
  KmeansResult result;
  const std::size_t n = points.size();
  result.labels.assign(n, 0);
  if (n == 0) return result;

  std::vector<std::pair<double, double>> distinct(points);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < k) {
    k = static_cast<int>(distinct.size());
    result.degenerate = true;
  }

  std::mt19937_64 rng(seed);
  for (std::size_t i = distinct.size(); i > 1; --i) {
    std::swap(distinct[i - 1], distinct[rng() % i]);
  }
  std::vector<std::pair<double, double>> centroids(distinct.begin(), distinct.begin() + k);

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dx = points[i].first - centroids[static_cast<std::size_t>(c)].first;
        const double dy = points[i].second - centroids[static_cast<std::size_t>(c)].second;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sx(static_cast<std::size_t>(k), 0.0), sy(static_cast<std::size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sx[static_cast<std::size_t>(assign[i])] += points[i].first;
      sy[static_cast<std::size_t>(assign[i])] += points[i].second;
      cnt[static_cast<std::size_t>(assign[i])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[static_cast<std::size_t>(c)] > 0) {
        centroids[static_cast<std::size_t>(c)] = {
            sx[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)],
            sy[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)]};
      }
    }
  }

  // Relabel by first occurrence; drops empty clusters.
  std::vector<int> relabel(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int& r = relabel[static_cast<std::size_t>(assign[i])];
    if (r < 0) r = next++;
    result.labels[i] = r;
  }
  result.centroids.assign(static_cast<std::size_t>(next), {0.0, 0.0});
  std::vector<int> cnt(static_cast<std::size_t>(next), 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = result.centroids[static_cast<std::size_t>(result.labels[i])];
    c.first += points[i].first;
    c.second += points[i].second;
    cnt[static_cast<std::size_t>(result.labels[i])]++;
  }
  for (std::size_t c = 0; c < result.centroids.size(); ++c) {
    result.centroids[c].first /= cnt[c];
    result.centroids[c].second /= cnt[c];
  }
  return result;
}

std::vector<double> bin_edges_for(const std::vector<double>& values, const std::vector<int>& bins,
                                  int n_bins) {
  // Representative edges: the smallest value landing in each bin >= 1.
  std::vector<double> edges;
  for (int b = 1; b < n_bins; ++b) {
    double edge = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (bins[i] == b && (std::isnan(edge) || values[i] < edge)) edge = values[i];
    }
    if (!std::isnan(edge)) edges.push_back(edge);
  }
  return edges;
}

}  // namespace

std::vector<int> quantile_bins(const std::vector<double>& values, int n_bins) {
  const std::size_t n = values.size();
  std::vector<int> bins(n, 0);
  if (n == 0) return bins;
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto below = static_cast<std::int64_t>(
        std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin());
    const auto bin = below * n_bins / static_cast<std::int64_t>(n);
    bins[i] = static_cast<int>(std::min<std::int64_t>(bin, n_bins - 1));
  }
  return bins;
}

DeriveResult derive_stats(const std::vector<RawPoiRecord>& pois,
                          const std::vector<RawVisitRecord>& visits, const IngestConfig& config) {
  if (config.n_clusters < 1) throw std::invalid_argument("n_clusters must be >= 1");
  if (config.n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");

  DeriveResult result;

  std::vector<RawPoiRecord> sorted(pois);
  std::sort(sorted.begin(), sorted.end(),
            [](const RawPoiRecord& a, const RawPoiRecord& b) { return a.poi_id < b.poi_id; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i].poi_id == sorted[i - 1].poi_id) {
      throw ParseError("duplicate poi id " + std::to_string(sorted[i].poi_id));
    }
    result.id_map[sorted[i].poi_id] = static_cast<PoiId>(i);
  }
  const std::size_t m = sorted.size();

  std::vector<std::set<std::string>> users(m);
  std::vector<std::int64_t> n_visits(m, 0);
  std::vector<double> dur_sum(m, 0.0);
  std::vector<std::int64_t> dur_cnt(m, 0);
  for (const RawVisitRecord& v : visits) {
    auto it = result.id_map.find(v.poi_id);
    if (it == result.id_map.end()) {
      throw UnknownPoi("visit references unknown poi " + std::to_string(v.poi_id));
    }
    const auto d = static_cast<std::size_t>(it->second);
    users[d].insert(v.user_id);
    n_visits[d]++;
    if (v.arrival_ts && v.departure_ts) {
      dur_sum[d] += std::max(0.0, *v.departure_ts - *v.arrival_ts);
      dur_cnt[d]++;
    }
  }

  std::vector<std::pair<double, double>> coords(m);
  for (std::size_t i = 0; i < m; ++i) coords[i] = {sorted[i].lon, sorted[i].lat};
  KmeansResult km = kmeans_lonlat(coords, config.n_clusters, config.rng_seed);
  if (km.degenerate) {
    result.warnings.push_back("degenerate clustering: fewer distinct coordinates than clusters, "
                              "using " +
                              std::to_string(km.centroids.size()) + " clusters");
  }

  std::vector<double> pop(m), vis(m), dur(m);
  std::vector<Poi> table_pois(m);
  for (std::size_t i = 0; i < m; ++i) {
    Poi& p = table_pois[i];
    p.id = static_cast<PoiId>(i);
    p.category = sorted[i].category;
    p.lon = sorted[i].lon;
    p.lat = sorted[i].lat;
    p.popularity = static_cast<std::int64_t>(users[i].size());
    p.n_visits = n_visits[i];
    p.avg_duration = dur_cnt[i] > 0 ? dur_sum[i] / static_cast<double>(dur_cnt[i]) : 0.0;
    p.cluster_id = km.labels.empty() ? 0 : km.labels[i];
    pop[i] = static_cast<double>(p.popularity);
    vis[i] = static_cast<double>(p.n_visits);
    dur[i] = p.avg_duration;
  }
  const std::vector<int> pop_bins = quantile_bins(pop, config.n_bins);
  const std::vector<int> vis_bins = quantile_bins(vis, config.n_bins);
  const std::vector<int> dur_bins = quantile_bins(dur, config.n_bins);
  for (std::size_t i = 0; i < m; ++i) {
    table_pois[i].pop_bin = pop_bins[i];
    table_pois[i].visit_bin = vis_bins[i];
    table_pois[i].duration_bin = dur_bins[i];
  }

  std::vector<std::string> categories;
  for (const Poi& p : table_pois) categories.push_back(p.category);
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());

  std::map<std::string, std::vector<double>> edges;
  edges["popularity"] = bin_edges_for(pop, pop_bins, config.n_bins);
  edges["n_visits"] = bin_edges_for(vis, vis_bins, config.n_bins);
  edges["avg_duration"] = bin_edges_for(dur, dur_bins, config.n_bins);

  const int n_clusters = km.centroids.empty() ? 1 : static_cast<int>(km.centroids.size());
  result.table = PoiTable(std::move(table_pois), std::move(categories), n_clusters, config.n_bins,
                          std::move(km.centroids), std::move(edges));
  return result;
}

std::vector<RawPoiRecord> parse_poi_csv(const std::filesystem::path& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw ParseError("line 1: missing poi header");
  const auto header = split_csv_line(lines[0]);
  const std::vector<std::string> expected = {"poi_id", "category", "lon", "lat"};
  if (std::vector<std::string>(header.begin(),
                               header.begin() + std::min(header.size(), expected.size())) !=
          expected ||
      header.size() != expected.size()) {
    throw ParseError("line 1: poi header must be 'poi_id,category,lon,lat'");
  }
  std::vector<RawPoiRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 4) {
      throw ParseError("line " + std::to_string(i + 1) + ": expected 4 fields, got " +
                       std::to_string(f.size()));
    }
    RawPoiRecord r;
    r.poi_id = parse_int(f[0], "poi_id", i + 1);
    r.category = f[1];
    r.lon = parse_double(f[2], "lon", i + 1);
    r.lat = parse_double(f[3], "lat", i + 1);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<RawVisitRecord> parse_traj_csv(const std::filesystem::path& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw ParseError("line 1: missing trajectory header");
  const auto header = split_csv_line(lines[0]);
  const std::vector<std::string> base = {"user_id", "traj_id", "seq_index", "poi_id"};
  bool with_ts = false;
  if (header.size() == 4 && std::equal(base.begin(), base.end(), header.begin())) {
    with_ts = false;
  } else if (header.size() == 6 && std::equal(base.begin(), base.end(), header.begin()) &&
             header[4] == "arrival_ts" && header[5] == "departure_ts") {
    with_ts = true;
  } else {
    throw ParseError(
        "line 1: trajectory header must be "
        "'user_id,traj_id,seq_index,poi_id[,arrival_ts,departure_ts]'");
  }

  std::vector<RawVisitRecord> records;
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != (with_ts ? 6u : 4u)) {
      throw ParseError("line " + std::to_string(i + 1) + ": expected " +
                       std::to_string(with_ts ? 6 : 4) + " fields, got " +
                       std::to_string(f.size()));
    }
    RawVisitRecord r;
    r.user_id = f[0];
    r.traj_id = f[1];
    r.seq_index = static_cast<int>(parse_int(f[2], "seq_index", i + 1));
    r.poi_id = parse_int(f[3], "poi_id", i + 1);
    if (r.seq_index < 0) {
      throw ParseError("line " + std::to_string(i + 1) + ": negative seq_index");
    }
    if (!seen.insert({r.traj_id, r.seq_index}).second) {
      throw ParseError("line " + std::to_string(i + 1) + ": duplicate (traj_id, seq_index) (" +
                       r.traj_id + ", " + std::to_string(r.seq_index) + ")");
    }
    if (with_ts) {
      r.arrival_ts = parse_double(f[4], "arrival_ts", i + 1);
      r.departure_ts = parse_double(f[5], "departure_ts", i + 1);
    }
    records.push_back(std::move(r));
  }
  return records;
}

LoadResult load_corpus(const std::filesystem::path& traj_file,
                       const std::filesystem::path& poi_file, const IngestConfig& config) {
  const std::vector<RawPoiRecord> raw_pois = parse_poi_csv(poi_file);
  const std::vector<RawVisitRecord> visits = parse_traj_csv(traj_file);

  DeriveResult derived = derive_stats(raw_pois, visits, config);

  LoadResult result;
  result.warnings = derived.warnings;
  result.source_poi_ids.resize(derived.id_map.size());
  for (const auto& [file_id, dense] : derived.id_map) {
    result.source_poi_ids[static_cast<std::size_t>(dense)] = file_id;
  }

  // Assemble trajectories: per traj_id, visits ordered by seq_index
  // must form a contiguous 0..L-1 run.
  std::map<std::string, std::vector<std::pair<int, PoiId>>> by_traj;
  for (const RawVisitRecord& v : visits) {
    by_traj[v.traj_id].emplace_back(v.seq_index, derived.id_map.at(v.poi_id));
  }
  std::map<Query, std::set<Trajectory>> grouped;
  for (auto& [traj_id, steps] : by_traj) {
    std::sort(steps.begin(), steps.end());
    Trajectory y;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].first != static_cast<int>(i)) {
        throw ParseError("trajectory '" + traj_id + "': seq_index values are not contiguous from 0");
      }
      y.push_back(steps[i].second);
    }
    result.raw_length_histogram[static_cast<int>(y.size())]++;
    grouped[Query{y.front(), static_cast<int>(y.size())}].insert(std::move(y));
  }

  result.dataset.pois = std::move(derived.table);
  result.dataset.raw_trajectory_count = static_cast<std::int64_t>(by_traj.size());
  for (auto& [query, trajset] : grouped) {
    GroundTruthSet gt;
    gt.query = query;
    gt.trajectories.assign(trajset.begin(), trajset.end());
    result.dataset.examples.push_back(std::move(gt));
  }
  return result;
}

std::vector<std::pair<Dataset, Dataset>> split_monte_carlo(const Dataset& dataset,
                                                           double train_frac, int repeats,
                                                           std::uint64_t seed) {
  const std::size_t n = dataset.examples.size();
  if (n < 2) throw TooFewExamples("monte carlo splitting needs at least 2 examples");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("train_frac must be in (0, 1)");
  }

  std::size_t train_size =
      static_cast<std::size_t>(train_frac * static_cast<double>(n));
  train_size = std::clamp<std::size_t>(train_size, 1, n - 1);

  std::mt19937_64 rng(seed);
  std::vector<std::pair<Dataset, Dataset>> out;
  for (int r = 0; r < repeats; ++r) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);

    std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_size));
    std::vector<std::size_t> val_idx(idx.begin() + static_cast<std::ptrdiff_t>(train_size), idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    Dataset train, val;
    train.pois = dataset.pois;
    val.pois = dataset.pois;
    for (std::size_t i : train_idx) train.examples.push_back(dataset.examples[i]);
    for (std::size_t i : val_idx) val.examples.push_back(dataset.examples[i]);
    train.raw_trajectory_count = train.total_truths();
    val.raw_trajectory_count = val.total_truths();
    out.emplace_back(std::move(train), std::move(val));
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::vector<std::int64_t>& source_poi_ids,
                  const std::filesystem::path& path) {
  json j;
  j["version"] = 1;
  j["kind"] = "seqrec-dataset";
  j["n_raw_trajectories"] = dataset.raw_trajectory_count;
  j["n_bins"] = dataset.pois.n_bins();
  j["n_clusters"] = dataset.pois.n_clusters();
  j["categories"] = dataset.pois.categories();
  json cents = json::array();
  for (const auto& [lon, lat] : dataset.pois.cluster_centroids()) cents.push_back({lon, lat});
  j["cluster_centroids"] = std::move(cents);
  j["bin_edges"] = dataset.pois.bin_edges();

  json pois = json::array();
  for (const Poi& p : dataset.pois.pois()) {
    json jp;
    jp["id"] = p.id;
    jp["source_id"] =
        p.id < static_cast<PoiId>(source_poi_ids.size())
            ? source_poi_ids[static_cast<std::size_t>(p.id)]
            : static_cast<std::int64_t>(p.id);
    jp["category"] = p.category;
    jp["lon"] = p.lon;
    jp["lat"] = p.lat;
    jp["popularity"] = p.popularity;
    jp["n_visits"] = p.n_visits;
    jp["avg_duration"] = p.avg_duration;
    jp["cluster_id"] = p.cluster_id;
    jp["pop_bin"] = p.pop_bin;
    jp["visit_bin"] = p.visit_bin;
    jp["duration_bin"] = p.duration_bin;
    pois.push_back(std::move(jp));
  }
  j["pois"] = std::move(pois);

  json examples = json::array();
  for (const GroundTruthSet& ex : dataset.examples) {
    json je;
    je["start"] = ex.query.start;
    je["length"] = ex.query.length;
    je["trajectories"] = ex.trajectories;
    examples.push_back(std::move(je));
  }
  j["examples"] = std::move(examples);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

ArchiveData load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad dataset archive: ") + e.what());
  }
  if (!j.contains("kind") || j.at("kind").get<std::string>() != "seqrec-dataset") {
    throw ParseError("not a seqrec dataset archive: " + path.string());
  }

  ArchiveData out;
  out.dataset.raw_trajectory_count = j.at("n_raw_trajectories").get<std::int64_t>();

  std::vector<Poi> pois;
  for (const auto& jp : j.at("pois")) {
    Poi p;
    p.id = jp.at("id").get<PoiId>();
    p.category = jp.at("category").get<std::string>();
    p.lon = jp.at("lon").get<double>();
    p.lat = jp.at("lat").get<double>();
    p.popularity = jp.at("popularity").get<std::int64_t>();
    p.n_visits = jp.at("n_visits").get<std::int64_t>();
    p.avg_duration = jp.at("avg_duration").get<double>();
    p.cluster_id = jp.at("cluster_id").get<int>();
    p.pop_bin = jp.at("pop_bin").get<int>();
    p.visit_bin = jp.at("visit_bin").get<int>();
    p.duration_bin = jp.at("duration_bin").get<int>();
    pois.push_back(std::move(p));
    out.source_poi_ids.push_back(jp.contains("source_id") ? jp.at("source_id").get<std::int64_t>()
                                                          : p.id);
  }
  std::vector<std::pair<double, double>> centroids;
  for (const auto& c : j.at("cluster_centroids")) {
    centroids.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  }
  out.dataset.pois = PoiTable(
      std::move(pois), j.at("categories").get<std::vector<std::string>>(),
      j.at("n_clusters").get<int>(), j.at("n_bins").get<int>(), std::move(centroids),
      j.at("bin_edges").get<std::map<std::string, std::vector<double>>>());

  for (const auto& je : j.at("examples")) {
    GroundTruthSet ex;
    ex.query.start = je.at("start").get<PoiId>();
    ex.query.length = je.at("length").get<int>();
    ex.trajectories = je.at("trajectories").get<std::vector<Trajectory>>();
    out.dataset.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace seqrec
