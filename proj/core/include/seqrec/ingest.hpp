// Corpus loading: CSV parsing, POI statistics (popularity, visit
// counts, durations, k-means clusters, quantile bins), grouping of
// trajectories into queries with multiple ground truths, dataset
// archive serialization, and Monte Carlo splitting.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqrec/domain.hpp"

namespace seqrec {

struct RawPoiRecord {
  std::int64_t poi_id = 0;  // id as it appears in the file
  std::string category;
  double lon = 0.0;
  double lat = 0.0;
};

struct RawVisitRecord {
  std::string user_id;
  std::string traj_id;
  int seq_index = 0;
  std::int64_t poi_id = 0;
  std::optional<double> arrival_ts;
  std::optional<double> departure_ts;
};

struct IngestConfig {
  int n_clusters = 5;
  int n_bins = 5;
  std::uint64_t rng_seed = 0;
};

struct DeriveResult {
  PoiTable table;
  std::map<std::int64_t, PoiId> id_map;  // file poi id -> dense id
  std::vector<std::string> warnings;
};

// POI statistics from visit records: popularity counts distinct users,
// n_visits counts records, avg_duration comes from timestamps when
// present. Clusters by seeded k-means on (lon, lat); bins by quantile
// binning over the POI population. File ids are remapped to dense
// 0-based ids in ascending file-id order.
DeriveResult derive_stats(const std::vector<RawPoiRecord>& pois,
                          const std::vector<RawVisitRecord>& visits, const IngestConfig& config);

struct LoadResult {
  Dataset dataset;
  std::vector<std::int64_t> source_poi_ids;    // dense id -> file id
  std::map<int, std::int64_t> raw_length_histogram;  // per-length trajectory counts, pre-dedup
  std::vector<std::string> warnings;
};

// Parses the two CSVs and groups trajectories into ground-truth sets
// keyed by (first POI, length). Throws ParseError with a line number on
// malformed rows and UnknownPoi for dangling references.
LoadResult load_corpus(const std::filesystem::path& traj_file,
                       const std::filesystem::path& poi_file, const IngestConfig& config);

std::vector<RawPoiRecord> parse_poi_csv(const std::filesystem::path& path);
std::vector<RawVisitRecord> parse_traj_csv(const std::filesystem::path& path);

// bin(v) = floor(#{u : u < v} * n_bins / n), capped at n_bins - 1:
// monotone, tie-consistent, and balanced under distinct values.
std::vector<int> quantile_bins(const std::vector<double>& values, int n_bins);

// Whole ground-truth sets sampled into (train, validation) pairs
// without replacement; reproducible from the seed.
std::vector<std::pair<Dataset, Dataset>> split_monte_carlo(const Dataset& dataset,
                                                           double train_frac, int repeats,
                                                           std::uint64_t seed);

// Canonical JSON archive of a dataset.
void save_dataset(const Dataset& dataset, const std::vector<std::int64_t>& source_poi_ids,
                  const std::filesystem::path& path);

struct ArchiveData {
  Dataset dataset;
  std::vector<std::int64_t> source_poi_ids;
};

ArchiveData load_dataset(const std::filesystem::path& path);

}  // namespace seqrec
