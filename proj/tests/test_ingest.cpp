#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "seqrec/ingest.hpp"

using namespace seqrec;
using namespace seqrec::testing;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("seqrec_ingest_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& content) {
  const fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

const char* kPoiCsv =
    "poi_id,category,lon,lat\n"
    "10,museum,0.0,0.0\n"
    "20,park,0.5,0.5\n"
    "30,museum,1.0,1.0\n"
    "40,cafe,1.5,1.5\n";

}  // namespace

TEST_CASE("load_corpus groups shared start and length into one query") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,1,20\n"
                                   "u1,t1,2,30\n"
                                   "u2,t2,0,10\n"
                                   "u2,t2,1,30\n"
                                   "u2,t2,2,20\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});

  CHECK(r.dataset.raw_trajectory_count == 2);
  REQUIRE(r.dataset.examples.size() == 1);
  const GroundTruthSet& ex = r.dataset.examples[0];
  CHECK(ex.query.start == 0);  // POI 10 densified to 0
  CHECK(ex.query.length == 3);
  CHECK(ex.trajectories.size() == 2);
  CHECK(validate_dataset(r.dataset).empty());
}

TEST_CASE("empty trajectory file yields a valid empty dataset") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv", "user_id,traj_id,seq_index,poi_id\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});
  CHECK(r.dataset.examples.empty());
  CHECK(r.dataset.raw_trajectory_count == 0);
  CHECK(r.dataset.pois.size() == 4);
}

TEST_CASE("corrupt rows report their line number") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,x,20\n");
  try {
    load_corpus(traj, poi, IngestConfig{});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("unknown POI reference is rejected") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,1,99\n");
  CHECK_THROWS_AS(load_corpus(traj, poi, IngestConfig{}), UnknownPoi);
}

TEST_CASE("non-contiguous seq_index is rejected") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,2,20\n");
  CHECK_THROWS_AS(load_corpus(traj, poi, IngestConfig{}), ParseError);
}

TEST_CASE("popularity counts distinct users, n_visits counts records") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,1,20\n"
                                   "u1,t2,0,10\n"
                                   "u1,t2,1,30\n"
                                   "u2,t3,0,10\n"
                                   "u2,t3,1,20\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});
  const Poi& p10 = r.dataset.pois[0];
  CHECK(p10.popularity == 2);  // u1, u2
  CHECK(p10.n_visits == 3);
  CHECK(p10.popularity <= p10.n_visits);
  const Poi& p20 = r.dataset.pois[1];
  CHECK(p20.popularity == 2);
  CHECK(p20.n_visits == 2);
}

TEST_CASE("durations come from timestamps when present") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id,arrival_ts,departure_ts\n"
                                   "u1,t1,0,10,100,160\n"
                                   "u1,t1,1,20,200,230\n"
                                   "u2,t2,0,10,300,420\n"
                                   "u2,t2,1,20,500,530\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});
  CHECK(r.dataset.pois[0].avg_duration == doctest::Approx(90.0));   // (60 + 120) / 2
  CHECK(r.dataset.pois[1].avg_duration == doctest::Approx(30.0));
  CHECK(r.dataset.pois[2].avg_duration == 0.0);  // never visited
}

TEST_CASE("quantile bins spread 25 distinct values evenly") {
  std::vector<double> values;
  for (int i = 0; i < 25; ++i) values.push_back(static_cast<double>(100 + 7 * i));
  const std::vector<int> bins = quantile_bins(values, 5);

  // Oracle: position in the sorted order fixes the bin.
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> count(5, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto rank = std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
    CHECK(bins[i] == static_cast<int>(rank * 5 / 25));
    CHECK(bins[i] >= 0);
    CHECK(bins[i] < 5);
    count[static_cast<std::size_t>(bins[i])]++;
  }
  for (int c : count) CHECK(c == 5);
}

TEST_CASE("quantile bins are monotone under ties") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> values;
    const std::size_t n = 3 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) values.push_back(static_cast<double>(rng() % 6));
    const std::vector<int> bins = quantile_bins(values, 4);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (values[i] <= values[j]) CHECK(bins[i] <= bins[j]);
        if (values[i] == values[j]) CHECK(bins[i] == bins[j]);
      }
    }
  }
}

TEST_CASE("single value lands in bin zero") {
  CHECK(quantile_bins({42.0}, 5) == std::vector<int>{0});
}

TEST_CASE("identical coordinates collapse clustering with a warning") {
  std::vector<RawPoiRecord> pois;
  for (int i = 0; i < 4; ++i) pois.push_back({i, "c", 2.5, 2.5});
  const DeriveResult r = derive_stats(pois, {}, IngestConfig{5, 5, 1});
  for (const Poi& p : r.table.pois()) CHECK(p.cluster_id == 0);
  REQUIRE(!r.warnings.empty());
  CHECK(r.warnings[0].find("degenerate") != std::string::npos);
}

TEST_CASE("a single POI gets bin zero and cluster zero") {
  const DeriveResult r = derive_stats({{7, "c", 1.0, 2.0}}, {}, IngestConfig{5, 5, 1});
  REQUIRE(r.table.size() == 1);
  CHECK(r.table[0].pop_bin == 0);
  CHECK(r.table[0].cluster_id == 0);
}

TEST_CASE("derived bins are monotone in popularity") {
  TempDir dir;
  std::string poi_csv = "poi_id,category,lon,lat\n";
  std::string traj_csv = "user_id,traj_id,seq_index,poi_id\n";
  for (int i = 0; i < 12; ++i) {
    poi_csv += std::to_string(i) + ",c," + std::to_string(i * 0.1) + ",0.0\n";
  }
  // POI i visited by i+1 distinct users (each a singleton trajectory of
  // length 2 to its neighbour).
  int traj = 0;
  for (int i = 0; i < 12; ++i) {
    for (int u = 0; u <= i; ++u) {
      traj_csv += "u" + std::to_string(u) + ",t" + std::to_string(traj++) + ",0," +
                  std::to_string(i) + "\n";
      traj_csv += "u" + std::to_string(u) + ",t" + std::to_string(traj - 1) + ",1," +
                  std::to_string((i + 1) % 12) + "\n";
    }
  }
  const fs::path poi = write_file(dir.path, "poi.csv", poi_csv);
  const fs::path tf = write_file(dir.path, "traj.csv", traj_csv);
  const LoadResult r = load_corpus(tf, poi, IngestConfig{});
  for (std::size_t a = 0; a < 12; ++a) {
    for (std::size_t b = 0; b < 12; ++b) {
      const Poi& pa = r.dataset.pois[static_cast<PoiId>(a)];
      const Poi& pb = r.dataset.pois[static_cast<PoiId>(b)];
      if (pa.popularity <= pb.popularity) CHECK(pa.pop_bin <= pb.pop_bin);
    }
  }
}

TEST_CASE("total truths match the corpus trajectory count without duplicates") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,1,20\n"
                                   "u2,t2,0,10\n"
                                   "u2,t2,1,30\n"
                                   "u3,t3,0,20\n"
                                   "u3,t3,1,30\n"
                                   "u3,t3,2,40\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});
  CHECK(r.dataset.total_truths() == r.dataset.raw_trajectory_count);
  for (const auto& ex : r.dataset.examples) {
    for (const auto& y : ex.trajectories) {
      CHECK(y.front() == ex.query.start);
      CHECK(static_cast<int>(y.size()) == ex.query.length);
    }
  }
}

TEST_CASE("monte carlo splits have the documented sizes") {
  Dataset d;
  d.pois = toy_table(4);
  for (int i = 0; i < 10; ++i) {
    d.examples.push_back({Query{static_cast<PoiId>(i % 4), 2 + i}, {{0, 1}}});
  }
  const auto splits = split_monte_carlo(d, 0.8, 5, 42);
  REQUIRE(splits.size() == 5);
  for (const auto& [train, val] : splits) {
    CHECK(train.examples.size() == 8);
    CHECK(val.examples.size() == 2);
  }
}

TEST_CASE("monte carlo splits are reproducible and cover the dataset") {
  Dataset d;
  d.pois = toy_table(4);
  for (int i = 0; i < 9; ++i) {
    d.examples.push_back({Query{static_cast<PoiId>(i % 4), 2 + i}, {{0, 1}}});
  }
  const auto a = split_monte_carlo(d, 0.7, 3, 7);
  const auto b = split_monte_carlo(d, 0.7, 3, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    REQUIRE(a[r].first.examples.size() == b[r].first.examples.size());
    for (std::size_t i = 0; i < a[r].first.examples.size(); ++i) {
      CHECK(a[r].first.examples[i].query == b[r].first.examples[i].query);
    }
    // Partition: every example lands on exactly one side.
    std::set<Query> seen;
    for (const auto& ex : a[r].first.examples) seen.insert(ex.query);
    for (const auto& ex : a[r].second.examples) CHECK(seen.insert(ex.query).second);
    CHECK(seen.size() == d.examples.size());
  }

  const auto c = split_monte_carlo(d, 0.7, 3, 8);
  bool any_difference = false;
  for (std::size_t r = 0; r < c.size() && !any_difference; ++r) {
    for (std::size_t i = 0; i < c[r].first.examples.size(); ++i) {
      if (!(c[r].first.examples[i].query == a[r].first.examples[i].query)) {
        any_difference = true;
        break;
      }
    }
  }
  CHECK(any_difference);
}

TEST_CASE("train size is the floor of the fraction") {
  Dataset d;
  d.pois = toy_table(4);
  for (int i = 0; i < 64; ++i) {
    d.examples.push_back({Query{static_cast<PoiId>(i % 4), 2 + i}, {{0, 1}}});
  }
  const auto splits = split_monte_carlo(d, 0.8, 1, 0);
  CHECK(splits[0].first.examples.size() == 51);  // floor(0.8 * 64)
  CHECK(splits[0].second.examples.size() == 13);
}

TEST_CASE("splitting needs at least two examples") {
  Dataset d;
  d.pois = toy_table(3);
  d.examples.push_back({Query{0, 2}, {{0, 1}}});
  CHECK_THROWS_AS(split_monte_carlo(d, 0.8, 1, 0), TooFewExamples);
}

TEST_CASE("dataset archive round-trips") {
  TempDir dir;
  const fs::path poi = write_file(dir.path, "poi.csv", kPoiCsv);
  const fs::path traj = write_file(dir.path, "traj.csv",
                                   "user_id,traj_id,seq_index,poi_id\n"
                                   "u1,t1,0,10\n"
                                   "u1,t1,1,20\n"
                                   "u2,t2,0,10\n"
                                   "u2,t2,1,30\n");
  const LoadResult r = load_corpus(traj, poi, IngestConfig{});
  const fs::path archive = dir.path / "data.json";
  save_dataset(r.dataset, r.source_poi_ids, archive);

  const ArchiveData back = load_dataset(archive);
  CHECK(back.dataset.raw_trajectory_count == r.dataset.raw_trajectory_count);
  CHECK(back.dataset.pois.size() == r.dataset.pois.size());
  CHECK(back.source_poi_ids == r.source_poi_ids);
  REQUIRE(back.dataset.examples.size() == r.dataset.examples.size());
  for (std::size_t i = 0; i < back.dataset.examples.size(); ++i) {
    CHECK(back.dataset.examples[i].query == r.dataset.examples[i].query);
    CHECK(back.dataset.examples[i].trajectories == r.dataset.examples[i].trajectories);
  }
  for (std::size_t p = 0; p < back.dataset.pois.size(); ++p) {
    const Poi& a = back.dataset.pois[static_cast<PoiId>(p)];
    const Poi& b = r.dataset.pois[static_cast<PoiId>(p)];
    CHECK(a.popularity == b.popularity);
    CHECK(a.cluster_id == b.cluster_id);
    CHECK(a.pop_bin == b.pop_bin);
    CHECK(a.category == b.category);
  }
}

TEST_CASE("bad headers are parse errors") {
  TempDir dir;
  const fs::path bad_poi = write_file(dir.path, "bad_poi.csv", "id,cat,lon,lat\n1,c,0,0\n");
  CHECK_THROWS_AS(parse_poi_csv(bad_poi), ParseError);
  const fs::path bad_traj = write_file(dir.path, "bad_traj.csv", "user,traj\nu,t\n");
  CHECK_THROWS_AS(parse_traj_csv(bad_traj), ParseError);
}
