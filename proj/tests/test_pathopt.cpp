#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "seqrec/pathopt.hpp"

using namespace seqrec;
using namespace seqrec::testing;

TEST_CASE("best_path_exact length-2 is the argmax transition") {
  std::mt19937_64 rng(11);
  const ChainScores cs = random_scores(5, 2, 2, rng);
  const ScoredTrajectory best = best_path_exact(cs);

  PoiId argmax = -1;
  double best_score = kNegInf;
  for (PoiId p = 0; p < 5; ++p) {
    if (p == 2) continue;
    const double s = cs.pairwise(2, static_cast<std::size_t>(p)) +
                     cs.unary(1, static_cast<std::size_t>(p));
    if (s > best_score) {
      best_score = s;
      argmax = p;
    }
  }
  CHECK(best.sequence == Trajectory{2, argmax});
  CHECK(best.score == doctest::Approx(best_score).epsilon(1e-12));
}

TEST_CASE("best_path_exact equals enumeration and PATH list viterbi") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 2 + rng() % 7;              // up to 8
    const int l = 2 + static_cast<int>(rng() % 5);    // up to 6
    if (static_cast<std::size_t>(l) > m) continue;
    const PoiId start = static_cast<PoiId>(rng() % m);
    const ChainScores cs = random_scores(m, l, start, rng);

    const auto oracle = oracle_ranking(cs, enumerate_paths(m, l, start));
    const ScoredTrajectory dp = best_path_exact(cs);
    const ListViterbiResult lv = list_viterbi(cs, 1, SequencePredicate::path());

    REQUIRE(lv.items.size() == 1);
    CHECK(dp.sequence == oracle.front().seq);
    CHECK(dp.score == doctest::Approx(oracle.front().score).epsilon(1e-9));
    CHECK(lv.items[0].sequence == dp.sequence);
    CHECK(lv.items[0].score == doctest::Approx(dp.score).epsilon(1e-9));
  }
}

TEST_CASE("best path avoids the loop the unconstrained decoder takes") {
  ChainScores cs = ChainScores::zeros(0, 3, 3);
  cs.pairwise(0, 1) = 5.0;
  cs.pairwise(1, 1) = 5.0;
  cs.pairwise(1, 2) = 1.0;

  const ScoredTrajectory loopy = viterbi(cs);
  CHECK(has_repeats(loopy.sequence));
  const ScoredTrajectory path = best_path_exact(cs);
  CHECK(!has_repeats(path.sequence));
  CHECK(path.sequence != loopy.sequence);

  const auto oracle = oracle_ranking(cs, enumerate_paths(3, 3, 0));
  CHECK(path.sequence == oracle.front().seq);
}

TEST_CASE("top_k_paths_exact enumerates all paths sorted") {
  std::mt19937_64 rng(13);
  const ChainScores cs = random_scores(4, 3, 0, rng);
  const auto oracle = oracle_ranking(cs, enumerate_paths(4, 3, 0));
  REQUIRE(oracle.size() == 6);  // 3 * 2 paths

  const auto got = top_k_paths_exact(cs, 100);
  REQUIRE(got.size() == 6);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].sequence == oracle[i].seq);
    CHECK(got[i].score == doctest::Approx(oracle[i].score).epsilon(1e-9));
  }
}

TEST_CASE("top_k_paths_exact matches PATH list viterbi item for item") {
  std::mt19937_64 rng(1001);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 3 + rng() % 6;            // up to 8
    const int l = 2 + static_cast<int>(rng() % 5);  // up to 6
    if (static_cast<std::size_t>(l) > m) continue;
    const PoiId start = static_cast<PoiId>(rng() % m);
    const ChainScores cs = random_scores(m, l, start, rng);

    const auto dp = top_k_paths_exact(cs, 5);
    const ListViterbiResult lv = list_viterbi(cs, 5, SequencePredicate::path());
    REQUIRE(dp.size() == lv.items.size());
    for (std::size_t i = 0; i < dp.size(); ++i) {
      CHECK(dp[i].sequence == lv.items[i].sequence);
      CHECK(dp[i].score == doctest::Approx(lv.items[i].score).epsilon(1e-9));
    }
  }
}

TEST_CASE("a cut on the global best yields the second best") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 3 + rng() % 4;
    const int l = 2 + static_cast<int>(rng() % 2);
    const PoiId start = static_cast<PoiId>(rng() % m);
    const ChainScores cs = random_scores(m, l, start, rng);
    const auto oracle = oracle_ranking(cs, enumerate_paths(m, l, start));

    const PathCut cut{oracle.front().seq};
    const auto got = top_k_paths_exact(cs, 1, std::span<const PathCut>(&cut, 1));
    REQUIRE(got.size() == 1);
    CHECK(got[0].sequence == oracle[1].seq);
    CHECK(got[0].score == doctest::Approx(oracle[1].score).epsilon(1e-9));
  }
}

TEST_CASE("k = 1 with no cuts reduces to best_path_exact") {
  std::mt19937_64 rng(4);
  const ChainScores cs = random_scores(6, 4, 3, rng);
  const auto top = top_k_paths_exact(cs, 1);
  const ScoredTrajectory best = best_path_exact(cs);
  REQUIRE(top.size() == 1);
  CHECK(top[0].sequence == best.sequence);
}

TEST_CASE("feasibility law: path count is (m-1)!/(m-l)!") {
  std::mt19937_64 rng(6);
  for (std::size_t m : {3u, 4u, 5u}) {
    for (int l = 2; l <= static_cast<int>(m); ++l) {
      const ChainScores cs = random_scores(m, l, 0, rng);
      const auto all = top_k_paths_exact(cs, 100000);
      CHECK(static_cast<std::int64_t>(all.size()) == count_paths(m, l));
      for (const auto& item : all) {
        CHECK(!has_repeats(item.sequence));
        CHECK(item.sequence.front() == 0);
        CHECK(static_cast<int>(item.sequence.size()) == l);
      }
    }
  }
}

TEST_CASE("infeasible and oversized instances are refused") {
  const ChainScores tall = ChainScores::zeros(0, 5, 3);
  CHECK_THROWS_AS(best_path_exact(tall), Infeasible);

  // The state budget, not the POI count alone, decides affordability.
  CHECK(exact_path_affordable(30, 3));
  CHECK(!exact_path_affordable(30, 20));
  CHECK(!exact_path_affordable(40, 4));  // mask width cap
  const ChainScores deep = ChainScores::zeros(0, 20, 30);
  CHECK_THROWS_AS(best_path_exact(deep), TooLarge);
}

TEST_CASE("wide shallow instances stay exact") {
  std::mt19937_64 rng(29);
  const ChainScores cs = random_scores(30, 3, 4, rng);
  const auto oracle = oracle_ranking(cs, enumerate_paths(30, 3, 4));
  const ScoredTrajectory best = best_path_exact(cs);
  CHECK(best.sequence == oracle.front().seq);
  CHECK(best.score == doctest::Approx(oracle.front().score).epsilon(1e-9));
}

TEST_CASE("state counting matches the layer sizes") {
  // m=5, l=4: layers c=1 (C(4,1)*1) and c=2 (C(4,2)*2) -> 4 + 12.
  CHECK(exact_path_state_count(5, 4) == 16);
  CHECK(exact_path_state_count(5, 2) == 0);  // no materialized layer
  CHECK(exact_path_state_count(25, 13) > 0);
  CHECK(exact_path_state_count(32, 31) > kMaxExactPathStates);
}

TEST_CASE("ilp model has the documented variable counts") {
  const ChainScores cs = ChainScores::zeros(1, 2, 3);
  const IlpModel model = build_ilp(cs);
  CHECK(model.n_u() == 9);
  CHECK(model.n_z() == 3);
  CHECK(model.n_v() == 3);
  CHECK(model.index_to_poi[0] == 1);  // start first
}

TEST_CASE("lp export contains the transition budget and cut rows") {
  std::mt19937_64 rng(5);
  const ChainScores cs = random_scores(4, 3, 1, rng);
  const auto best = best_path_exact(cs);

  const std::filesystem::path out = std::filesystem::temp_directory_path() / "seqrec_test.lp";
  const PathCut cut{best.sequence};
  export_ilp(cs, std::span<const PathCut>(&cut, 1), out);

  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string lp = ss.str();

  CHECK(lp.find("Maximize") != std::string::npos);
  CHECK(lp.find("Subject To") != std::string::npos);
  CHECK(lp.find("Binaries") != std::string::npos);
  CHECK(lp.find("Generals") != std::string::npos);
  CHECK(lp.find("= 2") != std::string::npos);        // l-1 transitions
  CHECK(lp.find("c_cut_1:") != std::string::npos);   // one exclusion row
  CHECK(lp.find("<= 1") != std::string::npos);       // cut bound: l-2 = 1

  std::filesystem::remove(out);
}

TEST_CASE("lp export rejects l > m and l < 2") {
  const ChainScores tall = ChainScores::zeros(0, 5, 3);
  CHECK_THROWS_AS(export_ilp(tall, {}, "/tmp/never.lp"), Infeasible);
  const ChainScores unit = ChainScores::zeros(0, 1, 3);
  CHECK_THROWS_AS(export_ilp(unit, {}, "/tmp/never.lp"), Infeasible);
}

TEST_CASE("select_engine routes by length threshold") {
  CHECK(select_engine(Query{0, 3}) == Engine::Slva);
  CHECK(select_engine(Query{0, 10}) == Engine::ExactPath);
  CHECK(select_engine(Query{0, 3}, 2) == Engine::ExactPath);
}
