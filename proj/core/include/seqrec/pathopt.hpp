// Exact loop-free path decoding. An in-process engine solves the
// fixed-start, fixed-length best-path problem by dynamic programming
// over (visited-subset, last-POI) states; an exporter writes the
// equivalent MTZ integer program in CPLEX LP format for external
// solvers, including sequential top-k exclusion cuts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seqrec/decode.hpp"
#include "seqrec/domain.hpp"

namespace seqrec {

// Hard cap on the POI universe (mask width) and on the total number of
// (visited-subset, last) states the subset DP will materialize; beyond
// either, callers must go through export_ilp. 40M states is roughly
// 320 MB of table.
inline constexpr std::size_t kMaxExactPathPois = 32;
inline constexpr std::int64_t kMaxExactPathStates = 40'000'000;

// Number of DP states for an instance, saturating; feasible iff within
// the caps above.
std::int64_t exact_path_state_count(std::size_t n_pois, int length);
bool exact_path_affordable(std::size_t n_pois, int length);

struct PathCut {
  Trajectory forbidden;  // a previously returned path of query length
};

// Best loop-free sequence of query length starting at the clamped
// start. Ties broken lexicographically. Throws Infeasible when
// l > m and TooLarge when m exceeds kMaxExactPathPois.
ScoredTrajectory best_path_exact(const ChainScores& scores);

// Top-k paths excluding the cut sequences, non-increasing score with
// lexicographic tie order; item-for-item equal to
// list_viterbi(PATH, k) when cuts is empty. Returns fewer than k items
// when fewer feasible paths exist.
std::vector<ScoredTrajectory> top_k_paths_exact(const ChainScores& scores, std::int64_t k,
                                                std::span<const PathCut> cuts = {});

// The MTZ integer program over binary transition variables u[j][k],
// terminal indicators z[j] and integer order variables v[j], with POIs
// reindexed so index 1 is the start.
struct IlpModel {
  std::size_t m = 0;               // number of POIs
  int length = 1;                  // l
  std::vector<PoiId> index_to_poi; // ilp index (0-based) -> table POI id; [0] is the start
  Matrix objective;                // m x m, coefficient of u[j][k]
  std::vector<Trajectory> cuts;    // forbidden paths, ilp index space

  std::size_t n_u() const { return m * m; }
  std::size_t n_z() const { return m; }
  std::size_t n_v() const { return m; }
};

IlpModel build_ilp(const ChainScores& scores, std::span<const PathCut> cuts = {});

std::string ilp_to_lp_format(const IlpModel& model);

// Writes the model to `out` in CPLEX LP format. Throws Infeasible for
// l > m or l < 2, IoError on write failure.
void export_ilp(const ChainScores& scores, std::span<const PathCut> cuts,
                const std::filesystem::path& out);

enum class Engine { Slva, ExactPath };

// The decoder routing rule: exact path optimization for long queries,
// list Viterbi otherwise.
Engine select_engine(const Query& query, int ilp_threshold = 10);

}  // namespace seqrec
