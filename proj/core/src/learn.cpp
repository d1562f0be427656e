#include "seqrec/learn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "json.hpp"
#include "seqrec/features.hpp"

namespace seqrec {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Flat weight vector <-> Model. Training works in the joint feature
// space; the model keeps the unary/pairwise split.
std::vector<double> pack_weights(const Model& m) {
  std::vector<double> w(m.unary_weights);
  for (const Matrix& table : m.pairwise_weights) {
    w.insert(w.end(), table.data().begin(), table.data().end());
  }
  return w;
}

void unpack_weights(const std::vector<double>& w, Model& m) {
  std::size_t off = m.unary_weights.size();
  std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(off), m.unary_weights.begin());
  for (Matrix& table : m.pairwise_weights) {
    std::copy(w.begin() + static_cast<std::ptrdiff_t>(off),
              w.begin() + static_cast<std::ptrdiff_t>(off + table.data().size()),
              table.data().begin());
    off += table.data().size();
  }
}

bool contains(const std::vector<Trajectory>& set, const Trajectory& y) {
  return std::find(set.begin(), set.end(), y) != set.end();
}

}  // namespace

int hamming_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("hamming distance of unequal-length sequences");
  }
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

Model train_structured(const Dataset& train, const TrainConfig& config,
                       TrainDiagnostics* diagnostics) {
  if (config.reg_c <= 0.0) throw NonPositiveC("regularization constant must be positive");
  if (train.examples.empty()) throw EmptyDataset("cannot train on an empty dataset");
  for (const auto& ex : train.examples) {
    if (ex.query.length < 2) {
      throw std::invalid_argument("structured training requires query length >= 2");
    }
  }

  const PoiTable& table = train.pois;
  Model model = zero_model(config.variant, config.reg_c, fit_normalizer(train));
  std::vector<double> w = pack_weights(model);

  const double n_total = static_cast<double>(train.total_truths());
  const double lambda = 1.0 / config.reg_c;

  // F(0) = (C/N) sum of worst-case Hamming losses bounds the optimum:
  // (1/2)||w*||^2 <= F(0), so iterates can be projected onto that ball.
  double worst_loss = 0.0;
  for (const auto& ex : train.examples) {
    worst_loss += static_cast<double>(ex.trajectories.size()) *
                  static_cast<double>(ex.query.length - 1);
  }
  const double radius = std::sqrt(2.0 * config.reg_c * worst_loss / n_total);

  std::vector<double> best_w = w;
  double best_objective = std::numeric_limits<double>::infinity();

  // Truth feature vectors never change; cache them.
  std::vector<std::vector<std::vector<double>>> psi_truth(train.examples.size());
  for (std::size_t i = 0; i < train.examples.size(); ++i) {
    for (const Trajectory& y : train.examples[i].trajectories) {
      psi_truth[i].push_back(joint_feature_map(train.examples[i].query, y, table, model.meta));
    }
  }

  TrainDiagnostics local;
  TrainDiagnostics& diag = diagnostics ? *diagnostics : local;

  const auto project = [&](std::vector<double>& x) {
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    if (norm2 > radius * radius) {
      const double shrink = radius / std::sqrt(norm2);
      for (double& v : x) v *= shrink;
    }
  };

  std::int64_t step_count = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<double> grad_loss(w.size(), 0.0);
    double max_violation = 0.0;
    double hinge_sum = 0.0;       // n-slack: sum of positive parts
    double aggregate = 0.0;       // 1-slack: plain sum of violations
    double length_sum = 0.0;
    std::vector<std::vector<double>> pending;  // 1-slack defers gating

    for (std::size_t i = 0; i < train.examples.size(); ++i) {
      const GroundTruthSet& ex = train.examples[i];
      for (std::size_t j = 0; j < ex.trajectories.size(); ++j) {
        unpack_weights(w, model);
        const ChainScores scores = build_chain_scores(model, ex.query, table);
        const Trajectory& truth = ex.trajectories[j];
        ScoredTrajectory worst;
        try {
          worst = most_violating(scores, ex.trajectories, config.variant, truth,
                                 config.max_expansions);
        } catch (const SearchExhaustedError& e) {
          throw SearchExhaustedError("query (start=" + std::to_string(ex.query.start) +
                                     ", length=" + std::to_string(ex.query.length) +
                                     "): " + e.what());
        }

        if (contains(ex.trajectories, worst.sequence)) diag.ground_truth_constraints++;
        if (has_repeats(worst.sequence)) diag.looped_constraints++;

        // worst.score is the loss-augmented chain score, i.e.
        // w.Psi(ybar) + Delta(truth, ybar).
        const double violation = worst.score - dot(w, psi_truth[i][j]);
        max_violation = std::max(max_violation, violation / ex.query.length);
        aggregate += violation;
        length_sum += ex.query.length;
        if (violation > 0.0) hinge_sum += violation;

        if (config.formulation == Formulation::NSlack) {
          // One projected subgradient step per generated constraint.
          ++step_count;
          const double step = 1.0 / (lambda * static_cast<double>(step_count));
          if (violation > 0.0) {
            const std::vector<double> psi_bar =
                joint_feature_map(ex.query, worst.sequence, table, model.meta);
            for (std::size_t d = 0; d < w.size(); ++d) {
              w[d] -= step * (lambda * w[d] + psi_bar[d] - psi_truth[i][j][d]);
            }
          } else {
            for (double& v : w) v -= step * lambda * v;
          }
          project(w);
        } else {
          const std::vector<double> psi_bar =
              joint_feature_map(ex.query, worst.sequence, table, model.meta);
          std::vector<double> diff(w.size());
          for (std::size_t d = 0; d < w.size(); ++d) diff[d] = psi_bar[d] - psi_truth[i][j][d];
          pending.push_back(std::move(diff));
        }
      }
    }

    double objective = 0.0;
    double violation_for_stop = 0.0;
    if (config.formulation == Formulation::NSlack) {
      objective = 0.5 * dot(w, w) + (config.reg_c / n_total) * hinge_sum;
      violation_for_stop = max_violation;
    } else {
      const double slack = std::max(0.0, aggregate / n_total);
      objective = 0.5 * dot(w, w) + config.reg_c * slack;
      violation_for_stop = std::max(0.0, aggregate) / std::max(1.0, length_sum);
      // The epoch's constraints are the exact argmax violators, so this
      // objective is the true value at the current iterate.
      if (objective < best_objective) {
        best_objective = objective;
        best_w = w;
      }
      if (slack > 0.0) {
        for (const auto& diff : pending) {
          for (std::size_t d = 0; d < w.size(); ++d) grad_loss[d] += diff[d];
        }
      }
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    diag.epochs.push_back({epoch, violation_for_stop, objective, seconds});
    diag.final_violation = violation_for_stop;

    if (violation_for_stop <= config.tol) {
      diag.converged = true;
      break;
    }

    if (config.formulation == Formulation::OneSlack) {
      const double step = 1.0 / (lambda * epoch);
      for (std::size_t d = 0; d < w.size(); ++d) {
        w[d] -= step * (lambda * w[d] + grad_loss[d] / n_total);
      }
      project(w);
    }
  }

  if (config.formulation == Formulation::NSlack || diag.converged) best_w = w;
  unpack_weights(best_w, model);
  return model;
}

RankPairSet build_rank_pairs(const Dataset& train) {
  RankPairSet out;
  const std::size_t m = train.pois.size();
  for (const GroundTruthSet& ex : train.examples) {
    std::vector<std::int64_t> count(m, 0);
    for (const Trajectory& y : ex.trajectories) {
      for (PoiId p : y) count[static_cast<std::size_t>(p)]++;
    }
    std::vector<std::pair<PoiId, PoiId>> pairs;
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        if (count[p] > count[q]) {
          pairs.emplace_back(static_cast<PoiId>(p), static_cast<PoiId>(q));
        }
      }
    }
    out.pairs.push_back(std::move(pairs));
  }
  return out;
}

Model train_poirank(const Dataset& train, double reg_c) {
  if (reg_c <= 0.0) throw NonPositiveC("regularization constant must be positive");
  if (train.examples.empty()) throw EmptyDataset("cannot train on an empty dataset");

  const PoiTable& table = train.pois;
  Model model = zero_model(ModelVariant::PoiRank, reg_c, fit_normalizer(train));
  const std::size_t dim = model.unary_weights.size();

  const RankPairSet pair_set = build_rank_pairs(train);
  if (pair_set.total() == 0) {
    throw NoPairs("no strict POI count inequality in any training example");
  }

  // Cache the feature difference of every ranked pair, row-major.
  const std::size_t n_pairs = pair_set.total();
  std::vector<double> diffs;
  diffs.reserve(n_pairs * dim);
  for (std::size_t i = 0; i < train.examples.size(); ++i) {
    const Query& query = train.examples[i].query;
    std::vector<std::vector<double>> feats(table.size());
    for (std::size_t p = 0; p < table.size(); ++p) {
      feats[p] = unary_features(table[static_cast<PoiId>(p)], query, table, model.meta);
    }
    for (const auto& [p, q] : pair_set.pairs[i]) {
      for (std::size_t k = 0; k < dim; ++k) {
        diffs.push_back(feats[static_cast<std::size_t>(p)][k] -
                        feats[static_cast<std::size_t>(q)][k]);
      }
    }
  }

  std::vector<double> w(dim, 0.0);
  const auto objective = [&](const std::vector<double>& x) {
    double obj = 0.5 * dot(x, x);
    for (std::size_t r = 0; r < n_pairs; ++r) {
      const double* row = diffs.data() + r * dim;
      double v = 0.0;
      for (std::size_t k = 0; k < dim; ++k) v += x[k] * row[k];
      const double margin = std::max(0.0, 1.0 - v);
      obj += reg_c * margin * margin;
    }
    return obj;
  };
  const auto gradient = [&](const std::vector<double>& x) {
    std::vector<double> g(x);
    for (std::size_t r = 0; r < n_pairs; ++r) {
      const double* row = diffs.data() + r * dim;
      double v = 0.0;
      for (std::size_t k = 0; k < dim; ++k) v += x[k] * row[k];
      const double margin = 1.0 - v;
      if (margin > 0.0) {
        for (std::size_t k = 0; k < dim; ++k) g[k] -= 2.0 * reg_c * margin * row[k];
      }
    }
    return g;
  };

  // Backtracking line search seeded with the Barzilai-Borwein step,
  // which handles the ill-conditioned valleys large C produces. The
  // piecewise-quadratic objective can flatten into machine precision
  // before the gradient target, so a collapsed step or a run of
  // immeasurable improvements also terminates.
  double step = 1.0;
  double last_objective = std::numeric_limits<double>::infinity();
  int stalled = 0;
  std::vector<double> prev_w, prev_g;
  for (int iter = 0; iter < 10000; ++iter) {
    const std::vector<double> g = gradient(w);
    const double gnorm2 = dot(g, g);
    if (std::sqrt(gnorm2) <= 1e-5) break;

    if (!prev_w.empty()) {
      double sy = 0.0, ss = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double s = w[k] - prev_w[k];
        sy += s * (g[k] - prev_g[k]);
        ss += s * s;
      }
      if (sy > 0.0 && ss > 0.0) step = ss / sy;
    }
    prev_w = w;
    prev_g = g;

    const double f0 = objective(w);
    std::vector<double> trial(dim);
    while (true) {
      for (std::size_t k = 0; k < dim; ++k) trial[k] = w[k] - step * g[k];
      if (objective(trial) <= f0 - 1e-4 * step * gnorm2 || step < 1e-16) break;
      step *= 0.5;
    }
    if (step < 1e-16) break;
    w = trial;

    stalled = last_objective - f0 <= 1e-12 * std::max(1.0, std::abs(f0)) ? stalled + 1 : 0;
    if (stalled >= 20) break;
    last_objective = f0;
  }

  model.unary_weights = std::move(w);
  return model;
}

ChainScores build_prediction_scores(const Model& model, const Query& query,
                                    const PoiTable& table) {
  if (model.variant != ModelVariant::PoiRank) {
    return build_chain_scores(model, query, table);
  }
  // Ranking scores become a distribution over POIs; a path then scores
  // its log-likelihood.
  const std::size_t m = table.size();
  ChainScores cs = ChainScores::zeros(query.start, query.length, m);
  std::vector<double> raw(m, 0.0);
  for (std::size_t p = 0; p < m; ++p) {
    const std::vector<double> x =
        unary_features(table[static_cast<PoiId>(p)], query, table, model.meta);
    raw[p] = dot(model.unary_weights, x);
  }
  const double peak = *std::max_element(raw.begin(), raw.end());
  double sum = 0.0;
  for (double v : raw) sum += std::exp(v - peak);
  const double logz = peak + std::log(sum);
  for (int t = 1; t < query.length; ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      cs.unary(static_cast<std::size_t>(t), p) = raw[p] - logz;
    }
  }
  return cs;
}

TopKResult top_k_paths(const ChainScores& scores, std::int64_t k,
                       const PredictOptions& options) {
  if (static_cast<std::size_t>(scores.length) > scores.n_pois()) {
    throw Infeasible("query length " + std::to_string(scores.length) + " exceeds " +
                     std::to_string(scores.n_pois()) + " POIs");
  }
  const bool affordable = exact_path_affordable(scores.n_pois(), scores.length);
  const Engine engine =
      select_engine(Query{scores.start, scores.length}, options.ilp_threshold);

  TopKResult out;
  if (engine == Engine::ExactPath && affordable) {
    const auto items = top_k_paths_exact(scores, k);
    for (const auto& it : items) out.items.push_back(it.sequence);
    out.exhausted = static_cast<std::int64_t>(out.items.size()) < k;
    return out;
  }

  // List decoder first; when score tables rank many looped sequences
  // above the k-th path the search exhausts, so keep the pop budget
  // small whenever the exact engine can take over.
  const std::int64_t probe =
      affordable ? std::min<std::int64_t>(options.max_expansions, 50'000)
                 : options.max_expansions;
  const ListViterbiResult res = list_viterbi(scores, k, SequencePredicate::path(), probe);
  if (!res.exhausted || !affordable) {
    for (const auto& it : res.items) out.items.push_back(it.sequence);
    out.exhausted = res.exhausted;
    return out;
  }
  const auto items = top_k_paths_exact(scores, k);
  for (const auto& it : items) out.items.push_back(it.sequence);
  out.exhausted = static_cast<std::int64_t>(out.items.size()) < k;
  return out;
}

TopKResult predict_topk(const Model& model, const Query& query, std::int64_t k,
                        const PoiTable& table, const PredictOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return top_k_paths(build_prediction_scores(model, query, table), k, options);
}

TopKResult baseline_popularity(const Dataset& train, const Query& query, std::int64_t k,
                               const PredictOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const PoiTable& table = train.pois;
  ChainScores cs = ChainScores::zeros(query.start, query.length, table.size());
  for (int t = 1; t < query.length; ++t) {
    for (std::size_t p = 0; p < table.size(); ++p) {
      cs.unary(static_cast<std::size_t>(t), p) =
          static_cast<double>(table[static_cast<PoiId>(p)].popularity);
    }
  }
  return top_k_paths(cs, k, options);
}

std::vector<Trajectory> baseline_random(const Query& query, std::int64_t k, std::uint64_t seed,
                                        const PoiTable& table) {
  if (static_cast<std::size_t>(query.length) > table.size()) {
    throw Infeasible("query length exceeds the POI count");
  }
  std::mt19937_64 rng(seed);
  std::vector<PoiId> pool;
  for (std::size_t p = 0; p < table.size(); ++p) {
    if (static_cast<PoiId>(p) != query.start) pool.push_back(static_cast<PoiId>(p));
  }
  std::vector<Trajectory> out;
  for (std::int64_t draw = 0; draw < k; ++draw) {
    std::vector<PoiId> deck(pool);
    Trajectory y{query.start};
    for (int t = 1; t < query.length; ++t) {
      const std::size_t remaining = deck.size() - static_cast<std::size_t>(t - 1);
      const std::size_t pick = static_cast<std::size_t>(t - 1) + rng() % remaining;
      std::swap(deck[static_cast<std::size_t>(t - 1)], deck[pick]);
      y.push_back(deck[static_cast<std::size_t>(t - 1)]);
    }
    out.push_back(std::move(y));
  }
  return out;
}

void save_diagnostics_jsonl(const TrainDiagnostics& diagnostics, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const EpochDiagnostics& e : diagnostics.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["max_violation"] = e.max_violation;
    j["objective"] = e.objective;
    j["seconds"] = e.seconds;
    out << j.dump() << "\n";
  }
  nlohmann::json summary;
  summary["summary"] = true;
  summary["epochs"] = diagnostics.epochs.size();
  summary["converged"] = diagnostics.converged;
  summary["final_violation"] = diagnostics.final_violation;
  summary["ground_truth_constraints"] = diagnostics.ground_truth_constraints;
  summary["looped_constraints"] = diagnostics.looped_constraints;
  out << summary.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace seqrec
