#include "seqrec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "json.hpp"
#include "seqrec/ingest.hpp"

namespace seqrec {

namespace {

double f1_from_sets(std::size_t inter, std::size_t pred_size, std::size_t truth_size) {
  if (pred_size == 0 && truth_size == 0) return 1.0;
  if (pred_size == 0 || truth_size == 0) return 0.0;
  const double p = static_cast<double>(inter) / static_cast<double>(pred_size);
  const double r = static_cast<double>(inter) / static_cast<double>(truth_size);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t query_seed(std::uint64_t seed, const Query& q) {
  const std::uint64_t packed =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.start)) << 32) |
      static_cast<std::uint32_t>(q.length);
  return splitmix64(seed ^ splitmix64(packed));
}

// Best metric value over the (ground truth x prediction) grid.
double best_of_topk(const std::vector<Trajectory>& truths, const std::vector<Trajectory>& preds,
                    const std::function<double(const Trajectory&, const Trajectory&)>& metric) {
  double best = std::numeric_limits<double>::lowest();
  for (const Trajectory& t : truths) {
    for (const Trajectory& p : preds) best = std::max(best, metric(t, p));
  }
  return best;
}

void run_parallel(std::size_t n, int threads, const std::function<void(std::size_t)>& work) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int actual = std::min<int>(threads, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(actual));
  for (int t = 0; t < actual; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
    });
  }
  for (auto& th : pool) th.join();
}

Aggregate aggregate_of(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    a.std_error = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return a;
}

}  // namespace

double f1_points(const Trajectory& truth, const Trajectory& pred) {
  const std::set<PoiId> ts(truth.begin(), truth.end());
  const std::set<PoiId> ps(pred.begin(), pred.end());
  std::size_t inter = 0;
  for (PoiId p : ps) inter += ts.count(p);
  return f1_from_sets(inter, ps.size(), ts.size());
}

double f1_pairs(const Trajectory& truth, const Trajectory& pred) {
  const auto pair_set = [](const Trajectory& y) {
    std::set<std::pair<PoiId, PoiId>> pairs;
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = i + 1; j < y.size(); ++j) pairs.insert({y[i], y[j]});
    }
    return pairs;
  };
  const auto ts = pair_set(truth);
  const auto ps = pair_set(pred);
  std::size_t inter = 0;
  for (const auto& p : ps) inter += ts.count(p);
  return f1_from_sets(inter, ps.size(), ts.size());
}

double kendall_tau_b(const Trajectory& truth, const Trajectory& pred, int m) {
  const auto ranks = [m](const Trajectory& y) {
    std::vector<double> r(static_cast<std::size_t>(m), 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] < 0 || y[j] >= m) {
        throw std::invalid_argument("trajectory references a POI outside the universe");
      }
      r[static_cast<std::size_t>(y[j])] += static_cast<double>(m - static_cast<int>(j));
    }
    return r;
  };
  const std::vector<double> r = ranks(truth);
  const std::vector<double> rh = ranks(pred);

  double concordant = 0.0, discordant = 0.0, ties_truth = 0.0, ties_pred = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double dx = r[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(j)];
      const double dy = rh[static_cast<std::size_t>(i)] - rh[static_cast<std::size_t>(j)];
      if (dx == 0.0 && dy == 0.0) continue;  // jointly tied pairs cancel
      if (dx == 0.0) {
        ties_truth += 1.0;
      } else if (dy == 0.0) {
        ties_pred += 1.0;
      } else if (dx * dy > 0.0) {
        concordant += 1.0;
      } else {
        discordant += 1.0;
      }
    }
  }
  const double denom = std::sqrt((concordant + discordant + ties_truth) *
                                 (concordant + discordant + ties_pred));
  if (denom == 0.0) return 1.0;  // l = m = 1 degenerate case
  return (concordant - discordant) / denom;
}

Method make_method(const std::string& name, const TrainConfig& base_config,
                   const PredictOptions& options) {
  Method method;
  method.name = name;
  if (name == "random") {
    method.tunable = false;
    method.fit = [](const Dataset& train, double, std::uint64_t seed) {
      const PoiTable table = train.pois;
      return [table, seed](const Query& q, std::int64_t k) {
        TopKResult out;
        out.items = baseline_random(q, k, query_seed(seed, q), table);
        return out;
      };
    };
  } else if (name == "popularity") {
    method.tunable = false;
    method.fit = [options](const Dataset& train, double, std::uint64_t) {
      const Dataset data = train;
      return [data, options](const Query& q, std::int64_t k) {
        return baseline_popularity(data, q, k, options);
      };
    };
  } else if (name == "poirank") {
    method.tunable = true;
    method.fit = [options](const Dataset& train, double reg_c, std::uint64_t) {
      const Model model = train_poirank(train, reg_c);
      const PoiTable table = train.pois;
      return [model, table, options](const Query& q, std::int64_t k) {
        return predict_topk(model, q, k, table, options);
      };
    };
  } else {
    const ModelVariant variant = variant_from_string(name);
    method.tunable = true;
    method.fit = [variant, base_config, options](const Dataset& train, double reg_c,
                                                 std::uint64_t seed) {
      TrainConfig config = base_config;
      config.variant = variant;
      config.reg_c = reg_c;
      config.seed = seed;
      const Model model = train_structured(train, config);
      const PoiTable table = train.pois;
      return [model, table, options](const Query& q, std::int64_t k) {
        return predict_topk(model, q, k, table, options);
      };
    };
  }
  return method;
}

namespace {

Dataset subset_without(const Dataset& dataset, const std::vector<std::size_t>& keep) {
  Dataset out;
  out.pois = dataset.pois;
  for (std::size_t i : keep) out.examples.push_back(dataset.examples[i]);
  out.raw_trajectory_count = out.total_truths();
  return out;
}

// Mean best-of-top-k point F1 of `fit(train)` on the validation set.
double tuning_score(const Method& method, const Dataset& train, const Dataset& val, double reg_c,
                    std::int64_t k, std::uint64_t seed) {
  std::function<TopKResult(const Query&, std::int64_t)> predictor;
  try {
    predictor = method.fit(train, reg_c, seed);
  } catch (const std::exception&) {
    return 0.0;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const GroundTruthSet& ex : val.examples) {
    double score = 0.0;
    try {
      const TopKResult top = predictor(ex.query, k);
      if (!top.items.empty()) {
        score = best_of_topk(ex.trajectories, top.items,
                             [](const Trajectory& t, const Trajectory& p) {
                               return f1_points(t, p);
                             });
      }
    } catch (const std::exception&) {
      score = 0.0;
    }
    sum += score;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

MetricReport evaluate_loqo(const Dataset& dataset, const Method& method, std::int64_t k,
                           const std::vector<double>& c_grid, const MonteCarloConfig& mc,
                           std::uint64_t seed, int threads) {
  if (dataset.examples.size() < 2) {
    throw TooFewExamples("leave-one-query-out needs at least 2 examples");
  }
  // Length-1 queries carry no sequence signal and are skipped outright.
  std::vector<std::size_t> folds;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    if (dataset.examples[i].query.length >= 2) folds.push_back(i);
  }

  MetricReport report;
  report.method = method.name;
  report.k = k;
  report.per_query.resize(folds.size());

  const int budget = threads > 0 ? threads : thread_budget();
  run_parallel(folds.size(), budget, [&](std::size_t f) {
    const std::size_t held_out = folds[f];
    const GroundTruthSet& ex = dataset.examples[held_out];
    QueryOutcome& outcome = report.per_query[f];
    outcome.query = ex.query;

    std::vector<std::size_t> keep;
    for (std::size_t i : folds) {
      if (i != held_out) keep.push_back(i);
    }
    const Dataset remaining = subset_without(dataset, keep);
    const std::uint64_t fold_seed = splitmix64(seed ^ (0x5ec0ULL + f));

    double chosen_c = c_grid.empty() ? 1.0 : c_grid.front();
    try {
      if (method.tunable && c_grid.size() > 1 && remaining.examples.size() >= 2) {
        const auto splits =
            split_monte_carlo(remaining, mc.train_frac, mc.repeats, fold_seed);
        double best_score = std::numeric_limits<double>::lowest();
        for (double c : c_grid) {
          double sum = 0.0;
          for (const auto& [train, val] : splits) {
            sum += tuning_score(method, train, val, c, k, fold_seed);
          }
          const double score = sum / static_cast<double>(splits.size());
          if (score > best_score) {
            best_score = score;
            chosen_c = c;
          }
        }
      }
      outcome.chosen_c = chosen_c;

      const auto predictor = method.fit(remaining, chosen_c, fold_seed);
      const TopKResult top = predictor(ex.query, k);
      if (top.items.empty()) throw Infeasible("no prediction produced");

      outcome.f1_points = best_of_topk(
          ex.trajectories, top.items,
          [](const Trajectory& t, const Trajectory& p) { return f1_points(t, p); });
      outcome.f1_pairs = best_of_topk(
          ex.trajectories, top.items,
          [](const Trajectory& t, const Trajectory& p) { return f1_pairs(t, p); });
      const int m = static_cast<int>(dataset.pois.size());
      outcome.tau_b = best_of_topk(ex.trajectories, top.items,
                                   [m](const Trajectory& t, const Trajectory& p) {
                                     return kendall_tau_b(t, p, m);
                                   });
    } catch (const std::exception& e) {
      outcome.failed = true;
      outcome.error = e.what();
    }
  });

  std::vector<double> v1, v2, v3;
  for (const QueryOutcome& q : report.per_query) {
    if (q.failed) {
      report.failed++;
      continue;
    }
    report.evaluated++;
    v1.push_back(q.f1_points);
    v2.push_back(q.f1_pairs);
    v3.push_back(q.tau_b);
  }
  report.f1_points = aggregate_of(v1);
  report.f1_pairs = aggregate_of(v2);
  report.tau_b = aggregate_of(v3);
  return report;
}

std::string query_id(const Query& q) {
  return "q" + std::to_string(q.start) + "_l" + std::to_string(q.length);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::vector<MetricReport>& reports,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "query_id,method,k,f1_points,f1_pairs,tau_b\n";
  for (const MetricReport& r : reports) {
    for (const QueryOutcome& q : r.per_query) {
      if (q.failed) continue;
      out << query_id(q.query) << "," << r.method << "," << r.k << "," << fmt(q.f1_points) << ","
          << fmt(q.f1_pairs) << "," << fmt(q.tau_b) << "\n";
    }
  }
  for (const MetricReport& r : reports) {
    out << "mean," << r.method << "," << r.k << "," << fmt(r.f1_points.mean) << ","
        << fmt(r.f1_pairs.mean) << "," << fmt(r.tau_b.mean) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_report_json(const std::vector<MetricReport>& reports,
                       const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const MetricReport& r : reports) {
    nlohmann::json e;
    e["method"] = r.method;
    e["k"] = r.k;
    e["evaluated"] = r.evaluated;
    e["failed"] = r.failed;
    e["f1_points"] = {{"mean", r.f1_points.mean}, {"std_error", r.f1_points.std_error}};
    e["f1_pairs"] = {{"mean", r.f1_pairs.mean}, {"std_error", r.f1_pairs.std_error}};
    e["tau_b"] = {{"mean", r.tau_b.mean}, {"std_error", r.tau_b.std_error}};
    j.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

int thread_budget() {
  if (const char* env = std::getenv("SEQREC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

}  // namespace seqrec
