// seqrec command line: ingest -> train -> evaluate -> export-ilp.
// Every command writes a run manifest next to its outputs and all
// randomness flows from --seed.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqrec/decode.hpp"
#include "seqrec/domain.hpp"
#include "seqrec/eval.hpp"
#include "seqrec/features.hpp"
#include "seqrec/ingest.hpp"
#include "seqrec/learn.hpp"
#include "seqrec/pathopt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitTrain = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitOther = 1;

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw seqrec::IoError("cannot open: " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw seqrec::IoError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw seqrec::IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, std::uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    manifest_["command"] = std::move(command);
    manifest_["seed"] = seed;
  }

  void config(const std::string& key, const json& value) { manifest_["config"][key] = value; }
  void input(const fs::path& path) {
    manifest_["inputs"][path.string()] = fnv1a64_file(path);
  }
  void output(const fs::path& path) { manifest_["outputs"].push_back(path.string()); }

  void write(const fs::path& path) {
    manifest_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_atomic(path, manifest_.dump(2) + "\n");
  }

 private:
  json manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoll(item));
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_ingest(const fs::path& traj, const fs::path& poi, const fs::path& out, int clusters,
               int bins, std::uint64_t seed) {
  ManifestWriter manifest("ingest", seed);
  manifest.input(traj);
  manifest.input(poi);
  manifest.config("clusters", clusters);
  manifest.config("bins", bins);

  seqrec::IngestConfig config;
  config.n_clusters = clusters;
  config.n_bins = bins;
  config.rng_seed = seed;
  seqrec::LoadResult loaded = seqrec::load_corpus(traj, poi, config);
  for (const std::string& w : loaded.warnings) std::cerr << "warning: " << w << "\n";

  const auto violations = seqrec::validate_dataset(loaded.dataset);
  for (const auto& v : violations) {
    std::cerr << "invariant violation [" << v.rule << "]: " << v.detail << "\n";
  }
  if (!violations.empty()) throw seqrec::ParseError("dataset failed validation");

  seqrec::save_dataset(loaded.dataset, loaded.source_poi_ids, out);
  manifest.output(out);

  // Corpus profile in the style of the dataset statistics table.
  std::int64_t gt1 = 0, gt2to5 = 0, gtover5 = 0;
  for (const auto& ex : loaded.dataset.examples) {
    const std::size_t n = ex.trajectories.size();
    if (n == 1) {
      gt1++;
    } else if (n <= 5) {
      gt2to5++;
    } else {
      gtover5++;
    }
  }
  std::int64_t short_traj = 0, long_traj = 0;
  for (const auto& [length, count] : loaded.raw_length_histogram) {
    (length <= 5 ? short_traj : long_traj) += count;
  }
  std::cout << "traj=" << loaded.dataset.raw_trajectory_count << " pois="
            << loaded.dataset.pois.size() << " queries=" << loaded.dataset.examples.size()
            << " gt_eq1=" << gt1 << " gt_2to5=" << gt2to5 << " gt_gt5=" << gtover5
            << " short=" << short_traj << " long=" << long_traj << "\n";

  manifest.write(out.string() + ".manifest.json");
  return 0;
}

int run_train(const fs::path& dataset_path, const std::string& variant, double reg_c, bool tune,
              const std::vector<double>& c_grid, std::int64_t tune_k, int mc_repeats,
              double mc_frac, int max_epochs, double tol, const std::string& formulation,
              std::int64_t max_expansions, int ilp_threshold, std::uint64_t seed,
              const fs::path& out) {
  ManifestWriter manifest("train", seed);
  manifest.input(dataset_path);
  manifest.config("variant", variant);
  manifest.config("tune", tune);

  const seqrec::ArchiveData archive = seqrec::load_dataset(dataset_path);

  seqrec::Dataset train;
  train.pois = archive.dataset.pois;
  for (const auto& ex : archive.dataset.examples) {
    if (ex.query.length >= 2) train.examples.push_back(ex);
  }
  train.raw_trajectory_count = train.total_truths();
  if (train.examples.empty()) {
    throw seqrec::EmptyDataset("no trainable (length >= 2) queries in the dataset");
  }

  seqrec::TrainConfig config;
  config.variant = seqrec::variant_from_string(variant);
  config.max_epochs = max_epochs;
  config.tol = tol;
  config.seed = seed;
  config.max_expansions = max_expansions;
  config.formulation =
      formulation == "one_slack" ? seqrec::Formulation::OneSlack : seqrec::Formulation::NSlack;

  if (tune) {
    seqrec::PredictOptions options;
    options.ilp_threshold = ilp_threshold;
    options.max_expansions = max_expansions;
    const seqrec::Method method = seqrec::make_method(
        config.variant == seqrec::ModelVariant::PoiRank ? "poirank" : variant, config, options);
    const auto splits = seqrec::split_monte_carlo(train, mc_frac, mc_repeats, seed);
    double best_score = std::numeric_limits<double>::lowest();
    for (double c : c_grid) {
      double sum = 0.0;
      for (const auto& [tr, val] : splits) {
        double fold = 0.0;
        std::size_t n = 0;
        try {
          const auto predictor = method.fit(tr, c, seed);
          for (const auto& ex : val.examples) {
            try {
              const seqrec::TopKResult top = predictor(ex.query, tune_k);
              double best = 0.0;
              for (const auto& t : ex.trajectories) {
                for (const auto& p : top.items) best = std::max(best, seqrec::f1_points(t, p));
              }
              fold += best;
            } catch (const std::exception&) {
            }
            ++n;
          }
        } catch (const std::exception& e) {
          std::cerr << "tune: C=" << c << " split failed: " << e.what() << "\n";
        }
        sum += n ? fold / static_cast<double>(n) : 0.0;
      }
      const double score = sum / static_cast<double>(splits.size());
      std::cerr << "tune: C=" << c << " mean_f1_points=" << score << "\n";
      if (score > best_score) {
        best_score = score;
        reg_c = c;
      }
    }
    std::cerr << "tune: selected C=" << reg_c << "\n";
  }
  config.reg_c = reg_c;
  manifest.config("reg_c", reg_c);

  seqrec::TrainDiagnostics diagnostics;
  seqrec::Model model;
  if (config.variant == seqrec::ModelVariant::PoiRank) {
    model = seqrec::train_poirank(train, config.reg_c);
  } else {
    model = seqrec::train_structured(train, config, &diagnostics);
  }

  seqrec::save_model(model, out.string());
  seqrec::save_diagnostics_jsonl(diagnostics, out.string() + ".diag.jsonl");
  manifest.output(out);
  manifest.output(out.string() + ".diag.jsonl");
  manifest.write(out.string() + ".manifest.json");

  std::cout << "trained variant=" << seqrec::to_string(model.variant) << " C=" << model.reg_c;
  if (config.variant != seqrec::ModelVariant::PoiRank) {
    std::cout << " epochs=" << diagnostics.epochs.size()
              << " converged=" << (diagnostics.converged ? "yes" : "no");
  }
  std::cout << "\n";
  return 0;
}

int run_evaluate(const fs::path& dataset_path, const std::vector<std::string>& methods,
                 const std::vector<std::int64_t>& ks, const std::vector<double>& c_grid,
                 int mc_repeats, double mc_frac, int max_epochs, double tol,
                 std::int64_t max_expansions, int ilp_threshold, std::uint64_t seed, int threads,
                 const fs::path& out_prefix) {
  ManifestWriter manifest("evaluate", seed);
  manifest.input(dataset_path);
  manifest.config("methods", methods);
  manifest.config("k", ks);

  const seqrec::ArchiveData archive = seqrec::load_dataset(dataset_path);

  seqrec::TrainConfig base;
  base.max_epochs = max_epochs;
  base.tol = tol;
  base.max_expansions = max_expansions;
  seqrec::PredictOptions options;
  options.ilp_threshold = ilp_threshold;
  options.max_expansions = max_expansions;
  seqrec::MonteCarloConfig mc;
  mc.train_frac = mc_frac;
  mc.repeats = mc_repeats;

  std::vector<seqrec::MetricReport> reports;
  for (const std::string& name : methods) {
    const seqrec::Method method = seqrec::make_method(name, base, options);
    for (std::int64_t k : ks) {
      std::cerr << "evaluate: method=" << name << " k=" << k << "\n";
      seqrec::MetricReport report =
          seqrec::evaluate_loqo(archive.dataset, method, k, c_grid, mc, seed, threads);
      for (const auto& q : report.per_query) {
        if (q.failed) {
          std::cerr << "warning: " << seqrec::query_id(q.query) << " (" << name
                    << ", k=" << k << ") failed: " << q.error << "\n";
        }
      }
      std::cout << name << " k=" << k << " tau_b=" << report.tau_b.mean
                << " f1_points=" << report.f1_points.mean
                << " f1_pairs=" << report.f1_pairs.mean << " evaluated=" << report.evaluated
                << " failed=" << report.failed << "\n";
      reports.push_back(std::move(report));
    }
  }

  const fs::path csv_path = out_prefix.string() + ".csv";
  const fs::path json_path = out_prefix.string() + ".json";
  seqrec::write_report_csv(reports, csv_path);
  seqrec::write_report_json(reports, json_path);
  manifest.output(csv_path);
  manifest.output(json_path);
  manifest.write(out_prefix.string() + ".manifest.json");
  return 0;
}

int run_export_ilp(const fs::path& model_path, const fs::path& dataset_path, seqrec::PoiId start,
                   int length, std::int64_t k, std::int64_t max_expansions, int ilp_threshold,
                   std::uint64_t seed, const fs::path& out_prefix) {
  ManifestWriter manifest("export-ilp", seed);
  manifest.input(model_path);
  manifest.input(dataset_path);
  manifest.config("start", start);
  manifest.config("length", length);
  manifest.config("k", k);

  const seqrec::Model model = seqrec::load_model(model_path.string());
  const seqrec::ArchiveData archive = seqrec::load_dataset(dataset_path);
  if (!archive.dataset.pois.contains(start)) {
    throw seqrec::UnknownPoi("start poi " + std::to_string(start) + " not in the dataset");
  }
  const seqrec::Query query{start, length};
  const seqrec::ChainScores scores =
      seqrec::build_prediction_scores(model, query, archive.dataset.pois);
  if (static_cast<std::size_t>(length) > archive.dataset.pois.size()) {
    throw seqrec::Infeasible("query length exceeds the POI count");
  }

  // Round i forbids the i-1 best paths, mirroring sequential top-k.
  std::vector<seqrec::PathCut> cuts;
  if (k > 1) {
    seqrec::PredictOptions options;
    options.ilp_threshold = ilp_threshold;
    options.max_expansions = max_expansions;
    const seqrec::TopKResult top = seqrec::top_k_paths(scores, k - 1, options);
    for (const auto& y : top.items) cuts.push_back({y});
  }

  for (std::int64_t i = 1; i <= k; ++i) {
    const fs::path path = out_prefix.string() + "_" + std::to_string(i) + ".lp";
    const std::span<const seqrec::PathCut> used(cuts.data(),
                                                std::min<std::size_t>(cuts.size(), i - 1));
    seqrec::export_ilp(scores, used, path);
    manifest.output(path);
  }
  manifest.write(out_prefix.string() + ".manifest.json");
  std::cout << "wrote " << k << " LP file(s) under " << out_prefix.string() << "_*.lp\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured sequence recommendation toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for all randomness")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load CSVs into a dataset archive");
  fs::path traj_file, poi_file, ingest_out;
  int clusters = 5, bins = 5;
  ingest->add_option("--traj", traj_file, "trajectory CSV")->required();
  ingest->add_option("--poi", poi_file, "POI CSV")->required();
  ingest->add_option("--out", ingest_out, "output archive path")->required();
  ingest->add_option("--clusters", clusters, "POI clusters")->capture_default_str();
  ingest->add_option("--bins", bins, "quantile bins")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset archive");
  fs::path train_dataset, train_out;
  std::string variant = "sr";
  double reg_c = 1.0;
  bool tune = false;
  std::string c_grid_csv = "0.01,0.1,1,10,100,1000";
  std::int64_t tune_k = 10;
  int mc_repeats = 5;
  double mc_frac = 0.8;
  int max_epochs = 200;
  double tol = 1e-2;
  std::string formulation = "n_slack";
  std::int64_t max_expansions = seqrec::kDefaultMaxExpansions;
  int ilp_threshold = 10;
  train->add_option("--dataset", train_dataset, "dataset archive")->required();
  train->add_option("--variant", variant, "sp|sr|sppath|srpath|poirank")->capture_default_str();
  train->add_option("--c", reg_c, "regularization constant C")->capture_default_str();
  train->add_flag("--tune", tune, "tune C by Monte Carlo cross validation");
  train->add_option("--c-grid", c_grid_csv, "C grid for --tune")->capture_default_str();
  train->add_option("--k", tune_k, "top-k used by tuning")->capture_default_str();
  train->add_option("--mc-repeats", mc_repeats, "Monte Carlo repeats")->capture_default_str();
  train->add_option("--mc-frac", mc_frac, "Monte Carlo train fraction")->capture_default_str();
  train->add_option("--max-epochs", max_epochs, "epoch cap")->capture_default_str();
  train->add_option("--tol", tol, "violation tolerance")->capture_default_str();
  train->add_option("--formulation", formulation, "n_slack|one_slack")->capture_default_str();
  train->add_option("--max-expansions", max_expansions, "list Viterbi pop budget")
      ->capture_default_str();
  train->add_option("--threshold-ilp", ilp_threshold, "length routed to the exact path engine")
      ->capture_default_str();
  train->add_option("--out", train_out, "output model path")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "leave-one-query-out evaluation");
  fs::path eval_dataset, eval_out;
  std::string methods_csv = "random,popularity,poirank,sp,sppath,sr,srpath";
  std::string k_csv = "1,3,5,10";
  std::string eval_c_grid_csv = "0.01,0.1,1,10,100,1000";
  double eval_c = 0.0;
  int threads = 0;
  evaluate->add_option("--dataset", eval_dataset, "dataset archive")->required();
  evaluate->add_option("--methods", methods_csv, "comma list of methods")->capture_default_str();
  evaluate->add_option("--k", k_csv, "comma list of top-k values")->capture_default_str();
  evaluate->add_option("--c", eval_c, "fixed C (skips tuning)");
  evaluate->add_option("--c-grid", eval_c_grid_csv, "C grid for tuning")->capture_default_str();
  evaluate->add_option("--mc-repeats", mc_repeats, "Monte Carlo repeats")->capture_default_str();
  evaluate->add_option("--mc-frac", mc_frac, "Monte Carlo train fraction")->capture_default_str();
  evaluate->add_option("--max-epochs", max_epochs, "epoch cap")->capture_default_str();
  evaluate->add_option("--tol", tol, "violation tolerance")->capture_default_str();
  evaluate->add_option("--max-expansions", max_expansions, "list Viterbi pop budget")
      ->capture_default_str();
  evaluate->add_option("--threshold-ilp", ilp_threshold, "length routed to the exact path engine")
      ->capture_default_str();
  evaluate->add_option("--threads", threads, "fold parallelism (0 = auto)")
      ->capture_default_str();
  evaluate->add_option("--out", eval_out, "output prefix")->required();

  // export-ilp
  auto* export_ilp = app.add_subcommand("export-ilp", "write LP files for a query");
  fs::path ilp_model, ilp_dataset, ilp_out;
  seqrec::PoiId ilp_start = 0;
  int ilp_length = 2;
  std::int64_t ilp_k = 1;
  export_ilp->add_option("--model", ilp_model, "model file")->required();
  export_ilp->add_option("--dataset", ilp_dataset, "dataset archive")->required();
  export_ilp->add_option("--start", ilp_start, "query start POI (dense id)")->required();
  export_ilp->add_option("--length", ilp_length, "query length")->required();
  export_ilp->add_option("--k", ilp_k, "sequential cut rounds")->capture_default_str();
  export_ilp->add_option("--max-expansions", max_expansions, "list Viterbi pop budget")
      ->capture_default_str();
  export_ilp->add_option("--threshold-ilp", ilp_threshold, "length routed to the exact engine")
      ->capture_default_str();
  export_ilp->add_option("--out", ilp_out, "output prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return run_ingest(traj_file, poi_file, ingest_out, clusters, bins, seed);
    if (*train) {
      return run_train(train_dataset, variant, reg_c, tune, parse_double_list(c_grid_csv), tune_k,
                       mc_repeats, mc_frac, max_epochs, tol, formulation, max_expansions,
                       ilp_threshold, seed, train_out);
    }
    if (*evaluate) {
      const std::vector<double> grid =
          eval_c > 0.0 ? std::vector<double>{eval_c} : parse_double_list(eval_c_grid_csv);
      return run_evaluate(eval_dataset, parse_string_list(methods_csv), parse_int_list(k_csv),
                          grid, mc_repeats, mc_frac, max_epochs, tol, max_expansions,
                          ilp_threshold, seed, threads, eval_out);
    }
    if (*export_ilp) {
      return run_export_ilp(ilp_model, ilp_dataset, ilp_start, ilp_length, ilp_k, max_expansions,
                            ilp_threshold, seed, ilp_out);
    }
  } catch (const seqrec::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const seqrec::UnknownPoi& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const seqrec::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const seqrec::SearchExhaustedError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTrain;
  } catch (const seqrec::NonPositiveC& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTrain;
  } catch (const seqrec::NoPairs& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTrain;
  } catch (const seqrec::EmptyDataset& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTrain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
