#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#ifndef SEQREC_CLI_PATH
#error "SEQREC_CLI_PATH must point at the seqrec binary"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("seqrec_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& stdout_to = {}) {
  std::string cmd = std::string(SEQREC_CLI_PATH) + " " + args;
  if (!stdout_to.empty()) cmd += " > " + stdout_to.string();
  cmd += " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_corpus(const fs::path& dir) {
  std::ofstream poi(dir / "poi.csv");
  poi << "poi_id,category,lon,lat\n";
  for (int i = 0; i < 6; ++i) {
    poi << i << ",cat" << (i % 3) << "," << 0.1 * i << "," << 0.05 * ((i * 3) % 5) << "\n";
  }
  std::ofstream traj(dir / "traj.csv");
  traj << "user_id,traj_id,seq_index,poi_id\n";
  int t = 0;
  const int tours[][3] = {{0, 1, 2}, {0, 2, 1}, {0, 1, 3}, {1, 2, 4}, {1, 4, 2},
                          {2, 3, 5}, {2, 5, 3}, {3, 4, 5}, {3, 5, 4}, {4, 5, 0},
                          {0, 3, 4}, {1, 3, 5}, {2, 4, 0}, {3, 0, 1}, {4, 1, 2}};
  for (const auto& tour : tours) {
    for (int s = 0; s < 3; ++s) {
      traj << "u" << (t % 7) << ",t" << t << "," << s << "," << tour[s] << "\n";
    }
    ++t;
  }
}

}  // namespace

TEST_CASE("ingest writes an archive and a summary line") {
  TempDir dir;
  write_corpus(dir.path);
  const fs::path archive = dir.path / "data.json";
  const fs::path log = dir.path / "ingest.out";

  const int code = run("--seed 1 ingest --traj " + (dir.path / "traj.csv").string() + " --poi " +
                           (dir.path / "poi.csv").string() + " --out " + archive.string(),
                       log);
  CHECK(code == 0);
  CHECK(fs::exists(archive));
  CHECK(fs::exists(archive.string() + ".manifest.json"));

  const std::string out = slurp(log);
  CHECK(out.find("traj=15") != std::string::npos);
  CHECK(out.find("pois=6") != std::string::npos);
  CHECK(out.find("queries=") != std::string::npos);
  CHECK(out.find("short=15") != std::string::npos);
}

TEST_CASE("ingest of an empty corpus reports zero and succeeds") {
  TempDir dir;
  {
    std::ofstream poi(dir.path / "poi.csv");
    poi << "poi_id,category,lon,lat\n0,c,0,0\n";
    std::ofstream traj(dir.path / "traj.csv");
    traj << "user_id,traj_id,seq_index,poi_id\n";
  }
  const fs::path log = dir.path / "out.txt";
  const int code = run("ingest --traj " + (dir.path / "traj.csv").string() + " --poi " +
                           (dir.path / "poi.csv").string() + " --out " +
                           (dir.path / "d.json").string(),
                       log);
  CHECK(code == 0);
  CHECK(slurp(log).find("traj=0") != std::string::npos);
}

TEST_CASE("corrupt rows exit with the parse code and a line number") {
  TempDir dir;
  {
    std::ofstream poi(dir.path / "poi.csv");
    poi << "poi_id,category,lon,lat\n0,c,0,0\n";
    std::ofstream traj(dir.path / "traj.csv");
    traj << "user_id,traj_id,seq_index,poi_id\nu,t,0,0\nu,t,bad,0\n";
  }
  const int code = run("ingest --traj " + (dir.path / "traj.csv").string() + " --poi " +
                       (dir.path / "poi.csv").string() + " --out " +
                       (dir.path / "d.json").string());
  CHECK(code == 2);
}

TEST_CASE("train then evaluate end to end, deterministically") {
  TempDir dir;
  write_corpus(dir.path);
  const fs::path archive = dir.path / "data.json";
  REQUIRE(run("--seed 5 ingest --traj " + (dir.path / "traj.csv").string() + " --poi " +
              (dir.path / "poi.csv").string() + " --out " + archive.string()) == 0);

  const fs::path model = dir.path / "model.json";
  const int train_code =
      run("--seed 5 train --dataset " + archive.string() +
          " --variant sr --c 1.0 --max-epochs 20 --out " + model.string());
  CHECK(train_code == 0);
  CHECK(fs::exists(model));
  CHECK(fs::exists(model.string() + ".diag.jsonl"));
  CHECK(slurp(model).find("\"variant\": \"SR\"") != std::string::npos);

  // Same seed, same bytes.
  const fs::path model2 = dir.path / "model2.json";
  REQUIRE(run("--seed 5 train --dataset " + archive.string() +
              " --variant sr --c 1.0 --max-epochs 20 --out " + model2.string()) == 0);
  CHECK(slurp(model) == slurp(model2));

  // srpath diagnostics never contain a looped constraint.
  const fs::path model3 = dir.path / "model3.json";
  REQUIRE(run("--seed 5 train --dataset " + archive.string() +
              " --variant srpath --c 1.0 --max-epochs 10 --out " + model3.string()) == 0);
  const std::string diag = slurp(model3.string() + ".diag.jsonl");
  CHECK(diag.find("\"looped_constraints\":0") != std::string::npos);

  const fs::path report = dir.path / "report";
  const int eval_code = run("--seed 5 evaluate --dataset " + archive.string() +
                            " --methods random,popularity --k 1,10 --out " + report.string());
  CHECK(eval_code == 0);
  const std::string csv = slurp(report.string() + ".csv");
  CHECK(csv.find("query_id,method,k,f1_points,f1_pairs,tau_b") == 0);
  CHECK(csv.find("mean,random,1,") != std::string::npos);
  CHECK(csv.find("mean,popularity,10,") != std::string::npos);

  const fs::path report2 = dir.path / "report2";
  REQUIRE(run("--seed 5 evaluate --dataset " + archive.string() +
              " --methods random,popularity --k 1,10 --out " + report2.string()) == 0);
  CHECK(slurp(report.string() + ".csv") == slurp(report2.string() + ".csv"));

  // Monotone best-of-top-k between k=1 and k=10 for each method/metric.
  std::istringstream lines(csv);
  std::string line;
  std::map<std::string, std::vector<double>> means;
  while (std::getline(lines, line)) {
    if (line.rfind("mean,", 0) != 0) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    means[fields[1] + ":" + fields[2]] = {std::stod(fields[3]), std::stod(fields[4]),
                                          std::stod(fields[5])};
  }
  for (const std::string method : {"random", "popularity"}) {
    for (int metric = 0; metric < 3; ++metric) {
      CHECK(means[method + ":10"][static_cast<std::size_t>(metric)] >=
            means[method + ":1"][static_cast<std::size_t>(metric)] - 1e-9);
    }
  }
}

TEST_CASE("export-ilp writes one file per cut round") {
  TempDir dir;
  write_corpus(dir.path);
  const fs::path archive = dir.path / "data.json";
  REQUIRE(run("--seed 2 ingest --traj " + (dir.path / "traj.csv").string() + " --poi " +
              (dir.path / "poi.csv").string() + " --out " + archive.string()) == 0);
  const fs::path model = dir.path / "model.json";
  REQUIRE(run("--seed 2 train --dataset " + archive.string() +
              " --variant sp --c 1.0 --max-epochs 5 --out " + model.string()) == 0);

  const fs::path prefix = dir.path / "query";
  const int code = run("export-ilp --model " + model.string() + " --dataset " + archive.string() +
                       " --start 0 --length 3 --k 3 --out " + prefix.string());
  CHECK(code == 0);
  for (int i = 1; i <= 3; ++i) {
    const fs::path lp = prefix.string() + "_" + std::to_string(i) + ".lp";
    REQUIRE(fs::exists(lp));
    const std::string text = slurp(lp);
    int cuts = 0;
    for (std::size_t pos = text.find("c_cut_"); pos != std::string::npos;
         pos = text.find("c_cut_", pos + 1)) {
      ++cuts;
    }
    CHECK(cuts == i - 1);
  }

  // Infeasible length exits 4.
  const int infeasible = run("export-ilp --model " + model.string() + " --dataset " +
                             archive.string() + " --start 0 --length 9 --k 1 --out " +
                             (dir.path / "bad").string());
  CHECK(infeasible == 4);
}
