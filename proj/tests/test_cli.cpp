#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mixlab/chain.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(MIXLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::map<std::string, std::string> read_kv(const fs::path& file) {
  std::map<std::string, std::string> kv;
  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    kv[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return kv;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mixlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("analyze a dumbbell model") {
  auto dir = fresh_dir("analyze");
  int rc = run_cli("analyze --model dumbbell --n 10 --no-lazy --out " + dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "report.csv");
  CHECK(kv.at("states") == "10");
  CHECK(kv.at("phi") == "1/2");
  CHECK(std::stod(kv.at("lambda1")) <= 7.0 / 8 + 1e-9);
  CHECK(kv.at("cheeger_ok") == "1");
  CHECK(fs::exists(dir / "spectrum.csv"));
}

TEST_CASE("analyze a chain file") {
  auto dir = fresh_dir("analyze_file");
  std::string chain = std::string(MIXLAB_TEST_DATA_DIR) + "/lazy_k4.chain";
  int rc = run_cli("analyze --chain " + chain + " --out " + dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "report.csv");
  CHECK(kv.at("phi") == "1/3");
}

TEST_CASE("analyze rejects a non-ergodic file with exit 2 and error.csv") {
  auto dir = fresh_dir("analyze_bad");
  fs::path bad = dir / "bad.chain";
  {
    std::ofstream out(bad);
    out << "chain bad 2\nstate 0 a\nstate 1 b\nt 0 0 1/1\nt 1 1 1/1\n";
  }
  int rc = run_cli("analyze --chain " + bad.string() + " --out " + dir.string());
  CHECK(rc == 2);
  auto kv = read_kv(dir / "error.csv");
  CHECK(kv.count("NotIrreducible") == 1);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run_cli("analyze --bogus-flag") == 1);
  CHECK(run_cli("") == 1);
}

TEST_CASE("couple on bounded subsets reports beta and the bound") {
  auto dir = fresh_dir("couple");
  int rc = run_cli(
      "couple --model bounded_subsets --n 4 --k 2 --eps 0.25 --trials 200 "
      "--tmax 10 --out " +
      dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "couple.csv");
  CHECK(kv.at("beta") == "7/8");
  CHECK(kv.at("tau_bound") == "23");
  CHECK(fs::exists(dir / "coalescence.csv"));
}

TEST_CASE("congest scores a supplied path dump") {
  auto dir = fresh_dir("congest");
  fs::path gamma = dir / "gamma.txt";
  {
    std::ofstream out(gamma);
    // direct paths on the lazy K4
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y)
        if (x != y) out << "path " << x << " " << y << " 1/1 " << x << " " << y << "\n";
  }
  std::string chain = std::string(MIXLAB_TEST_DATA_DIR) + "/lazy_k4.chain";
  int rc = run_cli("congest --chain " + chain + " --gamma " + gamma.string() +
                   " --out " + dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "congestion.csv");
  CHECK(kv.at("rho_exact") == "3/2");
  CHECK(kv.at("ell") == "1");
}

TEST_CASE("congest computes the resistance") {
  auto dir = fresh_dir("resist");
  std::string chain = std::string(MIXLAB_TEST_DATA_DIR) + "/lazy_k4.chain";
  int rc = run_cli("congest --chain " + chain + " --resistance exact_lp --out " +
                   dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "congestion.csv");
  CHECK(std::stod(kv.at("resistance")) > 0);
  CHECK(fs::exists(dir / "flow.txt"));
}

TEST_CASE("flow-knapsack audits the encoding") {
  auto dir = fresh_dir("flowk");
  int rc = run_cli("flow-knapsack --a 1/1,1/1,1/1 --b 2/1 --heavy 29 --out " +
                   dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "metrics.csv");
  CHECK(kv.at("states") == "7");
  CHECK(kv.at("audit_collisions") == "0");
  CHECK(std::stol(kv.at("audit_positions")) > 0);
}

TEST_CASE("kr writes the layer report") {
  auto dir = fresh_dir("kr");
  int rc = run_cli(
      "kr --bipartite 2x2 --coupling synchronous --trials 50 --out " + dir.string());
  CHECK(rc == 0);
  auto kv = read_kv(dir / "kr.csv");
  CHECK(std::stoi(kv.at("max_distance_change")) <= 4);
  CHECK(fs::exists(dir / "layers.csv"));
}

TEST_CASE("compare emits exact tau inside the spectral sandwich") {
  auto dir = fresh_dir("compare");
  int rc = run_cli("compare --model bernoulli_laplace --n 4 --k 2 --out " +
                   dir.string());
  CHECK(rc == 0);
  std::ifstream in(dir / "compare.csv");
  std::string line;
  std::map<std::string, std::map<std::string, double>> table;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("kind,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string kind, state, value;
    std::getline(ls, kind, ',');
    std::getline(ls, state, ',');
    std::getline(ls, value, ',');
    table[state][kind] = std::stod(value);
  }
  bool saw_state = false;
  for (const auto& [state, kv] : table) {
    if (!kv.count("tau_exact")) continue;
    saw_state = true;
    CHECK(kv.at("tau_exact") <= kv.at("tau_spectral_upper") + 1e-9);
    CHECK(kv.at("tau_exact") >= kv.at("tau_spectral_lower") - 1e-9);
  }
  CHECK(saw_state);
}

TEST_CASE("outputs are byte-identical across runs with the same seed") {
  auto dir1 = fresh_dir("det1");
  auto dir2 = fresh_dir("det2");
  std::string cmd =
      "couple --model bounded_subsets --n 4 --k 2 --trials 500 --tmax 12 --seed 9";
  CHECK(run_cli(cmd + " --out " + dir1.string()) == 0);
  CHECK(run_cli(cmd + " --out " + dir2.string()) == 0);
  for (const char* f : {"couple.csv", "coalescence.csv"}) {
    std::ifstream a(dir1 / f), b(dir2 / f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    // the config header embeds --out; compare from the first data line
    auto strip = [](std::string s) { return s.substr(s.find('\n') + 1); };
    CHECK(strip(sa.str()) == strip(sb.str()));
  }
}
