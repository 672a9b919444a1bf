#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "dqms/cli.hpp"
#include "support/instances.hpp"

using namespace dqms;
namespace fs = std::filesystem;

namespace {

std::string cards_path() { return std::string(DQMS_SOURCE_DIR) + "/data/cards.json"; }

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

struct CliRun {
  int code;
  std::string text;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out;
  int code = run_cli(std::move(args), out);
  return {code, out.str()};
}

std::string write_file(const std::string& name, const std::string& content) {
  std::string path = tmp_path(name);
  std::ofstream(path) << content;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("graph prints one-based families and a consistent refinement") {
  CliRun r = cli({"graph", cards_path()});
  CHECK(r.code == 0);
  CHECK(r.text.find("G_A = {{1,2},{2,3}}") != std::string::npos);
  CHECK(r.text.find("G_B = {{1},{2},{3}}") != std::string::npos);
  CHECK(r.text.find("g~ consistent: yes") != std::string::npos);
}

TEST_CASE("bad input files are reported with the offending field") {
  CliRun missing = cli({"graph", tmp_path("does_not_exist.json")});
  CHECK(missing.code == 2);
  CHECK(missing.text.find("cannot open") != std::string::npos);

  std::string ragged = write_file("cli_ragged.json", R"({
    "dim_a": 2, "dim_b": 2,
    "state": {"re": [[1, 0], [0]]},
    "povm_a": [], "povm_b": [], "g": []
  })");
  CliRun bad = cli({"graph", ragged});
  CHECK(bad.code == 2);
  CHECK(bad.text.find("state.re") != std::string::npos);

  CliRun partial = cli({"graph", write_file("cli_partial.json", R"({"dim_a": 3})")});
  CHECK(partial.code == 2);
  CHECK(partial.text.find("dim_b") != std::string::npos);

  CliRun chan = cli({"rates", cards_path(), "--channel-a", tmp_path("no_channel.json")});
  CHECK(chan.code == 2);
  CHECK(chan.text.find("cannot open") != std::string::npos);

  CliRun flag = cli({"simulate", cards_path(), "--theorem", "3"});
  CHECK(flag.code == 2);
  CHECK(flag.text.find("theorem") != std::string::npos);
}

TEST_CASE("rates --optimize lands on the known optimum and writes CSV") {
  std::string out_csv = tmp_path("cli_rates.csv");
  CliRun r = cli({"rates", cards_path(), "--optimize", "--out", out_csv});
  CHECK(r.code == 0);
  CHECK(r.text.find("0.540852083") != std::string::npos);
  CHECK(r.text.find("0.874185416") != std::string::npos);
  CHECK(r.text.find("covering") != std::string::npos);

  std::string csv = slurp(out_csv);
  CHECK(csv.rfind("label,R,RS\n", 0) == 0);
  CHECK(csv.find("lifted,0.540852083,0.874185416") != std::string::npos);
  CHECK(csv.find("baseline,1,1") != std::string::npos);
  std::remove(out_csv.c_str());
}

TEST_CASE("simulate defaults on cards: small distance and a faithful config echo") {
  CliRun r = cli({"simulate", cards_path(), "--seed", "7"});
  CHECK(r.code == 0);
  auto doc = nlohmann::json::parse(r.text);
  CHECK(doc["d"].get<double>() < 0.5);
  CHECK(doc["identity_gap"].get<double>() <= 1e-9);
  CHECK(doc["trace_omega"].get<double>() > 0.0);

  const auto& c = doc["config"];
  CHECK(c["n"].get<int>() == 1);
  CHECK(c["delta"].get<double>() == 1.0);
  CHECK(c["epsilon"].get<double>() == 0.5);
  CHECK(c["s"].get<int>() == 8);
  CHECK(c["t"].get<int>() == 8);
  CHECK(c["m"].get<int>() == 8);
  CHECK(c["seed"].get<std::uint64_t>() == 7);
  CHECK(c["theorem"].get<int>() == 2);
  CHECK(c["decode_trials"].get<int>() == 256);
  CHECK(c["compute_distance"].get<bool>() == true);
}

TEST_CASE("simulate reruns are byte-identical") {
  CliRun a = cli({"simulate", cards_path(), "--seed", "11", "--trials", "64"});
  CliRun b = cli({"simulate", cards_path(), "--seed", "11", "--trials", "64"});
  CHECK(a.code == 0);
  CHECK(a.text == b.text);
  CliRun other = cli({"simulate", cards_path(), "--seed", "12", "--trials", "64"});
  CHECK(a.text != other.text);
}

TEST_CASE("a single bin makes classical decoding ambiguous") {
  CliRun r = cli({"simulate", cards_path(), "--t", "1", "--no-distance", "--trials", "256"});
  CHECK(r.code == 0);
  auto doc = nlohmann::json::parse(r.text);
  // every bin collision between the two codewords is an error, so the error
  // rate sits near 1 - 2 (1/2)^s
  CHECK(doc["decode_error"].get<double>() > 0.9);
}

TEST_CASE("an infeasible width exits 3 with the minimum feasible width") {
  CliRun r = cli({"simulate", cards_path(), "--n", "2", "--delta", "0.05", "--no-distance"});
  CHECK(r.code == 3);
  CHECK(r.text.find("infeasible:") != std::string::npos);
  CHECK(r.text.find("minimum feasible delta") != std::string::npos);
}

TEST_CASE("simulate --seeds aggregates runs with a summary") {
  CliRun r = cli({"simulate", cards_path(), "--seeds", "3", "--trials", "32", "--seed", "2"});
  CHECK(r.code == 0);
  auto doc = nlohmann::json::parse(r.text);
  REQUIRE(doc["runs"].size() == 3);
  CHECK(doc["runs"][0]["config"]["seed"].get<std::uint64_t>() == 2);
  CHECK(doc["runs"][2]["config"]["seed"].get<std::uint64_t>() == 4);
  const auto& s = doc["summary"];
  CHECK(s["seeds"].get<int>() == 3);
  CHECK(s["d_mean"].get<double>() >= 0.0);
  CHECK(s["d_max"].get<double>() >= s["d_mean"].get<double>());
  CHECK(s["decode_error_mean"].get<double>() >= 0.0);
  CHECK(s["flagged_fraction"].get<double>() >= 0.0);
}

TEST_CASE("region emits a monotone frontier through the optimal channel") {
  std::string out_csv = tmp_path("cli_region.csv");
  CliRun r = cli({"region", cards_path(), "--grid", "6", "--out", out_csv});
  CHECK(r.code == 0);

  std::string csv = slurp(out_csv);
  CHECK(csv.find("lifted,0.540852083,0.874185416") != std::string::npos);

  std::istringstream lines(csv);
  std::string line;
  std::vector<std::pair<double, double>> corners;
  while (std::getline(lines, line)) {
    if (line.rfind("corner,", 0) != 0) continue;
    double rr, ss;
    REQUIRE(std::sscanf(line.c_str(), "corner,%lf,%lf", &rr, &ss) == 2);
    corners.emplace_back(rr, ss);
  }
  REQUIRE(corners.size() >= 2);
  for (size_t i = 1; i < corners.size(); ++i) {
    CHECK(corners[i].first >= corners[i - 1].first);
    CHECK(corners[i].second <= corners[i - 1].second + 1e-12);
  }
  std::remove(out_csv.c_str());
}

TEST_CASE("an inline family fixes the sweep to a single channel") {
  // pinning both families to the singletons leaves no free channel
  // parameter, so the sweep degenerates to the identity lifting
  std::string prob = slurp(cards_path());
  auto doc = nlohmann::json::parse(prob);
  doc["family_a"] = std::vector<std::vector<int>>{{0}, {1}, {2}};
  doc["family_b"] = std::vector<std::vector<int>>{{0}, {1}, {2}};
  std::string path = write_file("cli_pinned.json", doc.dump());

  std::string out_csv = tmp_path("cli_pinned_region.csv");
  CliRun r = cli({"region", path, "--grid", "50", "--out", out_csv});
  CHECK(r.code == 0);
  std::string csv = slurp(out_csv);
  CHECK(csv.find("lifted,1,1") != std::string::npos);
  size_t lifted_rows = 0;
  for (size_t pos = csv.find("\nlifted,"); pos != std::string::npos;
       pos = csv.find("\nlifted,", pos + 1))
    ++lifted_rows;
  CHECK(lifted_rows == 1);
  std::remove(out_csv.c_str());
  std::remove(path.c_str());
}

TEST_SUITE_END();
