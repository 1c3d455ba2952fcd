#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = QCL_CLI_PATH;
const fs::path kConfigs = QCL_CONFIG_DIR;

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("qcl_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_json(const fs::path& dir, const std::string& name, const json& j) {
  const auto f = dir / name;
  std::ofstream(f) << j.dump(2);
  return f;
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_harmonic(const fs::path& out) {
  return {{"name", "cli_harmonic"},
          {"potential", {{"layout", "flat"}, {"dim", 1}, {"smooth", {{"kind", "harmonic"}}}}},
          {"packet", {{"x0", 0}, {"p0", 1}}},
          {"eps", {0.2, 0.1, 0.05}},
          {"time", {{"final", 0.5}, {"snapshot_count", 2}}},
          {"grid", {{"extent", 12}}},
          {"dictionary", {{"trajectory", {{"count", 3}}}}},
          {"output", {{"directory", out.string()}}}};
}

}  // namespace

TEST_CASE("validate-config accepts every shipped config") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json") continue;
    const auto r = run("validate-config \"" + e.path().string() + "\"");
    CHECK_MESSAGE(r.code == 0, e.path().filename().string(), ": ", r.out);
    ++n;
  }
  CHECK(n == 13);
}

TEST_CASE("validate-config reads stdin") {
  const auto d = scratch("stdin");
  const auto f = write_json(d, "c.json", small_harmonic(d / "out"));
  const auto r = run("validate-config < \"" + f.string() + "\"");
  CHECK(r.code == 0);
  CHECK(r.out.find("ok cli_harmonic") != std::string::npos);
}

TEST_CASE("config errors exit 2 and name the key") {
  const auto d = scratch("missing");
  auto j = small_harmonic(d / "out");
  j.erase("eps");
  const auto f = write_json(d, "c.json", j);
  for (const char* sub : {"validate-config", "sweep", "run-quantum"}) {
    const auto r = run(std::string(sub) + " \"" + f.string() + "\"");
    CHECK(r.code == 2);
    CHECK(r.out.find("eps") != std::string::npos);
  }
  j = small_harmonic(d / "out");
  j["grid"]["points"] = 100;
  const auto r = run("validate-config \"" + write_json(d, "p.json", j).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.out.find("grid.points") != std::string::npos);

  CHECK(run("").code != 0);
  CHECK(run("frobnicate").code != 0);
}

TEST_CASE("dry run prints one plan line per eps and writes nothing") {
  const auto d = scratch("dry");
  const auto out = d / "out";
  const auto f = write_json(d, "c.json", small_harmonic(out));
  const auto before = std::distance(fs::directory_iterator(d), fs::directory_iterator());
  const auto r = run("sweep \"" + f.string() + "\" --dry-run");
  CHECK(r.code == 0);
  int lines = 0;
  std::istringstream in(r.out);
  std::vector<int> ns;
  for (std::string line; std::getline(in, line);)
    if (line.rfind("eps=", 0) == 0) {
      ++lines;
      ns.push_back(std::stoi(line.substr(line.find("N=") + 2)));
    }
  CHECK(lines == 3);
  REQUIRE(ns.size() == 3);
  CHECK(ns[1] == 2 * ns[0]);
  CHECK(ns[2] == 2 * ns[1]);
  CHECK_FALSE(fs::exists(out));
  CHECK(std::distance(fs::directory_iterator(d), fs::directory_iterator()) == before);
}

TEST_CASE("sweep writes artifacts reproducibly; --out and --seed override") {
  const auto d = scratch("sweep");
  const auto f = write_json(d, "c.json", small_harmonic(d / "a"));
  auto r = run("sweep \"" + f.string() + "\" --threads 1");
  CHECK_MESSAGE(r.code == 0, r.out);
  for (const char* name : {"results.json", "pairings.csv", "distances.csv", "rates.csv", "manifest.json",
                           "estimates/eps0.1.json", "estimates/eps0.1_mass.csv", "estimates/eps0.1_tail.csv"})
    CHECK_MESSAGE(fs::exists(d / "a" / name), name);
  const auto manifest = json::parse(slurp(d / "a" / "manifest.json"));
  CHECK(manifest.at("schema_version") == 1);
  CHECK(manifest.contains("created"));
  CHECK(manifest.at("config_hash").get<std::string>().size() == 16);

  r = run("sweep \"" + f.string() + "\" --threads 2 --out \"" + (d / "b").string() + "\"");
  CHECK(r.code == 0);
  for (const char* name : {"results.json", "pairings.csv", "distances.csv", "rates.csv"})
    CHECK_MESSAGE(slurp(d / "a" / name) == slurp(d / "b" / name), name);

  CHECK(slurp(d / "a" / "pairings.csv").rfind("eps,t,probe_id,quantum,classical,a_norm,in_scope,remainder\n", 0) == 0);

  r = run("sweep \"" + f.string() + "\" --seed 9 --out \"" + (d / "c").string() + "\"");
  CHECK(r.code == 0);
  const auto results = json::parse(slurp(d / "c" / "results.json"));
  CHECK(results.at("result").at("config").at("seed") == 9);
}

TEST_CASE("runtime aborts exit 3 and keep partial outputs") {
  const auto d = scratch("abort");
  json j = {{"name", "leak"},
            {"potential", {{"layout", "flat"}, {"dim", 1}}},
            {"packet", {{"x0", 0}, {"p0", 2}}},
            {"eps", {0.2}},
            {"time", {{"final", 2}, {"snapshot_count", 4}}},
            {"grid", {{"extent", 6}, {"p_max", 4}}},
            {"dictionary", {{"trajectory", {{"count", 2}}}}},
            {"output", {{"directory", (d / "out").string()}}}};
  const auto r = run("sweep \"" + write_json(d, "c.json", j).string() + "\"");
  CHECK(r.code == 3);
  CHECK(r.out.find("BoundaryContamination") != std::string::npos);
  CHECK(fs::exists(d / "out" / "results.json"));
  const auto res = json::parse(slurp(d / "out" / "results.json"));
  CHECK(res.at("result").at("partial") == true);
}

TEST_CASE("run-quantum, run-classical, check-estimates, export-field") {
  const auto d = scratch("subs");
  auto j = small_harmonic(d / "out");
  j["eps"] = {0.2, 0.1};
  const auto f = write_json(d, "c.json", j).string();

  auto r = run("run-quantum \"" + f + "\"");
  CHECK(r.code == 0);
  CHECK(fs::exists(d / "out" / "quantum.csv"));

  r = run("run-classical \"" + f + "\"");
  CHECK(r.code == 0);
  CHECK(slurp(d / "out" / "classical.csv").rfind("t,id,x0,p0,w,aborted", 0) == 0);

  r = run("check-estimates \"" + f + "\"");
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("pass tightness") != std::string::npos);
  CHECK(fs::exists(d / "out" / "estimates" / "eps0.2.json"));

  r = run("export-field \"" + f + "\" --eps 0.2 --out \"" + (d / "fields").string() + "\"");
  CHECK(r.code == 0);
  CHECK(fs::exists(d / "fields" / "fields" / "eps0.2_snap0.json"));
  CHECK(fs::exists(d / "fields" / "fields" / "eps0.2_snap2_wigner.csv"));
  CHECK(fs::exists(d / "fields" / "fields" / "eps0.2_snap2_husimi.csv"));
  CHECK_FALSE(fs::exists(d / "fields" / "fields" / "eps0.1_snap0.json"));
}
