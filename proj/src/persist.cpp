#include "qcl/persist.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "qcl/error.hpp"

namespace qcl {

namespace fs = std::filesystem;

namespace {

// JSON has no NaN or infinity; store them as null and read null back as NaN.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}
std::vector<double> nums(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(num(x));
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot write " + file.string());
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

json cell_to_json(const EpsCell& c) {
  json snaps = json::array();
  for (const auto& s : c.snapshots)
    snaps.push_back({{"t", s.t},
                     {"norm", num(s.norm)},
                     {"energy", num(s.energy)},
                     {"boundary_mass", num(s.boundary_mass)},
                     {"weak_distance", num(s.weak_distance)},
                     {"quantum", nums(s.quantum)},
                     {"classical", nums(s.classical)},
                     {"remainder", nums(s.remainder)}});
  return {{"eps", c.eps},
          {"points", c.points},
          {"dt", c.dt},
          {"complete", c.complete},
          {"abort_kind", c.abort_kind},
          {"abort_reason", c.abort_reason},
          {"aborted_weight", c.aborted_weight},
          {"snapshots", snaps},
          {"estimates_file", c.estimates_file},
          {"estimates_pass", c.estimates_pass}};
}

EpsCell cell_from_json(const json& j) {
  EpsCell c;
  c.eps = j.at("eps").get<double>();
  c.points = j.at("points").get<std::vector<int>>();
  c.dt = j.at("dt").get<double>();
  c.complete = j.at("complete").get<bool>();
  c.abort_kind = j.at("abort_kind").get<std::string>();
  c.abort_reason = j.at("abort_reason").get<std::string>();
  c.aborted_weight = j.at("aborted_weight").get<double>();
  for (const auto& s : j.at("snapshots")) {
    SnapshotCell sc;
    sc.t = s.at("t").get<double>();
    sc.norm = num(s.at("norm"));
    sc.energy = num(s.at("energy"));
    sc.boundary_mass = num(s.at("boundary_mass"));
    sc.weak_distance = num(s.at("weak_distance"));
    sc.quantum = nums(s.at("quantum"));
    sc.classical = nums(s.at("classical"));
    sc.remainder = nums(s.at("remainder"));
    c.snapshots.push_back(std::move(sc));
  }
  c.estimates_file = j.at("estimates_file").get<std::string>();
  c.estimates_pass = j.at("estimates_pass").get<bool>();
  return c;
}

}  // namespace

json to_json(const SweepResult& r) {
  json probes = json::array(), cells = json::array(), rates = json::array();
  for (const auto& p : r.probes)
    probes.push_back({{"id", p.id}, {"a_norm", p.a_norm}, {"in_scope", p.in_scope}, {"spec", p.spec}});
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  for (const auto& f : r.rates)
    rates.push_back({{"t", f.t},
                     {"ok", f.ok},
                     {"slope", num(f.slope)},
                     {"intercept", num(f.intercept)},
                     {"residual", num(f.residual)},
                     {"used_eps", f.used_eps},
                     {"excluded_eps", f.excluded_eps},
                     {"reason", f.reason}});
  return {{"name", r.name},       {"config_hash", r.config_hash}, {"version", r.version},
          {"config", r.config},   {"probes", probes},             {"times", r.times},
          {"cells", cells},       {"rates", rates},               {"partial", r.partial}};
}

SweepResult sweep_from_json(const json& j) {
  SweepResult r;
  r.name = j.at("name").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.version = j.at("version").get<std::string>();
  r.config = j.at("config");
  for (const auto& p : j.at("probes"))
    r.probes.push_back({p.at("id").get<std::string>(), p.at("a_norm").get<double>(),
                        p.at("in_scope").get<bool>(), p.at("spec")});
  r.times = j.at("times").get<std::vector<double>>();
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  for (const auto& f : j.at("rates")) {
    RateFit fit;
    fit.t = f.at("t").get<double>();
    fit.ok = f.at("ok").get<bool>();
    fit.slope = num(f.at("slope"));
    fit.intercept = num(f.at("intercept"));
    fit.residual = num(f.at("residual"));
    fit.used_eps = f.at("used_eps").get<std::vector<double>>();
    fit.excluded_eps = f.at("excluded_eps").get<std::vector<double>>();
    fit.reason = f.at("reason").get<std::string>();
    r.rates.push_back(std::move(fit));
  }
  r.partial = j.at("partial").get<bool>();
  return r;
}

json to_json(const EstimateReport& r) {
  json samples = json::array(), checks = json::array(), rows = json::array();
  for (const auto& s : r.samples)
    samples.push_back({{"t", s.t},
                       {"norm", num(s.norm)},
                       {"energy", num(s.energy)},
                       {"kinetic", num(s.kinetic)},
                       {"singular_l2", num(s.singular.value)},
                       {"singular_l2_coarse", num(s.singular.coarse)},
                       {"singular_l2_relative_change", num(s.singular.relative_change)},
                       {"singular_l2_flagged", s.singular.flagged},
                       {"grad_bound", num(s.grad_bound)},
                       {"grad_direct", num(s.grad_direct)},
                       {"mass_near", nums(s.mass_near)},
                       {"tail", nums(s.tail)}});
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"value", num(c.value)},
                      {"threshold", num(c.threshold)},
                      {"detail", c.detail},
                      {"advisory", c.advisory}});
  for (const auto& row : r.tightness.rows)
    rows.push_back({{"t", row.t}, {"radius", row.radius}, {"tail", num(row.tail)},
                    {"bound", num(row.bound)}, {"pass", row.pass}});
  return {{"run_id", r.run_id},
          {"deltas", r.deltas},
          {"radii", r.radii},
          {"samples", samples},
          {"mass_slopes", nums(r.mass_slopes)},
          {"closest_sample", r.closest_sample},
          {"tightness", {{"grad_sup", r.tightness.grad_sup}, {"pass", r.tightness.pass}, {"rows", rows}}},
          {"checks", checks},
          {"all_pass", r.all_pass()}};
}

void save_results(const fs::path& dir, const SweepResult& r) {
  const json body = to_json(r);
  const json doc = {{"schema_version", kSchemaVersion},
                    {"checksum", hex64(fnv1a(body.dump()))},
                    {"result", body}};
  auto out = open_out(dir / "results.json");
  out << doc.dump(1) << '\n';
}

SweepResult load_results(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::kCorruptFile, "cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, file.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
    throw Error(ErrorKind::kCorruptFile, file.string() + ": no schema_version");
  const int version = doc["schema_version"].get<int>();
  if (version != kSchemaVersion)
    throw Error(ErrorKind::kSchemaVersionMismatch, file.string() + ": schema version " +
                                                       std::to_string(version) + ", expected " +
                                                       std::to_string(kSchemaVersion));
  if (!doc.contains("result") || !doc.contains("checksum") || !doc["checksum"].is_string())
    throw Error(ErrorKind::kCorruptFile, file.string() + ": missing result or checksum");
  if (doc["checksum"].get<std::string>() != hex64(fnv1a(doc["result"].dump())))
    throw Error(ErrorKind::kCorruptFile, file.string() + ": checksum mismatch");
  try {
    return sweep_from_json(doc["result"]);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, file.string() + ": " + e.what());
  }
}

void write_pairings_csv(const fs::path& file, const SweepResult& r) {
  auto out = open_out(file);
  out << "eps,t,probe_id,quantum,classical,a_norm,in_scope,remainder\n";
  for (const auto& c : r.cells)
    for (const auto& s : c.snapshots)
      for (std::size_t i = 0; i < r.probes.size(); ++i) {
        const auto& p = r.probes[i];
        out << fmt(c.eps) << ',' << fmt(s.t) << ',' << csv_field(p.id) << ',' << fmt(s.quantum[i]) << ','
            << fmt(s.classical[i]) << ',' << fmt(p.a_norm) << ',' << (p.in_scope ? 1 : 0) << ',';
        if (!s.remainder.empty() && p.in_scope) out << fmt(s.remainder[i]);
        out << '\n';
      }
}

void write_distances_csv(const fs::path& file, const SweepResult& r) {
  auto out = open_out(file);
  out << "eps,t,weak_distance,norm,energy,boundary_mass\n";
  for (const auto& c : r.cells)
    for (const auto& s : c.snapshots)
      out << fmt(c.eps) << ',' << fmt(s.t) << ',' << fmt(s.weak_distance) << ',' << fmt(s.norm) << ','
          << fmt(s.energy) << ',' << fmt(s.boundary_mass) << '\n';
}

void write_rates_csv(const fs::path& file, const SweepResult& r) {
  auto out = open_out(file);
  out << "t,ok,slope,intercept,residual,reason\n";
  for (const auto& f : r.rates)
    out << fmt(f.t) << ',' << (f.ok ? 1 : 0) << ',' << fmt(f.slope) << ',' << fmt(f.intercept) << ','
        << fmt(f.residual) << ',' << csv_field(f.reason) << '\n';
}

void save_report(const fs::path& dir, const std::string& stem, const EstimateReport& r) {
  {
    auto out = open_out(dir / (stem + ".json"));
    out << to_json(r).dump(1) << '\n';
  }
  auto mass = open_out(dir / (stem + "_mass.csv"));
  mass << "t,delta,mass\n";
  auto tail = open_out(dir / (stem + "_tail.csv"));
  tail << "t,radius,tail\n";
  for (const auto& s : r.samples) {
    for (std::size_t j = 0; j < s.mass_near.size(); ++j)
      mass << fmt(s.t) << ',' << fmt(r.deltas[j]) << ',' << fmt(s.mass_near[j]) << '\n';
    for (std::size_t j = 0; j < s.tail.size(); ++j)
      tail << fmt(s.t) << ',' << fmt(r.radii[j]) << ',' << fmt(s.tail[j]) << '\n';
  }
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& argv,
                    const std::string& config_hash, const json& timing) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  const json m = {{"schema_version", kSchemaVersion},
                  {"modules",
                   {{"potential", kVersion}, {"quantum", kVersion}, {"wigner", kVersion},
                    {"classical", kVersion}, {"estimates", kVersion}, {"convergence", kVersion},
                    {"cli", kVersion}}},
                  {"argv", argv},
                  {"config_hash", config_hash},
                  {"created", stamp},
                  {"timing", timing}};
  auto out = open_out(dir / "manifest.json");
  out << m.dump(1) << '\n';
}

void save_sweep(const fs::path& dir, const SweepRun& run) {
  const auto& r = run.result;
  save_results(dir, r);
  write_pairings_csv(dir / "pairings.csv", r);
  write_distances_csv(dir / "distances.csv", r);
  write_rates_csv(dir / "rates.csv", r);
  for (std::size_t i = 0; i < run.reports.size(); ++i)
    if (run.reports[i]) {
      const fs::path rel = r.cells[i].estimates_file;
      save_report(dir / rel.parent_path(), rel.stem().string(), *run.reports[i]);
    }
}

void verify_config(const SweepResult& r, const ExperimentConfig& cfg) {
  const auto h = cfg.hash();
  if (r.config_hash != h)
    throw Error(ErrorKind::kConfigInvalid,
                "results were produced by config " + r.config_hash + ", this config hashes to " + h);
}

}  // namespace qcl
