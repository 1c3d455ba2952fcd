// qcl: command-line entry point.
//
// Exit codes: 0 success, 1 failed estimate checks, 2 config error,
// 3 runtime abort (outputs written so far are kept).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <thread>

#include "qcl/convergence.hpp"
#include "qcl/error.hpp"
#include "qcl/persist.hpp"

using namespace qcl;
namespace fs = std::filesystem;

namespace {

constexpr int kExitChecksFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  bool dry_run = false;
  bool fields = false;
  std::optional<double> eps;
  std::vector<std::string> argv;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ExperimentConfig load(const Options& o) {
  auto cfg = load_config(o.config);
  if (o.seed) override_seed(cfg, *o.seed);
  if (!o.out.empty()) cfg.output = o.out;
  if (o.fields) cfg.write_fields = true;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads", "must be >= 1");
    cfg.threads = *o.threads;
  } else if (!cfg.source.contains("threads")) {
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  }
  if (o.eps) {
    if (std::find(cfg.eps.begin(), cfg.eps.end(), *o.eps) == cfg.eps.end())
      throw ConfigError("--eps", "value is not in the config's eps list");
    cfg.eps = {*o.eps};
  }
  return cfg;
}

void print_plan(const ExperimentConfig& cfg) {
  std::cout << "plan " << cfg.name << " config " << cfg.hash() << " -> " << cfg.output.string() << '\n';
  for (const auto& p : plan_sweep(cfg)) std::cout << describe_plan(p) << '\n';
}

void manifest(const ExperimentConfig& cfg, const Options& o, const json& timing) {
  write_manifest(cfg.output, o.argv, cfg.hash(), timing);
}

std::string tag(double eps) {
  std::ostringstream os;
  os << "eps" << eps;
  return os.str();
}

int cmd_validate(const Options& o) {
  ExperimentConfig cfg;
  if (o.config.empty() || o.config == "-") {
    const std::string text{std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("<stdin>", std::string("invalid JSON: ") + e.what());
    }
    cfg = parse_config(j);
  } else {
    cfg = load_config(o.config);
  }
  std::cout << "ok " << cfg.name << " dim=" << cfg.dim() << " eps=" << cfg.eps.size()
            << " snapshots=" << cfg.snapshots.size() << " hash=" << cfg.hash() << '\n';
  return 0;
}

int cmd_run_quantum(const Options& o) {
  const auto cfg = load(o);
  if (o.dry_run) return print_plan(cfg), 0;
  Stopwatch sw;
  fs::create_directories(cfg.output);
  std::ofstream csv(cfg.output / "quantum.csv");
  csv.precision(17);
  csv << "eps,t,norm,energy,kinetic,boundary_mass\n";
  int code = 0;
  for (double eps : cfg.eps) {
    std::optional<fs::path> fields;
    if (cfg.write_fields) fields = cfg.output / "fields";
    const auto run = run_quantum(cfg, eps, fields);
    for (const auto& wf : run.snapshots)
      csv << eps << ',' << wf.time << ',' << norm(wf) << ',' << energy(wf, cfg.potential) << ','
          << kinetic_energy(wf) << ',' << boundary_mass(wf) << '\n';
    std::cout << describe_plan(run.plan) << (run.complete ? " complete" : " ABORTED: " + run.abort_reason)
              << '\n';
    if (!run.complete) code = kExitAbort;
  }
  manifest(cfg, o, {{"wall_seconds", sw.seconds()}});
  return code;
}

int cmd_run_classical(const Options& o) {
  const auto cfg = load(o);
  if (o.dry_run) {
    std::cout << "classical " << cfg.name << " mode n=" << cfg.classical.n << " dt=" << cfg.classical.dt
              << " snapshots=" << cfg.snapshots.size() << '\n';
    return 0;
  }
  Stopwatch sw;
  fs::create_directories(cfg.output);
  int code = 0;
  const bool shared = cfg.classical.mode == SamplingMode::kDeltaLimit;
  for (double eps : cfg.eps) {
    const auto traj = run_classical(cfg, eps);
    const auto file = cfg.output / (shared ? std::string("classical.csv") : "classical_" + tag(eps) + ".csv");
    write_ensemble_csv(file, traj);
    const double lost = traj.back().aborted_weight();
    std::cout << file.filename().string() << " particles=" << traj.back().size() << " aborted_weight=" << lost
              << '\n';
    if (lost > 0.0) code = kExitAbort;
    if (shared) break;
  }
  manifest(cfg, o, {{"wall_seconds", sw.seconds()}});
  return code;
}

int cmd_sweep(const Options& o) {
  const auto cfg = load(o);
  require_sweepable(cfg);
  if (o.dry_run) return print_plan(cfg), 0;
  Stopwatch sw;
  const auto run = run_sweep(cfg, cfg.threads);
  save_sweep(cfg.output, run);
  manifest(cfg, o, {{"wall_seconds", sw.seconds()}, {"threads", cfg.threads}});
  for (const auto& c : run.result.cells) {
    std::cout << tag(c.eps) << (c.complete ? "" : " ABORTED " + c.abort_kind + ": " + c.abort_reason);
    if (!c.snapshots.empty()) std::cout << " D(T)=" << c.snapshots.back().weak_distance;
    std::cout << " estimates=" << (c.estimates_pass ? "pass" : "FAIL") << '\n';
  }
  for (const auto& f : run.result.rates)
    if (f.ok) std::cout << "t=" << f.t << " slope=" << f.slope << '\n';
  return run.result.partial ? kExitAbort : 0;
}

int cmd_check_estimates(const Options& o) {
  const auto cfg = load(o);
  if (o.dry_run) return print_plan(cfg), 0;
  Stopwatch sw;
  int code = 0;
  for (double eps : cfg.eps) {
    const auto q = run_quantum(cfg, eps);
    if (!q.complete) code = kExitAbort;
    if (q.snapshots.empty()) continue;
    auto radii = cfg.radii;
    if (radii.empty()) {
      double half = kInf;
      for (double L : cfg.grid.extent) half = std::min(half, 0.5 * L);
      radii = {half / 3.0, half / 2.0, 2.0 * half / 3.0};
    }
    const auto rep = build_report(cfg.name + "-" + tag(eps), q.snapshots, cfg.potential, cfg.deltas, radii);
    save_report(cfg.output / "estimates", tag(eps), rep);
    for (const auto& c : rep.checks)
      std::cout << tag(eps) << ' ' << (c.pass ? "pass" : (c.advisory ? "note" : "FAIL")) << ' ' << c.name
                << " value=" << c.value << " threshold=" << c.threshold
                << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
    if (!rep.all_pass() && code == 0) code = kExitChecksFailed;
  }
  manifest(cfg, o, {{"wall_seconds", sw.seconds()}});
  return code;
}

void write_phase_field(const fs::path& file, const PhaseSpaceField& f) {
  std::ofstream out(file);
  out.precision(17);
  out << "x,p,value\n";
  std::vector<double> x(1);
  for (std::size_t i = 0; i < f.xgrid.size(); ++i) {
    f.xgrid.position(i, x);
    for (std::size_t k = 0; k < f.p_size(); ++k)
      out << x[0] << ',' << f.p[0][k] << ',' << f.values[i * f.p_size() + k] << '\n';
  }
}

int cmd_export_field(const Options& o) {
  const auto cfg = load(o);
  if (o.dry_run) return print_plan(cfg), 0;
  Stopwatch sw;
  int code = 0;
  const auto dir = cfg.output / "fields";
  for (double eps : cfg.eps) {
    const auto q = run_quantum(cfg, eps, dir);
    if (!q.complete) code = kExitAbort;
    // Phase-space fields are only exported in one dimension, where they stay small.
    if (cfg.dim() == 1)
      for (std::size_t k = 0; k < q.snapshots.size(); ++k) {
        const auto w = wigner_full(q.snapshots[k]);
        const std::string stem = tag(eps) + "_snap" + std::to_string(k);
        write_phase_field(dir / (stem + "_wigner.csv"), w);
        write_phase_field(dir / (stem + "_husimi.csv"), husimi(w));
      }
    std::cout << tag(eps) << " snapshots=" << q.snapshots.size() << " -> " << dir.string() << '\n';
  }
  manifest(cfg, o, {{"wall_seconds", sw.seconds()}});
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiclassical quantum/classical molecular dynamics laboratory"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Options o;
  for (int i = 0; i < argc; ++i) o.argv.emplace_back(argv[i]);

  auto add_common = [&](CLI::App* sub, bool dry_run) {
    sub->add_option("config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override every RNG seed");
    sub->add_option("--threads", o.threads, "worker threads (default: hardware concurrency)");
    sub->add_option("--out", o.out, "output directory (default from config)");
    sub->add_option("--eps", o.eps, "run only this eps from the config's list");
    sub->add_flag("--fields", o.fields, "also write raw field snapshots");
    if (dry_run) sub->add_flag("--dry-run", o.dry_run, "print the resolved plan and exit without writing");
  };

  auto* validate = app.add_subcommand("validate-config", "parse and validate a config (stdin if no path)");
  validate->add_option("config", o.config, "config path, or - for stdin");
  auto* rq = app.add_subcommand("run-quantum", "propagate the packet for every eps");
  add_common(rq, true);
  auto* rc = app.add_subcommand("run-classical", "push the classical reference forward");
  add_common(rc, true);
  auto* sw = app.add_subcommand("sweep", "matched quantum/classical eps sweep with weak distances");
  add_common(sw, true);
  auto* ce = app.add_subcommand("check-estimates", "a priori estimate reports for every eps");
  add_common(ce, true);
  auto* ef = app.add_subcommand("export-field", "write raw fields (and 1D Wigner/Husimi CSVs)");
  add_common(ef, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(o);
    if (*rq) return cmd_run_quantum(o);
    if (*rc) return cmd_run_classical(o);
    if (*sw) return cmd_sweep(o);
    if (*ce) return cmd_check_estimates(o);
    if (*ef) return cmd_export_field(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitConfig;
}
