#include "qcl/convergence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "qcl/error.hpp"

namespace qcl {

namespace {

StepOptions classical_options(const ExperimentConfig& cfg) {
  StepOptions opt;
  opt.eta = cfg.classical.eta;
  opt.policy = ApproachPolicy::kRecord;
  return opt;
}

std::string eps_tag(double eps) {
  std::ostringstream os;
  os << "eps" << eps;
  return os.str();
}

}  // namespace

void delta_path(const ExperimentConfig& cfg, const std::vector<double>& times,
                std::vector<std::vector<double>>& xs, std::vector<std::vector<double>>& ps) {
  const auto start = sample_initial(cfg.packet, SamplingMode::kDeltaLimit, 1.0, 1, 0);
  const auto traj = trajectory(start, cfg.potential, times, cfg.classical.dt, classical_options(cfg));
  xs.clear();
  ps.clear();
  for (const auto& e : traj) {
    xs.push_back(e.x);
    ps.push_back(e.p);
  }
}

double reachable_momentum(const ExperimentConfig& cfg, double eps) {
  std::vector<double> times;
  const int n = 200;
  for (int k = 0; k <= n; ++k) times.push_back(cfg.final_time * k / n);
  std::vector<std::vector<double>> xs, ps;
  delta_path(cfg, times, xs, ps);
  double pm = 0.0, sp = 0.0;
  for (const auto& p : ps)
    for (double v : p) pm = std::max(pm, std::abs(v));
  for (int i = 0; i < cfg.dim(); ++i) sp = std::max(sp, packet_momentum_spread(cfg.packet, eps, i));
  return pm + 3.0 * sp;
}

CellPlan plan_cell(const ExperimentConfig& cfg, double eps) {
  CellPlan plan;
  plan.eps = eps;
  plan.p_max = cfg.grid.p_max.value_or(reachable_momentum(cfg, eps));
  plan.grid = cfg.grid.grid_for(cfg.dim(), eps, plan.p_max);
  const double dt_max = cfg.dt_coefficient * eps;
  double prev = 0.0;
  for (double t : cfg.snapshots) {
    const double span = t - prev;
    const long n = span > 0.0 ? static_cast<long>(std::ceil(span / dt_max - 1e-9)) : 0;
    plan.steps.push_back(n);
    if (n > 0) plan.dt = std::max(plan.dt, span / n);
    prev = t;
  }
  if (plan.dt == 0.0) plan.dt = dt_max;
  // state, three phase arrays, one FFT buffer, plus every stored snapshot
  plan.memory_bytes = plan.grid.size() * sizeof(cplx) * (5 + cfg.snapshots.size());
  return plan;
}

std::vector<CellPlan> plan_sweep(const ExperimentConfig& cfg) {
  std::vector<CellPlan> out;
  for (double e : cfg.eps) out.push_back(plan_cell(cfg, e));
  return out;
}

std::string describe_plan(const CellPlan& plan) {
  std::ostringstream os;
  os << "eps=" << plan.eps << " N=";
  for (std::size_t i = 0; i < plan.grid.points.size(); ++i) os << (i ? "x" : "") << plan.grid.points[i];
  long total = 0;
  for (long s : plan.steps) total += s;
  os << " h=" << plan.grid.h(0) << " p_max=" << plan.p_max << " dt=" << plan.dt << " steps=" << total
     << " memory=" << (plan.memory_bytes + (1 << 20) - 1) / (1 << 20) << "MiB";
  return os.str();
}

std::vector<Probe> build_dictionary(const ExperimentConfig& cfg) {
  const auto& rule = cfg.dictionary;
  const int d = cfg.dim();
  const double eps_max = cfg.eps.front();
  std::vector<double> sx = rule.sx, sp = rule.sp;
  for (int i = 0; i < d; ++i) {
    if (rule.sx.empty()) sx.push_back(packet_position_spread(cfg.packet, eps_max, i));
    if (rule.sp.empty()) sp.push_back(packet_momentum_spread(cfg.packet, eps_max, i));
  }

  TestDictionary dict;
  if (rule.lattice || rule.trajectory_count > 0) {
    const int n = std::max(rule.trajectory_count, 100);
    std::vector<double> times;
    for (int k = 0; k <= n; ++k) times.push_back(cfg.final_time * k / n);
    std::vector<std::vector<double>> xs, ps;
    delta_path(cfg, times, xs, ps);

    if (rule.lattice) {
      auto lr = *rule.lattice;
      // Bounding box of the classical path, padded by one probe width.
      std::vector<double> xlo(d, kInf), xhi(d, -kInf), plo(d, kInf), phi(d, -kInf);
      for (std::size_t k = 0; k < xs.size(); ++k)
        for (int i = 0; i < d; ++i) {
          xlo[i] = std::min(xlo[i], xs[k][i]);
          xhi[i] = std::max(xhi[i], xs[k][i]);
          plo[i] = std::min(plo[i], ps[k][i]);
          phi[i] = std::max(phi[i], ps[k][i]);
        }
      for (int i = 0; i < d; ++i) {
        if (lr.x_center.size() < std::size_t(d)) lr.x_center.push_back(0.5 * (xlo[i] + xhi[i]));
        if (lr.x_half.size() < std::size_t(d)) lr.x_half.push_back(0.5 * (xhi[i] - xlo[i]) + sx[i]);
        if (lr.p_center.size() < std::size_t(d)) lr.p_center.push_back(0.5 * (plo[i] + phi[i]));
        if (lr.p_half.size() < std::size_t(d)) lr.p_half.push_back(0.5 * (phi[i] - plo[i]) + sp[i]);
      }
      dict.append(TestDictionary::lattice(lr.x_center, lr.x_half, lr.p_center, lr.p_half, lr.counts, sx, sp));
    }
    if (rule.trajectory_count > 0) {
      std::vector<std::vector<double>> tx, tp;
      std::vector<double> tt;
      for (int k = 0; k < rule.trajectory_count; ++k) {
        const double t = rule.trajectory_count == 1 ? 0.0 : cfg.final_time * k / (rule.trajectory_count - 1);
        tt.push_back(t);
      }
      delta_path(cfg, tt, tx, tp);
      dict.append(TestDictionary::along(tx, tp, sx, sp, "traj"));
    }
  }
  if (!rule.probes.empty()) {
    TestDictionary extra;
    extra.rule = "explicit";
    extra.probes = rule.probes;
    dict.append(extra);
  }
  dict.validate();

  std::vector<Probe> out;
  for (auto& phi : dict.probes) {
    Probe p;
    p.a_norm = a_norm(phi);
    p.in_scope = !(rule.exclude_nonsmooth && outside_theorem_scope(phi, cfg.potential));
    p.phi = std::move(phi);
    out.push_back(std::move(p));
  }
  return out;
}

QuantumRun run_quantum(const ExperimentConfig& cfg, double eps,
                       const std::optional<std::filesystem::path>& field_dir) {
  QuantumRun run;
  run.plan = plan_cell(cfg, eps);
  const Grid& g = run.plan.grid;
  auto wf = make_packet(g, eps, cfg.packet);
  const auto phash = potential_hash(cfg.potential);
  if (field_dir) std::filesystem::create_directories(*field_dir);

  std::map<double, std::unique_ptr<Propagator>> steppers;
  double prev = 0.0;
  for (std::size_t k = 0; k < cfg.snapshots.size(); ++k) {
    const double t = cfg.snapshots[k];
    const long n = run.plan.steps[k];
    if (n > 0) {
      const double dt = (t - prev) / n;
      auto& p = steppers[dt];
      if (!p) p = std::make_unique<Propagator>(g, eps, cfg.potential, dt, cfg.dt_coefficient);
      p->advance(wf, n);
    }
    wf.time = t;
    prev = t;
    try {
      check_boundary(wf, cfg.boundary_threshold);
    } catch (const Error& e) {
      run.complete = false;
      run.abort_kind = std::string(to_string(e.kind()));
      run.abort_reason = e.what();
      break;
    }
    if (field_dir) {
      std::ostringstream stem;
      stem << eps_tag(eps) << "_snap" << k;
      write_field(*field_dir / stem.str(), wf, phash);
    }
    run.snapshots.push_back(wf);
  }
  return run;
}

Ensemble classical_initial(const ExperimentConfig& cfg, double eps) {
  const auto mode = cfg.classical.mode;
  return sample_initial(cfg.packet, mode, eps, mode == SamplingMode::kDeltaLimit ? 1 : cfg.classical.n,
                        cfg.classical.seed);
}

std::vector<Ensemble> run_classical(const ExperimentConfig& cfg, double eps) {
  return trajectory(classical_initial(cfg, eps), cfg.potential, cfg.snapshots, cfg.classical.dt,
                    classical_options(cfg));
}

double weak_distance(const std::vector<double>& quantum, const std::vector<double>& classical,
                     const std::vector<Probe>& dictionary) {
  if (quantum.size() != dictionary.size() || classical.size() != dictionary.size())
    throw Error(ErrorKind::kInvalidArgument, "pairings and dictionary differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < dictionary.size(); ++i)
    if (dictionary[i].in_scope)
      d = std::max(d, std::abs(quantum[i] - classical[i]) / dictionary[i].a_norm);
  return d;
}

RateFit rate_fit(const std::vector<double>& eps, const std::vector<double>& distances) {
  constexpr double kFloor = 1e-9;
  RateFit fit;
  if (eps.size() != distances.size())
    throw Error(ErrorKind::kInvalidArgument, "eps and distances differ in length");
  for (std::size_t i = 0; i < eps.size(); ++i)
    (distances[i] > kFloor ? fit.used_eps : fit.excluded_eps).push_back(eps[i]);
  if (!fit.excluded_eps.empty()) {
    std::ostringstream os;
    os << "distance at or below the noise floor 1e-9 for eps:";
    for (double e : fit.excluded_eps) os << ' ' << e;
    throw Error(ErrorKind::kDegenerateFit, os.str());
  }
  if (eps.size() < 3) throw Error(ErrorKind::kDegenerateFit, "need at least three eps values");
  const auto line = fit_loglog(eps, distances);
  fit.ok = true;
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.residual = line.residual;
  return fit;
}

namespace {

struct CellOutput {
  EpsCell cell;
  std::optional<EstimateReport> report;
};

CellOutput run_cell(const ExperimentConfig& cfg, double eps, const std::vector<Probe>& dict,
                    const std::vector<Ensemble>* shared_classical) {
  CellOutput out;
  EpsCell& cell = out.cell;
  cell.eps = eps;
  std::optional<std::filesystem::path> field_dir;
  if (cfg.write_fields) field_dir = cfg.output / "fields";
  try {
    const auto q = run_quantum(cfg, eps, field_dir);
    cell.points = q.plan.grid.points;
    cell.dt = q.plan.dt;
    cell.complete = q.complete;
    cell.abort_kind = q.abort_kind;
    cell.abort_reason = q.abort_reason;

    std::vector<Ensemble> own;
    if (!shared_classical) own = run_classical(cfg, eps);
    const auto& classical = shared_classical ? *shared_classical : own;
    cell.aborted_weight = classical.back().aborted_weight();
    if (cell.aborted_weight > 0.0 && cell.complete) {
      cell.complete = false;
      cell.abort_kind = "SingularApproach";
      cell.abort_reason = "classical weight " + std::to_string(cell.aborted_weight) +
                          " entered the guard radius of S";
    }

    for (std::size_t k = 0; k < q.snapshots.size(); ++k) {
      const auto& wf = q.snapshots[k];
      SnapshotCell s;
      s.t = wf.time;
      s.norm = norm(wf);
      s.energy = energy(wf, cfg.potential);
      s.boundary_mass = boundary_mass(wf);
      for (const auto& p : dict) {
        s.quantum.push_back(pair(wf, p.phi));
        s.classical.push_back(measure_pair(classical[k], p.phi));
        if (cfg.remainder) s.remainder.push_back(p.in_scope ? remainder_g(wf, cfg.potential, p.phi) : 0.0);
      }
      s.weak_distance = weak_distance(s.quantum, s.classical, dict);
      cell.snapshots.push_back(std::move(s));
    }

    if (!q.snapshots.empty()) {
      auto radii = cfg.radii;
      if (radii.empty()) {
        double half = kInf;
        for (double L : cfg.grid.extent) half = std::min(half, 0.5 * L);
        radii = {half / 3.0, half / 2.0, 2.0 * half / 3.0};
      }
      out.report = build_report(cfg.name + "-" + eps_tag(eps), q.snapshots, cfg.potential, cfg.deltas, radii);
      cell.estimates_file = "estimates/" + eps_tag(eps) + ".json";
      cell.estimates_pass = out.report->all_pass();
    }
  } catch (const Error& e) {
    cell.complete = false;
    cell.abort_kind = std::string(to_string(e.kind()));
    cell.abort_reason = e.what();
  }
  return out;
}

}  // namespace

SweepRun run_sweep(const ExperimentConfig& cfg, int threads) {
  require_sweepable(cfg);
  SweepRun run;
  SweepResult& res = run.result;
  res.name = cfg.name;
  res.config_hash = cfg.hash();
  res.config = cfg.source;
  res.times = cfg.snapshots;

  const auto dict = build_dictionary(cfg);
  for (const auto& p : dict) res.probes.push_back({p.phi.id, p.a_norm, p.in_scope, probe_to_json(p.phi)});

  std::optional<std::vector<Ensemble>> shared;
  if (cfg.classical.mode == SamplingMode::kDeltaLimit) shared = run_classical(cfg, cfg.eps.front());

  const std::size_t n = cfg.eps.size();
  std::vector<CellOutput> outputs(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++)
      outputs[i] = run_cell(cfg, cfg.eps[i], dict, shared ? &*shared : nullptr);
  };
  const int pool = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> ts;
    for (int t = 0; t < pool; ++t) ts.emplace_back(worker);
    for (auto& t : ts) t.join();
  }

  for (auto& o : outputs) {
    res.partial = res.partial || !o.cell.complete;
    res.cells.push_back(std::move(o.cell));
    run.reports.push_back(std::move(o.report));
  }

  for (std::size_t k = 0; k < res.times.size(); ++k) {
    std::vector<double> es, ds;
    for (const auto& c : res.cells)
      if (k < c.snapshots.size()) {
        es.push_back(c.eps);
        ds.push_back(c.snapshots[k].weak_distance);
      }
    RateFit fit;
    try {
      fit = rate_fit(es, ds);
    } catch (const Error& e) {
      fit = RateFit{};
      for (std::size_t i = 0; i < es.size(); ++i)
        (ds[i] > 1e-9 ? fit.used_eps : fit.excluded_eps).push_back(es[i]);
      fit.reason = e.what();
    }
    fit.t = res.times[k];
    res.rates.push_back(std::move(fit));
  }
  return run;
}

}  // namespace qcl
