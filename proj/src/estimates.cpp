#include "qcl/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qcl/error.hpp"

namespace qcl {

namespace {

double max_spacing(const Grid& g) {
  double h = 0.0;
  for (int i = 0; i < g.dim(); ++i) h = std::max(h, g.h(i));
  return h;
}

// Calls f(flat index, position) for every node; position buffer reused.
template <class F>
void for_each_node(const Grid& g, F&& f) {
  std::vector<double> x(g.dim());
  const std::size_t n = g.size();
  for (std::size_t k = 0; k < n; ++k) {
    g.position(k, x);
    f(k, std::span<const double>(x));
  }
}

bool on_coarse_grid(const Grid& g, std::size_t k, std::vector<int>& idx) {
  g.unflatten(k, idx);
  for (int v : idx)
    if (v % 2) return false;
  return true;
}

double smoothstep7(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double s4 = s * s * s * s;
  return s4 * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s);
}

}  // namespace

SingularL2 singular_l2(const WaveFunction& wf, const PotentialSpec& spec) {
  SingularL2 out;
  if (!spec.has_singular_part()) return out;
  const Grid& g = wf.grid;
  std::vector<int> idx(g.dim());
  double fine = 0.0, coarse = 0.0;
  for_each_node(g, [&](std::size_t k, std::span<const double> x) {
    const double us = eval_us(spec, x);
    const double v = us * us * std::norm(wf.values[k]);
    fine += v;
    if (on_coarse_grid(g, k, idx)) coarse += v;
  });
  out.value = fine * g.cell_volume();
  out.coarse = coarse * g.cell_volume() * std::pow(2.0, g.dim());
  out.relative_change = out.value > 0.0 ? std::abs(out.coarse - out.value) / out.value : 0.0;
  out.flagged = out.relative_change > 0.1;
  return out;
}

std::vector<double> mass_near_singular(const WaveFunction& wf, const PotentialSpec& spec,
                                       const std::vector<double>& deltas) {
  const double h = max_spacing(wf.grid);
  for (double d : deltas)
    if (!(d > 2.0 * h))
      throw Error(ErrorKind::kDeltaBelowResolution,
                  "delta " + std::to_string(d) + " <= 2h = " + std::to_string(2.0 * h));
  std::vector<double> mass(deltas.size(), 0.0);
  if (!spec.has_singular_part()) return mass;
  for_each_node(wf.grid, [&](std::size_t k, std::span<const double> x) {
    const double r = dist_to_singular(spec, x);
    const double rho = std::norm(wf.values[k]);
    for (std::size_t j = 0; j < deltas.size(); ++j)
      if (r < deltas[j]) mass[j] += rho;
  });
  for (auto& m : mass) m *= wf.grid.cell_volume();
  return mass;
}

double mass_near_singular(const WaveFunction& wf, const PotentialSpec& spec, double delta) {
  return mass_near_singular(wf, spec, std::vector<double>{delta})[0];
}

double mass_near_singular(const Ensemble& ens, const PotentialSpec& spec, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "delta must be > 0");
  double s = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i)
    if (dist_to_singular(spec, ens.xi(i)) < delta) s += ens.w[i];
  return s;
}

double grad_l1_bound(const WaveFunction& wf, const PotentialSpec& spec) {
  if (!spec.has_singular_part()) return 0.0;
  return majorant_constant(spec) * singular_l2(wf, spec).value;
}

double grad_l1_direct(const WaveFunction& wf, const PotentialSpec& spec) {
  if (!spec.has_singular_part()) return 0.0;
  std::vector<double> grad(wf.grid.dim());
  double s = 0.0;
  for_each_node(wf.grid, [&](std::size_t k, std::span<const double> x) {
    if (dist_to_singular(spec, x) <= spec.guard_radius()) return;
    eval_grad_us(spec, x, grad);
    double gn = 0.0;
    for (double v : grad) gn += v * v;
    s += std::sqrt(gn) * std::norm(wf.values[k]);
  });
  return s * wf.grid.cell_volume();
}

namespace cutoff {

double profile(double r) { return smoothstep7(2.0 * r - 1.0); }

double laplacian_sup(int dim) {
  // chi''(r) = 4 S''(s) and chi'(r)/r = 4 S'(s)/(1 + s) with s = 2r - 1; the
  // suprema are located by a dense scan and rounded up.
  double second = 0.0, radial = 0.0;
  const int n = 200000;
  for (int k = 0; k <= n; ++k) {
    const double s = static_cast<double>(k) / n;
    const double d1 = 140.0 * s * s * s * (1.0 - s) * (1.0 - s) * (1.0 - s);
    const double d2 = 420.0 * s * s * (1.0 - s) * (1.0 - s) * (1.0 - 2.0 * s);
    second = std::max(second, std::abs(4.0 * d2));
    radial = std::max(radial, 4.0 * d1 / (1.0 + s));
  }
  return (second + (dim - 1) * radial) * (1.0 + 1e-6);
}

}  // namespace cutoff

std::vector<double> tightness_profile(const WaveFunction& wf, const std::vector<double>& radii) {
  const Grid& g = wf.grid;
  double half = kInf;
  for (int i = 0; i < g.dim(); ++i) half = std::min(half, 0.5 * g.extent[i]);
  for (double r : radii)
    if (!(r > 0.0) || r > half * (1.0 + 1e-12))
      throw Error(ErrorKind::kInvalidArgument,
                  "tail radius " + std::to_string(r) + " outside (0, L/2]");
  std::vector<double> tail(radii.size(), 0.0);
  for_each_node(g, [&](std::size_t k, std::span<const double> x) {
    double r2 = 0.0;
    for (int i = 0; i < g.dim(); ++i) r2 += std::pow(x[i] - g.center(i), 2);
    const double r = std::sqrt(r2);
    const double rho = std::norm(wf.values[k]);
    for (std::size_t j = 0; j < radii.size(); ++j)
      if (r > radii[j]) tail[j] += rho;
  });
  for (auto& t : tail) t *= g.cell_volume();
  return tail;
}

TightnessResult tightness_check(const std::vector<WaveFunction>& snapshots,
                                const std::vector<double>& radii) {
  TightnessResult out;
  if (snapshots.empty()) return out;
  for (const auto& wf : snapshots)
    out.grad_sup = std::max(out.grad_sup, std::sqrt(2.0 * kinetic_energy(wf)));
  std::vector<double> halves;
  for (double r : radii) halves.push_back(0.5 * r);
  const auto initial = tightness_profile(snapshots.front(), halves);
  const double t0 = snapshots.front().time;
  const double eps = snapshots.front().eps;
  const double lap = cutoff::laplacian_sup(snapshots.front().grid.dim());
  for (const auto& wf : snapshots) {
    const auto tail = tightness_profile(wf, radii);
    const double dt = std::abs(wf.time - t0);
    for (std::size_t j = 0; j < radii.size(); ++j) {
      const double R = radii[j];
      TightnessRow row;
      row.t = wf.time;
      row.radius = R;
      row.tail = tail[j];
      row.bound = initial[j] + dt * (cutoff::kGradSup * out.grad_sup / R + eps * lap / (2.0 * R * R));
      // Roundoff allowance for the quadrature sums.
      row.pass = row.tail <= row.bound + 1e-12;
      out.pass = out.pass && row.pass;
      out.rows.push_back(row);
    }
  }
  return out;
}

double commutator_positivity(const WaveFunction& psi, const PotentialSpec& spec) {
  if (!spec.has_singular_part()) return 0.0;
  const auto lap = laplacian(psi.grid, psi.values);
  double s = 0.0;
  for_each_node(psi.grid, [&](std::size_t k, std::span<const double> x) {
    // Re conj(-Lap psi) U_s psi
    s += eval_us(spec, x) * std::real(std::conj(-lap[k]) * psi.values[k]);
  });
  return s * psi.grid.cell_volume();
}

double commutator_tolerance(const WaveFunction& psi, const PotentialSpec& spec) {
  const auto lap = laplacian(psi.grid, psi.values);
  double a = 0.0, b = 0.0;
  for_each_node(psi.grid, [&](std::size_t k, std::span<const double> x) {
    a += std::norm(lap[k]);
    b += std::pow(eval_us(spec, x), 2) * std::norm(psi.values[k]);
  });
  const double dv = psi.grid.cell_volume();
  return 1e-9 * std::sqrt(a * dv) * std::sqrt(b * dv);
}

double smooth_sup(const Grid& grid, const PotentialSpec& spec) {
  double m = 0.0;
  for_each_node(grid, [&](std::size_t, std::span<const double> x) {
    m = std::max(m, std::abs(eval_ub(spec, x)));
  });
  return m;
}

EstimateCheck kinetic_bound_check(const std::vector<WaveFunction>& snapshots,
                                  const PotentialSpec& spec) {
  EstimateCheck c;
  c.name = "kinetic_bound";
  if (snapshots.empty()) return c;
  c.threshold = energy(snapshots.front(), spec) + smooth_sup(snapshots.front().grid, spec) + 1e-6;
  for (const auto& wf : snapshots) c.value = std::max(c.value, kinetic_energy(wf));
  c.pass = c.value <= c.threshold;
  c.detail = "sup_t kinetic <= energy(0) + sup|U_b| + 1e-6";
  return c;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorKind::kDegenerateFit, "need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::kDegenerateFit, "abscissae coincide");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
  f.residual = std::sqrt(ss / n);
  f.slope_stderr = x.size() > 2 ? std::sqrt(ss / (n - 2.0) / sxx) : 0.0;
  return f;
}

LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw Error(ErrorKind::kDegenerateFit, "log-log fit needs positive data");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

bool EstimateReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.advisory && !c.pass) return false;
  return true;
}

const EstimateCheck* EstimateReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

EstimateReport build_report(const std::string& run_id, const std::vector<WaveFunction>& snapshots,
                            const PotentialSpec& spec, std::vector<double> deltas,
                            std::vector<double> radii) {
  if (snapshots.empty()) throw Error(ErrorKind::kInvalidArgument, "no snapshots to report on");
  for (std::size_t i = 1; i < snapshots.size(); ++i)
    if (!(snapshots[i].time > snapshots[i - 1].time))
      throw Error(ErrorKind::kInvalidArgument, "snapshot times must increase strictly");
  EstimateReport rep;
  rep.run_id = run_id;
  std::sort(deltas.begin(), deltas.end());
  std::sort(radii.begin(), radii.end());

  const Grid& g = snapshots.front().grid;
  const double h = max_spacing(g);
  std::vector<double> dropped;
  for (double d : deltas) (d > 2.0 * h ? rep.deltas : dropped).push_back(d);
  rep.radii = radii;
  const bool singular = spec.has_singular_part();

  for (const auto& wf : snapshots) {
    EstimateSample s;
    s.t = wf.time;
    s.norm = norm(wf);
    s.kinetic = kinetic_energy(wf);
    s.energy = energy(wf, spec);
    s.singular = singular_l2(wf, spec);
    s.grad_bound = singular ? majorant_constant(spec) * s.singular.value : 0.0;
    s.grad_direct = grad_l1_direct(wf, spec);
    s.mass_near = mass_near_singular(wf, spec, rep.deltas);
    s.tail = tightness_profile(wf, rep.radii);
    rep.samples.push_back(std::move(s));
  }

  // Mass ladder slopes and the closest-approach sample.
  double best = -1.0;
  for (std::size_t k = 0; k < rep.samples.size(); ++k) {
    const auto& m = rep.samples[k].mass_near;
    double slope = std::numeric_limits<double>::quiet_NaN();
    if (m.size() >= 2 && std::all_of(m.begin(), m.end(), [](double v) { return v > 0.0; }))
      slope = fit_loglog(rep.deltas, m).slope;
    rep.mass_slopes.push_back(slope);
    if (!m.empty() && m.front() > best) {
      best = m.front();
      rep.closest_sample = static_cast<int>(k);
    }
  }

  auto add = [&](EstimateCheck c) { rep.checks.push_back(std::move(c)); };

  {
    EstimateCheck c{"masses_in_range", true, 0.0, 1e-8, "all masses in [0, ||Psi||^2 + 1e-8]"};
    for (const auto& s : rep.samples) {
      const double top = s.norm * s.norm + 1e-8;
      for (double v : s.mass_near) c.pass = c.pass && v >= 0.0 && v <= top;
      for (double v : s.tail) c.pass = c.pass && v >= 0.0 && v <= top;
    }
    add(c);
  }
  {
    EstimateCheck c{"mass_monotone_in_delta", true, 0.0, 0.0, "nondecreasing in delta"};
    EstimateCheck d{"tail_monotone_in_radius", true, 0.0, 0.0, "nonincreasing in R"};
    for (const auto& s : rep.samples) {
      for (std::size_t j = 1; j < s.mass_near.size(); ++j)
        c.pass = c.pass && s.mass_near[j] >= s.mass_near[j - 1];
      for (std::size_t j = 1; j < s.tail.size(); ++j) d.pass = d.pass && s.tail[j] <= s.tail[j - 1];
    }
    add(c);
    add(d);
  }
  if (!rep.radii.empty()) {
    rep.tightness = tightness_check(snapshots, rep.radii);
    EstimateCheck c{"tightness", rep.tightness.pass, 0.0, 0.0, ""};
    double worst = -kInf;
    for (const auto& r : rep.tightness.rows) worst = std::max(worst, r.tail - r.bound);
    c.value = worst;
    c.detail = "max over (t, R) of tail - bound; K = " + std::to_string(rep.tightness.grad_sup);
    add(c);
  }
  add(kinetic_bound_check(snapshots, spec));
  {
    EstimateCheck c{"grad_l1_majorant", true, 0.0, 0.0, "direct int |grad U_s||Psi|^2 <= C0 ||U_s Psi||^2"};
    for (const auto& s : rep.samples) {
      c.value = std::max(c.value, s.grad_direct - s.grad_bound);
      c.pass = c.pass && s.grad_direct <= s.grad_bound * (1.0 + 1e-12);
    }
    add(c);
  }
  if (singular) {
    const auto& s0 = rep.samples.front();
    double sup = 0.0;
    std::vector<double> ts, ratio;
    bool flagged = false;
    for (const auto& s : rep.samples) {
      sup = std::max(sup, s.singular.value);
      ts.push_back(s.t);
      ratio.push_back(s0.singular.value > 0.0 ? s.singular.value / s0.singular.value : 0.0);
      flagged = flagged || s.singular.flagged;
    }
    // ||U_s Psi|| <= ||H Psi|| + ||U_b Psi|| by the commutator sign, and ||H Psi||
    // is conserved, so the constant is fixed by the initial state.
    const double c0 = h_norm(snapshots.front(), spec) + smooth_sup(g, spec);
    add({"singular_l2_bound", sup <= c0 * c0, sup, c0 * c0,
         "sup_t ||U_s Psi||^2 <= (||H Psi(0)|| + sup|U_b|)^2"});
    const double r = s0.singular.value > 0.0 ? sup / s0.singular.value : kInf;
    add({"singular_l2_ratio", r <= 10.0, r, 10.0, "sup_t ||U_s Psi||^2 / ||U_s Psi(0)||^2"});
    if (ts.size() >= 3) {
      const auto fit = fit_line(ts, ratio);
      const double noise = 2.0 * fit.slope_stderr;
      std::ostringstream os;
      os << "linear slope of the ratio " << fit.slope << " +- " << fit.slope_stderr;
      add({"singular_l2_trend", fit.slope <= noise, fit.slope, noise, os.str()});
    }
    add({"singular_l2_grid_converged", !flagged, 0.0, 0.1,
         "2x coarsened quadrature within 10% at every sample", true});
  }
  if (rep.closest_sample >= 0 && rep.deltas.size() >= 2) {
    const double slope = rep.mass_slopes[rep.closest_sample];
    std::ostringstream os;
    os << "log-log slope at t = " << rep.samples[rep.closest_sample].t;
    if (!dropped.empty()) {
      os << "; dropped deltas below 2h:";
      for (double d : dropped) os << ' ' << d;
    }
    if (std::isfinite(slope)) add({"no_concentration_slope", slope >= 1.5, slope, 1.5, os.str()});
  }
  return rep;
}

}  // namespace qcl
