#include "qcl/classical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "qcl/error.hpp"

namespace qcl {

double Ensemble::total_weight() const {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

double Ensemble::aborted_weight() const {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (aborted[i]) s += w[i];
  return s;
}

void Ensemble::add(std::span<const double> xv, std::span<const double> pv, double weight) {
  if (static_cast<int>(xv.size()) != dim || static_cast<int>(pv.size()) != dim)
    throw Error(ErrorKind::kInvalidArgument, "particle dimension does not match ensemble");
  if (!(weight >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "particle weight must be >= 0");
  x.insert(x.end(), xv.begin(), xv.end());
  p.insert(p.end(), pv.begin(), pv.end());
  w.push_back(weight);
  aborted.push_back(0);
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1 || n > 100) throw Error(ErrorKind::kInvalidArgument, "Gauss-Hermite order must be in [1, 100]");
  const auto un = static_cast<unsigned>(n);
  auto h = [&](double t) { return std::hermite(un, t); };
  // Roots of the physicists' H_n lie inside |t| < sqrt(2n + 1); bracket them
  // by a fine scan, then polish with Newton (H_n' = 2n H_{n-1}).
  std::vector<double> roots;
  const double edge = std::sqrt(2.0 * n + 1.0) + 0.5;
  const int scan = 400 * n;
  // The scan grid is shifted off the origin so a root never lands on a node.
  const double shift = 0.3819660112501051 * 2.0 * edge / scan;
  double a = -edge + shift, fa = h(a);
  for (int k = 1; k <= scan; ++k) {
    const double b = -edge + shift + 2.0 * edge * k / scan;
    const double fb = h(b);
    if ((fa < 0.0) != (fb < 0.0)) {
      double lo = a, hi = b, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = h(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      double t = 0.5 * (lo + hi);
      for (int it = 0; it < 3; ++it) {
        const double d = 2.0 * n * std::hermite(un - 1, t);
        if (d != 0.0) t -= h(t) / d;
      }
      roots.push_back(t);
    }
    a = b;
    fa = fb;
  }
  if (static_cast<int>(roots.size()) != n)
    throw Error(ErrorKind::kInvalidArgument, "Gauss-Hermite root search failed");
  nodes.resize(un);
  weights.resize(un);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = roots[i];
    const double hm = n > 1 ? std::hermite(un - 1, t) : 1.0;
    // physicists' weight 2^{n-1} n! sqrt(pi) / (n^2 H_{n-1}^2), divided by sqrt(pi)
    const double logw = (n - 1) * std::log(2.0) + std::lgamma(n + 1.0) - 2.0 * std::log(double(n)) -
                        2.0 * std::log(std::abs(hm));
    nodes[i] = std::sqrt(2.0) * t;
    weights[i] = std::exp(logw);
    total += weights[i];
  }
  for (auto& v : weights) v /= total;
}

namespace {

// Lower-triangular factor of the 2x2 covariance [[xx, xp], [xp, pp]].
struct AxisFactor {
  double a, b, c;  // x = a z1, p = b z1 + c z2
};

AxisFactor factor(double xx, double xp, double pp) {
  const double a = std::sqrt(xx);
  const double b = xp / a;
  const double c = std::sqrt(std::max(pp - b * b, 0.0));
  return {a, b, c};
}

}  // namespace

Ensemble sample_initial(const PacketSpec& spec, SamplingMode mode, double eps, int n,
                        std::uint64_t seed) {
  const int d = static_cast<int>(spec.x0.size());
  spec.validate(d);
  Ensemble ens;
  ens.dim = d;
  if (mode == SamplingMode::kDeltaLimit) {
    ens.add(spec.x0, spec.p0, 1.0);
    return ens;
  }
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "sampling needs eps > 0");
  if (n < 1) throw Error(ErrorKind::kInvalidArgument, "sample count must be >= 1");

  std::vector<AxisFactor> f(d);
  for (int i = 0; i < d; ++i) {
    const auto c = packet_wigner_covariance(spec, eps, i);
    if (mode == SamplingMode::kHusimiAtEps)
      f[i] = factor(c.xx + 0.5 * eps, c.xp, c.pp + 0.5 * eps);
    else
      f[i] = factor(c.xx, c.xp, c.pp);
  }
  std::vector<double> xv(d), pv(d);

  if (mode == SamplingMode::kHusimiAtEps) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double wt = 1.0 / n;
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < d; ++i) {
        const double z1 = normal(rng), z2 = normal(rng);
        xv[i] = spec.x0[i] + f[i].a * z1;
        pv[i] = spec.p0[i] + f[i].b * z1 + f[i].c * z2;
      }
      ens.add(xv, pv, wt);
    }
    return ens;
  }

  // Tensor product over 2d phase-space axes of n Gauss-Hermite nodes.
  std::vector<double> z, gw;
  gauss_hermite(n, z, gw);
  const int axes = 2 * d;
  std::size_t total = 1;
  for (int k = 0; k < axes; ++k) {
    total *= static_cast<std::size_t>(n);
    if (total > 50'000'000)
      throw Error(ErrorKind::kInvalidArgument, "Wigner quadrature ensemble too large");
  }
  std::vector<int> idx(axes, 0);
  for (std::size_t m = 0; m < total; ++m) {
    double wt = 1.0;
    for (int i = 0; i < d; ++i) {
      const double z1 = z[idx[2 * i]], z2 = z[idx[2 * i + 1]];
      wt *= gw[idx[2 * i]] * gw[idx[2 * i + 1]];
      xv[i] = spec.x0[i] + f[i].a * z1;
      pv[i] = spec.p0[i] + f[i].b * z1 + f[i].c * z2;
    }
    ens.add(xv, pv, wt);
    for (int k = axes - 1; k >= 0; --k) {
      if (++idx[k] < n) break;
      idx[k] = 0;
    }
  }
  return ens;
}

namespace {

struct Integrator {
  const PotentialSpec& spec;
  const StepOptions& opt;
  double c_max;

  // Largest substep allowed at (x, p).
  double limit(std::span<const double> x, std::span<const double> p) const {
    const double r = dist_to_singular(spec, x);
    if (!std::isfinite(r)) return kInf;
    double pn = 0.0;
    for (double v : p) pn += v * v;
    pn = std::sqrt(pn);
    double h = kInf;
    if (pn > 0.0) h = std::min(h, opt.eta * r / pn);
    if (c_max > 0.0) h = std::min(h, opt.eta * std::sqrt(r * r * r / c_max));
    return h;
  }

  // Advances particle i by nsteps steps of dt. Returns false on a singular approach.
  bool advance(double* x, double* p, int d, double dt, long nsteps, std::vector<double>& g) const {
    std::span<const double> xs(x, d), ps(p, d);
    eval_grad_u(spec, xs, g);
    const double sign = dt < 0.0 ? -1.0 : 1.0;
    for (long s = 0; s < nsteps; ++s) {
      double remaining = std::abs(dt);
      while (remaining > 0.0) {
        double h = std::min(remaining, limit(xs, ps));
        if (h >= remaining * (1.0 - 1e-12)) h = remaining;
        const double hs = sign * h;
        for (int i = 0; i < d; ++i) p[i] -= 0.5 * hs * g[i];
        for (int i = 0; i < d; ++i) x[i] += hs * p[i];
        if (dist_to_singular(spec, xs) <= spec.guard_radius()) return false;
        eval_grad_u(spec, xs, g);
        for (int i = 0; i < d; ++i) p[i] -= 0.5 * hs * g[i];
        remaining -= h;
      }
    }
    return true;
  }
};

void advance_all(Ensemble& ens, const PotentialSpec& spec, double dt, long nsteps,
                 const StepOptions& opt) {
  if (ens.dim != spec.dim())
    throw Error(ErrorKind::kInvalidArgument, "ensemble dimension does not match potential");
  if (!(opt.eta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "eta must be > 0");
  const Integrator integ{spec, opt, spec.max_coupling()};
  const int d = ens.dim;
  const std::size_t n = ens.size();
  std::vector<char> hit(n, 0);

  auto work = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> g(d);
    for (std::size_t i = lo; i < hi; ++i) {
      if (ens.aborted[i]) continue;
      bool ok;
      try {
        ok = integ.advance(ens.x.data() + i * d, ens.p.data() + i * d, d, dt, nsteps, g);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kSingularPoint) throw;
        ok = false;
      }
      if (!ok) hit[i] = 1;
    }
  };

  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(n / 64)));
  if (threads <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(n * t / threads, n * (t + 1) / threads);
        } catch (...) {
          errs[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }

  ens.time += dt * static_cast<double>(nsteps);
  for (std::size_t i = 0; i < n; ++i) {
    if (!hit[i]) continue;
    if (opt.policy == ApproachPolicy::kThrow)
      throw Error(ErrorKind::kSingularApproach,
                  "particle " + std::to_string(i) + " entered the guard radius of S");
    ens.aborted[i] = 1;
  }
}

}  // namespace

void step(Ensemble& ens, const PotentialSpec& spec, double dt, const StepOptions& opt) {
  advance_all(ens, spec, dt, 1, opt);
}

Ensemble push_forward(const Ensemble& ens, const PotentialSpec& spec, double T, double dt,
                      const StepOptions& opt) {
  Ensemble out = ens;
  if (T == 0.0) return out;
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dt must be > 0");
  const long nsteps = std::max(1L, static_cast<long>(std::ceil(std::abs(T) / dt - 1e-9)));
  const double start = out.time;
  advance_all(out, spec, T / static_cast<double>(nsteps), nsteps, opt);
  out.time = start + T;
  return out;
}

std::vector<Ensemble> trajectory(const Ensemble& ens, const PotentialSpec& spec,
                                 const std::vector<double>& times, double dt,
                                 const StepOptions& opt) {
  std::vector<Ensemble> out;
  out.reserve(times.size());
  Ensemble cur = ens;
  for (double t : times) {
    if (t < cur.time - 1e-12)
      throw Error(ErrorKind::kInvalidArgument, "snapshot times must be increasing");
    cur = push_forward(cur, spec, t - cur.time, dt, opt);
    out.push_back(cur);
  }
  return out;
}

double particle_energy(const Ensemble& ens, const PotentialSpec& spec, std::size_t i) {
  double k = 0.0;
  for (double v : ens.pi(i)) k += v * v;
  return 0.5 * k + eval_u(spec, ens.xi(i));
}

double measure_pair(const Ensemble& ens, const TestFunction& phi) {
  if (phi.dim() != ens.dim)
    throw Error(ErrorKind::kInvalidArgument, "probe dimension does not match ensemble");
  double s = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i)
    if (!ens.aborted[i]) s += ens.w[i] * phi.value(ens.xi(i), ens.pi(i));
  return s;
}

double liouville_residual(const std::vector<Ensemble>& snapshots, const PotentialSpec& spec,
                          const TestFunction& phi) {
  if (snapshots.size() < 2)
    throw Error(ErrorKind::kInvalidArgument, "Liouville residual needs at least two snapshots");
  if (phi.amplitude == 0.0) return 0.0;
  phi.validate();
  if (outside_theorem_scope(phi, spec))
    throw Error(ErrorKind::kSupportViolation, "probe " + phi.id + " reaches a point where U is not C^1");
  const double ta = snapshots.front().time, tb = snapshots.back().time;
  if (phi.window && (phi.window->t0 < ta - 1e-12 || phi.window->t1 > tb + 1e-12))
    throw Error(ErrorKind::kSupportViolation,
                "time window of probe " + phi.id + " leaves the snapshot range");

  const int d = phi.dim();
  std::vector<double> gx(d), gp(d), gu(d);
  std::vector<double> f(snapshots.size(), 0.0);
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& e = snapshots[k];
    if (e.dim != d) throw Error(ErrorKind::kInvalidArgument, "probe dimension does not match ensemble");
    const double th = phi.time_profile(e.time), dth = phi.time_profile_derivative(e.time);
    if (th == 0.0 && dth == 0.0) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e.aborted[i]) continue;
      const auto xi = e.xi(i), pi = e.pi(i);
      const double v = phi.value(xi, pi);
      if (v == 0.0) continue;
      phi.gradient(xi, pi, gx, gp);
      eval_grad_u(spec, xi, gu);
      double transport = 0.0;
      for (int j = 0; j < d; ++j) transport += pi[j] * gx[j] - gu[j] * gp[j];
      s += e.w[i] * (dth * v + th * transport);
    }
    f[k] = s;
  }
  double integral = 0.0;
  for (std::size_t k = 1; k < snapshots.size(); ++k) {
    const double h = snapshots[k].time - snapshots[k - 1].time;
    if (!(h > 0.0)) throw Error(ErrorKind::kInvalidArgument, "snapshot times must increase");
    integral += 0.5 * h * (f[k] + f[k - 1]);
  }
  return std::abs(integral);
}

void write_ensemble_csv(const std::filesystem::path& path, const std::vector<Ensemble>& snapshots) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot open " + path.string());
  const int d = snapshots.empty() ? 1 : snapshots.front().dim;
  out << "t,id";
  for (int i = 0; i < d; ++i) out << ",x" << i;
  for (int i = 0; i < d; ++i) out << ",p" << i;
  out << ",w,aborted\n";
  out.precision(17);
  for (const auto& e : snapshots) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      out << e.time << ',' << i;
      for (double v : e.xi(i)) out << ',' << v;
      for (double v : e.pi(i)) out << ',' << v;
      out << ',' << e.w[i] << ',' << int(e.aborted[i]) << '\n';
    }
  }
}

}  // namespace qcl
