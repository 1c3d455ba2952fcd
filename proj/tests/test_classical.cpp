#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "qcl/classical.hpp"
#include "qcl/error.hpp"

using namespace qcl;

namespace {

PotentialSpec harmonic_1d(double k = 1.0) {
  return PotentialSpec(Layout::flat(1), surface::Harmonic{{k}});
}

Ensemble single(std::vector<double> x, std::vector<double> p) {
  Ensemble e;
  e.dim = static_cast<int>(x.size());
  e.add(x, p, 1.0);
  return e;
}

TestFunction probe_1d(double x0, double p0, double sx, double sp) {
  TestFunction phi;
  phi.id = "probe";
  phi.x0 = {x0};
  phi.p0 = {p0};
  phi.sx = {sx};
  phi.sp = {sp};
  return phi;
}

double shoelace(const Ensemble& e) {
  double a = 0.0;
  const std::size_t n = e.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    a += e.x[i] * e.p[j] - e.x[j] * e.p[i];
  }
  return 0.5 * std::abs(a);
}

}  // namespace

TEST_CASE("delta-limit sampling is one unit particle at the packet center") {
  PacketSpec s;
  s.x0 = {0.0};
  s.p0 = {1.0};
  const auto e = sample_initial(s, SamplingMode::kDeltaLimit, 0.1, 1000, 7);
  REQUIRE(e.size() == 1);
  CHECK(e.x[0] == 0.0);
  CHECK(e.p[0] == 1.0);
  CHECK(e.w[0] == 1.0);
}

TEST_CASE("Husimi cloud: law of large numbers, covariance, determinism") {
  PacketSpec s;
  s.x0 = {0.3};
  s.p0 = {-0.5};
  const double eps = 0.1;
  const int n = 10000;
  const auto e = sample_initial(s, SamplingMode::kHusimiAtEps, eps, n, 42);
  REQUIRE(e.size() == std::size_t(n));
  CHECK(std::abs(e.total_weight() - 1.0) <= 1e-12);

  const auto c = packet_wigner_covariance(s, eps, 0);
  const double vx = c.xx + eps / 2, vp = c.pp + eps / 2;
  double mx = 0, mp = 0;
  for (int i = 0; i < n; ++i) {
    mx += e.x[i] / n;
    mp += e.p[i] / n;
  }
  CHECK(std::abs(mx - 0.3) <= 3.0 * std::sqrt(vx / n));
  CHECK(std::abs(mp + 0.5) <= 3.0 * std::sqrt(vp / n));
  double sxx = 0, spp = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (e.x[i] - mx) * (e.x[i] - mx) / n;
    spp += (e.p[i] - mp) * (e.p[i] - mp) / n;
  }
  CHECK(sxx == doctest::Approx(vx).epsilon(0.05));
  CHECK(spp == doctest::Approx(vp).epsilon(0.05));

  const auto again = sample_initial(s, SamplingMode::kHusimiAtEps, eps, n, 42);
  CHECK(again.x == e.x);
  CHECK(again.p == e.p);
}

TEST_CASE("Gauss-Hermite rule matches the standard normal moments") {
  std::vector<double> z, w;
  gauss_hermite(3, z, w);
  CHECK(z[0] == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-13));
  CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(w[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
  CHECK(w[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));

  // E z^{2k} = (2k - 1)!! is integrated exactly for 2k <= 2n - 1.
  for (int n : {5, 12, 30}) {
    gauss_hermite(n, z, w);
    double dfact = 1.0;
    for (int k = 1; 2 * k <= 2 * n - 1; ++k) {
      dfact *= 2 * k - 1;
      double m = 0.0;
      for (int i = 0; i < n; ++i) m += w[i] * std::pow(z[i], 2 * k);
      CHECK(m == doctest::Approx(dfact).epsilon(1e-10));
    }
  }
}

TEST_CASE("Wigner quadrature reproduces the chirped packet covariance") {
  PacketSpec s;
  s.x0 = {0.2, -0.1};
  s.p0 = {1.0, 0.0};
  s.sigma = {1.0, 0.7};
  s.chirp = {-0.4, 0.3};
  const double eps = 0.05;
  const auto e = sample_initial(s, SamplingMode::kWignerQuadrature, eps, 6, 0);
  REQUIRE(e.size() == 6u * 6u * 6u * 6u);
  CHECK(std::abs(e.total_weight() - 1.0) <= 1e-12);
  for (int a = 0; a < 2; ++a) {
    const auto c = packet_wigner_covariance(s, eps, a);
    double mx = 0, mp = 0, xx = 0, xp = 0, pp = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      mx += e.w[i] * e.x[2 * i + a];
      mp += e.w[i] * e.p[2 * i + a];
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double dx = e.x[2 * i + a] - mx, dp = e.p[2 * i + a] - mp;
      xx += e.w[i] * dx * dx;
      xp += e.w[i] * dx * dp;
      pp += e.w[i] * dp * dp;
    }
    CHECK(mx == doctest::Approx(s.x0[a]).epsilon(1e-12));
    CHECK(mp == doctest::Approx(s.p0[a]).epsilon(1e-12));
    CHECK(xx == doctest::Approx(c.xx).epsilon(1e-11));
    CHECK(xp == doctest::Approx(c.xp).epsilon(1e-11));
    CHECK(pp == doctest::Approx(c.pp).epsilon(1e-11));
  }
}

TEST_CASE("harmonic quarter period is a rotation of phase space") {
  auto e = single({0.0}, {1.0});
  e = push_forward(e, harmonic_1d(), M_PI / 2, 1e-4);
  CHECK(std::abs(e.x[0] - 1.0) <= 1e-7);
  CHECK(std::abs(e.p[0]) <= 1e-7);
  CHECK(e.time == doctest::Approx(M_PI / 2));
}

TEST_CASE("free flight is exact to roundoff") {
  const PotentialSpec zero(Layout::flat(2), surface::Zero{});
  auto e = single({0.5, -1.0}, {0.3, 2.0});
  for (int k = 0; k < 1000; ++k) step(e, zero, 1e-3);
  CHECK(e.x[0] == doctest::Approx(0.5 + 0.3).epsilon(1e-13));
  CHECK(e.x[1] == doctest::Approx(-1.0 + 2.0).epsilon(1e-13));
  CHECK(e.p[0] == 0.3);
  CHECK(e.p[1] == 2.0);
}

TEST_CASE("head-on nuclear repulsion turns at r* = c/E and returns") {
  const double c = 1.0;
  const PotentialSpec spec(Layout::nuclear(2), surface::Zero{}, {{0, 1, c}});
  auto e = single({-1.5, 0, 0, 1.5, 0, 0}, {0.5, 0, 0, -0.5, 0, 0});
  const double E = particle_energy(e, spec, 0);
  CHECK(E == doctest::Approx(0.25 + c / 3.0));
  double rmin = kInf;
  for (int k = 0; k < 12000; ++k) {
    step(e, spec, 1e-3);
    rmin = std::min(rmin, dist_to_singular(spec, e.xi(0)));
    CHECK_MESSAGE(std::abs(particle_energy(e, spec, 0) - E) <= 1e-6 * E, "step ", k);
    if (std::abs(particle_energy(e, spec, 0) - E) > 1e-6 * E) break;
  }
  CHECK(std::abs(rmin - c / E) <= 1e-6 * (c / E));
  CHECK(dist_to_singular(spec, e.xi(0)) > 3.0);
  CHECK(e.p[0] < 0.0);
  CHECK(e.p[3] > 0.0);
}

TEST_CASE("push_forward is reversible and conserves weight") {
  const PotentialSpec smooth(Layout::flat(2), surface::Quartic{0.2});
  const PotentialSpec coulomb(Layout::relative(), surface::Harmonic{{0.5}}, {{0, 1, 0.8}});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto* spec : {&smooth, &coulomb}) {
    const int d = spec->dim();
    Ensemble e;
    e.dim = d;
    for (int k = 0; k < 50; ++k) {
      std::vector<double> x(d), p(d);
      for (int i = 0; i < d; ++i) {
        x[i] = 1.5 * u(rng);
        p[i] = u(rng);
      }
      e.add(x, p, 0.02);
    }
    const auto fwd = push_forward(e, *spec, 2.0, 1e-3);
    CHECK(fwd.total_weight() == e.total_weight());
    const auto back = push_forward(fwd, *spec, -2.0, 1e-3);
    double err = 0.0;
    for (std::size_t i = 0; i < e.x.size(); ++i)
      err = std::max({err, std::abs(back.x[i] - e.x[i]), std::abs(back.p[i] - e.p[i])});
    CHECK(err <= 1e-6);
    CHECK(back.time == doctest::Approx(0.0));
    CHECK(push_forward(e, *spec, 0.0, 1e-3).x == e.x);
  }
}

TEST_CASE("per-particle energy is conserved away from S") {
  const PotentialSpec spec(Layout::relative(), surface::Harmonic{{0.5}}, {{0, 1, 1.0}});
  PacketSpec s;
  s.x0 = {1.2, 0.0, 0.3};
  s.p0 = {-0.4, 0.6, 0.0};
  const auto e0 = sample_initial(s, SamplingMode::kHusimiAtEps, 0.05, 200, 9);
  const auto e1 = push_forward(e0, spec, 1.0, 1e-3);
  double worst = 0.0;
  for (std::size_t i = 0; i < e0.size(); ++i) {
    const double a = particle_energy(e0, spec, i), b = particle_energy(e1, spec, i);
    worst = std::max(worst, std::abs(b - a) / std::abs(a));
  }
  CHECK(worst <= 1e-6);
  CHECK(std::abs(e1.total_weight() - 1.0) <= 1e-12);
}

TEST_CASE("singular approach throws or is recorded") {
  const PotentialSpec spec(Layout::relative(), surface::Zero{}, {{0, 1, 1.0}});
  Ensemble e;
  e.dim = 3;
  e.add(std::vector<double>{1e-9, 0, 0}, std::vector<double>{0, 0, 0}, 0.25);
  e.add(std::vector<double>{2.0, 0, 0}, std::vector<double>{0, 0, 0}, 0.75);
  try {
    auto copy = e;
    step(copy, spec, 1e-3);
    FAIL("expected SingularApproach");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kSingularApproach);
  }
  StepOptions opt;
  opt.policy = ApproachPolicy::kRecord;
  step(e, spec, 1e-3, opt);
  CHECK(e.aborted[0]);
  CHECK_FALSE(e.aborted[1]);
  CHECK(e.aborted_weight() == 0.25);
  CHECK(e.total_weight() == 1.0);
}

TEST_CASE("symplectic area of a phase-space ring is conserved") {
  for (double quartic : {0.0, 0.3}) {
    PotentialSpec spec = quartic == 0.0 ? harmonic_1d()
                                        : PotentialSpec(Layout::flat(1), surface::Quartic{quartic});
    Ensemble ring;
    ring.dim = 1;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
      const double th = 2 * M_PI * k / n;
      ring.add(std::vector<double>{1.0 + 0.3 * std::cos(th)}, std::vector<double>{0.3 * std::sin(th)},
               1.0 / n);
    }
    const double a0 = shoelace(ring);
    const auto r1 = push_forward(ring, spec, 2 * M_PI, 1e-3);
    CHECK(std::abs(shoelace(r1) - a0) <= 1e-4 * a0);
  }
}

TEST_CASE("measure_pair examples") {
  const auto phi = probe_1d(0.2, -0.1, 0.7, 0.4);
  auto one = single({0.5}, {0.1});
  CHECK(measure_pair(one, phi) == phi.value(one.xi(0), one.pi(0)));

  PacketSpec s;
  s.x0 = {0.0};
  s.p0 = {0.0};
  const auto cloud = sample_initial(s, SamplingMode::kHusimiAtEps, 0.1, 10000, 5);
  auto wide = probe_1d(0.0, 0.0, 1e3, 1e3);
  wide.amplitude = 2.5;
  CHECK(measure_pair(cloud, wide) == doctest::Approx(2.5 * cloud.total_weight()).epsilon(1e-6));

  // Dense binning of the empirical density, then midpoint quadrature of phi.
  const int nb = 400;
  const double lo = -2.0, hi = 2.0, hb = (hi - lo) / nb;
  std::vector<double> mass(nb * nb, 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int a = static_cast<int>(std::floor((cloud.x[i] - lo) / hb));
    const int b = static_cast<int>(std::floor((cloud.p[i] - lo) / hb));
    REQUIRE(a >= 0);
    REQUIRE(a < nb);
    REQUIRE(b >= 0);
    REQUIRE(b < nb);
    mass[a * nb + b] += cloud.w[i];
  }
  double quad = 0.0;
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b) {
      if (mass[a * nb + b] == 0.0) continue;
      const std::vector<double> xc{lo + (a + 0.5) * hb}, pc{lo + (b + 0.5) * hb};
      quad += mass[a * nb + b] * phi.value(xc, pc);
    }
  CHECK(measure_pair(cloud, phi) == doctest::Approx(quad).epsilon(2e-3));
}

TEST_CASE("Liouville residual on exact characteristics") {
  const auto spec = harmonic_1d();
  auto e = single({1.0}, {0.0});
  std::vector<double> times;
  for (int k = 0; k <= 1000; ++k) times.push_back(1e-3 * k);
  const auto traj = trajectory(e, spec, times, 1e-3);
  auto phi = probe_1d(0.8, -0.4, 0.5, 0.5);
  phi.window = TimeWindow{0.1, 0.9};
  CHECK(liouville_residual(traj, spec, phi) <= 1e-4);

  auto zero = phi;
  zero.amplitude = 0.0;
  CHECK(liouville_residual(traj, spec, zero) == 0.0);

  // Without the window the integral is phi(end) - phi(start), far from zero.
  auto bare = phi;
  bare.window.reset();
  const double expected = phi.value(traj.back().xi(0), traj.back().pi(0)) -
                          phi.value(traj.front().xi(0), traj.front().pi(0));
  CHECK(liouville_residual(traj, spec, bare) == doctest::Approx(std::abs(expected)).epsilon(1e-4));
}

TEST_CASE("Liouville residual decays at second order under snapshot halving") {
  const PotentialSpec spec(Layout::flat(1), surface::Quartic{0.5});
  auto phi = probe_1d(0.5, 0.3, 0.4, 0.4);
  phi.window = TimeWindow{0.05, 0.95};
  Ensemble e;
  e.dim = 1;
  for (int k = 0; k < 5; ++k) e.add(std::vector<double>{0.2 * k}, std::vector<double>{0.8 - 0.3 * k}, 0.2);
  std::vector<double> res;
  for (double h : {0.02, 0.01, 0.005, 0.0025}) {
    std::vector<double> times;
    const int n = static_cast<int>(std::lround(1.0 / h));
    for (int k = 0; k <= n; ++k) times.push_back(k * h);
    res.push_back(liouville_residual(trajectory(e, spec, times, h), spec, phi));
  }
  MESSAGE("residuals " << res[0] << " " << res[1] << " " << res[2] << " " << res[3]);
  CHECK(res[0] / res[1] == doctest::Approx(4.0).epsilon(0.15));
  CHECK(res[1] / res[2] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("stationary particle gives a vanishing residual") {
  const PotentialSpec spec(Layout::flat(1), surface::Quartic{1.0});
  auto e = single({0.0}, {0.0});
  std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto traj = trajectory(e, spec, times, 1e-2);
  CHECK(liouville_residual(traj, spec, probe_1d(0.3, 0.2, 0.5, 0.5)) <= 1e-10);
}

TEST_CASE("Liouville residual rejects probes outside scope") {
  const PotentialSpec cone(Layout::flat(1), surface::CrossingCone{1.0, {}});
  auto e = single({2.0}, {0.0});
  const auto traj = trajectory(e, cone, {0.0, 0.5, 1.0}, 1e-2);
  auto near_apex = probe_1d(0.1, 0.0, 0.3, 0.3);
  CHECK_THROWS_AS(liouville_residual(traj, cone, near_apex), Error);
  try {
    liouville_residual(traj, cone, near_apex);
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kSupportViolation);
  }
  auto late = probe_1d(2.0, 0.0, 0.3, 0.3);
  late.window = TimeWindow{0.5, 1.5};
  try {
    liouville_residual(traj, cone, late);
    FAIL("expected SupportViolation");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kSupportViolation);
  }
}

TEST_CASE("ensemble CSV export") {
  const auto dir = std::filesystem::temp_directory_path() / "qcl_classical_csv";
  std::filesystem::create_directories(dir);
  auto e = single({0.1, 0.2}, {0.3, 0.4});
  const PotentialSpec zero(Layout::flat(2), surface::Zero{});
  const auto traj = trajectory(e, zero, {0.0, 1.0}, 0.5);
  write_ensemble_csv(dir / "ens.csv", traj);
  std::ifstream in(dir / "ens.csv");
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "t,id,x0,x1,p0,p1,w,aborted");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove_all(dir);
}
