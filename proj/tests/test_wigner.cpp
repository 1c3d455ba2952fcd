#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qcl/error.hpp"
#include "qcl/wigner.hpp"
#include "support.hpp"

using namespace qcl;
using qcl::testing::cat_state;
using qcl::testing::random_mixture;
using qcl::testing::random_probe;

namespace {

// Direct evaluation of the discrete Wigner sum, no FFT.
double wigner_direct(const WaveFunction& wf, int n, double p) {
  const int N = wf.grid.points[0];
  const double h = wf.grid.h(0);
  const double dy = 2.0 * h / wf.eps;
  cplx s = 0.0;
  for (int j = -N / 2; j < N / 2; ++j) {
    const int a = ((n + j) % N + N) % N;
    const int b = ((n - j) % N + N) % N;
    s += wf.values[a] * std::conj(wf.values[b]) * std::polar(1.0, -p * j * dy);
  }
  return (s * dy / (2.0 * M_PI)).real();
}

PacketSpec packet_1d(double x0, double p0) {
  PacketSpec s;
  s.x0 = {x0};
  s.p0 = {p0};
  return s;
}

// sum over the full field of an arbitrary phase-space function
template <class F>
double field_quadrature(const PhaseSpaceField& w, F&& f) {
  const std::size_t np = w.p_size();
  double s = 0.0;
  for (std::size_t n = 0; n < w.xgrid.size(); ++n) {
    const double x = w.xgrid.coord(0, static_cast<int>(n));
    for (std::size_t q = 0; q < np; ++q) s += w.values[n * np + q] * f(x, w.p[0][q]);
  }
  return s * w.cell_volume();
}

}  // namespace

TEST_CASE("wigner_full equals the direct sum") {
  std::mt19937_64 rng(1);
  auto g = Grid::cube(1, 8.0, 16);
  auto wf = random_mixture(g, 0.8, rng, 2, 0.2);
  auto w = wigner_full(wf);
  double err = 0.0;
  for (int n = 0; n < 16; ++n)
    for (int m = 0; m < 16; ++m) err = std::max(err, std::abs(w.values[n * 16 + m] - wigner_direct(wf, n, w.p[0][m])));
  CHECK(err <= 1e-12);
  CHECK(last_wigner_imaginary_residue() <= 1e-10);
}

TEST_CASE("Gaussian Wigner value at the origin") {
  auto g = Grid::cube(1, 20.0, 256);
  auto wf = make_packet(g, 1.0, packet_1d(0.0, 0.0));
  auto w = wigner_full(wf);
  // x = 0 is node 128, p = 0 is centered index 128
  CHECK(std::abs(w.values[128 * 256 + 128] - 1.0 / M_PI) <= 1e-4);
}

TEST_CASE("zero wavefunction gives a zero field") {
  auto g = Grid::cube(1, 8.0, 32);
  WaveFunction wf{g, 0.5, 0.0, std::vector<cplx>(32, 0.0)};
  for (double v : wigner_full(wf).values) CHECK(v == 0.0);
}

TEST_CASE("marginals") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    auto g = trial < 3 ? Grid::cube(1, 12.0, 256) : Grid::cube(2, 8.0, 64);
    const double eps = trial < 3 ? 0.1 : 0.3;
    auto wf = trial < 3 ? random_mixture(g, eps, rng, 3, 0.5) : random_mixture(g, eps, rng, 2, 0.3, 0.08);
    auto w = wigner_full(wf);
    auto xm = x_marginal(w);
    auto rho = position_density(wf);
    for (std::size_t i = 0; i < xm.size(); ++i) CHECK(std::abs(xm[i] - rho[i]) <= 1e-8);
    auto pm = p_marginal_binned(w);
    auto mom = momentum_density(wf);
    for (std::size_t i = 0; i < pm.size(); ++i) CHECK(std::abs(pm[i] - mom.values[i]) <= 1e-8);
    CHECK(std::abs(w.mass() - 1.0) <= 1e-8);
  }
}

TEST_CASE("2D Wigner is rejected above d = 2") {
  auto g = Grid::cube(3, 4.0, 8);
  WaveFunction wf{g, 0.5, 0.0, std::vector<cplx>(g.size(), 1.0)};
  try {
    (void)wigner_full(wf);
    FAIL("expected DimensionTooHigh");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimensionTooHigh);
  }
  CHECK_THROWS_AS((void)husimi(wf), Error);
}

TEST_CASE("a_norm examples") {
  TestFunction phi{"e", {0.0}, {0.0}, {1.0 / std::sqrt(2.0)}, {1.0 / std::sqrt(2.0)}, 1.0, {}};
  CHECK(a_norm(phi) == doctest::Approx(2.0 * M_PI).epsilon(1e-14));
  // numerical oracle: integrate sup_x |F_p phi| = sqrt(pi) e^{-y^2/4} over y
  double s = 0.0;
  const double dy = 1e-3;
  for (double y = -40.0; y <= 40.0; y += dy) s += std::sqrt(M_PI) * std::exp(-y * y / 4) * dy;
  CHECK(a_norm(phi) == doctest::Approx(s).epsilon(1e-9));
  phi.amplitude = 0.0;
  CHECK(a_norm(phi) == 0.0);
  phi.amplitude = -3.5;
  CHECK(a_norm(phi) == doctest::Approx(3.5 * 2.0 * M_PI));
}

TEST_CASE("pair agrees with the full-field quadrature") {
  std::mt19937_64 rng(3);
  auto g = Grid::cube(1, 12.0, 256);
  auto wf = random_mixture(g, 0.1, rng, 3, 0.6);
  auto w = wigner_full(wf);
  for (int k = 0; k < 50; ++k) {
    auto phi = random_probe(1, rng);
    CHECK(std::abs(pair(wf, phi) - pair_field(w, phi)) <= 1e-6);
  }
}

TEST_CASE("elementary bound and conjugate symmetry") {
  std::mt19937_64 rng(4);
  auto g = Grid::cube(2, 6.0, 64);
  for (int k = 0; k < 20; ++k) {
    auto psi = random_mixture(g, 0.4, rng, 2, 0.5);
    auto chi = random_mixture(g, 0.4, rng, 2, 0.5);
    auto phi = random_probe(2, rng, 1.5, 1.0, 0.8);
    CHECK(std::abs(pair(psi, phi)) <= a_norm(phi) / std::pow(2 * M_PI, 2) * (1 + 1e-12));
    const cplx ab = pair_bilinear(psi, chi.values, phi);
    const cplx ba = pair_bilinear(chi, psi.values, phi);
    CHECK(std::abs(ab - std::conj(ba)) <= 1e-12 * std::max(1.0, std::abs(ab)));
  }
}

TEST_CASE("concentrated packet pairs to the probe value") {
  auto g = Grid::cube(1, 8.0, 512);
  auto wf = make_packet(g, 0.025, packet_1d(0.5, 1.0));
  TestFunction phi{"wide", {0.5}, {1.0}, {1.0}, {1.0}, 1.0, {}};
  CHECK(std::abs(pair(wf, phi) - 1.0) <= 0.05);
}

TEST_CASE("quadrature window larger than the box") {
  auto g = Grid::cube(1, 8.0, 16);
  WaveFunction wf{g, 1.0, 0.0, std::vector<cplx>(16, 0.25)};
  TestFunction narrow{"n", {0.0}, {0.0}, {1.0}, {0.05}, 1.0, {}};
  try {
    (void)pair(wf, narrow);
    FAIL("expected QuadratureWindowExceedsBox");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kQuadratureWindowExceedsBox);
  }
}

TEST_CASE("Husimi transform") {
  auto g = Grid::cube(1, 12.0, 256);
  auto coherent = make_packet(g, 0.1, packet_1d(0.3, 0.5));
  auto q = husimi(coherent);
  CHECK(*std::min_element(q.values.begin(), q.values.end()) >= -1e-12);
  CHECK(std::abs(q.mass() - 1.0) <= 1e-8);

  auto cat = cat_state(g, 0.1, 1.5);
  auto w = wigner_full(cat);
  const double wmax = *std::max_element(w.values.begin(), w.values.end());
  const double wmin = *std::min_element(w.values.begin(), w.values.end());
  CHECK(wmin < -0.01 * wmax);
  auto qc = husimi(w);
  CHECK(*std::min_element(qc.values.begin(), qc.values.end()) >= -1e-12);
  CHECK(std::abs(qc.mass() - 1.0) <= 1e-8);
}

TEST_CASE("transport and force pairings match full-field quadrature") {
  std::mt19937_64 rng(5);
  auto g = Grid::cube(1, 12.0, 256);
  auto wf = random_mixture(g, 0.1, rng, 2, 0.5);
  auto w = wigner_full(wf);
  PotentialSpec quartic(Layout::flat(1), surface::Quartic{0.3});
  for (int k = 0; k < 10; ++k) {
    auto phi = random_probe(1, rng);
    const double tr = field_quadrature(w, [&](double x, double p) {
      double gx, gp;
      phi.gradient(std::span(&x, 1), std::span(&p, 1), std::span(&gx, 1), std::span(&gp, 1));
      return p * gx;
    });
    CHECK(std::abs(pair_transport(wf, phi) - tr) <= 1e-6);
    const double fo = field_quadrature(w, [&](double x, double p) {
      double gx, gp;
      phi.gradient(std::span(&x, 1), std::span(&p, 1), std::span(&gx, 1), std::span(&gp, 1));
      return 4 * 0.3 * x * x * x * gp;
    });
    CHECK(std::abs(pair_force(wf, quartic, phi) - fo) <= 1e-6);
  }
}

TEST_CASE("remainder vanishes for quadratic potentials") {
  std::mt19937_64 rng(6);
  PotentialSpec harm(Layout::flat(1), surface::Harmonic{{1.3}});
  for (double eps : {0.2, 0.1, 0.05}) {
    auto g = Grid::cube(1, 12.0, 512);
    auto wf = random_mixture(g, eps, rng, 2, 0.5);
    for (int k = 0; k < 5; ++k) CHECK(std::abs(remainder_g(wf, harm, random_probe(1, rng))) <= 1e-6);
  }
  TestFunction zero{"z", {0.0}, {0.0}, {1.0}, {1.0}, 0.0, {}};
  auto g = Grid::cube(1, 12.0, 256);
  CHECK(remainder_g(make_packet(g, 0.1, packet_1d(0, 0)), harm, zero) == 0.0);
}

TEST_CASE("quartic remainder shrinks with eps") {
  PotentialSpec quartic(Layout::flat(1), surface::Quartic{0.5});
  TestFunction phi{"q", {0.6}, {0.3}, {0.5}, {0.5}, 1.0, {}};
  auto g = Grid::cube(1, 12.0, 1024);
  const double g1 = std::abs(remainder_g(make_packet(g, 0.1, packet_1d(0.5, 0.5)), quartic, phi));
  const double g2 = std::abs(remainder_g(make_packet(g, 0.05, packet_1d(0.5, 0.5)), quartic, phi));
  MESSAGE("quartic remainder ratio " << g1 / g2);
  CHECK(g1 / g2 >= 2.0);
}

TEST_CASE("remainder refuses probes on the crossing apex") {
  PotentialSpec cone(Layout::flat(1), surface::CrossingCone{1.0, {}});
  auto g = Grid::cube(1, 12.0, 256);
  auto wf = make_packet(g, 0.1, packet_1d(1.0, 0.0));
  TestFunction near{"n", {0.5}, {0.0}, {0.3}, {0.5}, 1.0, {}};
  try {
    (void)remainder_g(wf, cone, near);
    FAIL("expected SupportTouchesSingularSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSupportTouchesSingularSet);
  }
  TestFunction far{"f", {2.5}, {0.0}, {0.3}, {0.5}, 1.0, {}};
  CHECK_NOTHROW((void)remainder_g(wf, cone, far));
}

TEST_CASE("Wigner equation residual") {
  auto g = Grid::cube(1, 12.0, 256);
  const double eps = 0.1;
  auto wf0 = make_packet(g, eps, packet_1d(-0.5, 0.8));
  TestFunction phi{"c", {-0.3}, {0.6}, {0.5}, {0.5}, 1.0, {}};

  auto snapshots = [&](const PotentialSpec& spec, double spacing) {
    std::vector<WaveFunction> s;
    const long steps = std::lround(spacing / 1e-4);
    Propagator prop(g, eps, spec, spacing / steps);
    auto wf = wf0;
    prop.advance(wf, std::lround(0.2 / (spacing / steps)));
    for (int k = 0; k < 3; ++k) {
      s.push_back(wf);
      prop.advance(wf, steps);
    }
    return s;
  };

  PotentialSpec zero(Layout::flat(1), surface::Zero{});
  CHECK(wigner_residual(snapshots(zero, 0.002), zero, phi) <= 1e-6);

  PotentialSpec harm(Layout::flat(1), surface::Harmonic{{1.0}});
  const double r1 = wigner_residual(snapshots(harm, 0.02), harm, phi);
  const double r2 = wigner_residual(snapshots(harm, 0.01), harm, phi);
  MESSAGE("harmonic residual " << r1 << " -> " << r2);
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.15));

  TestFunction away{"a", {4.0}, {-2.0}, {0.3}, {0.3}, 1.0, {}};
  CHECK(wigner_residual(snapshots(harm, 0.02), harm, away) <= 1e-8);
}

TEST_CASE("time window profile") {
  TimeWindow w{0.2, 0.8};
  CHECK(w.value(0.5) == doctest::Approx(1.0));
  CHECK(w.value(0.2) == 0.0);
  CHECK(w.value(0.9) == 0.0);
  for (double t : {0.3, 0.45, 0.7}) {
    const double fd = (w.value(t + 1e-6) - w.value(t - 1e-6)) / 2e-6;
    CHECK(w.derivative(t) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("dictionary construction") {
  std::vector<double> c{0.0}, hx{1.0}, pc{1.0}, hp{0.5}, s{0.4};
  auto dict = TestDictionary::lattice(c, hx, pc, hp, 3, s, s);
  CHECK(dict.probes.size() == 9);
  CHECK(dict.probes.front().x0[0] == doctest::Approx(-1.0));
  CHECK(dict.probes.back().p0[0] == doctest::Approx(1.5));
  CHECK_NOTHROW(dict.validate());
  TestDictionary empty;
  CHECK_THROWS_AS(empty.validate(), Error);
  std::vector<double> c2{0.0, 0.0}, h2{1.0, 1.0};
  CHECK(TestDictionary::lattice(c2, h2, c2, h2, 3, h2, h2).probes.size() == 81);
}
