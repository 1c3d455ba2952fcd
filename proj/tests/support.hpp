#pragma once

#include <cmath>
#include <random>

#include "qcl/quantum.hpp"
#include "qcl/wigner.hpp"

namespace qcl::testing {

// Normalized superposition of a few Gaussian packets with random centers,
// widths, momenta and complex weights, kept away from the box edge.
inline WaveFunction random_mixture(const Grid& grid, double eps, std::mt19937_64& rng,
                                   int components = 3, double p_max = 1.0,
                                   double center_fraction = 0.15) {
  const int d = grid.dim();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.8, 1.4);
  WaveFunction wf{grid, eps, 0.0, std::vector<cplx>(grid.size(), 0.0)};
  std::vector<double> x(d);
  for (int c = 0; c < components; ++c) {
    std::vector<double> x0(d), p0(d), s(d);
    for (int i = 0; i < d; ++i) {
      x0[i] = grid.center(i) + center_fraction * grid.extent[i] * unit(rng);
      p0[i] = p_max * unit(rng);
      s[i] = std::sqrt(eps) * width(rng);
    }
    const cplx weight = std::polar(0.5 + 0.5 * std::abs(unit(rng)), M_PI * unit(rng));
    for (std::size_t n = 0; n < wf.values.size(); ++n) {
      grid.position(n, x);
      double e = 0.0, ph = 0.0;
      for (int i = 0; i < d; ++i) {
        e += std::pow((x[i] - x0[i]) / s[i], 2);
        ph += p0[i] * x[i] / eps;
      }
      wf.values[n] += weight * std::exp(-0.5 * e) * std::polar(1.0, ph);
    }
  }
  const double nrm = norm(wf);
  for (auto& v : wf.values) v /= nrm;
  return wf;
}

inline TestFunction random_probe(int d, std::mt19937_64& rng, double x_range = 1.5,
                                 double p_range = 1.0, double min_width = 0.3) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> width(min_width, min_width + 0.7);
  TestFunction phi;
  phi.id = "random";
  for (int i = 0; i < d; ++i) {
    phi.x0.push_back(x_range * unit(rng));
    phi.p0.push_back(p_range * unit(rng));
    phi.sx.push_back(width(rng));
    phi.sp.push_back(width(rng));
  }
  phi.amplitude = 2.0 * unit(rng);
  return phi;
}

// Two coherent packets at +-x_sep with opposite momenta: a cat state.
inline WaveFunction cat_state(const Grid& grid, double eps, double x_sep) {
  PacketSpec a, b;
  a.x0 = {-x_sep};
  a.p0 = {0.0};
  b.x0 = {x_sep};
  b.p0 = {0.0};
  auto wa = make_packet(grid, eps, a);
  auto wb = make_packet(grid, eps, b);
  for (std::size_t i = 0; i < wa.values.size(); ++i) wa.values[i] += wb.values[i];
  const double nrm = norm(wa);
  for (auto& v : wa.values) v /= nrm;
  return wa;
}

}  // namespace qcl::testing
