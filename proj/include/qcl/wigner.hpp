#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcl/potential.hpp"
#include "qcl/quantum.hpp"

namespace qcl {

// Real phase-space samples on (x grid) x (centered uniform p grid).
// values[x_flat * p_size() + p_flat], both flat indices row-major.
struct PhaseSpaceField {
  Grid xgrid;
  std::vector<std::vector<double>> p;
  std::vector<double> dp;
  std::vector<double> values;
  double eps = 1.0;
  double time = 0.0;

  std::size_t p_size() const;
  double cell_volume() const;
  double mass() const;
};

// Smooth compactly supported temporal profile exp(1 - 1/(1 - s^2)) on [t0, t1].
struct TimeWindow {
  double t0 = 0.0;
  double t1 = 1.0;

  double value(double t) const;
  double derivative(double t) const;
};

// phi(x, p) = A prod_i exp(-(x_i - x0_i)^2/(2 sx_i^2)) exp(-(p_i - p0_i)^2/(2 sp_i^2)),
// optionally multiplied by a temporal window.
struct TestFunction {
  std::string id;
  std::vector<double> x0, p0, sx, sp;
  double amplitude = 1.0;
  std::optional<TimeWindow> window;

  int dim() const { return static_cast<int>(x0.size()); }
  void validate() const;
  double value(std::span<const double> x, std::span<const double> p) const;
  // Gradients of the spatial part.
  void gradient(std::span<const double> x, std::span<const double> p, std::span<double> gx,
                std::span<double> gp) const;
  double time_profile(double t) const { return window ? window->value(t) : 1.0; }
  double time_profile_derivative(double t) const { return window ? window->derivative(t) : 0.0; }
  // Radius in x beyond which the Gaussian is treated as vanishing (4 sigma).
  double support_radius() const;
  // Half-width in y of the quadrature window for F_p phi (tail below 1e-12).
  double y_window(int axis) const;
};

struct TestDictionary {
  std::vector<TestFunction> probes;
  std::string rule;

  // counts^d lattice of centers per x and per p axis, spanning center +- half_width.
  static TestDictionary lattice(std::span<const double> x_center, std::span<const double> x_half,
                                std::span<const double> p_center, std::span<const double> p_half,
                                int counts, std::span<const double> sx, std::span<const double> sp);
  // Probes centered at given phase-space points (e.g. along a classical trajectory).
  static TestDictionary along(const std::vector<std::vector<double>>& xs,
                              const std::vector<std::vector<double>>& ps, std::span<const double> sx,
                              std::span<const double> sp, const std::string& prefix);
  void append(const TestDictionary& other);
  void validate() const;
};

// ||phi||_A = |A| (2 pi)^d for every Gaussian in the family.
double a_norm(const TestFunction& phi);

// Discrete Wigner transform; DimensionTooHigh for d > 2.
PhaseSpaceField wigner_full(const WaveFunction& wf);
// Largest imaginary residue discarded by the last wigner_full call on this thread.
double last_wigner_imaginary_residue();

// Husimi transform: Gaussian smoothing of the Wigner field, variance eps/2 per axis.
PhaseSpaceField husimi(const WaveFunction& wf);
PhaseSpaceField husimi(const PhaseSpaceField& wigner);

std::vector<double> x_marginal(const PhaseSpaceField& field);
// p-marginal of a Wigner field binned onto the momentum grid p = eps k (spacing
// 2 pi eps / L); comparable to momentum_density values.
std::vector<double> p_marginal_binned(const PhaseSpaceField& field);

// sum W phi over the phase-space cells.
double pair_field(const PhaseSpaceField& field, const TestFunction& phi);

// <W, phi> through the bilinear form; QuadratureWindowExceedsBox if F_p phi does
// not decay inside the grid.
double pair(const WaveFunction& wf, const TestFunction& phi);
// (2 pi)^-d sum_x sum_y psi(x + eps y/2) conj(chi(x - eps y/2)) F_p phi(x, y).
cplx pair_bilinear(const WaveFunction& psi, std::span<const cplx> chi, const TestFunction& phi);
// Same with psi given as a raw field on wf's grid.
cplx pair_bilinear(const WaveFunction& wf, std::span<const cplx> psi, std::span<const cplx> chi,
                   const TestFunction& phi);

// <W, p . grad_x phi>
double pair_transport(const WaveFunction& wf, const TestFunction& phi);
// <f_eps, phi> = (2/eps) Im F(U psi, psi)[phi]
double source_pair(const WaveFunction& wf, const std::vector<double>& u, const TestFunction& phi);
double source_pair(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi);
// <W, grad U . grad_p phi>
double pair_force(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi);

// <g_eps, phi> = <f_eps, phi> + <W, grad U . grad_p phi>; SupportTouchesSingularSet if
// phi reaches a point where U is not C^1.
double remainder_g(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi);

// |d/dt <W, phi> - <W, p.grad_x phi> - <f, phi>| at the middle snapshot, central
// difference in time. Snapshots must be equally spaced.
double wigner_residual(const std::vector<WaveFunction>& snapshots, const PotentialSpec& spec,
                       const TestFunction& phi);

// True when phi's effective support reaches the singular set or a non-C^1 point.
bool outside_theorem_scope(const TestFunction& phi, const PotentialSpec& spec);

}  // namespace qcl
