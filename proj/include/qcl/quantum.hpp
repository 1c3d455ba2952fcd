#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qcl/grid.hpp"
#include "qcl/potential.hpp"

namespace qcl {

// State Psi_eps(., t) sampled on a periodic grid.
struct WaveFunction {
  Grid grid;
  double eps = 1.0;
  double time = 0.0;
  std::vector<cplx> values;
};

// Psi(x) = eps^{-alpha d/2} e^{i p0.x/eps} phi((x - x0)/eps^alpha) with
// phi(z) = prod_i (pi sigma_i^2)^{-1/4} exp(-z_i^2/(2 sigma_i^2) + i chirp_i z_i^2).
// sigma and chirp may hold one entry (broadcast) or one per axis; chirp < 0 focuses.
struct PacketSpec {
  std::vector<double> x0;
  std::vector<double> p0;
  double alpha = 0.5;
  std::vector<double> sigma{1.0};
  std::vector<double> chirp;

  void validate(int dim) const;
  double sigma_at(int axis) const;
  double chirp_at(int axis) const;
};

// Per-axis standard deviations of |Psi|^2 and of the momentum density.
double packet_position_spread(const PacketSpec& spec, double eps, int axis);
double packet_momentum_spread(const PacketSpec& spec, double eps, int axis);

// Per-axis Wigner covariance (xx, xp, pp) of the packet, exact for Gaussians.
struct AxisCovariance {
  double xx = 0.0, xp = 0.0, pp = 0.0;
};
AxisCovariance packet_wigner_covariance(const PacketSpec& spec, double eps, int axis);

// Throws GridTooCoarse / PacketClipped when the packet is under-resolved or too
// close to the box edge; the result has discrete norm 1.
WaveFunction make_packet(const Grid& grid, double eps, const PacketSpec& spec);
void check_packet_admissible(const Grid& grid, double eps, const PacketSpec& spec);

inline constexpr double kDefaultTimestepCoefficient = 0.01;

// U sampled on the grid; SingularGridPoint if a node is within the guard radius of S.
std::vector<double> sample_potential(const Grid& grid, const PotentialSpec& spec);

// Strang split-operator stepper with cached phase arrays.
class Propagator {
 public:
  Propagator(const Grid& grid, double eps, const PotentialSpec& spec, double dt,
             double c_t = kDefaultTimestepCoefficient);

  void advance(WaveFunction& wf, long nsteps) const;
  double dt() const { return dt_; }
  const std::vector<double>& potential() const { return potential_; }

 private:
  Grid grid_;
  double eps_;
  double dt_;
  std::vector<double> potential_;
  std::vector<cplx> half_phase_;
  std::vector<cplx> full_phase_;
  std::vector<cplx> kinetic_phase_;
};

WaveFunction propagate(const WaveFunction& wf, const PotentialSpec& spec, double dt, long nsteps,
                       double c_t = kDefaultTimestepCoefficient);

double norm(const WaveFunction& wf);
// 1/2 int |eps grad Psi|^2, computed spectrally.
double kinetic_energy(const WaveFunction& wf);
double potential_energy(const WaveFunction& wf, const std::vector<double>& u);
double energy(const WaveFunction& wf, const PotentialSpec& spec);
double h_norm(const WaveFunction& wf, const PotentialSpec& spec);

// Unscaled spectral Laplacian of a grid field.
std::vector<cplx> laplacian(const Grid& grid, std::span<const cplx> values);
std::vector<cplx> apply_hamiltonian(const WaveFunction& wf, const std::vector<double>& u);

std::vector<double> position_density(const WaveFunction& wf);

// rho(p) = (2 pi eps)^{-d} |(F Psi)(p/eps)|^2 on the centered grid p = eps k.
struct MomentumDensity {
  std::vector<std::vector<double>> p;  // per axis, increasing
  std::vector<double> dp;
  std::vector<double> values;          // row-major over the p axes
};
MomentumDensity momentum_density(const WaveFunction& wf);

std::vector<double> expectation_x(const WaveFunction& wf);
std::vector<double> expectation_p(const WaveFunction& wf);

// Mass in the outer shell |x_i - c_i| > (1 - shell) L_i/2 on any axis.
double boundary_mass(const WaveFunction& wf, double shell = 0.1);
void check_boundary(const WaveFunction& wf, double threshold = 1e-6, double shell = 0.1);

// Raw little-endian (re, im) doubles in grid order plus a JSON sidecar.
void write_field(const std::filesystem::path& stem, const WaveFunction& wf,
                 std::uint64_t potential_hash);
WaveFunction read_field(const std::filesystem::path& stem);

}  // namespace qcl
