#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qcl/potential.hpp"
#include "qcl/quantum.hpp"
#include "qcl/wigner.hpp"

namespace qcl {

// Weighted particles (x_i, p_i, w_i), stored as flat arrays of length n*d.
struct Ensemble {
  int dim = 1;
  double time = 0.0;
  std::vector<double> x, p, w;
  std::vector<char> aborted;

  std::size_t size() const { return w.size(); }
  double total_weight() const;
  double aborted_weight() const;
  std::span<const double> xi(std::size_t i) const { return {x.data() + i * dim, std::size_t(dim)}; }
  std::span<const double> pi(std::size_t i) const { return {p.data() + i * dim, std::size_t(dim)}; }
  void add(std::span<const double> xv, std::span<const double> pv, double weight);
};

enum class SamplingMode {
  kDeltaLimit,        // one particle at (x0, p0)
  kHusimiAtEps,       // random cloud with the packet's Husimi covariance
  kWignerQuadrature,  // tensor Gauss-Hermite nodes of the packet's Wigner Gaussian
};

// For kWignerQuadrature, n is the node count per phase-space axis.
Ensemble sample_initial(const PacketSpec& spec, SamplingMode mode, double eps, int n,
                        std::uint64_t seed);

// Nodes and weights for the standard normal distribution (weights sum to 1).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

enum class ApproachPolicy { kThrow, kRecord };

struct StepOptions {
  double eta = 0.05;
  ApproachPolicy policy = ApproachPolicy::kThrow;
  int threads = 1;  // particles are split into contiguous blocks
};

// Velocity Verlet over dt (either sign) with per-particle adaptive substeps
// min(dt, eta r/|p|, eta sqrt(r^3/c_max)), r = dist_to_singular. A particle that
// enters the guard radius of S either throws SingularApproach or is marked
// aborted and frozen, depending on the policy.
void step(Ensemble& ens, const PotentialSpec& spec, double dt, const StepOptions& opt = {});
Ensemble push_forward(const Ensemble& ens, const PotentialSpec& spec, double T, double dt,
                      const StepOptions& opt = {});
// Snapshots at the given increasing times (the first may equal ens.time).
std::vector<Ensemble> trajectory(const Ensemble& ens, const PotentialSpec& spec,
                                 const std::vector<double>& times, double dt,
                                 const StepOptions& opt = {});

double particle_energy(const Ensemble& ens, const PotentialSpec& spec, std::size_t i);

// sum_i w_i phi(x_i, p_i) over particles that were not aborted.
double measure_pair(const Ensemble& ens, const TestFunction& phi);

// |int sum_i w_i (d_t + p.grad_x - grad U.grad_p)(theta phi) dt|, trapezoid over the
// snapshots. SupportViolation when phi reaches a non-C^1 point or its window
// leaves the snapshot range.
double liouville_residual(const std::vector<Ensemble>& snapshots, const PotentialSpec& spec,
                          const TestFunction& phi);

// Rows t,id,x...,p...,w (aborted particles included, weight as stored).
void write_ensemble_csv(const std::filesystem::path& path, const std::vector<Ensemble>& snapshots);

}  // namespace qcl
