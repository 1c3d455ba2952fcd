#pragma once

#include <string>
#include <vector>

#include "qcl/classical.hpp"
#include "qcl/potential.hpp"
#include "qcl/quantum.hpp"

namespace qcl {

// ||U_s Psi||^2 by grid quadrature, with the same sum on the 2x coarsened grid
// (every other node per axis). flagged when the two differ by more than 10%.
struct SingularL2 {
  double value = 0.0;
  double coarse = 0.0;
  double relative_change = 0.0;
  bool flagged = false;
};
SingularL2 singular_l2(const WaveFunction& wf, const PotentialSpec& spec);

// Mass of |Psi|^2 on {dist_to_singular < delta}. DeltaBelowResolution when
// delta <= 2h on some axis.
double mass_near_singular(const WaveFunction& wf, const PotentialSpec& spec, double delta);
// One pass over the grid for a whole ladder.
std::vector<double> mass_near_singular(const WaveFunction& wf, const PotentialSpec& spec,
                                       const std::vector<double>& deltas);
// Ensemble weight inside the tube. Aborted particles count: they stopped at S.
double mass_near_singular(const Ensemble& ens, const PotentialSpec& spec, double delta);

// C0 * ||U_s Psi||^2, an upper bound for int |grad U_s| |Psi|^2.
double grad_l1_bound(const WaveFunction& wf, const PotentialSpec& spec);
// Direct quadrature of |grad U_s| |Psi|^2, skipping nodes inside the guard radius.
double grad_l1_direct(const WaveFunction& wf, const PotentialSpec& spec);

// Cutoff chi(x) = S((|x| - 1/2) / (1/2)) with S(s) = 35s^4 - 84s^5 + 70s^6 - 20s^7
// on [0, 1], 0 inside |x| <= 1/2, 1 outside |x| >= 1; chi_R(x) = chi(x/R).
namespace cutoff {
double profile(double r);
inline constexpr double kGradSup = 4.375;
// sup |Lap chi| in R^d: sup|chi''| + (d - 1) sup|chi'(r)/r|.
double laplacian_sup(int dim);
}  // namespace cutoff

// Mass of |Psi|^2 on {|x - box center| > R} for each R. R must lie in (0, min L/2].
std::vector<double> tightness_profile(const WaveFunction& wf, const std::vector<double>& radii);

struct TightnessRow {
  double t = 0.0, radius = 0.0, tail = 0.0, bound = 0.0;
  bool pass = true;
};
struct TightnessResult {
  double grad_sup = 0.0;  // K = sup_t ||eps grad Psi||
  std::vector<TightnessRow> rows;
  bool pass = true;
};
// tail(t, R) <= tail(0, R/2) + (t - t0)(||grad chi||_inf K / R + eps ||Lap chi||_inf / (2 R^2)).
TightnessResult tightness_check(const std::vector<WaveFunction>& snapshots,
                                const std::vector<double>& radii);

// Re <-Lap psi, U_s psi> with the unscaled spectral Laplacian.
double commutator_positivity(const WaveFunction& psi, const PotentialSpec& spec);
// 1e-9 ||Lap psi|| ||U_s psi||, the tolerance for the sign check.
double commutator_tolerance(const WaveFunction& psi, const PotentialSpec& spec);

// max |U_b| over the grid nodes.
double smooth_sup(const Grid& grid, const PotentialSpec& spec);

struct EstimateCheck {
  std::string name;
  bool pass = true;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
  bool advisory = false;  // reported, but ignored by all_pass()
};

// kinetic(t) <= energy(0) + sup|U_b| + 1e-6 at every snapshot.
EstimateCheck kinetic_bound_check(const std::vector<WaveFunction>& snapshots,
                                  const PotentialSpec& spec);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double residual = 0.0;  // root mean square
};
// Least squares y = slope x + intercept. Needs at least two distinct x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
// fit_line on (log x, log y); DegenerateFit if some y <= 0.
LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct EstimateSample {
  double t = 0.0;
  double norm = 0.0, energy = 0.0, kinetic = 0.0;
  SingularL2 singular;
  double grad_bound = 0.0, grad_direct = 0.0;
  std::vector<double> mass_near;  // per delta
  std::vector<double> tail;       // per radius
};

struct EstimateReport {
  std::string run_id;
  std::vector<double> deltas, radii;
  std::vector<EstimateSample> samples;
  // log-log slope of the mass ladder per sample; NaN where a mass vanishes.
  std::vector<double> mass_slopes;
  // Sample with the largest mass at the smallest delta (closest approach).
  int closest_sample = -1;
  TightnessResult tightness;
  std::vector<EstimateCheck> checks;

  bool all_pass() const;
  const EstimateCheck* find(const std::string& name) const;
};

// Evaluates every estimate on the snapshots. deltas below the grid resolution
// are dropped from the ladder and listed in the no-concentration check detail.
EstimateReport build_report(const std::string& run_id, const std::vector<WaveFunction>& snapshots,
                            const PotentialSpec& spec, std::vector<double> deltas,
                            std::vector<double> radii);

}  // namespace qcl
