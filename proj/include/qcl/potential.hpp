#pragma once

#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qcl {

/// How the position vector is interpreted.
///
/// kFlat: plain coordinates in R^d, no nuclei.
/// kNuclear: x = (R_1, ..., R_M) with R_a in R^3, d = 3M.
/// kRelative: a two-nucleus system reduced to its separation R_1 - R_2 in R^3
///   (unit reduced mass); the single pair is (0, 1).
enum class LayoutKind { kFlat, kNuclear, kRelative };

struct Layout {
  LayoutKind kind = LayoutKind::kFlat;
  int dim = 1;
  int nuclei = 0;

  static Layout flat(int dim);
  static Layout nuclear(int nuclei);
  static Layout relative();
};

/// Repulsive Coulomb term c / |R_alpha - R_beta|.
struct PairInteraction {
  int alpha = 0;
  int beta = 1;
  double c = 1.0;
};

namespace surface {

struct Zero {};

/// 0.5 * sum_i k_i x_i^2; a single stiffness is broadcast to every axis.
struct Harmonic {
  std::vector<double> stiffness{1.0};
};

/// a * sum_i x_i^4
struct Quartic {
  double a = 1.0;
};

/// c / sqrt(r^2 + a^2); r = |x| for flat/relative layouts, summed over all
/// nucleus pairs for the nuclear layout.
struct SoftCoulomb {
  double c = 1.0;
  double soft_core = 1.0;
};

/// -c |x - apex|: the lowest eigenvalue of the 2x2 crossing model. Lipschitz,
/// not C^1 at the apex.
struct CrossingCone {
  double c = 1.0;
  std::vector<double> apex;  // empty means the origin
};

/// Morse-like radial profile u(r) = D (1 - exp(-a (r - r_e)))^2 - D of the
/// internuclear distance. Requires a nuclear layout with two nuclei, or the
/// relative layout.
struct DimerRadial {
  double depth = 1.0;
  double range = 1.0;
  double r_eq = 1.0;
};

}  // namespace surface

using SmoothSurface =
    std::variant<surface::Zero, surface::Harmonic, surface::Quartic, surface::SoftCoulomb,
                 surface::CrossingCone, surface::DimerRadial>;

/// U = U_b + U_s with U_b a smooth (or Lipschitz) surrogate surface and U_s a
/// sum of repulsive Coulomb pair terms. Immutable once validated.
class PotentialSpec {
 public:
  static constexpr double kDefaultGuardRadius = 1e-8;

  PotentialSpec() = default;
  PotentialSpec(Layout layout, SmoothSurface smooth, std::vector<PairInteraction> pairs = {},
                double guard_radius = kDefaultGuardRadius);

  const Layout& layout() const { return layout_; }
  int dim() const { return layout_.dim; }
  const SmoothSurface& smooth() const { return smooth_; }
  const std::vector<PairInteraction>& pairs() const { return pairs_; }
  double guard_radius() const { return guard_radius_; }

  bool has_singular_part() const;
  /// Smallest nonzero coupling (0 when there is none).
  double min_coupling() const;
  double max_coupling() const;

 private:
  Layout layout_ = Layout::flat(1);
  SmoothSurface smooth_ = surface::Zero{};
  std::vector<PairInteraction> pairs_;
  double guard_radius_ = kDefaultGuardRadius;
};

double eval_ub(const PotentialSpec& spec, std::span<const double> x);
double eval_us(const PotentialSpec& spec, std::span<const double> x);
double eval_u(const PotentialSpec& spec, std::span<const double> x);

/// Analytic gradient of U. Throws SingularPoint within the guard radius of S
/// and NonDifferentiable at a non-C^1 point of the smooth part.
void eval_grad_u(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad);
std::vector<double> eval_grad_u(const PotentialSpec& spec, std::span<const double> x);
void eval_grad_ub(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad);
void eval_grad_us(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad);

/// min over active pairs of |R_alpha - R_beta|; +inf when there is none.
double dist_to_singular(const PotentialSpec& spec, std::span<const double> x);

/// U_s(x)^2, the integrable majorant for |grad U_s|.
double singular_weight(const PotentialSpec& spec, std::span<const double> x);

/// Constant C0 with |grad U_s| <= C0 U_s^2 everywhere off S.
///
/// For one pair, |grad_{R_a} (1/r)| = 1/r^2 gives C0 = 1/m with m the smallest
/// coupling. In the nuclear layout the gradient runs over all 3M coordinates,
/// which costs an extra factor min(sqrt(M), 2).
double majorant_constant(const PotentialSpec& spec);

/// Euclidean distance in R^d from x to the closed set where U fails to be C^1:
/// the singular set S, the crossing apex, and r = 0 for radial surfaces.
double distance_to_nonsmooth(const PotentialSpec& spec, std::span<const double> x);

std::string describe(const PotentialSpec& spec);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace qcl
