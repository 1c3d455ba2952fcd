#include "qcl/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qcl/error.hpp"

namespace qcl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSingularPoint: return "SingularPoint";
    case ErrorKind::kNonDifferentiable: return "NonDifferentiable";
    case ErrorKind::kGridTooCoarse: return "GridTooCoarse";
    case ErrorKind::kPacketClipped: return "PacketClipped";
    case ErrorKind::kTimestepTooLarge: return "TimestepTooLarge";
    case ErrorKind::kSingularGridPoint: return "SingularGridPoint";
    case ErrorKind::kBoundaryContamination: return "BoundaryContamination";
    case ErrorKind::kDimensionTooHigh: return "DimensionTooHigh";
    case ErrorKind::kQuadratureWindowExceedsBox: return "QuadratureWindowExceedsBox";
    case ErrorKind::kSupportTouchesSingularSet: return "SupportTouchesSingularSet";
    case ErrorKind::kSupportViolation: return "SupportViolation";
    case ErrorKind::kSingularApproach: return "SingularApproach";
    case ErrorKind::kDeltaBelowResolution: return "DeltaBelowResolution";
    case ErrorKind::kDegenerateFit: return "DegenerateFit";
    case ErrorKind::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::kCorruptFile: return "CorruptFile";
    case ErrorKind::kConfigInvalid: return "ConfigInvalid";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Layout Layout::flat(int dim) { return {LayoutKind::kFlat, dim, 0}; }
Layout Layout::nuclear(int nuclei) { return {LayoutKind::kNuclear, 3 * nuclei, nuclei}; }
Layout Layout::relative() { return {LayoutKind::kRelative, 3, 2}; }

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Separation vector R_alpha - R_beta written into sep (size 3).
void separation(const Layout& layout, std::span<const double> x, int alpha, int beta,
                double sep[3]) {
  if (layout.kind == LayoutKind::kRelative) {
    for (int k = 0; k < 3; ++k) sep[k] = x[k];
    return;
  }
  for (int k = 0; k < 3; ++k) sep[k] = x[3 * alpha + k] - x[3 * beta + k];
}

double norm3(const double v[3]) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// Scatter d f(|s|)/d s = fprime * s / r into the gradient of x.
void scatter_radial(const Layout& layout, int alpha, int beta, const double sep[3], double coef,
                    std::span<double> grad) {
  if (layout.kind == LayoutKind::kRelative) {
    for (int k = 0; k < 3; ++k) grad[k] += coef * sep[k];
    return;
  }
  for (int k = 0; k < 3; ++k) {
    grad[3 * alpha + k] += coef * sep[k];
    grad[3 * beta + k] -= coef * sep[k];
  }
}

double morse(const surface::DimerRadial& m, double r) {
  const double e = std::exp(-m.range * (r - m.r_eq));
  return m.depth * (1.0 - e) * (1.0 - e) - m.depth;
}

double morse_prime(const surface::DimerRadial& m, double r) {
  const double e = std::exp(-m.range * (r - m.r_eq));
  return 2.0 * m.depth * m.range * e * (1.0 - e);
}

double apex_coord(const surface::CrossingCone& cone, std::size_t i) {
  return cone.apex.empty() ? 0.0 : cone.apex[i];
}

// Every nucleus pair, used by radial surfaces in the nuclear layout.
template <class F>
void for_each_nucleus_pair(const Layout& layout, F&& f) {
  if (layout.kind == LayoutKind::kRelative) {
    f(0, 1);
    return;
  }
  for (int a = 0; a < layout.nuclei; ++a)
    for (int b = a + 1; b < layout.nuclei; ++b) f(a, b);
}

}  // namespace

PotentialSpec::PotentialSpec(Layout layout, SmoothSurface smooth,
                             std::vector<PairInteraction> pairs, double guard_radius)
    : layout_(layout), smooth_(std::move(smooth)), pairs_(std::move(pairs)),
      guard_radius_(guard_radius) {
  if (layout_.dim < 1) throw Error(ErrorKind::kInvalidArgument, "dimension must be positive");
  if (layout_.kind == LayoutKind::kNuclear && (layout_.nuclei < 2 || layout_.dim != 3 * layout_.nuclei))
    throw Error(ErrorKind::kInvalidArgument, "nuclear layout needs M >= 2 and d = 3M");
  if (layout_.kind == LayoutKind::kRelative && (layout_.dim != 3 || layout_.nuclei != 2))
    throw Error(ErrorKind::kInvalidArgument, "relative layout is the 3D separation of two nuclei");
  if (!(guard_radius_ >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "guard radius must be >= 0");

  for (const auto& p : pairs_) {
    if (layout_.kind == LayoutKind::kFlat)
      throw Error(ErrorKind::kInvalidArgument, "pair interactions need a nuclear or relative layout");
    if (!(p.c >= 0.0) || !std::isfinite(p.c))
      throw Error(ErrorKind::kInvalidArgument, "pair coupling must be finite and >= 0");
    if (p.alpha == p.beta || p.alpha < 0 || p.beta < 0 || p.alpha >= layout_.nuclei ||
        p.beta >= layout_.nuclei)
      throw Error(ErrorKind::kInvalidArgument, "pair indices must be distinct nuclei < M");
    if (layout_.kind == LayoutKind::kRelative && !((p.alpha == 0 && p.beta == 1) || (p.alpha == 1 && p.beta == 0)))
      throw Error(ErrorKind::kInvalidArgument, "relative layout has the single pair (0, 1)");
  }
  for (auto& p : pairs_)
    if (p.alpha > p.beta) std::swap(p.alpha, p.beta);

  std::visit(overloaded{
                 [](const surface::Zero&) {},
                 [&](const surface::Harmonic& h) {
                   if (h.stiffness.size() != 1 && static_cast<int>(h.stiffness.size()) != layout_.dim)
                     throw Error(ErrorKind::kInvalidArgument, "harmonic stiffness needs 1 or d entries");
                 },
                 [](const surface::Quartic&) {},
                 [](const surface::SoftCoulomb& s) {
                   if (!(s.soft_core > 0.0))
                     throw Error(ErrorKind::kInvalidArgument, "soft-core radius must be > 0");
                 },
                 [&](const surface::CrossingCone& c) {
                   if (!c.apex.empty() && static_cast<int>(c.apex.size()) != layout_.dim)
                     throw Error(ErrorKind::kInvalidArgument, "cone apex needs d entries");
                 },
                 [&](const surface::DimerRadial& m) {
                   const bool ok = layout_.kind == LayoutKind::kRelative ||
                                   (layout_.kind == LayoutKind::kNuclear && layout_.nuclei == 2);
                   if (!ok)
                     throw Error(ErrorKind::kInvalidArgument,
                                 "dimer surface needs the nuclear layout with M = 2 or the relative layout");
                   if (!(m.range > 0.0))
                     throw Error(ErrorKind::kInvalidArgument, "dimer range must be > 0");
                 },
             },
             smooth_);
}

bool PotentialSpec::has_singular_part() const {
  return std::any_of(pairs_.begin(), pairs_.end(), [](const PairInteraction& p) { return p.c != 0.0; });
}

double PotentialSpec::min_coupling() const {
  double m = 0.0;
  for (const auto& p : pairs_)
    if (p.c != 0.0 && (m == 0.0 || p.c < m)) m = p.c;
  return m;
}

double PotentialSpec::max_coupling() const {
  double m = 0.0;
  for (const auto& p : pairs_) m = std::max(m, p.c);
  return m;
}

double eval_ub(const PotentialSpec& spec, std::span<const double> x) {
  const auto& layout = spec.layout();
  return std::visit(
      overloaded{
          [](const surface::Zero&) { return 0.0; },
          [&](const surface::Harmonic& h) {
            double u = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double k = h.stiffness.size() == 1 ? h.stiffness[0] : h.stiffness[i];
              u += 0.5 * k * x[i] * x[i];
            }
            return u;
          },
          [&](const surface::Quartic& q) {
            double u = 0.0;
            for (double xi : x) u += xi * xi * xi * xi;
            return q.a * u;
          },
          [&](const surface::SoftCoulomb& s) {
            if (layout.kind == LayoutKind::kFlat) {
              double r2 = 0.0;
              for (double xi : x) r2 += xi * xi;
              return s.c / std::sqrt(r2 + s.soft_core * s.soft_core);
            }
            double u = 0.0;
            for_each_nucleus_pair(layout, [&](int a, int b) {
              double sep[3];
              separation(layout, x, a, b, sep);
              const double r = norm3(sep);
              u += s.c / std::sqrt(r * r + s.soft_core * s.soft_core);
            });
            return u;
          },
          [&](const surface::CrossingCone& c) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double dx = x[i] - apex_coord(c, i);
              r2 += dx * dx;
            }
            return -c.c * std::sqrt(r2);
          },
          [&](const surface::DimerRadial& m) {
            double sep[3];
            separation(layout, x, 0, 1, sep);
            return morse(m, norm3(sep));
          },
      },
      spec.smooth());
}

double eval_us(const PotentialSpec& spec, std::span<const double> x) {
  double u = 0.0;
  for (const auto& p : spec.pairs()) {
    if (p.c == 0.0) continue;
    double sep[3];
    separation(spec.layout(), x, p.alpha, p.beta, sep);
    const double r = norm3(sep);
    if (r == 0.0)
      throw Error(ErrorKind::kSingularPoint, "coincident nuclei " + std::to_string(p.alpha) + "," +
                                                 std::to_string(p.beta));
    u += p.c / r;
  }
  return u;
}

double eval_u(const PotentialSpec& spec, std::span<const double> x) {
  return eval_ub(spec, x) + eval_us(spec, x);
}

void eval_grad_ub(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad) {
  const auto& layout = spec.layout();
  std::fill(grad.begin(), grad.end(), 0.0);
  std::visit(
      overloaded{
          [](const surface::Zero&) {},
          [&](const surface::Harmonic& h) {
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double k = h.stiffness.size() == 1 ? h.stiffness[0] : h.stiffness[i];
              grad[i] = k * x[i];
            }
          },
          [&](const surface::Quartic& q) {
            for (std::size_t i = 0; i < x.size(); ++i) grad[i] = 4.0 * q.a * x[i] * x[i] * x[i];
          },
          [&](const surface::SoftCoulomb& s) {
            const double a2 = s.soft_core * s.soft_core;
            if (layout.kind == LayoutKind::kFlat) {
              double r2 = 0.0;
              for (double xi : x) r2 += xi * xi;
              const double coef = -s.c / std::pow(r2 + a2, 1.5);
              for (std::size_t i = 0; i < x.size(); ++i) grad[i] = coef * x[i];
              return;
            }
            for_each_nucleus_pair(layout, [&](int a, int b) {
              double sep[3];
              separation(layout, x, a, b, sep);
              const double r = norm3(sep);
              scatter_radial(layout, a, b, sep, -s.c / std::pow(r * r + a2, 1.5), grad);
            });
          },
          [&](const surface::CrossingCone& c) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double dx = x[i] - apex_coord(c, i);
              r2 += dx * dx;
            }
            if (r2 == 0.0)
              throw Error(ErrorKind::kNonDifferentiable, "crossing cone apex");
            const double r = std::sqrt(r2);
            for (std::size_t i = 0; i < x.size(); ++i) grad[i] = -c.c * (x[i] - apex_coord(c, i)) / r;
          },
          [&](const surface::DimerRadial& m) {
            double sep[3];
            separation(layout, x, 0, 1, sep);
            const double r = norm3(sep);
            const double du = morse_prime(m, r);
            if (r == 0.0) {
              if (du != 0.0) throw Error(ErrorKind::kNonDifferentiable, "radial surface at r = 0");
              return;
            }
            scatter_radial(layout, 0, 1, sep, du / r, grad);
          },
      },
      spec.smooth());
}

void eval_grad_us(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  for (const auto& p : spec.pairs()) {
    if (p.c == 0.0) continue;
    double sep[3];
    separation(spec.layout(), x, p.alpha, p.beta, sep);
    const double r = norm3(sep);
    if (r <= spec.guard_radius())
      throw Error(ErrorKind::kSingularPoint, "within guard radius of the singular set");
    scatter_radial(spec.layout(), p.alpha, p.beta, sep, -p.c / (r * r * r), grad);
  }
}

void eval_grad_u(const PotentialSpec& spec, std::span<const double> x, std::span<double> grad) {
  if (spec.has_singular_part() && dist_to_singular(spec, x) <= spec.guard_radius())
    throw Error(ErrorKind::kSingularPoint, "within guard radius of the singular set");
  eval_grad_ub(spec, x, grad);
  double tmp[64];
  std::vector<double> heap;
  std::span<double> gs;
  if (grad.size() <= 64) {
    gs = std::span<double>(tmp, grad.size());
  } else {
    heap.resize(grad.size());
    gs = heap;
  }
  eval_grad_us(spec, x, gs);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gs[i];
}

std::vector<double> eval_grad_u(const PotentialSpec& spec, std::span<const double> x) {
  std::vector<double> g(x.size());
  eval_grad_u(spec, x, g);
  return g;
}

double dist_to_singular(const PotentialSpec& spec, std::span<const double> x) {
  double d = kInf;
  for (const auto& p : spec.pairs()) {
    if (p.c == 0.0) continue;
    double sep[3];
    separation(spec.layout(), x, p.alpha, p.beta, sep);
    d = std::min(d, norm3(sep));
  }
  return d;
}

double singular_weight(const PotentialSpec& spec, std::span<const double> x) {
  const double us = eval_us(spec, x);
  return us * us;
}

double majorant_constant(const PotentialSpec& spec) {
  const double m = spec.min_coupling();
  if (m == 0.0) return 0.0;
  double factor = 1.0;
  if (spec.layout().kind == LayoutKind::kNuclear)
    factor = std::min(std::sqrt(static_cast<double>(spec.layout().nuclei)), 2.0);
  return factor / m;
}

double distance_to_nonsmooth(const PotentialSpec& spec, std::span<const double> x) {
  const auto& layout = spec.layout();
  // |R_a - R_b| / sqrt(2) is the Euclidean distance to {R_a = R_b} in R^{3M}.
  const double pair_scale = layout.kind == LayoutKind::kNuclear ? 1.0 / std::sqrt(2.0) : 1.0;
  double d = dist_to_singular(spec, x) * pair_scale;
  if (const auto* cone = std::get_if<surface::CrossingCone>(&spec.smooth())) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dx = x[i] - apex_coord(*cone, i);
      r2 += dx * dx;
    }
    d = std::min(d, std::sqrt(r2));
  }
  if (const auto* dimer = std::get_if<surface::DimerRadial>(&spec.smooth())) {
    if (morse_prime(*dimer, 0.0) != 0.0) {
      double sep[3];
      separation(layout, x, 0, 1, sep);
      d = std::min(d, norm3(sep) * pair_scale);
    }
  }
  return d;
}

std::string describe(const PotentialSpec& spec) {
  std::ostringstream os;
  const auto& l = spec.layout();
  switch (l.kind) {
    case LayoutKind::kFlat: os << "flat(d=" << l.dim << ")"; break;
    case LayoutKind::kNuclear: os << "nuclear(M=" << l.nuclei << ")"; break;
    case LayoutKind::kRelative: os << "relative"; break;
  }
  os << " smooth=";
  std::visit(overloaded{
                 [&](const surface::Zero&) { os << "zero"; },
                 [&](const surface::Harmonic&) { os << "harmonic"; },
                 [&](const surface::Quartic& q) { os << "quartic(a=" << q.a << ")"; },
                 [&](const surface::SoftCoulomb& s) { os << "soft_coulomb(c=" << s.c << ")"; },
                 [&](const surface::CrossingCone& c) { os << "crossing_cone(c=" << c.c << ")"; },
                 [&](const surface::DimerRadial&) { os << "dimer_radial"; },
             },
             spec.smooth());
  os << " pairs=" << spec.pairs().size();
  return os.str();
}

}  // namespace qcl
