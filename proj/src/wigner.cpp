#include "qcl/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qcl/error.hpp"

namespace qcl {

namespace {

// x-factors below this are dropped from the pairing sums.
constexpr double kFactorFloor = 1e-20;
// sp * Y at which the Gaussian y-factor is below 1e-13 of its peak.
constexpr double kYWindow = 7.95;

thread_local double g_last_residue = 0.0;

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

std::size_t PhaseSpaceField::p_size() const {
  std::size_t n = 1;
  for (const auto& axis : p) n *= axis.size();
  return n;
}

double PhaseSpaceField::cell_volume() const {
  double v = xgrid.cell_volume();
  for (double d : dp) v *= d;
  return v;
}

double PhaseSpaceField::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell_volume();
}

double TimeWindow::value(double t) const {
  const double s = (2.0 * t - t0 - t1) / (t1 - t0);
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double TimeWindow::derivative(double t) const {
  const double s = (2.0 * t - t0 - t1) / (t1 - t0);
  if (std::abs(s) >= 1.0) return 0.0;
  const double q = 1.0 - s * s;
  return value(t) * (-2.0 * s / (q * q)) * (2.0 / (t1 - t0));
}

void TestFunction::validate() const {
  const auto d = x0.size();
  if (d == 0 || p0.size() != d || sx.size() != d || sp.size() != d)
    throw Error(ErrorKind::kInvalidArgument, "test function " + id + ": inconsistent dimensions");
  for (std::size_t i = 0; i < d; ++i)
    if (!(sx[i] > 0.0) || !(sp[i] > 0.0))
      throw Error(ErrorKind::kInvalidArgument, "test function " + id + ": widths must be > 0");
  if (window && !(window->t1 > window->t0))
    throw Error(ErrorKind::kInvalidArgument, "test function " + id + ": empty time window");
}

double TestFunction::value(std::span<const double> x, std::span<const double> p) const {
  double e = 0.0;
  for (int i = 0; i < dim(); ++i) {
    const double dx = (x[i] - x0[i]) / sx[i];
    const double dq = (p[i] - p0[i]) / sp[i];
    e += dx * dx + dq * dq;
  }
  return amplitude * std::exp(-0.5 * e);
}

void TestFunction::gradient(std::span<const double> x, std::span<const double> p,
                            std::span<double> gx, std::span<double> gp) const {
  const double v = value(x, p);
  for (int i = 0; i < dim(); ++i) {
    gx[i] = -v * (x[i] - x0[i]) / (sx[i] * sx[i]);
    gp[i] = -v * (p[i] - p0[i]) / (sp[i] * sp[i]);
  }
}

double TestFunction::support_radius() const {
  return 4.0 * *std::max_element(sx.begin(), sx.end());
}

double TestFunction::y_window(int axis) const { return kYWindow / sp[axis]; }

TestDictionary TestDictionary::lattice(std::span<const double> x_center,
                                       std::span<const double> x_half,
                                       std::span<const double> p_center,
                                       std::span<const double> p_half, int counts,
                                       std::span<const double> sx, std::span<const double> sp) {
  if (counts < 1) throw Error(ErrorKind::kInvalidArgument, "lattice needs at least one point per axis");
  const int d = static_cast<int>(x_center.size());
  TestDictionary dict;
  dict.rule = "lattice";
  auto offset = [&](int k) { return counts == 1 ? 0.0 : 2.0 * k / (counts - 1) - 1.0; };
  int total = 1;
  for (int i = 0; i < 2 * d; ++i) total *= counts;
  for (int flat = 0; flat < total; ++flat) {
    TestFunction phi;
    phi.x0.resize(d);
    phi.p0.resize(d);
    phi.sx.assign(sx.begin(), sx.end());
    phi.sp.assign(sp.begin(), sp.end());
    std::string xid, pid;
    int rest = flat;
    for (int i = 2 * d - 1; i >= 0; --i) {
      const int k = rest % counts;
      rest /= counts;
      if (i < d) {
        phi.x0[i] = x_center[i] + x_half[i] * offset(k);
        xid = std::to_string(k) + (xid.empty() ? "" : "." + xid);
      } else {
        phi.p0[i - d] = p_center[i - d] + p_half[i - d] * offset(k);
        pid = std::to_string(k) + (pid.empty() ? "" : "." + pid);
      }
    }
    phi.id = "lat-x" + xid + "-p" + pid;
    dict.probes.push_back(std::move(phi));
  }
  return dict;
}

TestDictionary TestDictionary::along(const std::vector<std::vector<double>>& xs,
                                     const std::vector<std::vector<double>>& ps,
                                     std::span<const double> sx, std::span<const double> sp,
                                     const std::string& prefix) {
  TestDictionary dict;
  dict.rule = "trajectory";
  for (std::size_t k = 0; k < xs.size(); ++k) {
    TestFunction phi;
    phi.id = prefix + "-" + std::to_string(k);
    phi.x0 = xs[k];
    phi.p0 = ps[k];
    phi.sx.assign(sx.begin(), sx.end());
    phi.sp.assign(sp.begin(), sp.end());
    dict.probes.push_back(std::move(phi));
  }
  return dict;
}

void TestDictionary::append(const TestDictionary& other) {
  probes.insert(probes.end(), other.probes.begin(), other.probes.end());
  if (rule.empty()) rule = other.rule;
  else if (rule != other.rule) rule += "+" + other.rule;
}

void TestDictionary::validate() const {
  if (probes.empty()) throw Error(ErrorKind::kInvalidArgument, "test dictionary is empty");
  for (const auto& phi : probes) phi.validate();
}

double a_norm(const TestFunction& phi) {
  return std::abs(phi.amplitude) * std::pow(2.0 * M_PI, phi.dim());
}

PhaseSpaceField wigner_full(const WaveFunction& wf) {
  const Grid& g = wf.grid;
  const int d = g.dim();
  if (d > 2)
    throw Error(ErrorKind::kDimensionTooHigh, "full Wigner grids are limited to d <= 2; use pair");

  PhaseSpaceField out;
  out.xgrid = g;
  out.eps = wf.eps;
  out.time = wf.time;
  out.p.resize(d);
  out.dp.resize(d);
  double scale = 1.0;
  for (int i = 0; i < d; ++i) {
    const int n = g.points[i];
    out.dp[i] = M_PI * wf.eps / g.extent[i];
    out.p[i].resize(n);
    for (int m = 0; m < n; ++m) out.p[i][m] = (m - n / 2) * out.dp[i];
    scale *= (2.0 * g.h(i) / wf.eps) / (2.0 * M_PI);
  }
  const std::size_t nx = g.size();
  const std::size_t np = out.p_size();
  out.values.assign(nx * np, 0.0);

  const auto strides = g.strides();
  std::vector<cplx> c(np);
  std::vector<int> xi(d), k(d);
  double residue = 0.0, peak = 0.0;
  for (std::size_t n = 0; n < nx; ++n) {
    g.unflatten(n, xi);
    for (std::size_t q = 0; q < np; ++q) {
      g.unflatten(q, k);
      std::size_t a = 0, b = 0;
      for (int i = 0; i < d; ++i) {
        const int N = g.points[i];
        const int j = k[i] < N / 2 ? k[i] : k[i] - N;
        a += wrap(xi[i] + j, N) * strides[i];
        b += wrap(xi[i] - j, N) * strides[i];
      }
      c[q] = wf.values[a] * std::conj(wf.values[b]);
    }
    fft_nd(c, g.points, kForward);
    double* row = out.values.data() + n * np;
    for (std::size_t q = 0; q < np; ++q) {
      g.unflatten(q, k);
      std::size_t dst = 0;
      for (int i = 0; i < d; ++i) dst += ((k[i] + g.points[i] / 2) % g.points[i]) * strides[i];
      row[dst] = scale * c[q].real();
      residue = std::max(residue, scale * std::abs(c[q].imag()));
      peak = std::max(peak, std::abs(row[dst]));
    }
  }
  g_last_residue = residue;
  if (residue > 1e-10 * std::max(1.0, peak))
    throw Error(ErrorKind::kInvalidArgument, "Wigner transform has a non-negligible imaginary part");
  return out;
}

double last_wigner_imaginary_residue() { return g_last_residue; }

namespace {

// Periodic convolution of one axis of a row-major real array with a kernel
// given on offsets [-K, K].
void convolve_axis(std::vector<double>& data, const std::vector<int>& dims, int axis,
                   const std::vector<double>& kernel) {
  const int n = dims[axis];
  const int K = static_cast<int>(kernel.size() / 2);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
  for (int i = 0; i < axis; ++i) outer *= dims[i];
  std::vector<double> out(data.size(), 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (int a = 0; a < n; ++a) {
      double* dst = out.data() + (o * n + a) * inner;
      for (int k = -K; k <= K; ++k) {
        const double w = kernel[k + K];
        const double* src = data.data() + (o * n + wrap(a - k, n)) * inner;
        for (std::size_t q = 0; q < inner; ++q) dst[q] += w * src[q];
      }
    }
  data.swap(out);
}

std::vector<double> gaussian_kernel(double sigma, double spacing) {
  const int K = static_cast<int>(std::ceil(8.5 * sigma / spacing));
  std::vector<double> k(2 * K + 1);
  for (int i = -K; i <= K; ++i) k[i + K] = std::exp(-0.5 * std::pow(i * spacing / sigma, 2));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace

PhaseSpaceField husimi(const PhaseSpaceField& wigner) {
  PhaseSpaceField out = wigner;
  const int d = wigner.xgrid.dim();
  std::vector<int> dims(wigner.xgrid.points);
  for (const auto& axis : wigner.p) dims.push_back(static_cast<int>(axis.size()));
  const double sigma = std::sqrt(wigner.eps / 2.0);
  for (int i = 0; i < d; ++i)
    convolve_axis(out.values, dims, i, gaussian_kernel(sigma, wigner.xgrid.h(i)));
  for (int i = 0; i < d; ++i) convolve_axis(out.values, dims, d + i, gaussian_kernel(sigma, wigner.dp[i]));
  return out;
}

PhaseSpaceField husimi(const WaveFunction& wf) {
  if (wf.grid.dim() > 2)
    throw Error(ErrorKind::kDimensionTooHigh, "Husimi grids are limited to d <= 2");
  return husimi(wigner_full(wf));
}

std::vector<double> x_marginal(const PhaseSpaceField& field) {
  const std::size_t np = field.p_size();
  double dpv = 1.0;
  for (double v : field.dp) dpv *= v;
  std::vector<double> m(field.xgrid.size(), 0.0);
  for (std::size_t n = 0; n < m.size(); ++n) {
    double s = 0.0;
    for (std::size_t q = 0; q < np; ++q) s += field.values[n * np + q];
    m[n] = s * dpv;
  }
  return m;
}

std::vector<double> p_marginal_binned(const PhaseSpaceField& field) {
  const int d = field.xgrid.dim();
  const std::size_t np = field.p_size();
  const std::size_t nx = field.xgrid.size();
  std::vector<double> marg(np, 0.0);
  for (std::size_t n = 0; n < nx; ++n)
    for (std::size_t q = 0; q < np; ++q) marg[q] += field.values[n * np + q];
  const double hv = field.xgrid.cell_volume();

  // Wigner index m = 2n and 2n + 1 (centered) land on momentum index n.
  std::vector<int> dims(d);
  for (int i = 0; i < d; ++i) dims[i] = static_cast<int>(field.p[i].size());
  std::vector<std::size_t> strides(d, 1);
  for (int i = d - 2; i >= 0; --i) strides[i] = strides[i + 1] * dims[i + 1];
  std::vector<double> out(np, 0.0);
  std::vector<int> mi(d);
  for (std::size_t q = 0; q < np; ++q) {
    std::size_t rest = q;
    for (int i = d - 1; i >= 0; --i) {
      mi[i] = static_cast<int>(rest % dims[i]);
      rest /= dims[i];
    }
    std::size_t dst = 0;
    for (int i = 0; i < d; ++i) {
      const int N = dims[i];
      const int m = mi[i] - N / 2;
      const int nmom = m >= 0 ? m / 2 : -((-m + 1) / 2);  // floor(m / 2)
      dst += (nmom + N / 2) * strides[i];
    }
    out[dst] += marg[q];
  }
  // Convert the binned mass to a density on the coarser momentum grid.
  double ratio = hv;
  for (int i = 0; i < d; ++i) ratio *= field.dp[i] / (2.0 * field.dp[i]);
  for (auto& v : out) v *= ratio;
  return out;
}

double pair_field(const PhaseSpaceField& field, const TestFunction& phi) {
  const int d = field.xgrid.dim();
  const std::size_t np = field.p_size();
  std::vector<double> x(d), p(d);
  std::vector<int> mi(d);
  double s = 0.0;
  for (std::size_t n = 0; n < field.xgrid.size(); ++n) {
    field.xgrid.position(n, x);
    for (std::size_t q = 0; q < np; ++q) {
      std::size_t rest = q;
      for (int i = d - 1; i >= 0; --i) {
        mi[i] = static_cast<int>(rest % field.p[i].size());
        rest /= field.p[i].size();
        p[i] = field.p[i][mi[i]];
      }
      s += field.values[n * np + q] * phi.value(x, p);
    }
  }
  return s * field.cell_volume();
}

namespace {

// One axis of a separable F_p phi: x-factor on grid indices, y-factor on j in [-J, J].
struct AxisFactor {
  std::vector<double> g;
  std::vector<cplx> yf;
  int J = 0;
};

enum class YKind { kPlain, kMomentum, kDerivative };

int quadrature_half_width(const Grid& grid, double eps, const TestFunction& phi, int axis) {
  const int J = static_cast<int>(std::ceil(phi.y_window(axis) * eps / (2.0 * grid.h(axis))));
  if (J >= grid.points[axis] / 2)
    throw Error(ErrorKind::kQuadratureWindowExceedsBox,
                "probe " + phi.id + ": y window needs " + std::to_string(2 * J + 1) +
                    " shifts but axis " + std::to_string(axis) + " has " +
                    std::to_string(grid.points[axis]) + " points");
  return J;
}

std::vector<cplx> y_factor(const Grid& grid, double eps, const TestFunction& phi, int axis, int J,
                           YKind kind) {
  const double dy = 2.0 * grid.h(axis) / eps;
  const double sp = phi.sp[axis], p0 = phi.p0[axis];
  std::vector<cplx> f(2 * J + 1);
  for (int j = -J; j <= J; ++j) {
    const double y = j * dy;
    const cplx h = std::sqrt(2.0 * M_PI) * sp * std::exp(-0.5 * sp * sp * y * y) * std::polar(1.0, -p0 * y);
    switch (kind) {
      case YKind::kPlain: f[j + J] = h; break;
      case YKind::kMomentum: f[j + J] = cplx(p0, -sp * sp * y) * h; break;
      case YKind::kDerivative: f[j + J] = cplx(0.0, y) * h; break;
    }
  }
  return f;
}

std::vector<double> x_factor(const Grid& grid, const TestFunction& phi, int axis, bool moment) {
  std::vector<double> g(grid.points[axis]);
  for (int a = 0; a < grid.points[axis]; ++a) {
    const double dx = grid.coord(axis, a) - phi.x0[axis];
    double v = std::exp(-0.5 * dx * dx / (phi.sx[axis] * phi.sx[axis]));
    if (v < kFactorFloor) v = 0.0;
    g[a] = moment ? -dx / (phi.sx[axis] * phi.sx[axis]) * v : v;
  }
  return g;
}

double pairing_scale(const Grid& grid, double eps) {
  double s = 1.0;
  for (int i = 0; i < grid.dim(); ++i) s *= grid.h(i) * (2.0 * grid.h(i) / eps) / (2.0 * M_PI);
  return s;
}

double l2(const Grid& grid, std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& c : v) s += std::norm(c);
  return std::sqrt(s * grid.cell_volume());
}

// Cauchy-Schwarz: |pairing| <= (2 pi)^-d sum_j dy^d sup_x |F(x, y_j)| ||psi|| ||chi||.
void check_bound(const Grid& grid, double eps, cplx value, double sup_x,
                 const std::vector<std::vector<cplx>>& yfs, std::span<const cplx> psi,
                 std::span<const cplx> chi) {
  double bound = sup_x * l2(grid, psi) * l2(grid, chi);
  for (int i = 0; i < grid.dim(); ++i) {
    double s = 0.0;
    for (const auto& c : yfs[i]) s += std::abs(c);
    bound *= s * (2.0 * grid.h(i) / eps) / (2.0 * M_PI);
  }
  if (std::abs(value) > bound * (1.0 + 1e-10) + 1e-300)
    throw Error(ErrorKind::kInvalidArgument, "pairing exceeds its A-norm bound");
}

cplx separable_pair(const Grid& grid, double eps, std::span<const cplx> psi,
                    std::span<const cplx> chi, const std::vector<AxisFactor>& f, double amplitude) {
  const int d = grid.dim();
  std::vector<cplx> t(chi.size());
  for (std::size_t i = 0; i < chi.size(); ++i) t[i] = std::conj(chi[i]);
  std::vector<cplx> out(t.size());
  for (int axis = 0; axis < d; ++axis) {
    const int n = grid.points[axis];
    std::size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < d; ++i) inner *= grid.points[i];
    for (int i = 0; i < axis; ++i) outer *= grid.points[i];
    const auto& g = f[axis].g;
    const auto& yf = f[axis].yf;
    const int J = f[axis].J;
    std::fill(out.begin(), out.end(), cplx(0.0));
    // (x, j) -> a = x + j, b = x - j: the kernel entry for a, j is g(a - j) yf(j).
    for (std::size_t o = 0; o < outer; ++o)
      for (int a = 0; a < n; ++a) {
        cplx* dst = out.data() + (o * n + a) * inner;
        for (int j = -J; j <= J; ++j) {
          const double gx = g[wrap(a - j, n)];
          if (gx == 0.0) continue;
          const cplx c = gx * yf[j + J];
          const cplx* src = t.data() + (o * n + wrap(a - 2 * j, n)) * inner;
          for (std::size_t q = 0; q < inner; ++q) dst[q] += c * src[q];
        }
      }
    t.swap(out);
  }
  cplx s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += psi[i] * t[i];
  const cplx value = amplitude * pairing_scale(grid, eps) * s;

  double sup_x = std::abs(amplitude);
  std::vector<std::vector<cplx>> yfs;
  for (const auto& ax : f) {
    double m = 0.0;
    for (double v : ax.g) m = std::max(m, std::abs(v));
    sup_x *= m;
    yfs.push_back(ax.yf);
  }
  check_bound(grid, eps, value, sup_x, yfs, psi, chi);
  return value;
}

// General route: x-weight w(x) not separable, y-factors separable.
cplx weighted_pair(const Grid& grid, double eps, std::span<const cplx> psi,
                   std::span<const cplx> chi, const std::vector<double>& w,
                   const std::vector<std::vector<cplx>>& yfs) {
  const int d = grid.dim();
  const std::size_t nx = grid.size();
  const auto strides = grid.strides();
  std::vector<int> J(d);
  std::size_t nj = 1;
  for (int i = 0; i < d; ++i) {
    J[i] = static_cast<int>(yfs[i].size() / 2);
    nj *= yfs[i].size();
  }
  std::vector<int> xi(nx * d);
  for (std::size_t n = 0; n < nx; ++n) grid.unflatten(n, std::span<int>(xi.data() + n * d, d));
  std::vector<std::size_t> active;
  for (std::size_t n = 0; n < nx; ++n)
    if (w[n] != 0.0) active.push_back(n);

  cplx total = 0.0;
  std::vector<int> j(d);
  for (std::size_t q = 0; q < nj; ++q) {
    std::size_t rest = q;
    cplx c = 1.0;
    for (int i = d - 1; i >= 0; --i) {
      const int len = 2 * J[i] + 1;
      j[i] = static_cast<int>(rest % len) - J[i];
      rest /= len;
      c *= yfs[i][j[i] + J[i]];
    }
    if (c == 0.0) continue;
    cplx s = 0.0;
    for (std::size_t n : active) {
      std::size_t a = 0, b = 0;
      for (int i = 0; i < d; ++i) {
        a += wrap(xi[n * d + i] + j[i], grid.points[i]) * strides[i];
        b += wrap(xi[n * d + i] - j[i], grid.points[i]) * strides[i];
      }
      s += w[n] * psi[a] * std::conj(chi[b]);
    }
    total += c * s;
  }
  const cplx value = pairing_scale(grid, eps) * total;
  double sup_x = 0.0;
  for (double v : w) sup_x = std::max(sup_x, std::abs(v));
  check_bound(grid, eps, value, sup_x, yfs, psi, chi);
  return value;
}

std::vector<AxisFactor> plain_factors(const Grid& grid, double eps, const TestFunction& phi) {
  std::vector<AxisFactor> f(grid.dim());
  for (int i = 0; i < grid.dim(); ++i) {
    f[i].J = quadrature_half_width(grid, eps, phi, i);
    f[i].g = x_factor(grid, phi, i, false);
    f[i].yf = y_factor(grid, eps, phi, i, f[i].J, YKind::kPlain);
  }
  return f;
}

void check_dims(const WaveFunction& wf, const TestFunction& phi) {
  phi.validate();
  if (phi.dim() != wf.grid.dim())
    throw Error(ErrorKind::kInvalidArgument, "probe " + phi.id + " has the wrong dimension");
}

}  // namespace

cplx pair_bilinear(const WaveFunction& wf, std::span<const cplx> psi, std::span<const cplx> chi,
                   const TestFunction& phi) {
  check_dims(wf, phi);
  return separable_pair(wf.grid, wf.eps, psi, chi, plain_factors(wf.grid, wf.eps, phi), phi.amplitude);
}

cplx pair_bilinear(const WaveFunction& psi, std::span<const cplx> chi, const TestFunction& phi) {
  return pair_bilinear(psi, psi.values, chi, phi);
}

double pair(const WaveFunction& wf, const TestFunction& phi) {
  if (phi.amplitude == 0.0) return 0.0;
  return pair_bilinear(wf, wf.values, wf.values, phi).real();
}

double pair_transport(const WaveFunction& wf, const TestFunction& phi) {
  check_dims(wf, phi);
  if (phi.amplitude == 0.0) return 0.0;
  const auto base = plain_factors(wf.grid, wf.eps, phi);
  double s = 0.0;
  for (int i = 0; i < wf.grid.dim(); ++i) {
    auto f = base;
    f[i].g = x_factor(wf.grid, phi, i, true);
    f[i].yf = y_factor(wf.grid, wf.eps, phi, i, f[i].J, YKind::kMomentum);
    s += separable_pair(wf.grid, wf.eps, wf.values, wf.values, f, phi.amplitude).real();
  }
  return s;
}

double source_pair(const WaveFunction& wf, const std::vector<double>& u, const TestFunction& phi) {
  if (phi.amplitude == 0.0) return 0.0;
  std::vector<cplx> upsi(wf.values.size());
  for (std::size_t i = 0; i < upsi.size(); ++i) upsi[i] = u[i] * wf.values[i];
  return 2.0 / wf.eps * pair_bilinear(wf, upsi, wf.values, phi).imag();
}

double source_pair(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi) {
  return source_pair(wf, sample_potential(wf.grid, spec), phi);
}

double pair_force(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi) {
  check_dims(wf, phi);
  if (phi.amplitude == 0.0) return 0.0;
  const Grid& g = wf.grid;
  const int d = g.dim();
  const auto base = plain_factors(g, wf.eps, phi);

  // w_i(x) = A dU/dx_i(x) prod_k g_k(x_k), evaluated only where the probe is non-negligible.
  std::vector<std::vector<double>> w(d, std::vector<double>(g.size(), 0.0));
  std::vector<int> idx(d);
  std::vector<double> x(d), grad(d);
  for (std::size_t n = 0; n < g.size(); ++n) {
    g.unflatten(n, idx);
    double gx = phi.amplitude;
    for (int i = 0; i < d; ++i) gx *= base[i].g[idx[i]];
    if (gx == 0.0) continue;
    g.position(n, x);
    try {
      eval_grad_u(spec, x, grad);
    } catch (const Error& e) {
      // A grid node on a crossing apex: take the symmetric difference quotient, 0.
      if (e.kind() != ErrorKind::kNonDifferentiable) throw;
      std::fill(grad.begin(), grad.end(), 0.0);
    }
    for (int i = 0; i < d; ++i) w[i][n] = gx * grad[i];
  }
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    std::vector<std::vector<cplx>> yfs(d);
    for (int k = 0; k < d; ++k)
      yfs[k] = y_factor(g, wf.eps, phi, k, base[k].J, k == i ? YKind::kDerivative : YKind::kPlain);
    s += weighted_pair(g, wf.eps, wf.values, wf.values, w[i], yfs).real();
  }
  return s;
}

bool outside_theorem_scope(const TestFunction& phi, const PotentialSpec& spec) {
  return distance_to_nonsmooth(spec, phi.x0) <= phi.support_radius();
}

double remainder_g(const WaveFunction& wf, const PotentialSpec& spec, const TestFunction& phi) {
  if (phi.amplitude == 0.0) return 0.0;
  if (outside_theorem_scope(phi, spec))
    throw Error(ErrorKind::kSupportTouchesSingularSet,
                "probe " + phi.id + " reaches a point where U is not C^1");
  return source_pair(wf, spec, phi) + pair_force(wf, spec, phi);
}

double wigner_residual(const std::vector<WaveFunction>& snapshots, const PotentialSpec& spec,
                       const TestFunction& phi) {
  if (snapshots.size() < 3)
    throw Error(ErrorKind::kInvalidArgument, "Wigner residual needs at least three snapshots");
  const std::size_t mid = snapshots.size() / 2;
  const auto& prev = snapshots[mid - 1];
  const auto& cur = snapshots[mid];
  const auto& next = snapshots[mid + 1];
  const double span = next.time - prev.time;
  if (!(span > 0.0)) throw Error(ErrorKind::kInvalidArgument, "snapshots must increase in time");
  const double ddt = (pair(next, phi) - pair(prev, phi)) / span;
  const auto u = sample_potential(cur.grid, spec);
  return std::abs(ddt - pair_transport(cur, phi) - source_pair(cur, u, phi));
}

}  // namespace qcl
