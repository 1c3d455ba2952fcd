#include "qcl/quantum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "qcl/error.hpp"

namespace qcl {

void PacketSpec::validate(int dim) const {
  if (static_cast<int>(x0.size()) != dim || static_cast<int>(p0.size()) != dim)
    throw Error(ErrorKind::kInvalidArgument, "packet center must have d components");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorKind::kInvalidArgument, "packet alpha must lie in (0, 1)");
  if (sigma.size() != 1 && static_cast<int>(sigma.size()) != dim)
    throw Error(ErrorKind::kInvalidArgument, "packet sigma needs 1 or d entries");
  if (!chirp.empty() && chirp.size() != 1 && static_cast<int>(chirp.size()) != dim)
    throw Error(ErrorKind::kInvalidArgument, "packet chirp needs 0, 1 or d entries");
  for (double s : sigma)
    if (!(s > 0.0)) throw Error(ErrorKind::kInvalidArgument, "packet sigma must be > 0");
}

double PacketSpec::sigma_at(int axis) const { return sigma.size() == 1 ? sigma[0] : sigma[axis]; }

double PacketSpec::chirp_at(int axis) const {
  if (chirp.empty()) return 0.0;
  return chirp.size() == 1 ? chirp[0] : chirp[axis];
}

double packet_position_spread(const PacketSpec& spec, double eps, int axis) {
  return std::pow(eps, spec.alpha) * spec.sigma_at(axis) / std::sqrt(2.0);
}

double packet_momentum_spread(const PacketSpec& spec, double eps, int axis) {
  // envelope exp(-a z^2) with a = 1/(2 sigma^2) - i chirp
  const double s = spec.sigma_at(axis);
  const double re = 1.0 / (2.0 * s * s);
  const double im = -spec.chirp_at(axis);
  return std::pow(eps, 1.0 - spec.alpha) * std::sqrt((re * re + im * im) / re);
}

AxisCovariance packet_wigner_covariance(const PacketSpec& spec, double eps, int axis) {
  const double s = spec.sigma_at(axis);
  AxisCovariance c;
  c.xx = s * s * std::pow(eps, 2.0 * spec.alpha) / 2.0;
  const double slope = 2.0 * spec.chirp_at(axis) * std::pow(eps, 1.0 - 2.0 * spec.alpha);
  c.xp = slope * c.xx;
  c.pp = 0.25 * eps * eps / c.xx + slope * slope * c.xx;
  return c;
}

void check_packet_admissible(const Grid& grid, double eps, const PacketSpec& spec) {
  spec.validate(grid.dim());
  if (!(eps > 0.0 && eps <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "eps must lie in (0, 1]");
  for (int i = 0; i < grid.dim(); ++i) {
    const double sp = packet_momentum_spread(spec, eps, i);
    const double hmax = eps * M_PI / (3.0 * (std::abs(spec.p0[i]) + 3.0 * sp));
    if (grid.h(i) > hmax * (1.0 + 1e-12))
      throw Error(ErrorKind::kGridTooCoarse, "axis " + std::to_string(i) + ": h = " +
                                                 std::to_string(grid.h(i)) + " exceeds " +
                                                 std::to_string(hmax));
    const double L = grid.extent[i];
    const double width = std::pow(eps, spec.alpha) * spec.sigma_at(i);
    const double margin = std::min(spec.x0[i] - grid.lower[i], grid.lower[i] + L - spec.x0[i]);
    if (width > L / 8.0 || margin < L / 8.0)
      throw Error(ErrorKind::kPacketClipped, "axis " + std::to_string(i) +
                                                 ": packet too wide or too close to the box edge");
  }
}

WaveFunction make_packet(const Grid& grid, double eps, const PacketSpec& spec) {
  check_packet_admissible(grid, eps, spec);
  const int d = grid.dim();
  WaveFunction wf{grid, eps, 0.0, std::vector<cplx>(grid.size())};

  // Separable: build each axis factor once.
  std::vector<std::vector<cplx>> factors(d);
  const double scale = std::pow(eps, spec.alpha);
  for (int i = 0; i < d; ++i) {
    const double s = spec.sigma_at(i);
    const double beta = spec.chirp_at(i);
    const double pref = std::pow(M_PI * s * s, -0.25) / std::sqrt(scale);
    factors[i].resize(grid.points[i]);
    for (int j = 0; j < grid.points[i]; ++j) {
      const double x = grid.coord(i, j);
      const double z = (x - spec.x0[i]) / scale;
      const double phase = spec.p0[i] * x / eps + beta * z * z;
      factors[i][j] = pref * std::exp(-z * z / (2.0 * s * s)) * std::polar(1.0, phase);
    }
  }
  std::vector<int> idx(d);
  for (std::size_t n = 0; n < wf.values.size(); ++n) {
    grid.unflatten(n, idx);
    cplx v = 1.0;
    for (int i = 0; i < d; ++i) v *= factors[i][idx[i]];
    wf.values[n] = v;
  }
  const double nrm = norm(wf);
  for (auto& v : wf.values) v /= nrm;
  return wf;
}

std::vector<double> sample_potential(const Grid& grid, const PotentialSpec& spec) {
  if (spec.dim() != grid.dim())
    throw Error(ErrorKind::kInvalidArgument, "potential and grid dimensions differ");
  std::vector<double> u(grid.size());
  std::vector<double> x(grid.dim());
  for (std::size_t n = 0; n < u.size(); ++n) {
    grid.position(n, x);
    if (spec.has_singular_part() && dist_to_singular(spec, x) <= spec.guard_radius())
      throw Error(ErrorKind::kSingularGridPoint, "grid node within the guard radius of S");
    u[n] = eval_u(spec, x);
  }
  return u;
}

namespace {

std::vector<double> k_squared(const Grid& grid) {
  const int d = grid.dim();
  std::vector<std::vector<double>> k(d);
  for (int i = 0; i < d; ++i) k[i] = grid.wavenumbers(i);
  std::vector<double> k2(grid.size());
  std::vector<int> idx(d);
  for (std::size_t n = 0; n < k2.size(); ++n) {
    grid.unflatten(n, idx);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += k[i][idx[i]] * k[i][idx[i]];
    k2[n] = s;
  }
  return k2;
}

}  // namespace

Propagator::Propagator(const Grid& grid, double eps, const PotentialSpec& spec, double dt,
                       double c_t)
    : grid_(grid), eps_(eps), dt_(dt), potential_(sample_potential(grid, spec)) {
  if (std::abs(dt) > c_t * eps * (1.0 + 1e-12))
    throw Error(ErrorKind::kTimestepTooLarge,
                "|dt| = " + std::to_string(std::abs(dt)) + " exceeds c_t eps = " + std::to_string(c_t * eps));
  const std::size_t n = grid.size();
  half_phase_.resize(n);
  full_phase_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    half_phase_[i] = std::polar(1.0, -potential_[i] * dt / (2.0 * eps));
    full_phase_[i] = std::polar(1.0, -potential_[i] * dt / eps);
  }
  const auto k2 = k_squared(grid);
  kinetic_phase_.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) kinetic_phase_[i] = std::polar(inv_n, -eps * k2[i] * dt / 2.0);
}

void Propagator::advance(WaveFunction& wf, long nsteps) const {
  if (nsteps <= 0) return;
  if (!(wf.grid == grid_) || wf.eps != eps_)
    throw Error(ErrorKind::kInvalidArgument, "wavefunction does not match the propagator grid");
  auto& v = wf.values;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) v[i] *= half_phase_[i];
  for (long s = 0; s < nsteps; ++s) {
    fft_nd(v, grid_.points, kForward);
    for (std::size_t i = 0; i < n; ++i) v[i] *= kinetic_phase_[i];
    fft_nd(v, grid_.points, kBackward);
    const auto& ph = s + 1 < nsteps ? full_phase_ : half_phase_;
    for (std::size_t i = 0; i < n; ++i) v[i] *= ph[i];
  }
  wf.time += static_cast<double>(nsteps) * dt_;
}

WaveFunction propagate(const WaveFunction& wf, const PotentialSpec& spec, double dt, long nsteps,
                       double c_t) {
  Propagator prop(wf.grid, wf.eps, spec, dt, c_t);
  WaveFunction out = wf;
  prop.advance(out, nsteps);
  return out;
}

double norm(const WaveFunction& wf) {
  double s = 0.0;
  for (const auto& v : wf.values) s += std::norm(v);
  return std::sqrt(s * wf.grid.cell_volume());
}

double kinetic_energy(const WaveFunction& wf) {
  std::vector<cplx> f = wf.values;
  fft_nd(f, wf.grid.points, kForward);
  const auto k2 = k_squared(wf.grid);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += k2[i] * std::norm(f[i]);
  return 0.5 * wf.eps * wf.eps * s * wf.grid.cell_volume() / static_cast<double>(f.size());
}

double potential_energy(const WaveFunction& wf, const std::vector<double>& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::norm(wf.values[i]);
  return s * wf.grid.cell_volume();
}

double energy(const WaveFunction& wf, const PotentialSpec& spec) {
  return kinetic_energy(wf) + potential_energy(wf, sample_potential(wf.grid, spec));
}

std::vector<cplx> laplacian(const Grid& grid, std::span<const cplx> values) {
  std::vector<cplx> f(values.begin(), values.end());
  fft_nd(f, grid.points, kForward);
  const auto k2 = k_squared(grid);
  const double inv_n = 1.0 / static_cast<double>(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= -k2[i] * inv_n;
  fft_nd(f, grid.points, kBackward);
  return f;
}

std::vector<cplx> apply_hamiltonian(const WaveFunction& wf, const std::vector<double>& u) {
  auto out = laplacian(wf.grid, wf.values);
  const double c = -0.5 * wf.eps * wf.eps;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * out[i] + u[i] * wf.values[i];
  return out;
}

double h_norm(const WaveFunction& wf, const PotentialSpec& spec) {
  const auto hv = apply_hamiltonian(wf, sample_potential(wf.grid, spec));
  double s = 0.0;
  for (const auto& v : hv) s += std::norm(v);
  return std::sqrt(s * wf.grid.cell_volume());
}

std::vector<double> position_density(const WaveFunction& wf) {
  std::vector<double> rho(wf.values.size());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(wf.values[i]);
  return rho;
}

MomentumDensity momentum_density(const WaveFunction& wf) {
  const Grid& g = wf.grid;
  const int d = g.dim();
  std::vector<cplx> f = wf.values;
  fft_nd(f, g.points, kForward);

  MomentumDensity out;
  out.p.resize(d);
  out.dp.resize(d);
  double scale = 1.0;
  for (int i = 0; i < d; ++i) {
    const int n = g.points[i];
    out.dp[i] = 2.0 * M_PI * wf.eps / g.extent[i];
    out.p[i].resize(n);
    for (int m = 0; m < n; ++m) out.p[i][m] = (m - n / 2) * out.dp[i];
    scale *= g.h(i) * g.h(i) / (2.0 * M_PI * wf.eps);
  }
  // FFT order -> centered order: index m maps to (m + N/2) mod N on each axis.
  out.values.resize(f.size());
  const auto strides = g.strides();
  std::vector<int> idx(d);
  for (std::size_t n = 0; n < f.size(); ++n) {
    g.unflatten(n, idx);
    std::size_t dst = 0;
    for (int i = 0; i < d; ++i) dst += ((idx[i] + g.points[i] / 2) % g.points[i]) * strides[i];
    out.values[dst] = scale * std::norm(f[n]);
  }
  return out;
}

std::vector<double> expectation_x(const WaveFunction& wf) {
  const int d = wf.grid.dim();
  std::vector<double> m(d, 0.0), x(d);
  double total = 0.0;
  for (std::size_t n = 0; n < wf.values.size(); ++n) {
    const double r = std::norm(wf.values[n]);
    wf.grid.position(n, x);
    for (int i = 0; i < d; ++i) m[i] += r * x[i];
    total += r;
  }
  for (auto& v : m) v /= total;
  return m;
}

std::vector<double> expectation_p(const WaveFunction& wf) {
  const auto rho = momentum_density(wf);
  const int d = wf.grid.dim();
  std::vector<double> m(d, 0.0);
  std::vector<int> idx(d);
  double total = 0.0;
  for (std::size_t n = 0; n < rho.values.size(); ++n) {
    wf.grid.unflatten(n, idx);
    for (int i = 0; i < d; ++i) m[i] += rho.values[n] * rho.p[i][idx[i]];
    total += rho.values[n];
  }
  for (auto& v : m) v /= total;
  return m;
}

double boundary_mass(const WaveFunction& wf, double shell) {
  const Grid& g = wf.grid;
  const int d = g.dim();
  std::vector<double> x(d);
  double s = 0.0;
  for (std::size_t n = 0; n < wf.values.size(); ++n) {
    g.position(n, x);
    bool outer = false;
    for (int i = 0; i < d && !outer; ++i)
      outer = std::abs(x[i] - g.center(i)) > (1.0 - shell) * 0.5 * g.extent[i];
    if (outer) s += std::norm(wf.values[n]);
  }
  return s * g.cell_volume();
}

void check_boundary(const WaveFunction& wf, double threshold, double shell) {
  const double m = boundary_mass(wf, shell);
  if (m > threshold)
    throw Error(ErrorKind::kBoundaryContamination,
                "mass " + std::to_string(m) + " in the outer shell at t = " + std::to_string(wf.time));
}

namespace {

void write_le(std::ofstream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_le(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_field(const std::filesystem::path& stem, const WaveFunction& wf,
                 std::uint64_t potential_hash) {
  auto raw = stem;
  raw += ".bin";
  std::ofstream os(raw, std::ios::binary);
  if (!os) throw Error(ErrorKind::kInvalidArgument, "cannot open " + raw.string());
  for (const auto& v : wf.values) {
    write_le(os, v.real());
    write_le(os, v.imag());
  }
  os.close();

  std::ifstream is(raw, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  nlohmann::json meta;
  meta["format"] = "complex128-le-interleaved";
  meta["order"] = "row-major, last axis fastest";
  meta["grid"] = {{"lower", wf.grid.lower},
                  {"extent", wf.grid.extent},
                  {"points", wf.grid.points},
                  {"stagger", wf.grid.stagger}};
  meta["eps"] = wf.eps;
  meta["time"] = wf.time;
  meta["potential_hash"] = hex64(potential_hash);
  meta["checksum"] = hex64(fnv1a(content));
  auto side = stem;
  side += ".json";
  std::ofstream js(side);
  js << meta.dump(2) << "\n";
}

WaveFunction read_field(const std::filesystem::path& stem) {
  auto side = stem;
  side += ".json";
  auto raw = stem;
  raw += ".bin";
  std::ifstream js(side);
  if (!js) throw Error(ErrorKind::kCorruptFile, "missing sidecar " + side.string());
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, side.string() + ": " + e.what());
  }
  WaveFunction wf;
  wf.grid.lower = meta.at("grid").at("lower").get<std::vector<double>>();
  wf.grid.extent = meta.at("grid").at("extent").get<std::vector<double>>();
  wf.grid.points = meta.at("grid").at("points").get<std::vector<int>>();
  wf.grid.stagger = meta.at("grid").at("stagger").get<std::vector<double>>();
  wf.grid.validate();
  wf.eps = meta.at("eps").get<double>();
  wf.time = meta.at("time").get<double>();

  std::ifstream is(raw, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (content.size() != 16 * wf.grid.size() || hex64(fnv1a(content)) != meta.at("checksum").get<std::string>())
    throw Error(ErrorKind::kCorruptFile, raw.string() + ": size or checksum mismatch");
  wf.values.resize(wf.grid.size());
  const auto* b = reinterpret_cast<const unsigned char*>(content.data());
  for (std::size_t i = 0; i < wf.values.size(); ++i)
    wf.values[i] = {read_le(b + 16 * i), read_le(b + 16 * i + 8)};
  return wf;
}

}  // namespace qcl
