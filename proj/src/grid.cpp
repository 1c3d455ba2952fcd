#include "qcl/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "qcl/error.hpp"

namespace qcl {

Grid Grid::cube(int dim, double extent, int points, double stagger) {
  Grid g;
  g.lower.assign(dim, -0.5 * extent);
  g.extent.assign(dim, extent);
  g.points.assign(dim, points);
  g.stagger.assign(dim, stagger);
  g.validate();
  return g;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= h(i);
  return v;
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (int p : points) n *= static_cast<std::size_t>(p);
  return n;
}

std::vector<double> Grid::wavenumbers(int axis) const {
  const int n = points[axis];
  std::vector<double> k(n);
  const double base = 2.0 * M_PI / extent[axis];
  for (int m = 0; m < n; ++m) k[m] = base * (m < n / 2 ? m : m - n);
  return k;
}

std::vector<std::size_t> Grid::strides() const {
  std::vector<std::size_t> s(dim(), 1);
  for (int i = dim() - 2; i >= 0; --i) s[i] = s[i + 1] * points[i + 1];
  return s;
}

void Grid::unflatten(std::size_t flat, std::span<int> idx) const {
  for (int i = dim() - 1; i >= 0; --i) {
    idx[i] = static_cast<int>(flat % points[i]);
    flat /= points[i];
  }
}

void Grid::position(std::size_t flat, std::span<double> x) const {
  for (int i = dim() - 1; i >= 0; --i) {
    x[i] = coord(i, static_cast<int>(flat % points[i]));
    flat /= points[i];
  }
}

void Grid::validate() const {
  const auto d = points.size();
  if (d == 0) throw Error(ErrorKind::kInvalidArgument, "grid needs at least one axis");
  if (lower.size() != d || extent.size() != d || stagger.size() != d)
    throw Error(ErrorKind::kInvalidArgument, "grid axis metadata has inconsistent lengths");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(extent[i] > 0.0)) throw Error(ErrorKind::kInvalidArgument, "grid extent must be > 0");
    if (points[i] < 2 || !is_power_of_two(points[i]))
      throw Error(ErrorKind::kInvalidArgument, "grid point count must be a power of two >= 2");
    if (!(stagger[i] >= 0.0 && stagger[i] < 1.0))
      throw Error(ErrorKind::kInvalidArgument, "grid stagger must lie in [0, 1)");
  }
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_power_of_two(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

int points_for_resolution(double extent, double eps, double p_max, int min_points) {
  const double hmax = eps * M_PI / (3.0 * p_max);
  const int need = static_cast<int>(std::ceil(extent / hmax - 1e-9));
  return next_power_of_two(std::max(need, min_points));
}

namespace {

// FFTW's planner is not thread-safe; execution of a finished plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

using PlanKey = std::tuple<std::vector<int>, int, int>;

fftw_plan cached_plan(const std::vector<int>& dims, int axis, int sign) {
  static std::map<PlanKey, fftw_plan> cache;
  std::lock_guard lock(planner_mutex());
  PlanKey key{dims, axis, sign};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  std::size_t total = 1;
  for (int n : dims) total *= static_cast<std::size_t>(n);
  auto* scratch = fftw_alloc_complex(total);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan plan = nullptr;
  if (axis < 0) {
    plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), scratch, scratch, sign, flags);
  } else {
    int inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    for (int i = 0; i < axis; ++i) outer *= dims[i];
    fftw_iodim dim{dims[axis], inner, inner};
    fftw_iodim loops[2] = {{outer, dims[axis] * inner, dims[axis] * inner}, {inner, 1, 1}};
    plan = fftw_plan_guru_dft(1, &dim, 2, loops, scratch, scratch, sign, flags);
  }
  fftw_free(scratch);
  if (!plan) throw Error(ErrorKind::kInvalidArgument, "FFTW could not create a plan");
  cache.emplace(std::move(key), plan);
  return plan;
}

}  // namespace

void fft_nd(std::span<cplx> data, const std::vector<int>& dims, int sign) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(cached_plan(dims, -1, sign), p, p);
}

void fft_axis(std::span<cplx> data, const std::vector<int>& dims, int axis, int sign) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(cached_plan(dims, axis, sign), p, p);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace qcl
