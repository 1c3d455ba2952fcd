#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace qcl {

using cplx = std::complex<double>;

// Periodic tensor grid, row-major with the last axis fastest.
// Point j on axis i sits at lower[i] + (j + stagger[i]) * h(i).
struct Grid {
  std::vector<double> lower;
  std::vector<double> extent;
  std::vector<int> points;
  std::vector<double> stagger;

  // Box [-L/2, L/2)^d.
  static Grid cube(int dim, double extent, int points, double stagger = 0.0);

  int dim() const { return static_cast<int>(points.size()); }
  double h(int axis) const { return extent[axis] / points[axis]; }
  double cell_volume() const;
  std::size_t size() const;
  double center(int axis) const { return lower[axis] + 0.5 * extent[axis]; }
  double coord(int axis, int j) const { return lower[axis] + (j + stagger[axis]) * h(axis); }

  // Angular wavenumbers in FFT order: 2 pi m / L with m in [-N/2, N/2).
  std::vector<double> wavenumbers(int axis) const;
  std::vector<std::size_t> strides() const;
  // Decode a flat index into per-axis indices.
  void unflatten(std::size_t flat, std::span<int> idx) const;
  void position(std::size_t flat, std::span<double> x) const;

  void validate() const;
  bool operator==(const Grid&) const = default;
};

bool is_power_of_two(int n);
int next_power_of_two(int n);

// Smallest power-of-two count with h <= eps pi / (3 p_max), at least min_points.
int points_for_resolution(double extent, double eps, double p_max, int min_points);

// In-place complex FFTs through cached FFTW plans. sign = -1 forward, +1 backward
// (unnormalized, FFTW convention).
inline constexpr int kForward = -1;
inline constexpr int kBackward = 1;
void fft_nd(std::span<cplx> data, const std::vector<int>& dims, int sign);
// 1D transforms along one axis of a row-major array, for every other index.
void fft_axis(std::span<cplx> data, const std::vector<int>& dims, int axis, int sign);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

}  // namespace qcl
