#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::blur {

inline constexpr std::size_t kCanvas = 28;

// Canvas coordinates: x is the column, y the row, and pixel (r, c) has its
// centre at (c, r). The canvas centre is (13.5, 13.5).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct BlurKernel {
  diff::Tensor canvas;  // [28, 28], nonnegative, sums to 1
  double length = 0.0;  // requested arc length in pixels
  std::uint64_t seed = 0;
};

// Camera-shake path of the given arc length. A velocity random walk with
// Gaussian acceleration and occasional impulsive turns is integrated, scaled
// to the requested arc length and centred on the canvas. Paths whose
// bounding box exceeds the canvas are shrunk to fit.
std::vector<Point> random_trajectory(double length, std::uint64_t seed);

double polyline_length(const std::vector<Point>& path);

// Bilinear splatting of samples spaced `spacing` pixels apart along the path
// (at the midpoints of equal arc pieces), normalized to unit mass. A path of
// zero length splats its points directly.
BlurKernel rasterize(const std::vector<Point>& path, double spacing = 1.0);

BlurKernel synthesize_kernel(double length, std::uint64_t seed);

bool satisfies_kernel_invariants(const diff::Tensor& canvas, double tol = 1e-6);

struct BlurDatasetConfig {
  std::size_t count = 100;
  double min_length = 5.0;
  double max_length = 28.0;
  double test_fraction = 0.25;
  std::uint64_t seed = 0;

  friend bool operator==(const BlurDatasetConfig&, const BlurDatasetConfig&) = default;
};

// 80K kernels with 20K held out, lengths in [5, 28].
BlurDatasetConfig published_blur_dataset_config();

struct BlurDataset {
  std::vector<BlurKernel> train;
  std::vector<BlurKernel> test;
};

// Kernel j draws its length and path from a seed derived from (seed, j); the
// last round(count * test_fraction) kernels form the test split.
BlurDataset generate_blur_dataset(const BlurDatasetConfig& config);

struct Observation {
  diff::Tensor y;          // unclipped, what solvers consume
  diff::Tensor y_clipped;  // for viewing
  struct Truth {
    diff::Tensor image;
    diff::Tensor kernel;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
  };
  std::optional<Truth> truth;
};

// y = image (*) kernel + n, n ~ N(0, sigma^2 I), circular convolution.
Observation simulate_observation(const diff::Tensor& image, const diff::Tensor& kernel, double noise_sigma,
                                 std::uint64_t seed);

// Kernel sets use the tensor container ("deepdeblur-kernels").
void save_kernels(const std::filesystem::path& path, const std::vector<BlurKernel>& kernels);
std::vector<BlurKernel> load_kernels(const std::filesystem::path& path);
// One 16-bit max-normalized PNG per kernel, named kernel_00000.png, ...
void write_kernel_pngs(const std::filesystem::path& dir, const std::vector<BlurKernel>& kernels);

}  // namespace deepdeblur::blur
