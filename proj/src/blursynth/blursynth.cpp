#include "deepdeblur/blursynth/blursynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/errors.hpp"
#include "deepdeblur/io/container.hpp"
#include "deepdeblur/io/png.hpp"
#include "deepdeblur/random.hpp"

namespace deepdeblur::blur {

using diff::Tensor;

namespace {

constexpr double kCentre = (kCanvas - 1) / 2.0;
constexpr double kMaxSpan = kCanvas - 1;
constexpr std::size_t kWalkSteps = 64;
constexpr double kAccelStd = 0.35;
constexpr double kImpulseProb = 0.04;

void splat(Tensor& canvas, double x, double y, double mass) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const long c0 = static_cast<long>(fx), r0 = static_cast<long>(fy);
  const double w[2][2] = {{(1 - ay) * (1 - ax), (1 - ay) * ax}, {ay * (1 - ax), ay * ax}};
  const long n = static_cast<long>(kCanvas);
  for (int dr = 0; dr < 2; ++dr) {
    for (int dc = 0; dc < 2; ++dc) {
      if (w[dr][dc] == 0.0) continue;
      const long r = r0 + dr, c = c0 + dc;
      if (r < 0 || c < 0 || r >= n || c >= n) throw RangeError("trajectory leaves the 28x28 canvas");
      canvas[static_cast<std::size_t>(r * n + c)] += static_cast<float>(mass * w[dr][dc]);
    }
  }
}

}  // namespace

double polyline_length(const std::vector<Point>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
  return len;
}

std::vector<Point> random_trajectory(double length, std::uint64_t seed) {
  if (!(length >= 1.0 && length <= static_cast<double>(kCanvas))) {
    throw RangeError("trajectory length must lie in [1, 28]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> accel(0.0, kAccelStd);

  const double theta = 2.0 * std::numbers::pi * unit(rng);
  double vx = std::cos(theta), vy = std::sin(theta);
  std::vector<Point> path{{0.0, 0.0}};
  path.reserve(kWalkSteps + 1);
  for (std::size_t t = 0; t < kWalkSteps; ++t) {
    vx += accel(rng);
    vy += accel(rng);
    if (unit(rng) < kImpulseProb) {
      // Sudden jerk: turn by 60-150 degrees either way.
      const double turn = (unit(rng) < 0.5 ? -1.0 : 1.0) * std::numbers::pi * (1.0 / 3.0 + 0.5 * unit(rng));
      const double c = std::cos(turn), s = std::sin(turn);
      const double nx = c * vx - s * vy, ny = s * vx + c * vy;
      vx = nx;
      vy = ny;
    }
    // Keep the speed bounded away from zero so every step advances.
    const double speed = std::hypot(vx, vy);
    if (speed < 0.25) {
      vx *= 0.25 / speed;
      vy *= 0.25 / speed;
    } else if (speed > 2.0) {
      vx *= 2.0 / speed;
      vy *= 2.0 / speed;
    }
    path.push_back({path.back().x + vx, path.back().y + vy});
  }

  const double scale = length / polyline_length(path);
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (Point& p : path) {
    p.x *= scale;
    p.y *= scale;
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span = std::max(max_x - min_x, max_y - min_y);
  const double fit = span > kMaxSpan ? kMaxSpan / span : 1.0;
  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  for (Point& p : path) {
    p.x = std::clamp(kCentre + fit * (p.x - cx), 0.0, kMaxSpan);
    p.y = std::clamp(kCentre + fit * (p.y - cy), 0.0, kMaxSpan);
  }
  return path;
}

BlurKernel rasterize(const std::vector<Point>& path, double spacing) {
  if (path.empty()) throw UsageError("cannot rasterize an empty trajectory");
  if (!(spacing > 0.0)) throw UsageError("sample spacing must be positive");
  Tensor canvas({kCanvas, kCanvas}, 0.0f);
  const double total = polyline_length(path);
  if (total < 1e-9) {
    for (const Point& p : path) splat(canvas, p.x, p.y, 1.0 / static_cast<double>(path.size()));
  } else {
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(total / spacing)));
    const double piece = total / static_cast<double>(n);
    std::size_t seg = 1;
    double seg_start = 0.0;
    double seg_len = std::hypot(path[1].x - path[0].x, path[1].y - path[0].y);
    for (std::size_t j = 0; j < n; ++j) {
      const double s = (static_cast<double>(j) + 0.5) * piece;
      while (seg + 1 < path.size() && s > seg_start + seg_len) {
        seg_start += seg_len;
        ++seg;
        seg_len = std::hypot(path[seg].x - path[seg - 1].x, path[seg].y - path[seg - 1].y);
      }
      const double t = seg_len > 0.0 ? std::clamp((s - seg_start) / seg_len, 0.0, 1.0) : 0.0;
      const Point& a = path[seg - 1];
      const Point& b = path[seg];
      splat(canvas, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), 1.0);
    }
  }
  double mass = 0.0;
  for (float v : canvas.data()) mass += v;
  for (float& v : canvas.data()) v = static_cast<float>(v / mass);
  return {std::move(canvas), total, 0};
}

BlurKernel synthesize_kernel(double length, std::uint64_t seed) {
  BlurKernel k = rasterize(random_trajectory(length, seed));
  k.length = length;
  k.seed = seed;
  return k;
}

bool satisfies_kernel_invariants(const Tensor& canvas, double tol) {
  if (canvas.shape() != diff::Shape{kCanvas, kCanvas}) return false;
  double sum = 0.0;
  for (float v : canvas.data()) {
    if (!std::isfinite(v) || v < 0.0f) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

BlurDatasetConfig published_blur_dataset_config() {
  BlurDatasetConfig c;
  c.count = 80000;
  c.min_length = 5.0;
  c.max_length = 28.0;
  c.test_fraction = 0.25;
  return c;
}

BlurDataset generate_blur_dataset(const BlurDatasetConfig& config) {
  if (config.count == 0) throw UsageError("blur dataset count must be at least 1");
  if (!(config.test_fraction >= 0.0 && config.test_fraction <= 1.0)) {
    throw RangeError("test split fraction must lie in [0, 1]");
  }
  if (!(config.min_length >= 1.0 && config.min_length <= config.max_length && config.max_length <= 28.0)) {
    throw RangeError("blur length range must satisfy 1 <= min <= max <= 28");
  }
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(config.count) * config.test_fraction));
  BlurDataset out;
  out.train.reserve(config.count - n_test);
  out.test.reserve(n_test);
  for (std::size_t j = 0; j < config.count; ++j) {
    const std::uint64_t seed = derive_seed(config.seed, {0xb1u, j});
    std::mt19937_64 rng(seed);
    const double length = std::uniform_real_distribution<double>(config.min_length, config.max_length)(rng);
    BlurKernel k = synthesize_kernel(length, rng());
    k.seed = seed;
    (j < config.count - n_test ? out.train : out.test).push_back(std::move(k));
  }
  return out;
}

Observation simulate_observation(const Tensor& image, const Tensor& kernel, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw RangeError("noise sigma must be >= 0");
  for (float v : image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw RangeError("observation images must lie in [0, 1]");
  }
  Observation obs;
  obs.y = diff::circular_convolve(image, kernel);
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (float& v : obs.y.data()) v = static_cast<float>(v + noise(rng));
  }
  obs.y_clipped = obs.y;
  for (float& v : obs.y_clipped.data()) v = std::clamp(v, 0.0f, 1.0f);
  obs.truth = Observation::Truth{image, kernel, noise_sigma, seed};
  return obs;
}

void save_kernels(const std::filesystem::path& path, const std::vector<BlurKernel>& kernels) {
  io::TensorArchive archive;
  nlohmann::json lengths = nlohmann::json::array(), seeds = nlohmann::json::array();
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    lengths.push_back(kernels[i].length);
    seeds.push_back(kernels[i].seed);
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%05zu", i);
    archive.tensors.emplace_back(name, kernels[i].canvas);
  }
  archive.meta = {{"format", "deepdeblur-kernels"}, {"count", kernels.size()}, {"lengths", lengths}, {"seeds", seeds}};
  io::write_archive(path, archive);
}

std::vector<BlurKernel> load_kernels(const std::filesystem::path& path) {
  io::TensorArchive archive = io::read_archive(path);
  try {
    if (archive.meta.at("format").get<std::string>() != "deepdeblur-kernels") {
      throw FormatError(path.string() + " does not hold a kernel set");
    }
    const auto& lengths = archive.meta.at("lengths");
    const auto& seeds = archive.meta.at("seeds");
    if (lengths.size() != archive.tensors.size() || seeds.size() != archive.tensors.size()) {
      throw FormatError("kernel set manifest disagrees with its tensor count");
    }
    std::vector<BlurKernel> out;
    for (std::size_t i = 0; i < archive.tensors.size(); ++i) {
      Tensor& t = archive.tensors[i].second;
      if (t.shape() != diff::Shape{kCanvas, kCanvas}) throw FormatError("kernel entries must be 28x28");
      out.push_back({std::move(t), lengths[i].get<double>(), seeds[i].get<std::uint64_t>()});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed kernel set manifest: ") + e.what());
  }
}

void write_kernel_pngs(const std::filesystem::path& dir, const std::vector<BlurKernel>& kernels) {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%05zu.png", i);
    io::write_png16_max_normalized(dir / name, kernels[i].canvas);
  }
}

}  // namespace deepdeblur::blur
