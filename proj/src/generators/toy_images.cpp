#include "deepdeblur/generators/toy_images.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::gen {

namespace {

// Segments a..g as unit-box line segments (x0, y0, x1, y1), y pointing down.
constexpr std::array<std::array<double, 4>, 7> kSegments{{
    {0.0, 0.0, 1.0, 0.0},  // a
    {1.0, 0.0, 1.0, 0.5},  // b
    {1.0, 0.5, 1.0, 1.0},  // c
    {0.0, 1.0, 1.0, 1.0},  // d
    {0.0, 0.5, 0.0, 1.0},  // e
    {0.0, 0.0, 0.0, 0.5},  // f
    {0.0, 0.5, 1.0, 0.5},  // g
}};

// Bit i set means segment i is lit.
constexpr std::array<unsigned, 10> kDigits{0x3f, 0x06, 0x5b, 0x4f, 0x66, 0x6d, 0x7d, 0x07, 0x7f, 0x6f};

double segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (x0 + t * dx), ey = py - (y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

diff::Tensor toy_image(const ToyImageConfig& config, std::uint64_t index) {
  if (config.size < 8) throw UsageError("toy images need size >= 8");
  if (config.channels != 1 && config.channels != 3) throw UsageError("toy images have 1 or 3 channels");
  std::mt19937_64 rng(mix(config.seed ^ mix(index)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(config.size);

  const unsigned digit = kDigits[static_cast<std::size_t>(u(rng) * 10.0) % 10];
  const double height = s * (0.45 + 0.35 * u(rng));
  const double width = height * (0.45 + 0.15 * u(rng));
  const double slant = 0.15 * (u(rng) - 0.5);
  const double stroke = s * (0.06 + 0.05 * u(rng));
  // Centred like cropped house numbers, with a small positional jitter.
  const double left = 0.5 * (s - width) + 0.1 * s * (u(rng) - 0.5);
  const double top = 0.5 * (s - height) + 0.1 * s * (u(rng) - 0.5);

  std::array<double, 3> bg{}, fg{};
  const double bg_level = 0.05 + 0.35 * u(rng);
  const double fg_level = 0.6 + 0.35 * u(rng);
  for (std::size_t c = 0; c < 3; ++c) {
    const double jitter = config.channels == 3 ? 0.15 * (u(rng) - 0.5) : 0.0;
    bg[c] = std::clamp(bg_level + jitter, 0.0, 1.0);
    fg[c] = std::clamp(fg_level - jitter, 0.0, 1.0);
  }
  if (u(rng) < 0.5) std::swap(bg, fg);  // light-on-dark or dark-on-light

  diff::Tensor img({config.size, config.size, config.channels});
  for (std::size_t r = 0; r < config.size; ++r) {
    for (std::size_t c = 0; c < config.size; ++c) {
      const double py = static_cast<double>(r) + 0.5, px = static_cast<double>(c) + 0.5;
      double d = 1e9;
      for (std::size_t seg = 0; seg < kSegments.size(); ++seg) {
        if (!(digit >> seg & 1u)) continue;
        const auto& g = kSegments[seg];
        auto map_x = [&](double x, double y) { return left + x * width + slant * (1.0 - y) * height; };
        d = std::min(d, segment_distance(px, py, map_x(g[0], g[1]), top + g[1] * height, map_x(g[2], g[3]),
                                         top + g[3] * height));
      }
      // One-pixel linear ramp at the stroke edge for antialiasing.
      const double cover = std::clamp(0.5 * stroke - d + 0.5, 0.0, 1.0);
      for (std::size_t ch = 0; ch < config.channels; ++ch) {
        img[(r * config.size + c) * config.channels + ch] = static_cast<float>(bg[ch] + cover * (fg[ch] - bg[ch]));
      }
    }
  }
  return img;
}

std::vector<diff::Tensor> toy_image_set(const ToyImageConfig& config, std::size_t count) {
  std::vector<diff::Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(toy_image(config, i));
  return out;
}

}  // namespace deepdeblur::gen
