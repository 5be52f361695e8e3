#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "deepdeblur/blursynth/blursynth.hpp"
#include "deepdeblur/errors.hpp"

using namespace deepdeblur;
using namespace deepdeblur::blur;
using diff::Tensor;

namespace {

double canvas_sum(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s;
}

}  // namespace

TEST(Trajectory, DeterministicForSeed) {
  const auto a = random_trajectory(5.0, 17);
  const auto b = random_trajectory(5.0, 17);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
  }
  const auto c = random_trajectory(5.0, 18);
  EXPECT_NE(a[a.size() / 2].x, c[c.size() / 2].x);
}

TEST(Trajectory, ArcLengthWithinFivePercent) {
  for (double len : {1.0, 5.0, 10.0, 17.5, 28.0}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto path = random_trajectory(len, seed);
      // Independent polyline length.
      double total = 0.0;
      for (std::size_t i = 1; i < path.size(); ++i) {
        const double dx = path[i].x - path[i - 1].x, dy = path[i].y - path[i - 1].y;
        total += std::sqrt(dx * dx + dy * dy);
      }
      EXPECT_NEAR(total, len, 0.05 * len) << "length " << len << " seed " << seed;
    }
  }
}

TEST(Trajectory, FitsCanvas) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (const Point& p : random_trajectory(28.0, seed)) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LE(p.x, 27.0);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LE(p.y, 27.0);
    }
  }
}

TEST(Trajectory, LengthOutOfRange) {
  EXPECT_THROW(random_trajectory(0.5, 0), RangeError);
  EXPECT_THROW(random_trajectory(28.5, 0), RangeError);
  EXPECT_THROW(random_trajectory(std::nan(""), 0), RangeError);
}

TEST(Rasterize, StationaryPointIsDelta) {
  const BlurKernel k = rasterize({{13.0, 9.0}});
  for (std::size_t r = 0; r < kCanvas; ++r)
    for (std::size_t c = 0; c < kCanvas; ++c) EXPECT_EQ(k.canvas[r * kCanvas + c], (r == 9 && c == 13) ? 1.0f : 0.0f);
}

TEST(Rasterize, HorizontalSegmentSplatsFivePixels) {
  // Length 5 through pixel centres on row 7: samples at x = 10..14.
  const BlurKernel k = rasterize({{9.5, 7.0}, {14.5, 7.0}});
  for (std::size_t r = 0; r < kCanvas; ++r) {
    for (std::size_t c = 0; c < kCanvas; ++c) {
      const float expected = (r == 7 && c >= 10 && c <= 14) ? 0.2f : 0.0f;
      EXPECT_NEAR(k.canvas[r * kCanvas + c], expected, 1e-7) << r << "," << c;
    }
  }
}

TEST(Rasterize, EmptyPathRejected) { EXPECT_THROW(rasterize({}), UsageError); }

TEST(Rasterize, NormalizedAndNonnegative) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const BlurKernel k = synthesize_kernel(5.0 + 0.23 * static_cast<double>(seed), seed);
    EXPECT_NEAR(canvas_sum(k.canvas), 1.0, 1e-6);
    for (float v : k.canvas.data()) EXPECT_GE(v, 0.0f);
    EXPECT_TRUE(satisfies_kernel_invariants(k.canvas));
  }
}

TEST(Dataset, SplitAndDisjointSeeds) {
  BlurDatasetConfig cfg;
  cfg.count = 100;
  cfg.test_fraction = 0.25;
  cfg.seed = 3;
  const BlurDataset ds = generate_blur_dataset(cfg);
  EXPECT_EQ(ds.train.size(), 75u);
  EXPECT_EQ(ds.test.size(), 25u);
  std::set<std::uint64_t> train_seeds;
  for (const auto& k : ds.train) train_seeds.insert(k.seed);
  EXPECT_EQ(train_seeds.size(), 75u);
  for (const auto& k : ds.test) EXPECT_FALSE(train_seeds.contains(k.seed));
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& k : *split) {
      EXPECT_TRUE(satisfies_kernel_invariants(k.canvas));
      EXPECT_GE(k.length, 5.0);
      EXPECT_LE(k.length, 28.0);
    }
  }
}

TEST(Dataset, PublishedConfig) {
  const BlurDatasetConfig cfg = published_blur_dataset_config();
  EXPECT_EQ(cfg.count, 80000u);
  EXPECT_EQ(static_cast<std::size_t>(std::llround(cfg.count * cfg.test_fraction)), 20000u);
  EXPECT_EQ(cfg.min_length, 5.0);
  EXPECT_EQ(cfg.max_length, 28.0);
}

TEST(Dataset, InvalidSplit) {
  BlurDatasetConfig cfg;
  cfg.test_fraction = 1.5;
  EXPECT_THROW(generate_blur_dataset(cfg), RangeError);
  cfg.test_fraction = -0.1;
  EXPECT_THROW(generate_blur_dataset(cfg), RangeError);
}

TEST(Dataset, Reproducible) {
  BlurDatasetConfig cfg;
  cfg.count = 20;
  cfg.seed = 9;
  const BlurDataset a = generate_blur_dataset(cfg), b = generate_blur_dataset(cfg);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].canvas, b.train[i].canvas);
}

TEST(Observation, NoiselessDeltaIsIdentity) {
  Tensor img({6, 5, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i % 11) / 10.0f;
  const Observation obs = simulate_observation(img, Tensor({1, 1}, 1.0f), 0.0, 1);
  EXPECT_EQ(obs.y, img);
  ASSERT_TRUE(obs.truth.has_value());
  EXPECT_EQ(obs.truth->noise_sigma, 0.0);
}

TEST(Observation, NegativeSigmaRejected) {
  EXPECT_THROW(simulate_observation(Tensor({4, 4, 1}, 0.5f), Tensor({1, 1}, 1.0f), -0.01, 0), RangeError);
}

TEST(Observation, NoiseStdMatches) {
  Tensor img({64, 64, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>((i * 37) % 100) / 100.0f;
  const BlurKernel k = synthesize_kernel(12.0, 4);
  const Observation obs = simulate_observation(img, k.canvas, 0.05, 11);
  const Observation clean = simulate_observation(img, k.canvas, 0.0, 11);
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = obs.y[i] - clean.y[i];
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(img.size());
  const double std = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(std, 0.05, 0.005);
  for (float v : obs.y_clipped.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Observation, BlurPreservesMean) {
  Tensor img({40, 36, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>((i * 53) % 97) / 97.0f;
  double mean_in = 0.0;
  for (float v : img.data()) mean_in += v;
  mean_in /= static_cast<double>(img.size());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Observation obs = simulate_observation(img, synthesize_kernel(20.0, seed).canvas, 0.0, 0);
    double mean_out = 0.0;
    for (float v : obs.y.data()) mean_out += v;
    mean_out /= static_cast<double>(img.size());
    EXPECT_NEAR(mean_out, mean_in, 1e-5);
  }
}

TEST(KernelIo, RoundTrip) {
  BlurDatasetConfig cfg;
  cfg.count = 6;
  cfg.test_fraction = 0.0;
  const auto kernels = generate_blur_dataset(cfg).train;
  const auto dir = std::filesystem::temp_directory_path() / "deepdeblur_blursynth_test";
  std::filesystem::remove_all(dir);
  save_kernels(dir / "k.ddb", kernels);
  const auto loaded = load_kernels(dir / "k.ddb");
  ASSERT_EQ(loaded.size(), kernels.size());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    EXPECT_EQ(loaded[i].canvas, kernels[i].canvas);
    EXPECT_EQ(loaded[i].length, kernels[i].length);
    EXPECT_EQ(loaded[i].seed, kernels[i].seed);
  }
  write_kernel_pngs(dir / "png", kernels);
  EXPECT_TRUE(std::filesystem::exists(dir / "png" / "kernel_00005.png"));
  std::filesystem::remove_all(dir);
}
