#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deepdeblur/errors.hpp"
#include "deepdeblur/metrics/metrics.hpp"
#include "support/metric_oracles.hpp"

using namespace deepdeblur;
using namespace deepdeblur::metrics;
using diff::Tensor;
using deepdeblur::testing::ssim_oracle;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t({h, w, c});
  for (float& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(Psnr, TwentyDecibels) {
  // 0.1 is not a float; the stored 0.1f gives MSE 0.0100000003.
  EXPECT_NEAR(psnr(Tensor({8, 8, 1}, 0.0f), Tensor({8, 8, 1}, 0.1f)), 20.0, 1e-6);
  // One pixel of 0.5 among 25: MSE is exactly 0.25 / 25 = 0.01.
  Tensor b({5, 5, 1}, 0.0f);
  b[12] = 0.5f;
  EXPECT_EQ(psnr(Tensor({5, 5, 1}, 0.0f), b), 20.0);
}

TEST(Psnr, IdenticalIsInfiniteAndCapped) {
  const Tensor x = random_image(5, 5, 3, 1);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_EQ(psnr_for_file(psnr(x, x)), 99.0);
}

TEST(Psnr, MatchesRecomputation) {
  const Tensor a = random_image(13, 9, 3, 2), b = random_image(13, 9, 3, 3);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(s / a.size()), 1e-6);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_THROW(psnr(Tensor({4, 4, 1}), Tensor({4, 5, 1})), ShapeError);
}

TEST(Psnr, DecreasesWithNoise) {
  const Tensor x = random_image(32, 32, 1, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.1}) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, sigma);
    Tensor y = x;
    for (float& v : y.data()) v = static_cast<float>(v + n(rng));
    const double p = psnr(x, y);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdenticalIsOne) {
  const Tensor x = random_image(20, 17, 1, 5);
  EXPECT_EQ(ssim(x, x), 1.0);
  const Tensor c = random_image(16, 16, 3, 6);
  EXPECT_EQ(ssim(c, c), 1.0);
}

TEST(Ssim, ZeroVarianceClosedForm) {
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Tensor({16, 16, 1}, 0.0f), Tensor({16, 16, 1}, 0.5f)), c1 / (0.25 + c1), 1e-7);
}

TEST(Ssim, MatchesSlidingWindowOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor a = random_image(24 + seed, 19, 1, 20 + seed);
    Tensor b = a;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 0.1f);
    for (float& v : b.data()) v += n(rng);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-5);
    const Tensor c = random_image(24 + seed, 19, 1, 40 + seed);
    EXPECT_NEAR(ssim(a, c), ssim_oracle(a, c), 1e-5);
  }
}

TEST(Ssim, ColourUsesLuma) {
  const Tensor a = random_image(16, 16, 3, 7), b = random_image(16, 16, 3, 8);
  Tensor la({16, 16, 1}), lb({16, 16, 1});
  for (std::size_t p = 0; p < 256; ++p) {
    la[p] = static_cast<float>(0.299 * a[3 * p] + 0.587 * a[3 * p + 1] + 0.114 * a[3 * p + 2]);
    lb[p] = static_cast<float>(0.299 * b[3 * p] + 0.587 * b[3 * p + 1] + 0.114 * b[3 * p + 2]);
  }
  EXPECT_NEAR(ssim(a, b), ssim_oracle(la, lb), 1e-5);
}

TEST(Ssim, SymmetricAndBounded) {
  const Tensor a = random_image(15, 15, 1, 9), b = random_image(15, 15, 1, 10);
  EXPECT_EQ(ssim(a, b), ssim(b, a));
  EXPECT_LE(ssim(a, b), 1.0);
  EXPECT_GE(ssim(a, b), -1.0);
}

TEST(Ssim, TooSmall) {
  EXPECT_THROW(ssim(Tensor({10, 30, 1}), Tensor({10, 30, 1})), ShapeError);
}

TEST(Aggregate, Means) {
  MetricReport a, b;
  a.psnr_db = 20.0;
  a.ssim = 0.5;
  b.psnr_db = 30.0;
  b.ssim = 0.7;
  const Aggregate one = aggregate({a});
  EXPECT_EQ(one.mean_psnr_db, 20.0);
  EXPECT_EQ(one.mean_ssim, 0.5);
  const Aggregate two = aggregate({a, b});
  EXPECT_EQ(two.mean_psnr_db, 25.0);
  EXPECT_NEAR(two.mean_ssim, 0.6, 1e-15);
  EXPECT_THROW(aggregate({}), UsageError);
}

TEST(Aggregate, EightyItems) {
  std::vector<MetricReport> reports(80);
  double ps = 0, ss = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    reports[i].psnr_db = 15.0 + 0.37 * static_cast<double>(i % 13);
    reports[i].ssim = 0.01 * static_cast<double>(i % 50);
    ps += reports[i].psnr_db;
    ss += reports[i].ssim;
  }
  const Aggregate agg = aggregate(reports);
  EXPECT_NEAR(agg.mean_psnr_db, ps / 80.0, 1e-12);
  EXPECT_NEAR(agg.mean_ssim, ss / 80.0, 1e-12);
}

TEST(Aggregate, ExcludesInfinitePsnr) {
  MetricReport a, b;
  a.psnr_db = std::numeric_limits<double>::infinity();
  a.ssim = 1.0;
  b.psnr_db = 30.0;
  b.ssim = 0.5;
  const Aggregate agg = aggregate({a, b});
  EXPECT_EQ(agg.mean_psnr_db, 30.0);
  EXPECT_EQ(agg.infinite_psnr, 1u);
  EXPECT_EQ(agg.mean_ssim, 0.75);
}

TEST(Csv, RowLayout) {
  ResultRow row;
  row.image_id = "img_003";
  row.method = "dd";
  row.noise_sigma = 0.01;
  row.blur_length = 12.5;
  row.report.psnr_db = std::numeric_limits<double>::infinity();
  row.report.ssim = 1.0;
  row.seed = 42;
  EXPECT_EQ(csv_header(), "image_id,method,noise_sigma,blur_length,psnr_db,ssim,range_error,seed");
  EXPECT_EQ(csv_line(row), "img_003,dd,0.01,12.5,99,1,,42");
  row.report.range_error = 0.25;
  EXPECT_EQ(csv_line(row), "img_003,dd,0.01,12.5,99,1,0.25,42");
}
