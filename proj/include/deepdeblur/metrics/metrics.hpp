#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::metrics {

// psnr() of identical images is +inf; files carry this cap instead.
inline constexpr double kPsnrCapDb = 99.0;

double mse(const diff::Tensor& a, const diff::Tensor& b);

// 10 log10(1 / MSE) with peak 1. Images are [H, W, C] or [H, W].
double psnr(const diff::Tensor& a, const diff::Tensor& b);
double psnr_for_file(double psnr_db);

// Mean SSIM over all valid 11x11 windows (Gaussian weights, sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1). Colour images are converted to luma
// (0.299, 0.587, 0.114) first.
double ssim(const diff::Tensor& a, const diff::Tensor& b);

diff::Tensor to_luma(const diff::Tensor& image);

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  std::optional<double> range_error;
};

MetricReport evaluate(const diff::Tensor& estimate, const diff::Tensor& truth);

struct Aggregate {
  double mean_psnr_db = 0.0;  // over finite PSNR values
  double mean_ssim = 0.0;
  std::size_t count = 0;
  std::size_t infinite_psnr = 0;  // excluded from mean_psnr_db
};

Aggregate aggregate(const std::vector<MetricReport>& reports);

// One result row: image_id, method, noise_sigma, blur_length, psnr_db, ssim,
// range_error, seed.
struct ResultRow {
  std::string image_id;
  std::string method;
  double noise_sigma = 0.0;
  double blur_length = 0.0;
  MetricReport report;
  std::uint64_t seed = 0;
};

std::string csv_header();
std::string csv_line(const ResultRow& row);

// Fixed, locale-independent rendering with round-trip precision.
std::string format_number(double v);

}  // namespace deepdeblur::metrics
