#include "deepdeblur/metrics/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::metrics {

using diff::Tensor;

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + diff::shape_str(a.shape()) + " and " +
                     diff::shape_str(b.shape()) + " differ");
  }
}

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-region separable Gaussian filter of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * x[r * w + c + k];
      rows[r * ow + c] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * rows[(r + k) * ow + c];
      out[r * ow + c] = acc;
    }
  return out;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ShapeError("mse of empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double psnr_for_file(double psnr_db) { return std::isinf(psnr_db) && psnr_db > 0 ? kPsnrCapDb : psnr_db; }

Tensor to_luma(const Tensor& image) {
  if (image.rank() == 2) return image.reshaped({image.dim(0), image.dim(1), 1});
  if (image.rank() != 3) throw ShapeError("expected an [H, W, C] image, got " + diff::shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (c == 1) return image;
  if (c != 3) throw ShapeError("luma conversion needs 1 or 3 channels");
  Tensor out({h, w, 1});
  for (std::size_t p = 0; p < h * w; ++p) {
    out[p] = static_cast<float>(0.299 * image[3 * p] + 0.587 * image[3 * p + 1] + 0.114 * image[3 * p + 2]);
  }
  return out;
}

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const Tensor la = to_luma(a), lb = to_luma(b);
  const std::size_t h = la.dim(0), w = la.dim(1);
  if (h < kWindow || w < kWindow) throw ShapeError("ssim needs images of at least 11x11");

  std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    x[i] = la[i];
    y[i] = lb[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_taps();
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double va = sxx[i] - mx[i] * mx[i];
    const double vb = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(mx.size());
}

MetricReport evaluate(const Tensor& estimate, const Tensor& truth) {
  MetricReport r;
  r.mse = mse(estimate, truth);
  r.psnr_db = psnr(estimate, truth);
  r.ssim = ssim(estimate, truth);
  return r;
}

Aggregate aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw UsageError("aggregate of an empty report list");
  Aggregate out;
  out.count = reports.size();
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const MetricReport& r : reports) {
    ssim_sum += r.ssim;
    if (std::isinf(r.psnr_db)) {
      ++out.infinite_psnr;
    } else {
      psnr_sum += r.psnr_db;
    }
  }
  const std::size_t finite = out.count - out.infinite_psnr;
  out.mean_psnr_db = finite > 0 ? psnr_sum / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
  out.mean_ssim = ssim_sum / static_cast<double>(out.count);
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_header() { return "image_id,method,noise_sigma,blur_length,psnr_db,ssim,range_error,seed"; }

std::string csv_line(const ResultRow& row) {
  std::string s = row.image_id + "," + row.method + "," + format_number(row.noise_sigma) + "," +
                  format_number(row.blur_length) + "," + format_number(psnr_for_file(row.report.psnr_db)) + "," +
                  format_number(row.report.ssim) + ",";
  if (row.report.range_error) s += format_number(*row.report.range_error);
  s += "," + std::to_string(row.seed);
  return s;
}

}  // namespace deepdeblur::metrics
