#include <complex>
#include <vector>

#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/errors.hpp"
#include "fft.hpp"

namespace deepdeblur::diff {

namespace {

using detail::RealFft2d;
using Complex = RealFft2d::Complex;

struct ConvGeometry {
  std::size_t h, w, c, kh, kw;
};

ConvGeometry check_geometry(const Tensor& image, const Tensor& kernel) {
  if (image.rank() != 3) throw ShapeError("circular convolution expects an [H, W, C] image, got " + shape_str(image.shape()));
  if (kernel.rank() != 2) throw ShapeError("circular convolution expects a [kh, kw] kernel, got " + shape_str(kernel.shape()));
  const ConvGeometry geo{image.dim(0), image.dim(1), image.dim(2), kernel.dim(0), kernel.dim(1)};
  if (geo.kh > geo.h || geo.kw > geo.w) {
    throw ShapeError("kernel " + shape_str(kernel.shape()) + " larger than image " + shape_str(image.shape()));
  }
  image.require_finite("circular convolution image");
  kernel.require_finite("circular convolution kernel");
  return geo;
}

// Places kernel entry (a, b) at circular offset (a - kh/2, b - kw/2).
std::vector<double> embed_kernel(const Tensor& kernel, const ConvGeometry& g) {
  std::vector<double> out(g.h * g.w, 0.0);
  const std::size_t ch = g.kh / 2, cw = g.kw / 2;
  for (std::size_t a = 0; a < g.kh; ++a)
    for (std::size_t b = 0; b < g.kw; ++b) {
      const std::size_t r = (a + g.h - ch) % g.h;
      const std::size_t c = (b + g.w - cw) % g.w;
      out[r * g.w + c] = kernel[a * g.kw + b];
    }
  return out;
}

std::vector<double> channel(const Tensor& image, const ConvGeometry& g, std::size_t ch) {
  std::vector<double> out(g.h * g.w);
  for (std::size_t p = 0; p < g.h * g.w; ++p) out[p] = image[p * g.c + ch];
  return out;
}

std::vector<Complex> product(const std::vector<Complex>& a, const std::vector<Complex>& b, bool conj_b) {
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * (conj_b ? std::conj(b[i]) : b[i]);
  return out;
}

}  // namespace

Tensor circular_convolve(const Tensor& image, const Tensor& kernel) {
  const ConvGeometry g = check_geometry(image, kernel);
  // A kernel with one nonzero tap is a scaled circular shift; doing it
  // directly keeps delta kernels exact.
  std::size_t taps = 0, tap = 0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    if (kernel[i] != 0.0f) {
      ++taps;
      tap = i;
    }
  }
  if (taps <= 1) {
    Tensor out(image.shape(), 0.0f);
    if (taps == 0) return out;
    const float v = kernel[tap];
    const std::size_t dr = (tap / g.kw + g.h - g.kh / 2) % g.h, dc = (tap % g.kw + g.w - g.kw / 2) % g.w;
    for (std::size_t r = 0; r < g.h; ++r)
      for (std::size_t c = 0; c < g.w; ++c) {
        const std::size_t src = (((r + g.h - dr) % g.h) * g.w + (c + g.w - dc) % g.w) * g.c;
        for (std::size_t ch = 0; ch < g.c; ++ch) out[(r * g.w + c) * g.c + ch] = v * image[src + ch];
      }
    return out;
  }
  const RealFft2d& fft = RealFft2d::get(g.h, g.w);
  const auto kspec = fft.forward(embed_kernel(kernel, g));
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    const auto result = fft.inverse(product(fft.forward(channel(image, g, ch)), kspec, false));
    for (std::size_t p = 0; p < g.h * g.w; ++p) out[p * g.c + ch] = static_cast<float>(result[p]);
  }
  return out;
}

Var conv2d_circular(Var image, Var kernel) {
  const ConvGeometry geo = check_geometry(image.value(), kernel.value());
  Tensor out = circular_convolve(image.value(), kernel.value());
  return image.tape().record(std::move(out), {image, kernel}, [image, kernel, geo](Tape& t, const Tensor& g) {
    const RealFft2d& fft = RealFft2d::get(geo.h, geo.w);
    std::vector<std::vector<Complex>> gspec(geo.c);
    for (std::size_t ch = 0; ch < geo.c; ++ch) gspec[ch] = fft.forward(channel(g, geo, ch));

    if (t.needs_grad(image)) {
      const auto kspec = fft.forward(embed_kernel(kernel.value(), geo));
      t.accumulate(image, [&](Tensor& acc) {
        for (std::size_t ch = 0; ch < geo.c; ++ch) {
          const auto corr = fft.inverse(product(gspec[ch], kspec, true));
          for (std::size_t p = 0; p < geo.h * geo.w; ++p) acc[p * geo.c + ch] += static_cast<float>(corr[p]);
        }
      });
    }
    if (t.needs_grad(kernel)) {
      std::vector<double> corr(geo.h * geo.w, 0.0);
      const Tensor& img = image.value();
      for (std::size_t ch = 0; ch < geo.c; ++ch) {
        const auto part = fft.inverse(product(gspec[ch], fft.forward(channel(img, geo, ch)), true));
        for (std::size_t p = 0; p < part.size(); ++p) corr[p] += part[p];
      }
      const std::size_t kc_h = geo.kh / 2, kc_w = geo.kw / 2;
      t.accumulate(kernel, [&](Tensor& acc) {
        for (std::size_t a = 0; a < geo.kh; ++a)
          for (std::size_t b = 0; b < geo.kw; ++b) {
            const std::size_t r = (a + geo.h - kc_h) % geo.h;
            const std::size_t c = (b + geo.w - kc_w) % geo.w;
            acc[a * geo.kw + b] += static_cast<float>(corr[r * geo.w + c]);
          }
      });
    }
  });
}

}  // namespace deepdeblur::diff
