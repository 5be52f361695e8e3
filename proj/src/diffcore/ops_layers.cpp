#include <algorithm>
#include <cmath>
#include <vector>

#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/errors.hpp"

namespace deepdeblur::diff {

namespace {

struct Dims4 {
  std::size_t n, c, h, w;
};

Dims4 dims4(const char* op, const Shape& s) {
  if (s.size() != 4) throw ShapeError(std::string(op) + " expects [N, C, H, W], got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

// dst[j * ds] += w * src[j * ss] for j < n, with a contiguous fast path.
template <typename D, typename S>
inline void axpy(D* dst, std::size_t ds, const S* src, std::size_t ss, double w, std::size_t n) {
  if (ds == 1 && ss == 1) {
    for (std::size_t j = 0; j < n; ++j) dst[j] += w * src[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) dst[j * ds] += w * src[j * ss];
  }
}

template <typename A, typename B>
inline double dot(const A* a, std::size_t as, const B* b, std::size_t bs, std::size_t n) {
  double s = 0.0;
  if (as == 1 && bs == 1) {
    for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(a[j]) * b[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) s += static_cast<double>(a[j * as]) * b[j * bs];
  }
  return s;
}

}  // namespace

Var dense(Var x, Var weight, Var bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 2) throw ShapeError("dense weight must be [m, n], got " + shape_str(ws));
  const std::size_t m = ws[0], n = ws[1];
  const bool flat = xs.size() == 1;
  if (!(flat || xs.size() == 2) || xs.back() != n) {
    throw ShapeError("dense input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  }
  if (bias.shape() != Shape{m}) {
    throw ShapeError("dense bias " + shape_str(bias.shape()) + " does not match " + std::to_string(m));
  }
  const std::size_t batch = flat ? 1 : xs[0];

  const float* xv = x.value().data().data();
  const float* wv = weight.value().data().data();
  const float* bv = bias.value().data().data();
  Tensor out(flat ? Shape{m} : Shape{batch, m});
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xr = xv + b * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float* wr = wv + i * n;
      double acc = bv[i];
      for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(wr[j]) * xr[j];
      out[b * m + i] = static_cast<float>(acc);
    }
  }

  return x.tape().record(std::move(out), {x, weight, bias},
                         [x, weight, bias, batch, m, n](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    t.accumulate(x, [&](Tensor& acc) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += static_cast<double>(g[b * m + i]) * wv[i * n + j];
          acc[b * n + j] += static_cast<float>(s);
        }
    });
    t.accumulate(weight, [&](Tensor& acc) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t b = 0; b < batch; ++b) s += static_cast<double>(g[b * m + i]) * xv[b * n + j];
          acc[i * n + j] += static_cast<float>(s);
        }
    });
    t.accumulate(bias, [&](Tensor& acc) {
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += g[b * m + i];
        acc[i] += static_cast<float>(s);
      }
    });
  });
}

Var conv2d(Var x, Var weight, std::size_t stride) { return conv2d(x, weight, Var{}, stride); }

Var conv2d(Var x, Var weight, Var bias, std::size_t stride) {
  const Dims4 in = dims4("conv2d", x.shape());
  const Dims4 k = dims4("conv2d weight", weight.shape());
  if (k.c != in.c) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (stride == 0 || k.h > in.h || k.w > in.w) {
    throw ShapeError("conv2d: kernel/stride give non-positive output for input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && bias.shape() != Shape{k.n}) throw ShapeError("conv2d: bias shape mismatch");
  const std::size_t oh = (in.h - k.h) / stride + 1;
  const std::size_t ow = (in.w - k.w) / stride + 1;
  const std::size_t filters = k.n;

  const float* xv = x.value().data().data();
  const float* wv = weight.value().data().data();
  const float* bv = has_bias ? bias.value().data().data() : nullptr;
  // Inner loops run along output columns so they vectorize.
  std::vector<double> acc(in.n * filters * oh * ow, 0.0);
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t f = 0; f < filters; ++f) {
      double* op = acc.data() + (n * filters + f) * oh * ow;
      if (bv) std::fill(op, op + oh * ow, static_cast<double>(bv[f]));
      for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t a = 0; a < k.h; ++a)
          for (std::size_t b = 0; b < k.w; ++b) {
            const double wgt = wv[((f * in.c + c) * k.h + a) * k.w + b];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const float* xr = xv + ((n * in.c + c) * in.h + oy * stride + a) * in.w + b;
              double* orow = op + oy * ow;
              axpy(orow, 1, xr, stride, wgt, ow);
            }
          }
    }
  Tensor out({in.n, filters, oh, ow});
  for (std::size_t p = 0; p < acc.size(); ++p) out[p] = static_cast<float>(acc[p]);

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return x.tape().record(std::move(out), parents,
                         [x, weight, bias, has_bias, in, k, oh, ow, stride](Tape& t, const Tensor& g) {
    const float* xv = x.value().data().data();
    const float* wv = weight.value().data().data();
    const std::size_t filters = k.n;
    const float* gv = g.data().data();
    t.accumulate(x, [&](Tensor& acc) {
      std::vector<double> gx(acc.size(), 0.0);
      for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t f = 0; f < filters; ++f)
          for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t a = 0; a < k.h; ++a)
              for (std::size_t b = 0; b < k.w; ++b) {
                const double wgt = wv[((f * in.c + c) * k.h + a) * k.w + b];
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const float* grow = gv + ((n * filters + f) * oh + oy) * ow;
                  double* xr = gx.data() + ((n * in.c + c) * in.h + oy * stride + a) * in.w + b;
                  axpy(xr, stride, grow, 1, wgt, ow);
                }
              }
      for (std::size_t p = 0; p < gx.size(); ++p) acc[p] += static_cast<float>(gx[p]);
    });
    t.accumulate(weight, [&](Tensor& acc) {
      float* gw = acc.data().data();
      for (std::size_t f = 0; f < filters; ++f)
        for (std::size_t c = 0; c < in.c; ++c)
          for (std::size_t a = 0; a < k.h; ++a)
            for (std::size_t b = 0; b < k.w; ++b) {
              double s = 0.0;
              for (std::size_t n = 0; n < in.n; ++n)
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const float* grow = gv + ((n * filters + f) * oh + oy) * ow;
                  const float* xr = xv + ((n * in.c + c) * in.h + oy * stride + a) * in.w + b;
                  s += dot(grow, 1, xr, stride, ow);
                }
              gw[((f * in.c + c) * k.h + a) * k.w + b] += static_cast<float>(s);
            }
    });
    if (has_bias) {
      t.accumulate(bias, [&](Tensor& acc) {
        for (std::size_t f = 0; f < filters; ++f) {
          double s = 0.0;
          for (std::size_t n = 0; n < in.n; ++n)
            for (std::size_t p = 0; p < oh * ow; ++p) s += g[(n * filters + f) * oh * ow + p];
          acc[f] += static_cast<float>(s);
        }
      });
    }
  });
}

Var conv_transpose2d(Var x, Var weight, std::size_t stride) {
  return conv_transpose2d(x, weight, Var{}, stride);
}

Var conv_transpose2d(Var x, Var weight, Var bias, std::size_t stride) {
  const Dims4 in = dims4("conv_transpose2d", x.shape());
  // weight: [in_channels, out_channels, kh, kw]
  const Dims4 k = dims4("conv_transpose2d weight", weight.shape());
  if (k.n != in.c) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(weight.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  const bool has_bias = bias.valid();
  const std::size_t out_c = k.c;
  if (has_bias && bias.shape() != Shape{out_c}) throw ShapeError("conv_transpose2d: bias shape mismatch");
  const std::size_t oh = (in.h - 1) * stride + k.h;
  const std::size_t ow = (in.w - 1) * stride + k.w;

  const float* xv = x.value().data().data();
  const float* wv = weight.value().data().data();
  std::vector<double> acc(in.n * out_c * oh * ow, 0.0);
  if (has_bias) {
    const float* bv = bias.value().data().data();
    for (std::size_t n = 0; n < in.n; ++n)
      for (std::size_t c = 0; c < out_c; ++c)
        for (std::size_t p = 0; p < oh * ow; ++p) acc[(n * out_c + c) * oh * ow + p] = bv[c];
  }
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t f = 0; f < in.c; ++f)
      for (std::size_t c = 0; c < out_c; ++c)
        for (std::size_t a = 0; a < k.h; ++a)
          for (std::size_t b = 0; b < k.w; ++b) {
            const double wgt = wv[((f * out_c + c) * k.h + a) * k.w + b];
            if (wgt == 0.0) continue;
            for (std::size_t i = 0; i < in.h; ++i) {
              const float* xr = xv + ((n * in.c + f) * in.h + i) * in.w;
              double* orow = acc.data() + ((n * out_c + c) * oh + i * stride + a) * ow + b;
              axpy(orow, stride, xr, 1, wgt, in.w);
            }
          }
  Tensor out({in.n, out_c, oh, ow});
  for (std::size_t p = 0; p < acc.size(); ++p) out[p] = static_cast<float>(acc[p]);

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return x.tape().record(std::move(out), parents,
                         [x, weight, bias, has_bias, in, k, out_c, oh, ow, stride](Tape& t, const Tensor& g) {
    const float* xv = x.value().data().data();
    const float* wv = weight.value().data().data();
    const float* gv = g.data().data();
    t.accumulate(x, [&](Tensor& accx) {
      std::vector<double> gx(accx.size(), 0.0);
      for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t f = 0; f < in.c; ++f)
          for (std::size_t c = 0; c < out_c; ++c)
            for (std::size_t a = 0; a < k.h; ++a)
              for (std::size_t b = 0; b < k.w; ++b) {
                const double wgt = wv[((f * out_c + c) * k.h + a) * k.w + b];
                for (std::size_t i = 0; i < in.h; ++i) {
                  const float* grow = gv + ((n * out_c + c) * oh + i * stride + a) * ow + b;
                  double* xr = gx.data() + ((n * in.c + f) * in.h + i) * in.w;
                  axpy(xr, 1, grow, stride, wgt, in.w);
                }
              }
      for (std::size_t p = 0; p < gx.size(); ++p) accx[p] += static_cast<float>(gx[p]);
    });
    t.accumulate(weight, [&](Tensor& accw) {
      for (std::size_t f = 0; f < in.c; ++f)
        for (std::size_t c = 0; c < out_c; ++c)
          for (std::size_t a = 0; a < k.h; ++a)
            for (std::size_t b = 0; b < k.w; ++b) {
              double s = 0.0;
              for (std::size_t n = 0; n < in.n; ++n)
                for (std::size_t i = 0; i < in.h; ++i) {
                  const float* xr = xv + ((n * in.c + f) * in.h + i) * in.w;
                  const float* grow = gv + ((n * out_c + c) * oh + i * stride + a) * ow + b;
                  s += dot(xr, 1, grow, stride, in.w);
                }
              accw[((f * out_c + c) * k.h + a) * k.w + b] += static_cast<float>(s);
            }
    });
    if (has_bias) {
      t.accumulate(bias, [&](Tensor& accb) {
        for (std::size_t c = 0; c < out_c; ++c) {
          double s = 0.0;
          for (std::size_t n = 0; n < in.n; ++n)
            for (std::size_t p = 0; p < oh * ow; ++p) s += gv[(n * out_c + c) * oh * ow + p];
          accb[c] += static_cast<float>(s);
        }
      });
    }
  });
}

Var maxpool2d(Var x, std::size_t size, std::size_t stride) {
  const Dims4 in = dims4("maxpool2d", x.shape());
  if (size == 0 || stride == 0 || size > in.h || size > in.w) {
    throw ShapeError("maxpool2d: window " + std::to_string(size) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t oh = (in.h - size) / stride + 1;
  const std::size_t ow = (in.w - size) / stride + 1;
  const Tensor& xv = x.value();
  Tensor out({in.n, in.c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t nc = 0; nc < in.n * in.c; ++nc)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (nc * in.h + oy * stride) * in.w + ox * stride;
        for (std::size_t a = 0; a < size; ++a)
          for (std::size_t b = 0; b < size; ++b) {
            const std::size_t idx = (nc * in.h + oy * stride + a) * in.w + ox * stride + b;
            if (xv[idx] > xv[best]) best = idx;  // strict: first maximum wins
          }
        const std::size_t o = (nc * oh + oy) * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
  return x.tape().record(std::move(out), {x}, [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    t.accumulate(x, [&](Tensor& acc) {
      for (std::size_t o = 0; o < g.size(); ++o) acc[argmax[o]] += g[o];
    });
  });
}

Var upsample_nearest(Var x, std::size_t factor) {
  const Dims4 in = dims4("upsample_nearest", x.shape());
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t oh = in.h * factor, ow = in.w * factor;
  const Tensor& xv = x.value();
  Tensor out({in.n, in.c, oh, ow});
  for (std::size_t nc = 0; nc < in.n * in.c; ++nc)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        out[(nc * oh + i) * ow + j] = xv[(nc * in.h + i / factor) * in.w + j / factor];
  return x.tape().record(std::move(out), {x}, [x, in, oh, ow, factor](Tape& t, const Tensor& g) {
    t.accumulate(x, [&](Tensor& acc) {
      for (std::size_t nc = 0; nc < in.n * in.c; ++nc)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j)
            acc[(nc * in.h + i / factor) * in.w + j / factor] += g[(nc * oh + i) * ow + j];
    });
  });
}

namespace {

// Views [N, C, H, W] and [N, F] alike as [N, C, S].
struct BnLayout {
  std::size_t n, c, s;
};

BnLayout bn_layout(const Shape& shape) {
  if (shape.size() == 4) return {shape[0], shape[1], shape[2] * shape[3]};
  if (shape.size() == 2) return {shape[0], shape[1], 1};
  throw ShapeError("batchnorm expects [N, C, H, W] or [N, F], got " + shape_str(shape));
}

void check_bn_params(const BnLayout& l, Var gamma, Var beta) {
  if (gamma.shape() != Shape{l.c} || beta.shape() != Shape{l.c}) {
    throw ShapeError("batchnorm: scale/shift must have " + std::to_string(l.c) + " entries");
  }
}

}  // namespace

Var batchnorm_train(Var x, Var gamma, Var beta, float eps, BatchStats* stats) {
  const BnLayout l = bn_layout(x.shape());
  check_bn_params(l, gamma, beta);
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  const double count = static_cast<double>(l.n * l.s);
  auto at = [&](std::size_t n, std::size_t c, std::size_t s) { return (n * l.c + c) * l.s + s; };

  std::vector<double> mean(l.c, 0.0), inv_std(l.c, 0.0), var(l.c, 0.0);
  for (std::size_t c = 0; c < l.c; ++c) {
    double m = 0.0;
    for (std::size_t n = 0; n < l.n; ++n)
      for (std::size_t s = 0; s < l.s; ++s) m += xv[at(n, c, s)];
    m /= count;
    double v = 0.0;
    for (std::size_t n = 0; n < l.n; ++n)
      for (std::size_t s = 0; s < l.s; ++s) {
        const double d = xv[at(n, c, s)] - m;
        v += d * d;
      }
    v /= count;
    mean[c] = m;
    var[c] = v;
    inv_std[c] = 1.0 / std::sqrt(v + eps);
  }
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (std::size_t n = 0; n < l.n; ++n)
    for (std::size_t c = 0; c < l.c; ++c)
      for (std::size_t s = 0; s < l.s; ++s) {
        const std::size_t i = at(n, c, s);
        const double h = (xv[i] - mean[c]) * inv_std[c];
        xhat[i] = static_cast<float>(h);
        out[i] = static_cast<float>(gv[c] * h + bv[c]);
      }
  if (stats) {
    stats->mean = Tensor({l.c});
    stats->variance = Tensor({l.c});
    for (std::size_t c = 0; c < l.c; ++c) {
      stats->mean[c] = static_cast<float>(mean[c]);
      stats->variance[c] = static_cast<float>(var[c]);
    }
  }

  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, l, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        auto at = [&](std::size_t n, std::size_t c, std::size_t s) { return (n * l.c + c) * l.s + s; };
        const Tensor& gv = gamma.value();
        std::vector<double> sum_g(l.c, 0.0), sum_gx(l.c, 0.0);
        for (std::size_t n = 0; n < l.n; ++n)
          for (std::size_t c = 0; c < l.c; ++c)
            for (std::size_t s = 0; s < l.s; ++s) {
              const std::size_t i = at(n, c, s);
              sum_g[c] += g[i];
              sum_gx[c] += static_cast<double>(g[i]) * xhat[i];
            }
        t.accumulate(x, [&](Tensor& acc) {
          for (std::size_t n = 0; n < l.n; ++n)
            for (std::size_t c = 0; c < l.c; ++c) {
              const double k = gv[c] * inv_std[c] / count;
              for (std::size_t s = 0; s < l.s; ++s) {
                const std::size_t i = at(n, c, s);
                acc[i] += static_cast<float>(k * (count * g[i] - sum_g[c] - xhat[i] * sum_gx[c]));
              }
            }
        });
        t.accumulate(gamma, [&](Tensor& acc) {
          for (std::size_t c = 0; c < l.c; ++c) acc[c] += static_cast<float>(sum_gx[c]);
        });
        t.accumulate(beta, [&](Tensor& acc) {
          for (std::size_t c = 0; c < l.c; ++c) acc[c] += static_cast<float>(sum_g[c]);
        });
      });
}

Var batchnorm_infer(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& variance,
                    float eps) {
  const BnLayout l = bn_layout(x.shape());
  check_bn_params(l, gamma, beta);
  if (mean.shape() != Shape{l.c} || variance.shape() != Shape{l.c}) {
    throw ShapeError("batchnorm: running statistics must have " + std::to_string(l.c) + " entries");
  }
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  std::vector<double> inv_std(l.c);
  for (std::size_t c = 0; c < l.c; ++c) inv_std[c] = 1.0 / std::sqrt(static_cast<double>(variance[c]) + eps);
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (std::size_t n = 0; n < l.n; ++n)
    for (std::size_t c = 0; c < l.c; ++c)
      for (std::size_t s = 0; s < l.s; ++s) {
        const std::size_t i = (n * l.c + c) * l.s + s;
        const double h = (xv[i] - static_cast<double>(mean[c])) * inv_std[c];
        xhat[i] = static_cast<float>(h);
        out[i] = static_cast<float>(gv[c] * h + bv[c]);
      }
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, l, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gv = gamma.value();
        t.accumulate(x, [&](Tensor& acc) {
          for (std::size_t n = 0; n < l.n; ++n)
            for (std::size_t c = 0; c < l.c; ++c)
              for (std::size_t s = 0; s < l.s; ++s) {
                const std::size_t i = (n * l.c + c) * l.s + s;
                acc[i] += static_cast<float>(g[i] * gv[c] * inv_std[c]);
              }
        });
        t.accumulate(gamma, [&](Tensor& acc) {
          for (std::size_t i = 0; i < g.size(); ++i) acc[(i / l.s) % l.c] += g[i] * xhat[i];
        });
        t.accumulate(beta, [&](Tensor& acc) {
          for (std::size_t i = 0; i < g.size(); ++i) acc[(i / l.s) % l.c] += g[i];
        });
      });
}

}  // namespace deepdeblur::diff
