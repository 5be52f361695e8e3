#include <cmath>
#include <cstdlib>

#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/errors.hpp"

namespace deepdeblur::diff {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename Fn>
Tensor map(const Tensor& x, Fn&& fn) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var p : {a, b}) {
      t.accumulate(p, [&](Tensor& acc) {
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
      });
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
    t.accumulate(b, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    });
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    });
    t.accumulate(b, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    });
  });
}

Var scale(Var a, float factor) {
  Tensor out = map(a.value(), [factor](float v) { return v * factor; });
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
    });
  });
}

Var add_scalar(Var a, float offset) {
  Tensor out = map(a.value(), [offset](float v) { return v + offset; });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
  });
}

Var exp(Var a) {
  Tensor out = map(a.value(), [](float v) { return std::exp(v); });
  Tensor saved = out;
  return a.tape().record(std::move(out), {a},
                         [a, y = std::move(saved)](Tape& t, const Tensor& g) {
                           t.accumulate(a, [&](Tensor& acc) {
                             for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * y[i];
                           });
                         });
}

Var relu(Var a) {
  Tensor out = map(a.value(), [](float v) { return v > 0.0f ? v : 0.0f; });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0f) acc[i] += g[i];
      }
    });
  });
}

Var sigmoid(Var a) {
  Tensor out = map(a.value(), [](float v) {
    return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  });
  Tensor saved = out;
  return a.tape().record(std::move(out), {a},
                         [a, y = std::move(saved)](Tape& t, const Tensor& g) {
                           t.accumulate(a, [&](Tensor& acc) {
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               acc[i] += g[i] * y[i] * (1.0f - y[i]);
                             }
                           });
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
  });
}

Var chw_to_hwc(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 4 || s[0] != 1) {
    throw ShapeError("chw_to_hwc expects [1, C, H, W], got " + shape_str(s));
  }
  const std::size_t c = s[1], h = s[2], w = s[3];
  Tensor out({h, w, c});
  const Tensor& x = a.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out[(i * w + j) * c + ch] = x[(ch * h + i) * w + j];
  return a.tape().record(std::move(out), {a}, [a, c, h, w](Tape& t, const Tensor& g) {
    t.accumulate(a, [&](Tensor& acc) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            acc[(ch * h + i) * w + j] += g[(i * w + j) * c + ch];
    });
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (float v : a.value().data()) total += v;
  return a.tape().record(Tensor::scalar(static_cast<float>(total)), {a},
                         [a](Tape& t, const Tensor& g) {
                           const float gs = g[0];
                           t.accumulate(a, [&](Tensor& acc) {
                             for (float& v : acc.data()) v += gs;
                           });
                         });
}

Var sum_squares(Var a) {
  double total = 0.0;
  for (float v : a.value().data()) total += static_cast<double>(v) * v;
  return a.tape().record(Tensor::scalar(static_cast<float>(total)), {a},
                         [a](Tape& t, const Tensor& g) {
                           const float gs = 2.0f * g[0];
                           const Tensor& x = a.value();
                           t.accumulate(a, [&](Tensor& acc) {
                             for (std::size_t i = 0; i < x.size(); ++i) acc[i] += gs * x[i];
                           });
                         });
}

Var tv_norm(Var image) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("tv_norm expects [H, W, C], got " + shape_str(s));
  const std::size_t h = s[0], w = s[1], c = s[2];
  const Tensor& x = image.value();
  auto at = [&](std::size_t i, std::size_t j, std::size_t ch) { return x[(i * w + j) * c + ch]; };
  double total = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (j + 1 < w) total += std::abs(static_cast<double>(at(i, j + 1, ch)) - at(i, j, ch));
        if (i + 1 < h) total += std::abs(static_cast<double>(at(i + 1, j, ch)) - at(i, j, ch));
      }
  return image.tape().record(
      Tensor::scalar(static_cast<float>(total)), {image}, [image, h, w, c](Tape& t, const Tensor& g) {
        const Tensor& x = image.value();
        const float gs = g[0];
        auto idx = [&](std::size_t i, std::size_t j, std::size_t ch) { return (i * w + j) * c + ch; };
        auto sign = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
        t.accumulate(image, [&](Tensor& acc) {
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
              for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t p = idx(i, j, ch);
                if (j + 1 < w) {
                  const std::size_t q = idx(i, j + 1, ch);
                  const float sg = gs * sign(x[q] - x[p]);
                  acc[q] += sg;
                  acc[p] -= sg;
                }
                if (i + 1 < h) {
                  const std::size_t q = idx(i + 1, j, ch);
                  const float sg = gs * sign(x[q] - x[p]);
                  acc[q] += sg;
                  acc[p] -= sg;
                }
              }
        });
      });
}

}  // namespace deepdeblur::diff
