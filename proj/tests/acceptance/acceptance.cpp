// Acceptance checks, one per criterion. Each invocation prints one
// "PASS"/"FAIL" line per requested criterion and exits non-zero on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepdeblur/blursynth/blursynth.hpp"
#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/generators/vae.hpp"
#include "deepdeblur/io/container.hpp"
#include "deepdeblur/metrics/metrics.hpp"
#include "deepdeblur/solvers/solvers.hpp"
#include "support/desk_setup.hpp"
#include "support/gradcheck.hpp"
#include "support/grid_oracle.hpp"
#include "support/kernel_data.hpp"
#include "support/metric_oracles.hpp"
#include "support/toy_models.hpp"

namespace {

using namespace deepdeblur;
using namespace deepdeblur::testing;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path models;
  fs::path work;
  std::string cli;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---- 1: gradients --------------------------------------------------------

constexpr int kGradTrials = 100;
constexpr double kGradTol = 1e-3;

Tensor away_from_zero(Tensor t, float gap) {
  for (float& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Shape random_shape(std::mt19937_64& rng) {
  Shape s(pick(rng, 1, 3));
  for (std::size_t& d : s) d = pick(rng, 1, 5);
  return s;
}

using TrialFn = std::function<double(std::mt19937_64&, std::uint64_t)>;

// Central-difference steps: wide for smooth primitives, where float rounding
// of the outputs dominates, and narrow for piecewise-linear ones, whose
// inputs are kept at least 0.006 from a kink.
constexpr double kSmoothStep = 1e-2;
constexpr double kKinkStep = 1e-3;

std::map<std::string, TrialFn> primitive_trials() {
  std::map<std::string, TrialFn> t;
  // Checks the random projection of op(inputs).
  auto check = [](std::vector<Tensor> in, auto op, std::uint64_t seed, double step = kSmoothStep) {
    return gradcheck_projected(in, [&](Tape&, const std::vector<Var>& v) { return op(v); }, seed, step);
  };
  auto unary = [check](auto op, float lo, float hi, bool kink) -> TrialFn {
    return [=](std::mt19937_64& rng, std::uint64_t seed) {
      Tensor x = random_tensor(random_shape(rng), rng, lo, hi);
      if (kink) x = away_from_zero(std::move(x), 0.01f);
      return check({x}, [&](const std::vector<Var>& v) { return op(v[0]); }, seed, kink ? kKinkStep : kSmoothStep);
    };
  };
  auto binary = [check](auto op) -> TrialFn {
    return [=](std::mt19937_64& rng, std::uint64_t seed) {
      const Shape s = random_shape(rng);
      return check({random_tensor(s, rng), random_tensor(s, rng)}, [&](const std::vector<Var>& v) { return op(v[0], v[1]); },
                   seed);
    };
  };
  t["add"] = binary([](Var a, Var b) { return diff::add(a, b); });
  t["sub"] = binary([](Var a, Var b) { return diff::sub(a, b); });
  t["mul"] = binary([](Var a, Var b) { return diff::mul(a, b); });
  t["scale"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const float f = std::uniform_real_distribution<float>(-3.0f, 3.0f)(rng);
    return check({random_tensor(random_shape(rng), rng)}, [&](const std::vector<Var>& v) { return diff::scale(v[0], f); },
                 seed);
  };
  t["add_scalar"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const float f = std::uniform_real_distribution<float>(-3.0f, 3.0f)(rng);
    return check({random_tensor(random_shape(rng), rng)},
                 [&](const std::vector<Var>& v) { return diff::add_scalar(v[0], f); }, seed);
  };
  t["exp"] = unary([](Var a) { return diff::exp(a); }, -2.0f, 2.0f, false);
  t["relu"] = unary([](Var a) { return diff::relu(a); }, -2.0f, 2.0f, true);
  t["sigmoid"] = unary([](Var a) { return diff::sigmoid(a); }, -4.0f, 4.0f, false);
  t["sum"] = [](std::mt19937_64& rng, std::uint64_t) {
    return gradcheck({random_tensor(random_shape(rng), rng)},
                     [](Tape&, const std::vector<Var>& v) { return diff::sum(v[0]); }, kSmoothStep);
  };
  t["sum_squares"] = [](std::mt19937_64& rng, std::uint64_t) {
    return gradcheck_squared_norm({random_tensor(random_shape(rng), rng)},
                                  [](Tape&, const std::vector<Var>& v) { return v[0]; }, kSmoothStep);
  };
  t["reshape"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const Tensor x = random_tensor(random_shape(rng), rng);
    return check({x}, [&](const std::vector<Var>& v) { return diff::reshape(v[0], {x.size()}); }, seed);
  };
  t["chw_to_hwc"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const Tensor x = random_tensor({1, pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    return check({x}, [](const std::vector<Var>& v) { return diff::chw_to_hwc(v[0]); }, seed);
  };
  t["tv_norm"] = [](std::mt19937_64& rng, std::uint64_t) {
    // Quantized levels plus a per-index ramp keep every neighbour difference
    // at least 0.006 away from zero.
    Tensor x({pick(rng, 2, 6), pick(rng, 2, 6), pick(rng, 1, 3)});
    std::uniform_int_distribution<int> level(0, 20);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.05f * static_cast<float>(level(rng)) + 0.003f * static_cast<float>(i);
    return gradcheck({x}, [](Tape&, const std::vector<Var>& v) { return diff::tv_norm(v[0]); }, kKinkStep);
  };
  t["dense"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 4), in = pick(rng, 1, 6), out = pick(rng, 1, 6);
    return check({random_tensor({n, in}, rng), random_tensor({out, in}, rng), random_tensor({out}, rng)},
                 [](const std::vector<Var>& v) { return diff::dense(v[0], v[1], v[2]); }, seed);
  };
  t["conv2d"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t stride = pick(rng, 1, 2), k = pick(rng, 1, 3), c = pick(rng, 1, 3), f = pick(rng, 1, 3);
    const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
    const bool bias = pick(rng, 0, 1) == 1;
    std::vector<Tensor> in{random_tensor({pick(rng, 1, 2), c, h, w}, rng), random_tensor({f, c, k, k}, rng)};
    if (bias) in.push_back(random_tensor({f}, rng));
    return check(in, [&](const std::vector<Var>& v) {
      return bias ? diff::conv2d(v[0], v[1], v[2], stride) : diff::conv2d(v[0], v[1], stride);
    }, seed);
  };
  t["conv_transpose2d"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t stride = pick(rng, 1, 2), k = pick(rng, 1, 3), c = pick(rng, 1, 3), f = pick(rng, 1, 3);
    const bool bias = pick(rng, 0, 1) == 1;
    std::vector<Tensor> in{random_tensor({pick(rng, 1, 2), c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng),
                           random_tensor({c, f, k, k}, rng)};
    if (bias) in.push_back(random_tensor({f}, rng));
    return check(in, [&](const std::vector<Var>& v) {
      return bias ? diff::conv_transpose2d(v[0], v[1], v[2], stride) : diff::conv_transpose2d(v[0], v[1], stride);
    }, seed);
  };
  t["maxpool2d"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    // Distinct values 0.05 apart, so no window has a near tie.
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 2), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3)};
    Tensor x(s);
    std::vector<float> vals(x.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.05f * static_cast<float>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), x.data().begin());
    return check({x}, [](const std::vector<Var>& v) { return diff::maxpool2d(v[0], 2, 2); }, seed, kKinkStep);
  };
  t["upsample_nearest"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t factor = pick(rng, 1, 3);
    const Tensor x = random_tensor({1, pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
    return check({x}, [&](const std::vector<Var>& v) { return diff::upsample_nearest(v[0], factor); }, seed);
  };
  t["batchnorm_train"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t c = pick(rng, 1, 3);
    std::vector<Tensor> in{random_tensor({pick(rng, 2, 3), c, pick(rng, 2, 3), pick(rng, 2, 3)}, rng, -2, 2),
                           random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)};
    return check(in, [](const std::vector<Var>& v) { return diff::batchnorm_train(v[0], v[1], v[2], 1e-5f); }, seed);
  };
  t["batchnorm_infer"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t c = pick(rng, 1, 3);
    std::vector<Tensor> in{random_tensor({pick(rng, 1, 3), c, pick(rng, 1, 3), pick(rng, 1, 3)}, rng, -2, 2),
                           random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)};
    const Tensor mean = random_tensor({c}, rng), var = random_tensor({c}, rng, 0.5, 2.0);
    return check(in, [&](const std::vector<Var>& v) {
      return diff::batchnorm_infer(v[0], v[1], v[2], mean, var, 1e-5f);
    }, seed);
  };
  t["conv2d_circular"] = [check](std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t h = pick(rng, 1, 7), w = pick(rng, 1, 7);
    std::vector<Tensor> in{random_tensor({h, w, pick(rng, 1, 3)}, rng, 0, 1),
                           random_tensor({pick(rng, 1, h), pick(rng, 1, w)}, rng, 0, 1)};
    return check(in, [](const std::vector<Var>& v) { return diff::conv2d_circular(v[0], v[1]); }, seed);
  };
  return t;
}

// Composite objectives on the latent-dimension-2 toy decoders, against
// central differences of independent double-precision evaluations.
double dd_trial(std::uint64_t seed) {
  const ToyPair toy = make_toy_pair(seed);
  std::mt19937_64 rng(seed);
  const Tensor y = random_tensor({4, 4, 1}, rng, 0.0f, 1.0f);
  const std::vector<double> yd(y.data().begin(), y.data().end());
  const Tensor zi = random_tensor({2}, rng, -1.5f, 1.5f), zk = random_tensor({2}, rng, -1.5f, 1.5f);
  const double zid[2] = {zi[0], zi[1]}, zkd[2] = {zk[0], zk[1]};
  Tape tape;
  const Var a = tape.leaf(zi), b = tape.leaf(zk);
  tape.backward(solve::dd_loss(tape, y, a, b, toy.image, toy.kernel, 0.01, 0.01));
  const double e1 = fd_relative_error(tape.grad(a), [&](const std::vector<double>& x) {
    return toy_dd_loss_oracle(toy, yd, x.data(), zkd, 0.01, 0.01);
  }, {zid[0], zid[1]}, 1e-5);
  const double e2 = fd_relative_error(tape.grad(b), [&](const std::vector<double>& x) {
    return toy_dd_loss_oracle(toy, yd, zid, x.data(), 0.01, 0.01);
  }, {zkd[0], zkd[1]}, 1e-5);
  return std::max(e1, e2);
}

double dds_trial(std::uint64_t seed) {
  const ToyPair toy = make_toy_pair(seed);
  std::mt19937_64 rng(seed);
  const Tensor y = random_tensor({4, 4, 1}, rng, 0.0f, 1.0f);
  const std::vector<double> yd(y.data().begin(), y.data().end());
  const Tensor img = random_tensor({4, 4, 1}, rng, 0.0f, 1.0f);
  const std::vector<double> imgd(img.data().begin(), img.data().end());
  const Tensor zi = random_tensor({2}, rng, -1.5f, 1.5f), zk = random_tensor({2}, rng, -1.5f, 1.5f);
  const double zid[2] = {zi[0], zi[1]}, zkd[2] = {zk[0], zk[1]};
  Tape tape;
  const Var i = tape.leaf(img), a = tape.leaf(zi), b = tape.leaf(zk);
  tape.backward(solve::dds_loss(tape, y, i, a, b, toy.image, toy.kernel, 1.0, 0.5, 1e-3));
  const double e0 = fd_relative_error(tape.grad(i), [&](const std::vector<double>& x) {
    return toy_dds_loss_oracle(toy, yd, x, zid, zkd, 1.0, 0.5, 1e-3);
  }, imgd, 1e-5);
  const double e1 = fd_relative_error(tape.grad(a), [&](const std::vector<double>& x) {
    return toy_dds_loss_oracle(toy, yd, imgd, x.data(), zkd, 1.0, 0.5, 1e-3);
  }, {zid[0], zid[1]}, 1e-5);
  const double e2 = fd_relative_error(tape.grad(b), [&](const std::vector<double>& x) {
    return toy_dds_loss_oracle(toy, yd, imgd, zid, x.data(), 1.0, 0.5, 1e-3);
  }, {zkd[0], zkd[1]}, 1e-5);
  return std::max({e0, e1, e2});
}

Outcome criterion1(const Options&) {
  std::map<std::string, TrialFn> trials = primitive_trials();
  trials["dd_loss"] = [](std::mt19937_64&, std::uint64_t seed) { return dd_trial(seed); };
  trials["dds_loss"] = [](std::mt19937_64&, std::uint64_t seed) { return dds_trial(seed); };
  std::string worst_name;
  double worst = 0.0;
  std::size_t failures = 0;
  for (const auto& [name, fn] : trials) {
    std::mt19937_64 rng(hash_string(name));
    for (int trial = 0; trial < kGradTrials; ++trial) {
      const double err = fn(rng, 1000 + static_cast<std::uint64_t>(trial));
      if (!(err < kGradTol)) {
        ++failures;
        if (std::getenv("DEEPDEBLUR_DEBUG")) std::cerr << name << " trial " << trial << " err " << err << "\n";
      }
      if (!(err <= worst)) {
        worst = err;
        worst_name = name;
      }
    }
  }
  return {failures == 0, std::to_string(trials.size()) + " primitives/objectives x " + std::to_string(kGradTrials) +
                             " trials, " + std::to_string(failures) + " above 1e-3, worst " + fmt(worst) + " (" +
                             worst_name + ")"};
}

// ---- 2: convolution ------------------------------------------------------

Outcome criterion2(const Options&) {
  std::mt19937_64 rng(2024);
  double worst_fft = 0.0, worst_adjoint = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = pick(rng, 1, 64), w = pick(rng, 1, 64);
    const std::size_t kh = std::min(h, pick(rng, 1, 28)), kw = std::min(w, pick(rng, 1, 28));
    const Tensor img = random_tensor({h, w, pick(rng, 1, 3)}, rng, 0, 1);
    Tensor k = random_tensor({kh, kw}, rng, 0, 1);
    double mass = 0.0;
    for (float v : k.data()) mass += v;
    for (float& v : k.data()) v = static_cast<float>(v / mass);
    worst_fft = std::max(worst_fft, max_abs_diff(diff::circular_convolve(img, k), direct_circular_convolution(img, k)));

    // <K x, r> against <x, K^T r> and <k, X^T r>, with both adjoints taken
    // from the backward pass.
    const Tensor r = random_tensor(img.shape(), rng);
    Tape tape;
    const Var vx = tape.leaf(img), vk = tape.leaf(k);
    const Var out = diff::conv2d_circular(vx, vk);
    const double forward = inner(out.value(), r);
    tape.backward(diff::sum(diff::mul(out, tape.constant(r))));
    const double by_image = inner(img, tape.grad(vx)), by_kernel = inner(k, tape.grad(vk));
    const double scale = std::max(1.0, std::abs(forward));
    worst_adjoint = std::max({worst_adjoint, std::abs(forward - by_image) / scale, std::abs(forward - by_kernel) / scale});
  }
  return {worst_fft <= 1e-6 && worst_adjoint <= 1e-5,
          "50 pairs: max |fft - direct| " + fmt(worst_fft) + " (limit 1e-6), adjoint mismatch " + fmt(worst_adjoint) +
              " (limit 1e-5)"};
}

// ---- 3: toy global optimality ---------------------------------------------

Outcome criterion3(const Options&) {
  std::size_t ok = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ToyInstance inst = toy_instance(300 + seed);
    const std::vector<double> y(inst.y.data().begin(), inst.y.data().end());
    const GridMinimum grid = grid_search_minimum(y, inst.toy);
    solve::DDConfig cfg = toy_dd_config(seed);
    cfg.restarts = 30;  // one instance has a wide spurious basin that catches most starts
    const solve::SolveResult r = solve::deep_deblur(inst.y, inst.toy.image, inst.toy.kernel, cfg);
    const double gap = r.restarts[r.chosen_restart].final_measurement - grid.loss;
    ok += gap <= 1e-3;
    worst_gap = std::max(worst_gap, gap);
  }
  return {ok == 10, std::to_string(ok) + "/10 instances within 1e-3 of the grid minimum, worst excess " + fmt(worst_gap)};
}

// ---- 4-6: desk-scale deblurring -------------------------------------------

// Desk-scale DD: 10 restarts of 600 alternating steps at 0.05 exp(-t/1000).
solve::DDConfig desk_dd_config(std::uint64_t seed) {
  solve::DDConfig c = solve::dd_published_config();
  c.steps = 600;
  c.step_size = 0.05;
  c.seed = seed;
  return c;
}

Outcome criterion4(const Options& o) {
  const desk::Models m = desk::load_models(o.models);
  constexpr std::size_t kInstances = 25;
  std::size_t wins = 0;
  double gain_sum = 0.0;
  std::string per;
  for (std::size_t j = 0; j < kInstances; ++j) {
    const desk::Instance inst = desk::in_range_instance(m, j);
    const blur::Observation obs = blur::simulate_observation(inst.truth, inst.kernel, 0.01, desk::noise_seed(j, 0.01));
    const solve::SolveResult r = solve::deep_deblur(obs.y, m.image, m.kernel, desk_dd_config(j));
    const double gain = metrics::psnr(r.i_hat, inst.truth) - metrics::psnr(obs.y, inst.truth);
    wins += gain >= 3.0;
    gain_sum += gain;
    per += (j ? " " : "") + fmt(gain, 3);
  }
  const bool pass = wins * 5 >= kInstances * 4;
  return {pass, std::to_string(wins) + "/25 instances gain >= 3 dB (need 20), mean gain " +
                    fmt(gain_sum / kInstances, 3) + " dB; gains: " + per};
}

// Out-of-range inputs: a fixed left-to-right brightness ramp of +-0.15 added
// to in-range images (clipped to [0, 1]). The decoder never produced such
// ramps, and being low frequency they survive the blur.
Tensor add_ramp(Tensor image) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col) {
      const double ramp = 0.15 * (2.0 * static_cast<double>(col) / static_cast<double>(w - 1) - 1.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        float& v = image[(r * w + col) * c + ch];
        v = static_cast<float>(std::clamp(v + ramp, 0.0, 1.0));
      }
    }
  return image;
}

// Slack weights for the desk models: the range error is summed over pixels
// like the data term, so tau must stay below one for the free image to keep
// a useful share of the out-of-range content.
solve::DDSConfig desk_dds_config(std::uint64_t seed) {
  solve::DDSConfig c = solve::dds_published_config();
  c.tau = 0.3;
  c.steps = 1500;
  c.restarts = 4;
  c.seed = seed;
  return c;
}

Outcome criterion5(const Options& o) {
  const desk::Models m = desk::load_models(o.models);
  constexpr std::size_t kInstances = 15;
  double dd = 0.0, dds = 0.0, blurred = 0.0;
  std::string per;
  for (std::size_t j = 0; j < kInstances; ++j) {
    const std::size_t index = 200 + j;
    const desk::Instance inst = desk::in_range_instance(m, index);
    const Tensor truth = add_ramp(inst.truth);
    const blur::Observation obs = blur::simulate_observation(truth, inst.kernel, 0.01, desk::noise_seed(index, 0.01));
    const double p_dd = metrics::psnr(solve::deep_deblur(obs.y, m.image, m.kernel, desk_dd_config(index)).i_hat, truth);
    const double p_dds =
        metrics::psnr(solve::deep_deblur_slack(obs.y, m.image, m.kernel, desk_dds_config(index)).i_hat, truth);
    dd += p_dd / kInstances;
    dds += p_dds / kInstances;
    blurred += metrics::psnr(obs.y, truth) / kInstances;
    per += (j ? " " : "") + fmt(p_dd, 3) + "/" + fmt(p_dds, 3);
  }
  return {dds >= dd, "mean PSNR DDS " + fmt(dds, 4) + " dB vs DD " + fmt(dd, 4) + " dB (blurred input " +
                         fmt(blurred, 4) + " dB); per instance DD/DDS: " + per};
}

Outcome criterion6(const Options& o) {
  const desk::Models m = desk::load_models(o.models);
  constexpr std::size_t kInstances = 10;
  double low = 0.0, high = 0.0;
  for (std::size_t j = 0; j < kInstances; ++j) {
    const desk::Instance inst = desk::in_range_instance(m, 100 + j);
    for (double sigma : {0.01, 0.10}) {
      const blur::Observation obs =
          blur::simulate_observation(inst.truth, inst.kernel, sigma, desk::noise_seed(100 + j, sigma));
      const solve::SolveResult r = solve::deep_deblur(obs.y, m.image, m.kernel, desk_dd_config(100 + j));
      (sigma < 0.05 ? low : high) += metrics::psnr(r.i_hat, inst.truth) / kInstances;
    }
  }
  return {low > high, "mean DD PSNR " + fmt(low, 4) + " dB at sigma 0.01 vs " + fmt(high, 4) + " dB at sigma 0.10"};
}

// ---- 7: metrics ------------------------------------------------------------

Outcome criterion7(const Options&) {
  std::vector<std::string> failed;
  // One 0.5 pixel among 25 zeros: MSE is exactly 0.01.
  Tensor zeros({5, 5, 1}, 0.0f), b({5, 5, 1}, 0.0f);
  b[12] = 0.5f;
  const double p = metrics::psnr(zeros, b);
  if (p != 20.0) failed.push_back("psnr " + fmt(p, 17));

  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({24, 21, 1}, rng, 0, 1), xc = random_tensor({16, 16, 3}, rng, 0, 1);
  if (metrics::ssim(x, x) != 1.0 || metrics::ssim(xc, xc) != 1.0) failed.push_back("ssim(x, x)");

  const double zero_var = metrics::ssim(Tensor({16, 16, 1}, 0.0f), Tensor({16, 16, 1}, 0.5f));
  const double closed = 1e-4 / (0.25 + 1e-4);
  if (std::abs(zero_var - closed) > 1e-7 || std::abs(zero_var - 3.9984e-4) > 1e-7) {
    failed.push_back("zero-variance ssim " + fmt(zero_var, 10));
  }

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor({20 + seed, 17 + 2 * seed, 1}, rng, 0, 1);
    Tensor n = a;
    std::normal_distribution<float> noise(0.0f, 0.1f);
    for (float& v : n.data()) v += noise(rng);
    const Tensor c = random_tensor(a.shape(), rng, 0, 1);
    worst = std::max({worst, std::abs(metrics::ssim(a, n) - ssim_oracle(a, n)),
                      std::abs(metrics::ssim(a, c) - ssim_oracle(a, c))});
  }
  if (worst > 1e-5) failed.push_back("ssim oracle gap " + fmt(worst));
  std::string detail = "psnr " + fmt(p, 17) + " dB, zero-variance ssim " + fmt(zero_var, 8) + ", max oracle gap " +
                       fmt(worst);
  for (const std::string& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// ---- 8: kernels ------------------------------------------------------------

Outcome criterion8(const Options& o) {
  blur::BlurDatasetConfig cfg;
  cfg.count = 10000;
  cfg.seed = 8;
  const blur::BlurDataset a = blur::generate_blur_dataset(cfg);
  std::size_t bad = 0;
  for (const auto* split : {&a.train, &a.test})
    for (const blur::BlurKernel& k : *split) bad += !blur::satisfies_kernel_invariants(k.canvas);
  const blur::BlurDataset b = blur::generate_blur_dataset(cfg);
  fs::create_directories(o.work);
  const fs::path pa = o.work / "c8_a.ddk", pb = o.work / "c8_b.ddk";
  blur::save_kernels(pa, a.train);
  blur::save_kernels(pb, b.train);
  bool identical = io::read_file(pa) == io::read_file(pb);
  identical = identical && a.test.size() == b.test.size();
  for (std::size_t i = 0; identical && i < a.test.size(); ++i) identical = a.test[i].canvas == b.test[i].canvas;
  fs::remove(pa);
  fs::remove(pb);
  const std::size_t total = a.train.size() + a.test.size();
  return {bad == 0 && total == 10000 && identical,
          std::to_string(total - bad) + "/" + std::to_string(total) + " kernels satisfy the invariants; rerun " +
              (identical ? "bit-identical" : "differs")};
}

// ---- 9: VAE ----------------------------------------------------------------

Outcome criterion9(const Options&) {
  const std::vector<Tensor> data = kernel_dataset(200, 9);
  gen::VaeConfig cfg = gen::blur_vae_desk_config();
  cfg.epochs = 100;
  cfg.max_steps = 300;
  cfg.seed = 9;
  gen::TrainingLog log;
  gen::train_vae(data, cfg, gen::blur_vae_architecture(cfg.latent_dim), &log);
  const double baseline = mean_image_mse(data);
  return {log.step_elbo.size() == 300 && log.final_elbo > log.initial_elbo && log.final_recon_mse < baseline,
          "ELBO " + fmt(log.initial_elbo, 6) + " -> " + fmt(log.final_elbo, 6) + " after " +
              std::to_string(log.step_elbo.size()) + " steps; reconstruction MSE " + fmt(log.final_recon_mse) +
              " vs mean-image " + fmt(baseline)};
}

// ---- 10: CLI determinism -----------------------------------------------------

std::vector<std::string> cli_script() {
  const std::string dd = " --image-model gi/model.ddm --kernel-model gk/model.ddm --toy-images 1 --steps 15 --restarts 2";
  return {
      "gen-blurs --seed 3 --count 40 -o blurs",
      "train-vae --seed 4 --dataset blurs/kernels_train.ddk --set train.vae.latent_dim=4 --set train.vae.max_steps=15 "
      "--set train.vae.epochs=10 -o gk",
      "train-vae --seed 5 --kind image --architecture toy --toy-images 48 --set train.vae.latent_dim=4 "
      "--set train.vae.batch_size=8 --set train.vae.max_steps=10 --set train.width=4 -o gi",
      "project --seed 6 --image-model gi/model.ddm --toy-images 2 --steps 10 -o project",
      "deblur-dd --seed 7" + dd + " --in-range --set project.steps=10 -o dd",
      "deblur-dds --seed 8" + dd + " --kernels blurs/kernels_test.ddk --kernel-index 3 -o dds",
      "sweep --seed 9 --image-model gi/model.ddm --kernel-model gk/model.ddm --toy-images 2 --sigmas 0.01,0.1 "
      "--methods dd,dds --workers 2 --set dd.steps=8 --set dd.restarts=2 --set dds.steps=8 --set dds.restarts=2 -o sweep",
      "sweep --seed 9 --image-model gi/model.ddm --kernel-model gk/model.ddm --toy-images 2 --axis blur_length "
      "--lengths 5,16 --methods dd --set dd.steps=8 --set dd.restarts=1 -o lengths",
  };
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  }
  return files;
}

Outcome criterion10(const Options& o) {
  if (o.cli.empty()) return {false, "no --cli executable given"};
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"c10_a", "c10_b"}) {
    const fs::path dir = o.work / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const std::string& cmd : cli_script()) {
      const std::string line = "cd \"" + dir.string() + "\" && \"" + o.cli + "\" " + cmd + " > /dev/null";
      if (std::system(line.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    runs.push_back(tree(dir));
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : runs[0]) {
    const std::string ext = fs::path(name).extension().string();
    if (ext != ".csv" && ext != ".json") continue;
    ++compared;
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) differing.push_back(name);
  }
  std::size_t others_equal = 0, others = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const std::string ext = fs::path(name).extension().string();
    if (ext == ".csv" || ext == ".json") continue;
    ++others;
    auto it = runs[1].find(name);
    others_equal += it != runs[1].end() && it->second == bytes;
  }
  std::string detail = std::to_string(cli_script().size()) + " CLI runs twice: " + std::to_string(compared - differing.size()) +
                       "/" + std::to_string(compared) + " CSV/JSON files byte-identical (other artifacts " +
                       std::to_string(others_equal) + "/" + std::to_string(others) + ")";
  for (const std::string& d : differing) detail += "; differs: " + d;
  return {compared > 0 && differing.empty() && runs[0].size() == runs[1].size(), detail};
}

const std::map<int, std::pair<std::string, std::function<Outcome(const Options&)>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome(const Options&)>>> c{
      {1, {"gradient correctness", criterion1}},
      {2, {"convolution oracle", criterion2}},
      {3, {"toy global optimality", criterion3}},
      {4, {"in-range recovery", criterion4}},
      {5, {"slack dominance out of range", criterion5}},
      {6, {"noise monotonicity", criterion6}},
      {7, {"metric identities", criterion7}},
      {8, {"kernel invariants", criterion8}},
      {9, {"VAE sanity", criterion9}},
      {10, {"end-to-end determinism", criterion10}},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> ids;
  Options o;
  std::string models = "acceptance_models", work = "acceptance_work";
  bool prepare = false;
  app.add_option("-c,--criterion", ids, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--models", models, "Directory caching the desk-scale models");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--cli", o.cli, "deepdeblur executable (criterion 10)");
  app.add_flag("--prepare-models", prepare, "Train and cache the desk-scale models, then exit");
  CLI11_PARSE(app, argc, argv);
  o.models = models;
  o.work = work;

  try {
    if (prepare) {
      const auto t0 = std::chrono::steady_clock::now();
      desk::prepare_models(o.models);
      std::cout << "models ready in " << o.models.string() << " ("
                << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4) << " s)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cout << "model preparation failed: " << e.what() << "\n";
    return 1;
  }

  if (ids.empty())
    for (const auto& [id, c] : criteria()) ids.push_back(id);
  bool all = true;
  for (int id : ids) {
    const auto& [name, fn] = criteria().at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn(o);
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << out.detail << " ["
              << fmt(secs, 4) << " s]\n"
              << std::flush;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
