#include "deepdeblur/solvers/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "deepdeblur/diffcore/adam.hpp"
#include "deepdeblur/errors.hpp"
#include "deepdeblur/random.hpp"

namespace deepdeblur::solve {

using diff::Tape;
using diff::Tensor;
using diff::Var;
using gen::GeneratorModel;

namespace {

struct Terms {
  Var total;
  Var measurement;  // the term used to rank restarts
};

void check_models(const Tensor& y, const GeneratorModel& g_i, const GeneratorModel& g_k) {
  if (g_i.kind() != gen::OutputKind::Image) throw UsageError("G_I must be an image generator");
  if (g_k.kind() != gen::OutputKind::Kernel) throw UsageError("G_K must be a kernel generator");
  if (y.shape() != g_i.output_shape()) {
    throw ShapeError("observation " + diff::shape_str(y.shape()) + " does not match G_I output " +
                     diff::shape_str(g_i.output_shape()));
  }
  const auto& ks = g_k.output_shape();
  if (ks[0] > y.dim(0) || ks[1] > y.dim(1)) throw ShapeError("G_K kernels are larger than the observation");
}

Terms dd_terms(Tape& tape, const Tensor& y, Var z_i, Var z_k, const GeneratorModel& g_i, const GeneratorModel& g_k,
               double gamma, double lambda) {
  Var image = g_i.decode(tape, z_i);
  Var kernel = g_k.decode(tape, z_k);
  if (image.shape() != y.shape()) throw ShapeError("dd_loss: G_I output does not match y");
  Var meas = diff::sum_squares(tape.constant(y) - diff::conv2d_circular(image, kernel));
  Var total = meas + diff::scale(diff::sum_squares(z_i), static_cast<float>(gamma)) +
              diff::scale(diff::sum_squares(z_k), static_cast<float>(lambda));
  return {total, meas};
}

Terms dds_terms(Tape& tape, const Tensor& y, Var image, Var z_i, Var z_k, const GeneratorModel& g_i,
                const GeneratorModel& g_k, double tau, double zeta, double rho) {
  if (image.shape() != y.shape()) throw ShapeError("dds_loss: image does not match y");
  Var gen_image = g_i.decode(tape, z_i);
  Var kernel = g_k.decode(tape, z_k);
  Var obs = tape.constant(y);
  Var data = diff::sum_squares(obs - diff::conv2d_circular(image, kernel));
  Var range = diff::sum_squares(image - gen_image);
  Var in_range = diff::sum_squares(obs - diff::conv2d_circular(gen_image, kernel));
  Var total = data + diff::scale(range, static_cast<float>(tau)) + diff::scale(in_range, static_cast<float>(zeta)) +
              diff::scale(diff::tv_norm(image), static_cast<float>(rho));
  return {total, data};
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool finite(const Tensor& t) { return t.all_finite(); }

struct RestartState {
  Tensor z_i, z_k, image;
  std::vector<LossPoint> trace;
  RestartSummary summary;
};

void initial_latents(const LatentInit* init, const GeneratorModel& g_i, const GeneratorModel& g_k,
                     std::mt19937_64& rng, RestartState& s) {
  // Draws happen even when overridden so later draws do not shift.
  s.z_i = gaussian_tensor({g_i.latent_dim()}, 0.0, 1.0, rng);
  s.z_k = gaussian_tensor({g_k.latent_dim()}, 0.0, 1.0, rng);
  if (init) {
    if (init->z_i.shape() != s.z_i.shape() || init->z_k.shape() != s.z_k.shape()) {
      throw ShapeError("initial latents do not match the generators");
    }
    s.z_i = init->z_i;
    s.z_k = init->z_k;
  }
}

void gradient_step(Tensor& x, const Tensor& grad, double eta) {
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<float>(x[j] - eta * grad[j]);
}

// Picks the lowest final measurement among finished restarts.
std::size_t select_restart(const std::vector<RestartState>& states) {
  std::size_t best = states.size();
  for (std::size_t r = 0; r < states.size(); ++r) {
    if (states[r].summary.aborted) continue;
    if (best == states.size() || states[r].summary.final_measurement < states[best].summary.final_measurement) best = r;
  }
  if (best == states.size()) {
    std::string why;
    for (std::size_t r = 0; r < states.size(); ++r) {
      why += "\n  restart " + std::to_string(r) + ": " + states[r].summary.diagnostic;
    }
    throw SolverError("every restart failed:" + why);
  }
  return best;
}

}  // namespace

DDConfig dd_published_config() { return DDConfig{}; }

DDSConfig dds_published_config() { return DDSConfig{}; }

Var dd_loss(Tape& tape, const Tensor& y, Var z_i, Var z_k, const GeneratorModel& g_i, const GeneratorModel& g_k,
            double gamma, double lambda) {
  return dd_terms(tape, y, z_i, z_k, g_i, g_k, gamma, lambda).total;
}

Var dds_loss(Tape& tape, const Tensor& y, Var image, Var z_i, Var z_k, const GeneratorModel& g_i,
             const GeneratorModel& g_k, double tau, double zeta, double rho) {
  return dds_terms(tape, y, image, z_i, z_k, g_i, g_k, tau, zeta, rho).total;
}

double measurement_loss(const Tensor& y, const Tensor& image, const Tensor& kernel) {
  const Tensor blurred = diff::circular_convolve(image, kernel);
  if (blurred.shape() != y.shape()) throw ShapeError("measurement_loss: shapes differ");
  double s = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double d = static_cast<double>(y[j]) - blurred[j];
    s += d * d;
  }
  return s;
}

Tensor normalize_kernel(const Tensor& kernel) {
  double mass = 0.0;
  for (float v : kernel.data()) mass += v;
  if (mass == 0.0 || !std::isfinite(mass)) return kernel;
  Tensor out = kernel;
  for (float& v : out.data()) v = static_cast<float>(v / mass);
  return out;
}

SolveResult deep_deblur(const Tensor& y, const GeneratorModel& g_i, const GeneratorModel& g_k, const DDConfig& cfg) {
  check_models(y, g_i, g_k);
  if (cfg.restarts == 0) throw UsageError("deep_deblur needs at least one restart");
  if (cfg.gamma < 0.0 || cfg.lambda < 0.0) throw UsageError("gamma and lambda must be nonnegative");
  if (!(cfg.decay > 0.0)) throw UsageError("step size decay must be positive");
  y.require_finite("observation");
  const auto start = std::chrono::steady_clock::now();

  std::vector<RestartState> states(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    RestartState& s = states[r];
    std::mt19937_64 rng(derive_seed(cfg.seed, {r}));
    initial_latents(r < cfg.init.size() ? &cfg.init[r] : nullptr, g_i, g_k, rng, s);
    s.trace.reserve(cfg.steps);
    for (std::size_t t = 0; t < cfg.steps && !s.summary.aborted; ++t) {
      const double eta = cfg.step_size * std::exp(-static_cast<double>(t) / cfg.decay);
      {
        Tape tape;
        Var zi = tape.leaf(s.z_i);
        Var zk = tape.constant(s.z_k);
        const Terms terms = dd_terms(tape, y, zi, zk, g_i, g_k, cfg.gamma, cfg.lambda);
        if (!std::isfinite(terms.total.item())) {
          s.summary.aborted = true;
          s.summary.diagnostic = "non-finite loss at step " + std::to_string(t) + " (z_i half-step)";
          break;
        }
        tape.backward(terms.total);
        gradient_step(s.z_i, tape.grad(zi), eta);
      }
      {
        Tape tape;
        Var zi = tape.constant(s.z_i);
        Var zk = tape.leaf(s.z_k);
        const Terms terms = dd_terms(tape, y, zi, zk, g_i, g_k, cfg.gamma, cfg.lambda);
        const double total = terms.total.item();
        if (!std::isfinite(total)) {
          s.summary.aborted = true;
          s.summary.diagnostic = "non-finite loss at step " + std::to_string(t) + " (z_k half-step)";
          break;
        }
        s.trace.push_back({total, terms.measurement.item()});
        tape.backward(terms.total);
        gradient_step(s.z_k, tape.grad(zk), eta);
      }
      if (!finite(s.z_i) || !finite(s.z_k)) {
        s.summary.aborted = true;
        s.summary.diagnostic = "non-finite latent after step " + std::to_string(t);
      }
    }
    if (s.summary.aborted) continue;
    const Tensor image = g_i.decode(s.z_i), kernel = g_k.decode(s.z_k);
    const double meas = measurement_loss(y, image, kernel);
    double zi2 = 0.0, zk2 = 0.0;
    for (float v : s.z_i.data()) zi2 += static_cast<double>(v) * v;
    for (float v : s.z_k.data()) zk2 += static_cast<double>(v) * v;
    s.summary.final_measurement = meas;
    s.summary.final_total = meas + cfg.gamma * zi2 + cfg.lambda * zk2;
    if (!std::isfinite(s.summary.final_total)) {
      s.summary.aborted = true;
      s.summary.diagnostic = "non-finite final loss";
    }
  }

  const std::size_t best = select_restart(states);
  SolveResult out;
  out.chosen_restart = best;
  out.z_i = states[best].z_i;
  out.z_k = states[best].z_k;
  out.i_hat = g_i.decode(out.z_i);
  out.k_raw = g_k.decode(out.z_k);
  out.k_hat = normalize_kernel(out.k_raw);
  out.loss_trace = std::move(states[best].trace);
  for (auto& s : states) out.restarts.push_back(std::move(s.summary));
  out.elapsed_seconds = elapsed_since(start);
  return out;
}

SolveResult deep_deblur_slack(const Tensor& y, const GeneratorModel& g_i, const GeneratorModel& g_k,
                              const DDSConfig& cfg) {
  check_models(y, g_i, g_k);
  if (cfg.restarts == 0) throw UsageError("deep_deblur_slack needs at least one restart");
  if (cfg.tau < 0.0 || cfg.zeta < 0.0 || cfg.rho < 0.0) throw UsageError("tau, zeta and rho must be nonnegative");
  if (!(cfg.adam_lr > 0.0)) throw UsageError("adam_lr must be positive");
  y.require_finite("observation");
  const auto start = std::chrono::steady_clock::now();

  std::vector<RestartState> states(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    RestartState& s = states[r];
    std::mt19937_64 rng(derive_seed(cfg.seed, {r}));
    const LatentInit* init = r < cfg.init.size() ? &cfg.init[r] : nullptr;
    initial_latents(init, g_i, g_k, rng, s);
    s.image = gaussian_tensor(y.shape(), cfg.image_init_mean, cfg.image_init_std, rng);
    if (init && init->image) {
      if (init->image->shape() != y.shape()) throw ShapeError("initial image does not match y");
      s.image = *init->image;
    }
    diff::Adam adam_zi({cfg.adam_lr}), adam_zk({cfg.adam_lr}), adam_img({cfg.adam_lr});
    s.trace.reserve(cfg.steps);

    // One block at a time, the other two held fixed.
    enum Block { kZi, kZk, kImage };
    auto block_step = [&](Block block, std::size_t t) {
      Tape tape;
      Var zi = block == kZi ? tape.leaf(s.z_i) : tape.constant(s.z_i);
      Var zk = block == kZk ? tape.leaf(s.z_k) : tape.constant(s.z_k);
      Var img = block == kImage ? tape.leaf(s.image) : tape.constant(s.image);
      const Terms terms = dds_terms(tape, y, img, zi, zk, g_i, g_k, cfg.tau, cfg.zeta, cfg.rho);
      const double total = terms.total.item();
      if (!std::isfinite(total)) {
        s.summary.aborted = true;
        s.summary.diagnostic = "non-finite loss at step " + std::to_string(t);
        return;
      }
      if (block == kImage) s.trace.push_back({total, terms.measurement.item()});
      tape.backward(terms.total);
      switch (block) {
        case kZi:
          adam_zi.step({&s.z_i}, {tape.grad(zi)});
          break;
        case kZk:
          adam_zk.step({&s.z_k}, {tape.grad(zk)});
          break;
        case kImage:
          adam_img.step({&s.image}, {tape.grad(img)});
          break;
      }
    };
    for (std::size_t t = 0; t < cfg.steps && !s.summary.aborted; ++t) {
      for (Block b : {kZi, kZk, kImage}) {
        block_step(b, t);
        if (s.summary.aborted) break;
      }
      if (!s.summary.aborted && (!finite(s.z_i) || !finite(s.z_k) || !finite(s.image))) {
        s.summary.aborted = true;
        s.summary.diagnostic = "non-finite iterate after step " + std::to_string(t);
      }
    }
    if (s.summary.aborted) continue;
    Tape tape;
    const Terms terms = dds_terms(tape, y, tape.constant(s.image), tape.constant(s.z_i), tape.constant(s.z_k), g_i,
                                  g_k, cfg.tau, cfg.zeta, cfg.rho);
    s.summary.final_total = terms.total.item();
    s.summary.final_measurement = measurement_loss(y, s.image, g_k.decode(s.z_k));
    if (!std::isfinite(s.summary.final_total)) {
      s.summary.aborted = true;
      s.summary.diagnostic = "non-finite final loss";
    }
  }

  const std::size_t best = select_restart(states);
  SolveResult out;
  out.chosen_restart = best;
  out.z_i = states[best].z_i;
  out.z_k = states[best].z_k;
  out.i_hat = states[best].image;
  for (float& v : out.i_hat.data()) v = std::clamp(v, 0.0f, 1.0f);
  out.k_raw = g_k.decode(out.z_k);
  out.k_hat = normalize_kernel(out.k_raw);
  out.loss_trace = std::move(states[best].trace);
  for (auto& s : states) out.restarts.push_back(std::move(s.summary));
  out.elapsed_seconds = elapsed_since(start);
  return out;
}

Projection range_project(const Tensor& target, const GeneratorModel& g, std::size_t steps, double step_size,
                         std::uint64_t seed) {
  if (target.shape() != g.output_shape()) {
    throw ShapeError("range_project: target " + diff::shape_str(target.shape()) + " does not match generator output " +
                     diff::shape_str(g.output_shape()));
  }
  target.require_finite("range_project target");
  std::mt19937_64 rng(seed);
  Projection out;
  out.z = gaussian_tensor({g.latent_dim()}, 0.0, 1.0, rng);
  out.loss_trace.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tape tape;
    Var z = tape.leaf(out.z);
    Var loss = diff::sum_squares(tape.constant(target) - g.decode(tape, z));
    const double value = loss.item();
    if (!std::isfinite(value)) throw SolverError("range_project: non-finite loss at step " + std::to_string(t));
    out.loss_trace.push_back(value);
    tape.backward(loss);
    gradient_step(out.z, tape.grad(z), step_size);
  }
  if (!finite(out.z)) throw SolverError("range_project: non-finite latent");
  out.image = g.decode(out.z);
  return out;
}

}  // namespace deepdeblur::solve
