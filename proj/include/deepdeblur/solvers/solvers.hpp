#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/generators/model.hpp"

namespace deepdeblur::solve {

// Starting point for one restart; restarts without an entry draw N(0, I).
struct LatentInit {
  diff::Tensor z_i;
  diff::Tensor z_k;
  std::optional<diff::Tensor> image;  // deep_deblur_slack only

  friend bool operator==(const LatentInit&, const LatentInit&) = default;
};

struct DDConfig {
  double gamma = 0.01;   // weight on ||z_i||^2
  double lambda = 0.01;  // weight on ||z_k||^2
  std::size_t steps = 6000;
  double step_size = 0.01;  // eta_t = step_size * exp(-t / decay)
  double decay = 1000.0;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  std::vector<LatentInit> init;

  friend bool operator==(const DDConfig&, const DDConfig&) = default;
};

// lambda = gamma = 0.01, 6000 steps at 0.01 exp(-t/1000), 10 restarts.
DDConfig dd_published_config();

struct DDSConfig {
  double tau = 100.0;  // range error weight
  double zeta = 0.5;   // in-range measurement weight
  double rho = 1e-3;   // TV weight
  std::size_t steps = 10000;
  double adam_lr = 0.005;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  double image_init_mean = 0.5;
  double image_init_std = 0.1;  // variance 1e-2
  std::vector<LatentInit> init;

  friend bool operator==(const DDSConfig&, const DDSConfig&) = default;
};

// tau 100, zeta 0.5, rho 1e-3, 10000 Adam steps at 0.005, 10 restarts.
DDSConfig dds_published_config();

struct LossPoint {
  double total = 0.0;
  double measurement = 0.0;
};

struct RestartSummary {
  bool aborted = false;
  std::string diagnostic;
  double final_total = 0.0;
  double final_measurement = 0.0;
};

struct SolveResult {
  diff::Tensor z_i;
  diff::Tensor z_k;
  diff::Tensor i_hat;  // DD: decode(z_i); DDS: slack image clipped to [0, 1]
  diff::Tensor k_hat;  // decode(z_k) renormalized to sum 1
  diff::Tensor k_raw;  // decode(z_k)
  std::vector<LossPoint> loss_trace;  // chosen restart, one entry per step
  std::size_t chosen_restart = 0;
  std::vector<RestartSummary> restarts;
  double elapsed_seconds = 0.0;
};

// ||y - G_I(z_i) (*) G_K(z_k)||^2 + gamma ||z_i||^2 + lambda ||z_k||^2.
diff::Var dd_loss(diff::Tape& tape, const diff::Tensor& y, diff::Var z_i, diff::Var z_k,
                  const gen::GeneratorModel& g_i, const gen::GeneratorModel& g_k, double gamma, double lambda);

// ||y - i (*) G_K(z_k)||^2 + tau ||i - G_I(z_i)||^2
//   + zeta ||y - G_I(z_i) (*) G_K(z_k)||^2 + rho TV(i).
diff::Var dds_loss(diff::Tape& tape, const diff::Tensor& y, diff::Var image, diff::Var z_i, diff::Var z_k,
                   const gen::GeneratorModel& g_i, const gen::GeneratorModel& g_k, double tau, double zeta,
                   double rho);

// ||y - image (*) kernel||^2 in double.
double measurement_loss(const diff::Tensor& y, const diff::Tensor& image, const diff::Tensor& kernel);

// Alternating gradient descent on dd_loss: each step updates z_i, then z_k
// with a freshly computed gradient. Keeps the restart with the smallest final
// measurement loss (ties to the lowest index). Restarts that hit a non-finite
// loss are abandoned; SolverError if all are.
SolveResult deep_deblur(const diff::Tensor& y, const gen::GeneratorModel& g_i, const gen::GeneratorModel& g_k,
                        const DDConfig& config);

// Cyclic Adam updates of z_i, z_k and the free image on dds_loss. Restarts
// are ranked by the final ||y - i (*) G_K(z_k)||^2.
SolveResult deep_deblur_slack(const diff::Tensor& y, const gen::GeneratorModel& g_i, const gen::GeneratorModel& g_k,
                              const DDSConfig& config);

struct Projection {
  diff::Tensor z;
  diff::Tensor image;  // decode(z)
  std::vector<double> loss_trace;
};

// Gradient descent on ||target - G(z)||^2 from z ~ N(0, I).
Projection range_project(const diff::Tensor& target, const gen::GeneratorModel& g, std::size_t steps,
                         double step_size, std::uint64_t seed);

// Sum-1 copy; an all-zero kernel is returned unchanged.
diff::Tensor normalize_kernel(const diff::Tensor& kernel);

}  // namespace deepdeblur::solve
