#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deepdeblur/generators/model.hpp"

namespace deepdeblur::gen {

// Encoder trunk plus decoder. The mean and log-variance heads (dense layers of
// size latent_dim on the flattened trunk output) are implicit.
struct VaeArchitecture {
  OutputKind kind = OutputKind::Image;
  diff::Shape input_shape;  // per sample, [C, H, W]
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
};

// Blur VAE: 28x28 kernels.
//   enc: conv(20,2,1) relu maxpool(2,2) conv(20,2,1) relu maxpool(2,2)
//   dec: fc(720) relu reshape(20,6,6) upsample(2) convT(20,2,1) relu
//        upsample(2) convT(20,2,1) relu convT(1,2,1) relu
VaeArchitecture blur_vae_architecture(std::size_t latent_dim = 50);

// Street-number VAE for 32x32x3 images (three stride-2 conv stages of
// 128/256/512 filters with batchnorm, mirrored by the decoder, 1x1 conv to
// RGB and a sigmoid).
VaeArchitecture svhn_vae_architecture(std::size_t latent_dim = 100);

// The same topology as the street-number VAE with `width`, 2*width, 4*width
// filters. `size` must be a multiple of 8.
VaeArchitecture toy_image_vae_architecture(std::size_t latent_dim, std::size_t size = 32, std::size_t channels = 1,
                                           std::size_t width = 8);

struct VaeConfig {
  std::size_t latent_dim = 50;
  std::size_t batch_size = 5;
  double learning_rate = 1e-5;
  std::size_t epochs = 1;
  // Stop after this many optimizer steps (0 = run all epochs).
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  // Standard deviation of the Gaussian likelihood; the reconstruction term is
  // sum((x - x_hat)^2) / (2 sigma^2).
  double recon_sigma = 0.1;
  double batchnorm_momentum = 0.1;
  // Training targets are data * data_scale; the returned decoder has 1/scale
  // folded into its last weighted layer, so it emits data-scale values. Needs
  // a relu head. Kernel canvases hold values around 1e-3, which otherwise
  // starve the encoder and let the first updates silence the relu head.
  double data_scale = 1.0;

  friend bool operator==(const VaeConfig&, const VaeConfig&) = default;
};

// Published blur-VAE settings (latent 50, batch 5, Adam lr 1e-5).
VaeConfig blur_vae_published_config();
// Desk-scale kernel VAE settings (latent 50, batch 5, lr 1e-3, targets scaled
// by 100, sigma 0.1). Reaches useful reconstructions in a few hundred steps.
VaeConfig blur_vae_desk_config();
// Published street-number settings (latent 100, batch 1500, Adam lr 1e-5).
VaeConfig svhn_vae_published_config();

struct TrainingLog {
  std::vector<double> step_elbo;  // minibatch ELBO per sample, per step
  double initial_elbo = 0.0;      // full-dataset ELBO before the first step
  double final_elbo = 0.0;        // full-dataset ELBO after the last step
  double final_recon_mse = 0.0;   // mean squared error of decode(mu(x)), data units
};

// Trains the VAE with Adam and returns the decoder. The ELBO per sample is
// -sum((x - x_hat)^2) / (2 sigma^2) - KL(N(mu, sigma^2) || N(0, I)).
// Dataset items are [H, W, C] images or [kh, kw] kernels.
GeneratorModel train_vae(const std::vector<diff::Tensor>& dataset, const VaeConfig& config,
                         const VaeArchitecture& arch, TrainingLog* log = nullptr);

// KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries.
diff::Var gaussian_kl(diff::Var mu, diff::Var logvar);
// z = mu + exp(logvar / 2) * eps.
diff::Var reparameterize(diff::Var mu, diff::Var logvar, diff::Var eps);

}  // namespace deepdeblur::gen
