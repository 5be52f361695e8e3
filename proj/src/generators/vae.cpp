#include "deepdeblur/generators/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "deepdeblur/diffcore/adam.hpp"
#include "deepdeblur/errors.hpp"

namespace deepdeblur::gen {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

VaeArchitecture blur_vae_architecture(std::size_t latent_dim) {
  (void)latent_dim;  // heads are sized by VaeConfig::latent_dim
  VaeArchitecture a;
  a.kind = OutputKind::Kernel;
  a.input_shape = {1, 28, 28};
  a.encoder = {LayerSpec::conv(20, 2, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
               LayerSpec::conv(20, 2, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2)};
  a.decoder = {LayerSpec::dense(720),      LayerSpec::relu(),         LayerSpec::reshape({20, 6, 6}),
               LayerSpec::upsample(2),     LayerSpec::conv_t(20, 2, 1), LayerSpec::relu(),
               LayerSpec::upsample(2),     LayerSpec::conv_t(20, 2, 1), LayerSpec::relu(),
               LayerSpec::conv_t(1, 2, 1), LayerSpec::relu()};
  return a;
}

VaeArchitecture svhn_vae_architecture(std::size_t latent_dim) {
  (void)latent_dim;
  VaeArchitecture a;
  a.kind = OutputKind::Image;
  a.input_shape = {3, 32, 32};
  a.encoder = {LayerSpec::conv(128, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(256, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(512, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu()};
  a.decoder = {LayerSpec::dense(8192),       LayerSpec::reshape({512, 4, 4}),
               LayerSpec::conv_t(512, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv_t(256, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv_t(128, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(3, 1, 1),     LayerSpec::sigmoid()};
  return a;
}

VaeArchitecture toy_image_vae_architecture(std::size_t latent_dim, std::size_t size, std::size_t channels,
                                           std::size_t width) {
  (void)latent_dim;
  if (size % 8 != 0 || size == 0) throw ShapeError("toy image size must be a positive multiple of 8");
  const std::size_t s8 = size / 8;
  VaeArchitecture a;
  a.kind = OutputKind::Image;
  a.input_shape = {channels, size, size};
  a.encoder = {LayerSpec::conv(width, 2, 2),     LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(2 * width, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(4 * width, 2, 2), LayerSpec::batchnorm(), LayerSpec::relu()};
  a.decoder = {LayerSpec::dense(4 * width * s8 * s8), LayerSpec::reshape({4 * width, s8, s8}),
               LayerSpec::conv_t(4 * width, 2, 2),    LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv_t(2 * width, 2, 2),    LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv_t(width, 2, 2),        LayerSpec::batchnorm(), LayerSpec::relu(),
               LayerSpec::conv(channels, 1, 1),       LayerSpec::sigmoid()};
  return a;
}

VaeConfig blur_vae_published_config() {
  VaeConfig c;
  c.latent_dim = 50;
  c.batch_size = 5;
  c.learning_rate = 1e-5;
  return c;
}

VaeConfig blur_vae_desk_config() {
  VaeConfig c = blur_vae_published_config();
  c.learning_rate = 1e-3;
  c.recon_sigma = 0.1;
  c.data_scale = 100.0;
  return c;
}

VaeConfig svhn_vae_published_config() {
  VaeConfig c;
  c.latent_dim = 100;
  c.batch_size = 1500;
  c.learning_rate = 1e-5;
  return c;
}

Var gaussian_kl(Var mu, Var logvar) {
  const float count = static_cast<float>(mu.size());
  Var total = diff::sum_squares(mu) + diff::sum(diff::exp(logvar)) - diff::sum(logvar);
  return diff::scale(diff::add_scalar(total, -count), 0.5f);
}

Var reparameterize(Var mu, Var logvar, Var eps) {
  return mu + diff::exp(diff::scale(logvar, 0.5f)) * eps;
}

namespace {

const char* kEncoderPrefix = "encoder";

// Dataset item ([H, W, C] image or [kh, kw] kernel) -> [C, H, W] values.
void append_chw(const Tensor& item, const Shape& input_shape, std::vector<float>& out) {
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  const bool matches = item.rank() == 3 ? item.shape() == Shape{h, w, c} : (c == 1 && item.shape() == Shape{h, w});
  if (!matches) {
    throw ShapeError("dataset item " + diff::shape_str(item.shape()) + " does not match encoder input " +
                     diff::shape_str(input_shape));
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) out.push_back(item[p * c + ch]);
}

Tensor make_batch(const std::vector<Tensor>& dataset, const std::vector<std::size_t>& idx, std::size_t begin,
                  std::size_t end, const Shape& input_shape) {
  std::vector<float> values;
  values.reserve((end - begin) * diff::shape_numel(input_shape));
  for (std::size_t i = begin; i < end; ++i) append_chw(dataset[idx[i]], input_shape, values);
  Shape s{end - begin};
  s.insert(s.end(), input_shape.begin(), input_shape.end());
  return Tensor(std::move(s), std::move(values));
}

Tensor standard_normal(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

class Vae {
 public:
  Vae(const VaeArchitecture& arch, const VaeConfig& cfg, std::mt19937_64& rng) : arch_(arch), cfg_(cfg) {
    weights_ = init_weights(arch.input_shape, arch.encoder, kEncoderPrefix, rng);
    const Shape trunk = arch.encoder.empty() ? arch.input_shape : infer_shapes(arch.input_shape, arch.encoder).back();
    const std::vector<LayerSpec> head{LayerSpec::dense(cfg.latent_dim)};
    weights_.merge(init_weights(trunk, head, "mu", rng));
    weights_.merge(init_weights(trunk, head, "logvar", rng));
    weights_.merge(init_weights({cfg.latent_dim}, arch.decoder, GeneratorModel::kWeightPrefix, rng));
    // The decoder must reproduce the input layout.
    const Shape out = infer_shapes({cfg.latent_dim}, arch.decoder).back();
    if (out != arch.input_shape) {
      throw ShapeError("decoder output " + diff::shape_str(out) + " differs from encoder input " +
                       diff::shape_str(arch.input_shape));
    }
  }

  struct Terms {
    Var elbo_sum;  // summed over the batch
    Var recon_sse;
  };

  // Negative ELBO summed over the batch, recorded on `tape`.
  Terms evaluate(Tape& tape, const ParamVars& params, const Tensor& x, const Tensor& eps, BatchnormMode mode,
                 std::map<std::string, diff::BatchStats>* stats) const {
    ForwardOptions opts{mode, stats};
    Var input = tape.constant(x);
    Var h = forward(arch_.encoder, kEncoderPrefix, params, weights_, input, opts);
    const std::size_t batch = x.dim(0);
    h = diff::reshape(h, {batch, h.size() / batch});
    Var mu = diff::dense(h, params.at("mu.0.weight"), params.at("mu.0.bias"));
    Var logvar = diff::dense(h, params.at("logvar.0.weight"), params.at("logvar.0.bias"));
    Var z = reparameterize(mu, logvar, tape.constant(eps));
    Var recon = forward(arch_.decoder, GeneratorModel::kWeightPrefix, params, weights_, z, opts);
    Var sse = diff::sum_squares(recon - input);
    const float weight = static_cast<float>(1.0 / (2.0 * cfg_.recon_sigma * cfg_.recon_sigma));
    Var neg_elbo = diff::scale(sse, weight) + gaussian_kl(mu, logvar);
    return {diff::scale(neg_elbo, -1.0f), sse};
  }

  // Mean squared reconstruction error of decode(mu(x)) with running
  // statistics, and mean ELBO per sample with fixed noise.
  std::pair<double, double> assess(const std::vector<Tensor>& dataset, std::uint64_t eps_seed) const {
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(eps_seed);
    double elbo = 0.0, sse = 0.0;
    const std::size_t chunk = 32;
    for (std::size_t b = 0; b < idx.size(); b += chunk) {
      const std::size_t e = std::min(idx.size(), b + chunk);
      Tensor x = make_batch(dataset, idx, b, e, arch_.input_shape);
      Tape tape;
      const ParamVars params = gen::bind(tape, weights_, false);
      elbo += evaluate(tape, params, x, standard_normal({e - b, cfg_.latent_dim}, rng),
                       BatchnormMode::RunningStatistics, nullptr)
                  .elbo_sum.item();
      Tensor zero({e - b, cfg_.latent_dim}, 0.0f);
      sse += evaluate(tape, params, x, zero, BatchnormMode::RunningStatistics, nullptr).recon_sse.item();
    }
    const double n = static_cast<double>(dataset.size());
    return {elbo / n, sse / (n * static_cast<double>(diff::shape_numel(arch_.input_shape)))};
  }

  // One Adam step on a batch; returns the minibatch ELBO per sample.
  double train_step(const Tensor& x, std::mt19937_64& rng, diff::Adam& adam) {
    Tape tape;
    const ParamVars params = gen::bind(tape, weights_, true);
    std::map<std::string, diff::BatchStats> stats;
    const std::size_t batch = x.dim(0);
    const Terms t = evaluate(tape, params, x, standard_normal({batch, cfg_.latent_dim}, rng),
                             BatchnormMode::BatchStatistics, &stats);
    const float elbo = t.elbo_sum.item();
    if (!std::isfinite(elbo)) throw NumericError("VAE training diverged (non-finite ELBO)");
    Var loss = diff::scale(t.elbo_sum, -1.0f / static_cast<float>(batch));
    tape.backward(loss);

    std::vector<Tensor*> ptrs;
    std::vector<Tensor> grads;
    for (auto& [name, var] : params) {
      ptrs.push_back(&weights_.at(name));
      grads.push_back(tape.grad(var));
    }
    adam.step(ptrs, grads);

    const float m = static_cast<float>(cfg_.batchnorm_momentum);
    for (const auto& [layer, s] : stats) {
      Tensor& rm = weights_.at(layer + ".running_mean");
      Tensor& rv = weights_.at(layer + ".running_var");
      for (std::size_t c = 0; c < rm.size(); ++c) {
        rm[c] = (1.0f - m) * rm[c] + m * s.mean[c];
        rv[c] = (1.0f - m) * rv[c] + m * s.variance[c];
      }
    }
    return static_cast<double>(elbo) / static_cast<double>(batch);
  }

  GeneratorModel decoder() const {
    WeightMap dec;
    const std::string prefix = std::string(GeneratorModel::kWeightPrefix) + ".";
    for (const auto& [name, t] : weights_) {
      if (name.starts_with(prefix)) dec.emplace(name, t);
    }
    if (cfg_.data_scale != 1.0) fold_output_scale(dec);
    return GeneratorModel(arch_.kind, cfg_.latent_dim, arch_.decoder, std::move(dec));
  }

 private:
  // The decoder was fit to data * scale. Every layer after the last weighted
  // one is relu or shape-only, so dividing that layer's weight and bias by the
  // scale divides the output exactly.
  void fold_output_scale(WeightMap& dec) const {
    std::size_t last = arch_.decoder.size();
    for (std::size_t i = 0; i < arch_.decoder.size(); ++i) {
      const LayerKind k = arch_.decoder[i].kind;
      if (k == LayerKind::Dense || k == LayerKind::Conv || k == LayerKind::ConvTranspose) last = i;
    }
    const std::string base = std::string(GeneratorModel::kWeightPrefix) + "." + std::to_string(last) + ".";
    const float inv = static_cast<float>(1.0 / cfg_.data_scale);
    for (const char* what : {"weight", "bias"}) {
      for (float& v : dec.at(base + what).data()) v *= inv;
    }
  }

  VaeArchitecture arch_;
  VaeConfig cfg_;
  WeightMap weights_;
};

}  // namespace

GeneratorModel train_vae(const std::vector<Tensor>& dataset, const VaeConfig& config, const VaeArchitecture& arch,
                         TrainingLog* log) {
  if (dataset.empty()) throw UsageError("train_vae: empty dataset");
  if (config.latent_dim == 0 || config.batch_size == 0 || config.learning_rate <= 0.0 || config.epochs == 0 ||
      config.recon_sigma <= 0.0) {
    throw UsageError("train_vae: latent_dim, batch_size, learning_rate, epochs and recon_sigma must be positive");
  }
  if (arch.input_shape.size() != 3) throw ShapeError("VAE input shape must be [C, H, W]");
  if (!(config.data_scale > 0.0)) throw UsageError("train_vae: data_scale must be positive");
  if (config.data_scale != 1.0) {
    std::size_t last = arch.decoder.size();
    for (std::size_t i = 0; i < arch.decoder.size(); ++i) {
      const LayerKind k = arch.decoder[i].kind;
      if (k == LayerKind::Dense || k == LayerKind::Conv || k == LayerKind::ConvTranspose) last = i;
    }
    for (std::size_t i = last + 1; i < arch.decoder.size(); ++i) {
      const LayerKind k = arch.decoder[i].kind;
      if (k != LayerKind::Relu && k != LayerKind::Reshape && k != LayerKind::Upsample) {
        throw UsageError("train_vae: data_scale needs a decoder whose head is positively homogeneous (relu)");
      }
    }
  }
  // Validates every item up front.
  {
    std::vector<float> scratch;
    for (const Tensor& item : dataset) {
      scratch.clear();
      append_chw(item, arch.input_shape, scratch);
    }
  }
  std::vector<Tensor> scaled_storage;
  if (config.data_scale != 1.0) {
    scaled_storage = dataset;
    for (Tensor& t : scaled_storage)
      for (float& v : t.data()) v = static_cast<float>(v * config.data_scale);
  }
  const std::vector<Tensor>& data = config.data_scale != 1.0 ? scaled_storage : dataset;

  std::mt19937_64 rng(config.seed);
  Vae vae(arch, config, rng);
  const std::uint64_t eval_seed = config.seed ^ 0x5eed5eed5eedULL;
  TrainingLog local;
  TrainingLog& out = log ? *log : local;
  out = TrainingLog{};
  out.initial_elbo = vae.assess(data, eval_seed).first;

  diff::Adam adam({config.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(config.batch_size, data.size());
  std::size_t steps = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // Incomplete trailing batches are dropped so batch statistics always see
    // `batch` samples.
    for (std::size_t b = 0; b + batch <= order.size(); b += batch) {
      const Tensor x = make_batch(data, order, b, b + batch, arch.input_shape);
      out.step_elbo.push_back(vae.train_step(x, rng, adam));
      if (config.max_steps != 0 && ++steps >= config.max_steps) {
        done = true;
        break;
      }
    }
  }

  const auto [elbo, mse] = vae.assess(data, eval_seed);
  out.final_elbo = elbo;
  out.final_recon_mse = mse / (config.data_scale * config.data_scale);
  return vae.decoder();
}

}  // namespace deepdeblur::gen
