#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepdeblur/diffcore/ops.hpp"

namespace deepdeblur::gen {

enum class LayerKind { Dense, Conv, ConvTranspose, Maxpool, Upsample, Relu, Sigmoid, Batchnorm, Reshape };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// One stage of an encoder or decoder. Shapes are per sample; the batch axis is
// implicit. Dense layers flatten their input.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t units = 0;   // dense outputs, conv/convT filters
  std::size_t kernel = 0;  // conv/convT kernel size, maxpool window
  std::size_t stride = 1;  // conv/convT/maxpool stride, upsample factor
  diff::Shape shape;       // reshape target

  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units, 0, 1, {}}; }
  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride) {
    return {LayerKind::Conv, filters, kernel, stride, {}};
  }
  static LayerSpec conv_t(std::size_t filters, std::size_t kernel, std::size_t stride) {
    return {LayerKind::ConvTranspose, filters, kernel, stride, {}};
  }
  static LayerSpec maxpool(std::size_t size, std::size_t stride) { return {LayerKind::Maxpool, 0, size, stride, {}}; }
  static LayerSpec upsample(std::size_t factor) { return {LayerKind::Upsample, 0, 0, factor, {}}; }
  static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 1, {}}; }
  static LayerSpec sigmoid() { return {LayerKind::Sigmoid, 0, 0, 1, {}}; }
  static LayerSpec batchnorm() { return {LayerKind::Batchnorm, 0, 0, 1, {}}; }
  static LayerSpec reshape(diff::Shape shape) { return {LayerKind::Reshape, 0, 0, 1, std::move(shape)}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

nlohmann::json to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

using WeightMap = std::map<std::string, diff::Tensor>;
using ParamVars = std::map<std::string, diff::Var>;

inline constexpr float kBatchnormEps = 1e-5f;

// Per-sample output shape after every layer. Throws ShapeError when the chain
// breaks (non-positive conv output, reshape size mismatch, ...).
std::vector<diff::Shape> infer_shapes(const diff::Shape& input, const std::vector<LayerSpec>& layers);

// Glorot-uniform weights, zero biases, unit batchnorm scale, and running
// statistics (mean 0, variance 1). Names are "<prefix>.<index>.<param>".
WeightMap init_weights(const diff::Shape& input, const std::vector<LayerSpec>& layers, const std::string& prefix,
                       std::mt19937_64& rng);

bool is_running_stat(const std::string& name);

// Binds every trainable entry of `weights` onto the tape (leaves when
// `trainable`, constants otherwise). Running statistics are not bound.
ParamVars bind(diff::Tape& tape, const WeightMap& weights, bool trainable);

enum class BatchnormMode { BatchStatistics, RunningStatistics };

struct ForwardOptions {
  BatchnormMode batchnorm = BatchnormMode::RunningStatistics;
  // Receives per-layer batch statistics (keyed by the layer's name prefix)
  // when batchnorm uses batch statistics.
  std::map<std::string, diff::BatchStats>* batch_stats = nullptr;
};

// Evaluates `layers` on a batched input [N, ...per-sample shape].
diff::Var forward(const std::vector<LayerSpec>& layers, const std::string& prefix, const ParamVars& params,
                  const WeightMap& weights, diff::Var x, const ForwardOptions& options = {});

}  // namespace deepdeblur::gen
