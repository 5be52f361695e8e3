#include "deepdeblur/generators/layers.hpp"

#include <cmath>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::gen {

using diff::Shape;
using diff::Tensor;
using diff::Var;

namespace {

const std::map<LayerKind, std::string>& kind_names() {
  static const std::map<LayerKind, std::string> names{
      {LayerKind::Dense, "dense"},     {LayerKind::Conv, "conv"},         {LayerKind::ConvTranspose, "convT"},
      {LayerKind::Maxpool, "maxpool"}, {LayerKind::Upsample, "upsample"}, {LayerKind::Relu, "relu"},
      {LayerKind::Sigmoid, "sigmoid"}, {LayerKind::Batchnorm, "batchnorm"}, {LayerKind::Reshape, "reshape"}};
  return names;
}

std::string param_name(const std::string& prefix, std::size_t index, const char* what) {
  return prefix + "." + std::to_string(index) + "." + what;
}

std::string layer_name(const std::string& prefix, std::size_t index) {
  return prefix + "." + std::to_string(index);
}

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

}  // namespace

std::string to_string(LayerKind kind) { return kind_names().at(kind); }

LayerKind layer_kind_from_string(const std::string& name) {
  for (const auto& [kind, n] : kind_names()) {
    if (n == name) return kind;
  }
  throw FormatError("unknown layer kind '" + name + "'");
}

nlohmann::json to_json(const LayerSpec& layer) {
  nlohmann::json j{{"kind", to_string(layer.kind)}};
  switch (layer.kind) {
    case LayerKind::Dense:
      j["units"] = layer.units;
      break;
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
      j["filters"] = layer.units;
      j["kernel"] = layer.kernel;
      j["stride"] = layer.stride;
      break;
    case LayerKind::Maxpool:
      j["size"] = layer.kernel;
      j["stride"] = layer.stride;
      break;
    case LayerKind::Upsample:
      j["factor"] = layer.stride;
      break;
    case LayerKind::Reshape:
      j["shape"] = layer.shape;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  try {
    const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
      case LayerKind::Dense:
        return LayerSpec::dense(j.at("units").get<std::size_t>());
      case LayerKind::Conv:
        return LayerSpec::conv(j.at("filters"), j.at("kernel"), j.at("stride"));
      case LayerKind::ConvTranspose:
        return LayerSpec::conv_t(j.at("filters"), j.at("kernel"), j.at("stride"));
      case LayerKind::Maxpool:
        return LayerSpec::maxpool(j.at("size"), j.at("stride"));
      case LayerKind::Upsample:
        return LayerSpec::upsample(j.at("factor"));
      case LayerKind::Reshape:
        return LayerSpec::reshape(j.at("shape").get<Shape>());
      default:
        return LayerSpec{kind, 0, 0, 1, {}};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed layer spec: ") + e.what());
  }
}

std::vector<Shape> infer_shapes(const Shape& input, const std::vector<LayerSpec>& layers) {
  std::vector<Shape> out;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::Dense:
        if (l.units == 0) throw ShapeError(where + "zero units");
        cur = Shape{l.units};
        break;
      case LayerKind::Conv:
      case LayerKind::ConvTranspose: {
        if (cur.size() != 3) throw ShapeError(where + "needs a [C, H, W] input, got " + diff::shape_str(cur));
        if (l.units == 0 || l.kernel == 0 || l.stride == 0) throw ShapeError(where + "zero filters/kernel/stride");
        if (l.kind == LayerKind::Conv) {
          if (cur[1] < l.kernel || cur[2] < l.kernel) throw ShapeError(where + "kernel larger than input");
          cur = Shape{l.units, (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        } else {
          cur = Shape{l.units, (cur[1] - 1) * l.stride + l.kernel, (cur[2] - 1) * l.stride + l.kernel};
        }
        break;
      }
      case LayerKind::Maxpool:
        if (cur.size() != 3) throw ShapeError(where + "needs a [C, H, W] input");
        if (l.kernel == 0 || l.stride == 0 || cur[1] < l.kernel || cur[2] < l.kernel) {
          throw ShapeError(where + "window does not fit");
        }
        cur = Shape{cur[0], (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        break;
      case LayerKind::Upsample:
        if (cur.size() != 3 || l.stride == 0) throw ShapeError(where + "needs a [C, H, W] input and positive factor");
        cur = Shape{cur[0], cur[1] * l.stride, cur[2] * l.stride};
        break;
      case LayerKind::Reshape:
        if (diff::shape_numel(l.shape) != diff::shape_numel(cur)) {
          throw ShapeError(where + "cannot reshape " + diff::shape_str(cur) + " to " + diff::shape_str(l.shape));
        }
        cur = l.shape;
        break;
      case LayerKind::Batchnorm:
        if (cur.size() != 3 && cur.size() != 1) throw ShapeError(where + "needs [C, H, W] or [F]");
        break;
      case LayerKind::Relu:
      case LayerKind::Sigmoid:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

WeightMap init_weights(const Shape& input, const std::vector<LayerSpec>& layers, const std::string& prefix,
                       std::mt19937_64& rng) {
  WeightMap w;
  const auto shapes = infer_shapes(input, layers);
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::Dense: {
        const std::size_t n = diff::shape_numel(cur);
        w[param_name(prefix, i, "weight")] = glorot({l.units, n}, n, l.units, rng);
        w[param_name(prefix, i, "bias")] = Tensor({l.units}, 0.0f);
        break;
      }
      case LayerKind::Conv: {
        const std::size_t k2 = l.kernel * l.kernel;
        w[param_name(prefix, i, "weight")] = glorot({l.units, cur[0], l.kernel, l.kernel}, cur[0] * k2, l.units * k2, rng);
        w[param_name(prefix, i, "bias")] = Tensor({l.units}, 0.0f);
        break;
      }
      case LayerKind::ConvTranspose: {
        const std::size_t k2 = l.kernel * l.kernel;
        w[param_name(prefix, i, "weight")] = glorot({cur[0], l.units, l.kernel, l.kernel}, cur[0] * k2, l.units * k2, rng);
        w[param_name(prefix, i, "bias")] = Tensor({l.units}, 0.0f);
        break;
      }
      case LayerKind::Batchnorm: {
        const std::size_t c = cur[0];
        w[param_name(prefix, i, "gamma")] = Tensor({c}, 1.0f);
        w[param_name(prefix, i, "beta")] = Tensor({c}, 0.0f);
        w[param_name(prefix, i, "running_mean")] = Tensor({c}, 0.0f);
        w[param_name(prefix, i, "running_var")] = Tensor({c}, 1.0f);
        break;
      }
      default:
        break;
    }
    cur = shapes[i];
  }
  return w;
}

bool is_running_stat(const std::string& name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

ParamVars bind(diff::Tape& tape, const WeightMap& weights, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : weights) {
    if (is_running_stat(name)) continue;
    vars.emplace(name, tape.leaf(t, trainable));
  }
  return vars;
}

Var forward(const std::vector<LayerSpec>& layers, const std::string& prefix, const ParamVars& params,
            const WeightMap& weights, Var x, const ForwardOptions& options) {
  auto param = [&](std::size_t i, const char* what) -> Var {
    const auto it = params.find(param_name(prefix, i, what));
    if (it == params.end()) throw FormatError("missing weight " + param_name(prefix, i, what));
    return it->second;
  };
  auto stat = [&](std::size_t i, const char* what) -> const Tensor& {
    const auto it = weights.find(param_name(prefix, i, what));
    if (it == weights.end()) throw FormatError("missing running statistic " + param_name(prefix, i, what));
    return it->second;
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::size_t batch = x.shape()[0];
    switch (l.kind) {
      case LayerKind::Dense:
        if (x.shape().size() != 2) x = diff::reshape(x, {batch, x.size() / batch});
        x = diff::dense(x, param(i, "weight"), param(i, "bias"));
        break;
      case LayerKind::Conv:
        x = diff::conv2d(x, param(i, "weight"), param(i, "bias"), l.stride);
        break;
      case LayerKind::ConvTranspose:
        x = diff::conv_transpose2d(x, param(i, "weight"), param(i, "bias"), l.stride);
        break;
      case LayerKind::Maxpool:
        x = diff::maxpool2d(x, l.kernel, l.stride);
        break;
      case LayerKind::Upsample:
        x = diff::upsample_nearest(x, l.stride);
        break;
      case LayerKind::Relu:
        x = diff::relu(x);
        break;
      case LayerKind::Sigmoid:
        x = diff::sigmoid(x);
        break;
      case LayerKind::Reshape: {
        Shape s{batch};
        s.insert(s.end(), l.shape.begin(), l.shape.end());
        x = diff::reshape(x, std::move(s));
        break;
      }
      case LayerKind::Batchnorm:
        if (options.batchnorm == BatchnormMode::BatchStatistics) {
          diff::BatchStats stats;
          x = diff::batchnorm_train(x, param(i, "gamma"), param(i, "beta"), kBatchnormEps, &stats);
          if (options.batch_stats) (*options.batch_stats)[layer_name(prefix, i)] = std::move(stats);
        } else {
          x = diff::batchnorm_infer(x, param(i, "gamma"), param(i, "beta"), stat(i, "running_mean"),
                                    stat(i, "running_var"), kBatchnormEps);
        }
        break;
    }
  }
  return x;
}

}  // namespace deepdeblur::gen
