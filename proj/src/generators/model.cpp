#include "deepdeblur/generators/model.hpp"

#include "deepdeblur/errors.hpp"
#include "deepdeblur/io/container.hpp"

namespace deepdeblur::gen {

using diff::Shape;
using diff::Tensor;
using diff::Var;

std::string to_string(OutputKind kind) { return kind == OutputKind::Image ? "image" : "kernel"; }

OutputKind output_kind_from_string(const std::string& name) {
  if (name == "image") return OutputKind::Image;
  if (name == "kernel") return OutputKind::Kernel;
  throw FormatError("unknown generator kind '" + name + "'");
}

GeneratorModel::GeneratorModel(OutputKind kind, std::size_t latent_dim, std::vector<LayerSpec> layers,
                               WeightMap weights)
    : kind_(kind), latent_dim_(latent_dim), layers_(std::move(layers)), weights_(std::move(weights)) {
  if (latent_dim_ == 0) throw ShapeError("latent_dim must be positive");
  if (layers_.empty()) throw ShapeError("decoder has no layers");
  const LayerKind head = layers_.back().kind;
  if (kind_ == OutputKind::Image && head != LayerKind::Sigmoid) {
    throw ShapeError("image decoders must end in sigmoid");
  }
  if (kind_ == OutputKind::Kernel && head != LayerKind::Relu) {
    throw ShapeError("kernel decoders must end in relu");
  }
  const Shape net_out = infer_shapes({latent_dim_}, layers_).back();
  if (net_out.size() != 3) throw ShapeError("decoder must produce [C, H, W], got " + diff::shape_str(net_out));
  if (kind_ == OutputKind::Image) {
    output_shape_ = {net_out[1], net_out[2], net_out[0]};
  } else {
    if (net_out[0] != 1) throw ShapeError("kernel decoders must produce a single channel");
    output_shape_ = {net_out[1], net_out[2]};
  }

  // Every parameter the architecture needs must be present with the right
  // shape.
  std::mt19937_64 scratch(0);
  const WeightMap expected = init_weights({latent_dim_}, layers_, kWeightPrefix, scratch);
  for (const auto& [name, t] : expected) {
    const auto it = weights_.find(name);
    if (it == weights_.end()) throw FormatError("missing weight '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw FormatError("weight '" + name + "' has shape " + diff::shape_str(it->second.shape()) + ", expected " +
                        diff::shape_str(t.shape()));
    }
  }
  for (const auto& entry : weights_) {
    if (!expected.contains(entry.first)) throw FormatError("unexpected weight '" + entry.first + "'");
  }
}

Var to_output_layout(OutputKind kind, Var network_output) {
  if (kind == OutputKind::Image) return diff::chw_to_hwc(network_output);
  const Shape& s = network_output.shape();
  return diff::reshape(network_output, {s[2], s[3]});
}

Var GeneratorModel::decode(diff::Tape& tape, Var z) const {
  if (z.shape() != Shape{latent_dim_}) {
    throw ShapeError("latent has shape " + diff::shape_str(z.shape()) + ", model expects [" +
                     std::to_string(latent_dim_) + "]");
  }
  const ParamVars params = bind(tape, weights_, false);
  Var x = diff::reshape(z, {1, latent_dim_});
  x = forward(layers_, kWeightPrefix, params, weights_, x, {});
  return to_output_layout(kind_, x);
}

Tensor GeneratorModel::decode(const Tensor& z) const {
  diff::Tape tape;
  return decode(tape, tape.constant(z)).value();
}

std::string encode_model(const GeneratorModel& model) {
  io::TensorArchive archive;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) layers.push_back(to_json(l));
  archive.meta = {{"format", "deepdeblur-generator"},
                  {"kind", to_string(model.kind())},
                  {"latent_dim", model.latent_dim()},
                  {"output_shape", model.output_shape()},
                  {"layers", layers}};
  for (const auto& [name, t] : model.weights()) archive.tensors.emplace_back(name, t);
  return io::encode_archive(archive);
}

GeneratorModel decode_model(const std::string& bytes) {
  io::TensorArchive archive = io::decode_archive(bytes);
  try {
    const auto& meta = archive.meta;
    if (meta.at("format").get<std::string>() != "deepdeblur-generator") {
      throw FormatError("container does not hold a generator model");
    }
    std::vector<LayerSpec> layers;
    for (const auto& l : meta.at("layers")) layers.push_back(layer_from_json(l));
    WeightMap weights;
    for (auto& [name, t] : archive.tensors) weights.emplace(name, std::move(t));
    GeneratorModel model(output_kind_from_string(meta.at("kind").get<std::string>()),
                         meta.at("latent_dim").get<std::size_t>(), std::move(layers), std::move(weights));
    if (meta.at("output_shape").get<Shape>() != model.output_shape()) {
      throw FormatError("manifest output_shape disagrees with the architecture");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("invalid architecture in manifest: ") + e.what());
  }
}

void save_model(const GeneratorModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_model(model));
}

GeneratorModel load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

}  // namespace deepdeblur::gen
