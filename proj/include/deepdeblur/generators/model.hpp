#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "deepdeblur/generators/layers.hpp"

namespace deepdeblur::gen {

// What a decoder produces. Image decoders end in sigmoid and emit [H, W, C]
// in [0, 1]; kernel decoders end in relu and emit a nonnegative [kh, kw]
// canvas that is not renormalized.
enum class OutputKind { Image, Kernel };

std::string to_string(OutputKind kind);
OutputKind output_kind_from_string(const std::string& name);

// A pretrained decoder G: R^latent_dim -> image or kernel space. Immutable
// after construction; safe to share across threads.
class GeneratorModel {
 public:
  GeneratorModel(OutputKind kind, std::size_t latent_dim, std::vector<LayerSpec> layers, WeightMap weights);

  OutputKind kind() const noexcept { return kind_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const WeightMap& weights() const noexcept { return weights_; }
  // [H, W, C] for images, [kh, kw] for kernels.
  const diff::Shape& output_shape() const noexcept { return output_shape_; }

  // Differentiable in `z`; weights enter the tape as constants.
  diff::Var decode(diff::Tape& tape, diff::Var z) const;
  diff::Tensor decode(const diff::Tensor& z) const;

  static constexpr const char* kWeightPrefix = "decoder";

 private:
  OutputKind kind_;
  std::size_t latent_dim_;
  std::vector<LayerSpec> layers_;
  WeightMap weights_;
  diff::Shape output_shape_;
};

// Shapes the decoder's [1, C, H, W] network output into the model's output
// layout.
diff::Var to_output_layout(OutputKind kind, diff::Var network_output);

void save_model(const GeneratorModel& model, const std::filesystem::path& path);
GeneratorModel load_model(const std::filesystem::path& path);

std::string encode_model(const GeneratorModel& model);
GeneratorModel decode_model(const std::string& bytes);

}  // namespace deepdeblur::gen
