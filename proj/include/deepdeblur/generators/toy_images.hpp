#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::gen {

// Procedural stand-in for a small natural-image dataset: antialiased
// seven-segment digits, roughly centred, with random size, slant, stroke
// width and foreground/background levels. Images are [size, size, channels] in [0, 1];
// colour images tint the foreground and background independently.
struct ToyImageConfig {
  std::size_t size = 32;
  std::size_t channels = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const ToyImageConfig&, const ToyImageConfig&) = default;
};

diff::Tensor toy_image(const ToyImageConfig& config, std::uint64_t index);
std::vector<diff::Tensor> toy_image_set(const ToyImageConfig& config, std::size_t count);

}  // namespace deepdeblur::gen
