#pragma once

#include <cstdint>
#include <vector>

#include "deepdeblur/blursynth/blursynth.hpp"

namespace deepdeblur::testing {

// The first `count` kernels of a seeded dataset, all in the training split.
inline std::vector<diff::Tensor> kernel_dataset(std::size_t count, std::uint64_t seed) {
  blur::BlurDatasetConfig cfg;
  cfg.count = count;
  cfg.test_fraction = 0.0;
  cfg.seed = seed;
  std::vector<diff::Tensor> out;
  for (auto& k : blur::generate_blur_dataset(cfg).train) out.push_back(std::move(k.canvas));
  return out;
}

// Per-pixel mean squared error of predicting every item by the dataset mean.
inline double mean_image_mse(const std::vector<diff::Tensor>& data) {
  const std::size_t n = data[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& t : data)
    for (std::size_t i = 0; i < n; ++i) mean[i] += t[i];
  for (double& m : mean) m /= static_cast<double>(data.size());
  double sse = 0.0;
  for (const auto& t : data)
    for (std::size_t i = 0; i < n; ++i) sse += (t[i] - mean[i]) * (t[i] - mean[i]);
  return sse / static_cast<double>(n * data.size());
}

}  // namespace deepdeblur::testing
