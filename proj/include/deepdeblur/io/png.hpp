#pragma once

#include <filesystem>
#include <string>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::io {

// Reads an 8- or 16-bit PNG as an [H, W, C] tensor in [0, 1]. Gray and RGB
// are kept; alpha is dropped; palettes are expanded to RGB.
diff::Tensor read_png(const std::filesystem::path& path);

// Writes an [H, W, C] (C = 1 or 3) or [H, W] tensor as an 8-bit PNG, clipping
// values to [0, 1].
void write_png(const std::filesystem::path& path, const diff::Tensor& image);

// Writes a 16-bit grayscale PNG scaled so the maximum entry maps to 65535.
void write_png16_max_normalized(const std::filesystem::path& path, const diff::Tensor& image);

// libpng version string, for run manifests.
std::string png_library_version();

}  // namespace deepdeblur::io
