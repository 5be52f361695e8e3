#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepdeblur/blursynth/blursynth.hpp"
#include "deepdeblur/generators/toy_images.hpp"
#include "deepdeblur/generators/vae.hpp"
#include "deepdeblur/solvers/solvers.hpp"

namespace deepdeblur::harness {

enum class Mode { GenBlurs, TrainVae, Project, DeblurDD, DeblurDDS, Sweep };

std::string to_string(Mode mode);
// Throws ConfigError("mode", ...) for unknown names.
Mode mode_from_string(const std::string& name);

// Procedurally generated input images, used when no PNG paths are given.
struct ToyImageSource {
  std::size_t count = 0;
  std::size_t offset = 0;  // first toy image index
  gen::ToyImageConfig image;

  friend bool operator==(const ToyImageSource&, const ToyImageSource&) = default;
};

struct ProjectSettings {
  std::size_t steps = 6000;
  double step_size = 0.01;

  friend bool operator==(const ProjectSettings&, const ProjectSettings&) = default;
};

struct TrainSettings {
  std::string kind = "kernel";          // "kernel" or "image"
  std::string architecture = "blur";    // "blur", "svhn" or "toy"
  std::size_t width = 8;                // toy architecture filters
  std::string dataset;                  // kernel set file for kind "kernel"
  gen::VaeConfig vae = gen::blur_vae_desk_config();

  friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

struct SweepSettings {
  std::string axis = "noise";  // "noise" or "blur_length"
  std::vector<double> sigmas;
  std::vector<double> lengths;
  std::vector<std::string> methods{"dd", "dds"};
  // Noise sweeps blur every image with one kernel of this length (unless a
  // kernel set is given); blur-length sweeps add noise of `noise_sigma`.
  double fixed_length = 15.0;
  std::size_t workers = 1;

  friend bool operator==(const SweepSettings&, const SweepSettings&) = default;
};

struct ExperimentConfig {
  Mode mode = Mode::DeblurDD;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  std::string image_model;
  std::string kernel_model;

  // Ground-truth images (PNG paths) or procedural ones.
  std::vector<std::string> images;
  ToyImageSource toy_images;
  // A blurry PNG without ground truth; replaces the simulated observation.
  std::string observation;
  // Blur for simulated observations: a kernel set file and index, a PNG, or
  // (when both are empty) a fresh kernel of `blur_length`.
  std::string kernels;
  std::size_t kernel_index = 0;
  std::string kernel_png;
  double blur_length = 15.0;
  double noise_sigma = 0.01;
  // Replace each truth image by its closest image in the range of the image
  // model before blurring, and report the range error.
  bool in_range = false;

  ProjectSettings project;
  solve::DDConfig dd = solve::dd_published_config();
  solve::DDSConfig dds = solve::dds_published_config();
  blur::BlurDatasetConfig blur;
  bool write_kernel_pngs = false;
  TrainSettings train;
  SweepSettings sweep;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Reads a JSON object. Missing keys keep their defaults; unknown keys and
// badly typed values raise ConfigError naming the dotted field path.
ExperimentConfig parse_config(const nlohmann::json& doc);
nlohmann::json render_config(const ExperimentConfig& config);

// Applies `patch` on top of `base` key by key (nested objects merge, other
// values replace).
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& patch);

// Checks value ranges and mode requirements (ConfigError) and that every
// referenced input file exists (IoError).
void validate(const ExperimentConfig& config);

}  // namespace deepdeblur::harness
