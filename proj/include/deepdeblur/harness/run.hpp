#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepdeblur/blursynth/blursynth.hpp"
#include "deepdeblur/generators/model.hpp"
#include "deepdeblur/harness/config.hpp"
#include "deepdeblur/metrics/metrics.hpp"
#include "deepdeblur/solvers/solvers.hpp"

namespace deepdeblur::harness {

inline constexpr const char* kProgramVersion = "1.0.0";

// Exit status used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitSolver = 4,
};

// Config, usage, shape and range errors map to kExitConfig; I/O and format
// errors to kExitIo; solver and numeric errors to kExitSolver.
int exit_code_for(const std::exception& error);

// Validates and executes one run. Every run writes <output_dir>/manifest.json
// (config echo, seeds, library versions, status) before returning or
// rethrowing.
void run(const ExperimentConfig& config);

struct TruthImage {
  std::string id;
  diff::Tensor image;
};

// Truth images named by file stem, or toy_00017 style ids for procedural
// images.
std::vector<TruthImage> load_truth_images(const ExperimentConfig& config);

struct Solvers {
  const gen::GeneratorModel* image_model = nullptr;
  const gen::GeneratorModel* kernel_model = nullptr;
  solve::DDConfig dd;
  solve::DDSConfig dds;
  std::vector<std::string> methods{"dd", "dds"};
  // Score against the image model's closest range image (and report the
  // range error) instead of the raw truth.
  bool in_range = false;
  ProjectSettings project;
};

struct SummaryRow {
  double axis_value = 0.0;
  std::string method;
  metrics::Aggregate aggregate;
};

struct SweepOutput {
  std::vector<metrics::ResultRow> rows;  // cell order: axis value, image, method
  std::vector<SummaryRow> summary;       // axis value, then method order
  std::vector<blur::BlurKernel> kernels;  // blur applied in each row
};

// Every image is blurred by its own kernel (kernels cycle if fewer than
// images) at each sigma. Observation noise depends on (seed, image, sigma),
// so methods see identical inputs; solver seeds also fold in the method.
// Cells run on `workers` threads; with a non-empty `cell_dir` each cell also
// writes its own CSV row file there.
SweepOutput sweep_noise(const std::vector<TruthImage>& images, const std::vector<blur::BlurKernel>& kernels,
                        const Solvers& solvers, const std::vector<double>& sigmas, std::uint64_t seed,
                        std::size_t workers = 1, const std::filesystem::path& cell_dir = {});

// Fresh kernels per (image, length) from seeds derived from (seed, image,
// length); noise of `noise_sigma`.
SweepOutput sweep_blur_length(const std::vector<TruthImage>& images, const std::vector<double>& lengths,
                              double noise_sigma, const Solvers& solvers, std::uint64_t seed,
                              std::size_t workers = 1, const std::filesystem::path& cell_dir = {});

// Means per (axis value, method) over the given rows.
std::vector<SummaryRow> summarize(const std::vector<metrics::ResultRow>& rows, const std::string& axis);

// Plot-ready table: <axis>,method,mean_psnr,mean_ssim,count.
std::string summary_csv(const std::vector<SummaryRow>& summary, const std::string& axis);
std::string results_csv(const std::vector<metrics::ResultRow>& rows);

// Deterministic JSON record of a solve (no wall-clock fields).
nlohmann::json solve_record(const std::string& method, const solve::SolveResult& result,
                            const std::optional<metrics::MetricReport>& report);

}  // namespace deepdeblur::harness
