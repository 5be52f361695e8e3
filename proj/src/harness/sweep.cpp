#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include "deepdeblur/errors.hpp"
#include "deepdeblur/harness/run.hpp"
#include "deepdeblur/io/container.hpp"
#include "deepdeblur/random.hpp"

namespace deepdeblur::harness {

namespace {

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

// Runs f(0..n-1) on up to `workers` threads. The first failure by index is
// rethrown after all threads finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < std::min(workers, n); ++w) threads.emplace_back(body);
  body();
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Truth image as scored: the raw image, or its range projection.
struct Reference {
  diff::Tensor image;
  std::optional<double> range_error;
};

std::vector<Reference> prepare_references(const std::vector<TruthImage>& images, const Solvers& s,
                                          std::uint64_t seed) {
  std::vector<Reference> refs(images.size());
  parallel_for(images.size(), 1, [&](std::size_t i) {
    if (!s.in_range) {
      refs[i].image = images[i].image;
      return;
    }
    const solve::Projection p =
        solve::range_project(images[i].image, *s.image_model, s.project.steps, s.project.step_size,
                             derive_seed(seed, {hash_string(images[i].id), hash_string("range")}));
    double err = 0.0;
    for (std::size_t q = 0; q < p.image.size(); ++q) {
      const double d = static_cast<double>(images[i].image[q]) - p.image[q];
      err += d * d;
    }
    refs[i] = {p.image, std::sqrt(err)};
  });
  return refs;
}

struct Cell {
  std::size_t image = 0;
  double axis_value = 0.0;
  const blur::BlurKernel* kernel = nullptr;
  double noise_sigma = 0.0;
  std::string method;
};

metrics::ResultRow run_cell(const Cell& cell, const TruthImage& truth, const Reference& ref, const Solvers& s,
                            std::uint64_t seed) {
  const std::uint64_t id_hash = hash_string(truth.id);
  const std::uint64_t obs_seed = derive_seed(seed, {id_hash, bits(cell.noise_sigma), bits(cell.kernel->length)});
  const std::uint64_t solver_seed =
      derive_seed(seed, {id_hash, hash_string(cell.method), bits(cell.noise_sigma), bits(cell.kernel->length)});
  const blur::Observation obs = blur::simulate_observation(ref.image, cell.kernel->canvas, cell.noise_sigma, obs_seed);

  solve::SolveResult result;
  if (cell.method == "dd") {
    solve::DDConfig c = s.dd;
    c.seed = solver_seed;
    result = solve::deep_deblur(obs.y, *s.image_model, *s.kernel_model, c);
  } else {
    solve::DDSConfig c = s.dds;
    c.seed = solver_seed;
    result = solve::deep_deblur_slack(obs.y, *s.image_model, *s.kernel_model, c);
  }
  metrics::ResultRow row;
  row.image_id = truth.id;
  row.method = cell.method;
  row.noise_sigma = cell.noise_sigma;
  row.blur_length = cell.kernel->length;
  row.report = metrics::evaluate(result.i_hat, ref.image);
  row.report.range_error = ref.range_error;
  row.seed = solver_seed;
  return row;
}

SweepOutput run_cells(const std::vector<Cell>& cells, const std::vector<TruthImage>& images,
                      const std::vector<Reference>& refs, const Solvers& s, std::uint64_t seed, std::size_t workers,
                      const std::filesystem::path& cell_dir, const std::string& axis) {
  if (!s.image_model || !s.kernel_model) throw UsageError("sweep needs both generator models");
  for (const std::string& m : s.methods) {
    if (m != "dd" && m != "dds") throw UsageError("unknown method '" + m + "'");
  }
  if (!cell_dir.empty()) std::filesystem::create_directories(cell_dir);
  SweepOutput out;
  out.rows.resize(cells.size());
  for (const Cell& c : cells) out.kernels.push_back(*c.kernel);
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    const Cell& c = cells[i];
    out.rows[i] = run_cell(c, images[c.image], refs[c.image], s, seed);
    if (!cell_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "cell_%05zu.csv", i);
      io::write_file(cell_dir / name, metrics::csv_header() + "\n" + metrics::csv_line(out.rows[i]) + "\n");
    }
  });
  out.summary = summarize(out.rows, axis);
  return out;
}

}  // namespace

SweepOutput sweep_noise(const std::vector<TruthImage>& images, const std::vector<blur::BlurKernel>& kernels,
                        const Solvers& solvers, const std::vector<double>& sigmas, std::uint64_t seed,
                        std::size_t workers, const std::filesystem::path& cell_dir) {
  if (images.empty() || sigmas.empty() || solvers.methods.empty()) throw UsageError("noise sweep axes must be non-empty");
  if (kernels.empty()) throw UsageError("noise sweep needs at least one kernel");
  const std::vector<Reference> refs = prepare_references(images, solvers, seed);
  std::vector<Cell> cells;
  for (double sigma : sigmas)
    for (std::size_t i = 0; i < images.size(); ++i)
      for (const std::string& m : solvers.methods) cells.push_back({i, sigma, &kernels[i % kernels.size()], sigma, m});
  return run_cells(cells, images, refs, solvers, seed, workers, cell_dir, "sigma");
}

SweepOutput sweep_blur_length(const std::vector<TruthImage>& images, const std::vector<double>& lengths,
                              double noise_sigma, const Solvers& solvers, std::uint64_t seed, std::size_t workers,
                              const std::filesystem::path& cell_dir) {
  if (images.empty() || lengths.empty() || solvers.methods.empty()) {
    throw UsageError("blur-length sweep axes must be non-empty");
  }
  const std::vector<Reference> refs = prepare_references(images, solvers, seed);
  // One kernel per (length, image), shared by all methods.
  std::vector<blur::BlurKernel> kernels;
  kernels.reserve(lengths.size() * images.size());
  for (double len : lengths)
    for (const TruthImage& img : images)
      kernels.push_back(blur::synthesize_kernel(
          len, derive_seed(seed, {hash_string(img.id), hash_string("kernel"), bits(len)})));
  std::vector<Cell> cells;
  for (std::size_t l = 0; l < lengths.size(); ++l)
    for (std::size_t i = 0; i < images.size(); ++i)
      for (const std::string& m : solvers.methods)
        cells.push_back({i, lengths[l], &kernels[l * images.size() + i], noise_sigma, m});
  return run_cells(cells, images, refs, solvers, seed, workers, cell_dir, "blur_length");
}

std::vector<SummaryRow> summarize(const std::vector<metrics::ResultRow>& rows, const std::string& axis) {
  if (axis != "sigma" && axis != "blur_length") throw UsageError("unknown sweep axis '" + axis + "'");
  // Keys in first-appearance order of methods, sorted by axis value.
  std::vector<std::string> methods;
  std::map<double, std::map<std::size_t, std::vector<metrics::MetricReport>>> groups;
  for (const metrics::ResultRow& r : rows) {
    std::size_t m = 0;
    while (m < methods.size() && methods[m] != r.method) ++m;
    if (m == methods.size()) methods.push_back(r.method);
    const double key = axis == "sigma" ? r.noise_sigma : r.blur_length;
    groups[key][m].push_back(r.report);
  }
  std::vector<SummaryRow> out;
  for (const auto& [value, by_method] : groups)
    for (const auto& [m, reports] : by_method) out.push_back({value, methods[m], metrics::aggregate(reports)});
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& summary, const std::string& axis) {
  std::string s = axis + ",method,mean_psnr,mean_ssim,count\n";
  for (const SummaryRow& r : summary) {
    s += metrics::format_number(r.axis_value) + "," + r.method + "," +
         metrics::format_number(metrics::psnr_for_file(r.aggregate.mean_psnr_db)) + "," +
         metrics::format_number(r.aggregate.mean_ssim) + "," + std::to_string(r.aggregate.count) + "\n";
  }
  return s;
}

std::string results_csv(const std::vector<metrics::ResultRow>& rows) {
  std::string s = metrics::csv_header() + "\n";
  for (const metrics::ResultRow& r : rows) s += metrics::csv_line(r) + "\n";
  return s;
}

}  // namespace deepdeblur::harness
