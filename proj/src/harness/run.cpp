#include "deepdeblur/harness/run.hpp"

#include <cmath>
#include <cstdio>

#include "deepdeblur/blursynth/blursynth.hpp"
#include "deepdeblur/diffcore/ops.hpp"
#include "deepdeblur/errors.hpp"
#include "deepdeblur/generators/toy_images.hpp"
#include "deepdeblur/generators/vae.hpp"
#include "deepdeblur/io/container.hpp"
#include "deepdeblur/io/png.hpp"
#include "deepdeblur/random.hpp"

namespace deepdeblur::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::string indexed(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%05zu%s", prefix, i, suffix);
  return buf;
}

json tensor_json(const diff::Tensor& t) { return json(std::vector<float>(t.data().begin(), t.data().end())); }

json report_json(const metrics::MetricReport& r) {
  json j = {{"psnr_db", metrics::psnr_for_file(r.psnr_db)}, {"ssim", r.ssim}, {"mse", r.mse}};
  j["range_error"] = r.range_error ? json(*r.range_error) : json(nullptr);
  return j;
}

// Builds the run manifest and rewrites it once the outcome is known.
class Manifest {
 public:
  Manifest(const ExperimentConfig& config, fs::path dir) : path_(std::move(dir) / "manifest.json") {
    doc_["program"] = "deepdeblur";
    doc_["version"] = kProgramVersion;
    doc_["libraries"] = {{"fftw", diff::fft_library_version()}, {"libpng", io::png_library_version()}};
    doc_["mode"] = to_string(config.mode);
    doc_["config"] = render_config(config);
    doc_["seeds"] = json::object();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
    doc_["status"] = "running";
  }

  json& seeds() { return doc_["seeds"]; }
  void input(const std::string& id) { doc_["inputs"].push_back(id); }
  void output(const std::string& name) { doc_["outputs"].push_back(name); }

  void write() const { io::write_file(path_, dump(doc_)); }
  void finish(const std::string& status, const std::string& error = {}) {
    doc_["status"] = status;
    if (!error.empty()) doc_["error"] = error;
    write();
  }

 private:
  fs::path path_;
  json doc_;
};

class Run {
 public:
  Run(const ExperimentConfig& config, Manifest& manifest) : c_(config), m_(manifest), dir_(config.output_dir) {}

  void execute() {
    switch (c_.mode) {
      case Mode::GenBlurs: return gen_blurs();
      case Mode::TrainVae: return train_vae();
      case Mode::Project: return project();
      case Mode::DeblurDD:
      case Mode::DeblurDDS: return deblur();
      case Mode::Sweep: return sweep();
    }
  }

 private:
  void write(const std::string& name, const std::string& bytes) {
    io::write_file(dir_ / name, bytes);
    m_.output(name);
  }
  void write_png(const std::string& name, const diff::Tensor& image) {
    io::write_png(dir_ / name, image);
    m_.output(name);
  }

  gen::GeneratorModel load_image_model() const {
    gen::GeneratorModel g = gen::load_model(c_.image_model);
    if (g.kind() != gen::OutputKind::Image) throw ConfigError("image_model", "is not an image model");
    return g;
  }
  gen::GeneratorModel load_kernel_model() const {
    gen::GeneratorModel g = gen::load_model(c_.kernel_model);
    if (g.kind() != gen::OutputKind::Kernel) throw ConfigError("kernel_model", "is not a kernel model");
    return g;
  }

  std::vector<TruthImage> truth_images(const gen::GeneratorModel* g) {
    std::vector<TruthImage> images = load_truth_images(c_);
    for (std::size_t i = 0; i < images.size(); ++i) {
      m_.input(images[i].id);
      if (g && images[i].image.shape() != g->output_shape()) {
        throw ConfigError(c_.images.empty() ? "toy_images" : "images[" + std::to_string(i) + "]",
                          "image shape " + diff::shape_str(images[i].image.shape()) +
                              " does not match the image model output " + diff::shape_str(g->output_shape()));
      }
    }
    return images;
  }

  void gen_blurs() {
    blur::BlurDatasetConfig bc = c_.blur;
    bc.seed = derive_seed(c_.seed, {hash_string("blur"), c_.blur.seed});
    m_.seeds()["blur"] = bc.seed;
    m_.write();
    const blur::BlurDataset ds = blur::generate_blur_dataset(bc);
    blur::save_kernels(dir_ / "kernels_train.ddk", ds.train);
    m_.output("kernels_train.ddk");
    blur::save_kernels(dir_ / "kernels_test.ddk", ds.test);
    m_.output("kernels_test.ddk");
    std::string csv = "split,index,length,seed\n";
    auto rows = [&](const char* split, const std::vector<blur::BlurKernel>& ks) {
      for (std::size_t i = 0; i < ks.size(); ++i)
        csv += std::string(split) + "," + std::to_string(i) + "," + metrics::format_number(ks[i].length) + "," +
               std::to_string(ks[i].seed) + "\n";
    };
    rows("train", ds.train);
    rows("test", ds.test);
    write("kernels.csv", csv);
    if (c_.write_kernel_pngs) {
      blur::write_kernel_pngs(dir_ / "kernels_png" / "train", ds.train);
      blur::write_kernel_pngs(dir_ / "kernels_png" / "test", ds.test);
      m_.output("kernels_png/");
    }
  }

  void train_vae() {
    const TrainSettings& t = c_.train;
    gen::VaeConfig vc = t.vae;
    vc.seed = derive_seed(c_.seed, {hash_string("vae"), t.vae.seed});
    m_.seeds()["vae"] = vc.seed;
    std::vector<diff::Tensor> data;
    gen::VaeArchitecture arch;
    if (t.kind == "kernel") {
      m_.input(t.dataset);
      for (const blur::BlurKernel& k : blur::load_kernels(t.dataset)) data.push_back(k.canvas);
      arch = gen::blur_vae_architecture(t.vae.latent_dim);
    } else {
      for (TruthImage& img : truth_images(nullptr)) data.push_back(std::move(img.image));
      const diff::Shape& s = data.front().shape();
      arch = t.architecture == "svhn" ? gen::svhn_vae_architecture(t.vae.latent_dim)
                                      : gen::toy_image_vae_architecture(t.vae.latent_dim, s[0], s[2], t.width);
      if (arch.input_shape != diff::Shape{s[2], s[0], s[1]}) {
        throw ConfigError("train.architecture", "does not accept images of shape " + diff::shape_str(s));
      }
    }
    m_.write();
    gen::TrainingLog log;
    const gen::GeneratorModel model = gen::train_vae(data, vc, arch, &log);
    gen::save_model(model, dir_ / "model.ddm");
    m_.output("model.ddm");
    std::string csv = "step,elbo\n";
    for (std::size_t i = 0; i < log.step_elbo.size(); ++i)
      csv += std::to_string(i) + "," + metrics::format_number(log.step_elbo[i]) + "\n";
    write("training_log.csv", csv);
    write("training.json", dump({{"kind", t.kind},
                                 {"items", data.size()},
                                 {"steps", log.step_elbo.size()},
                                 {"initial_elbo", log.initial_elbo},
                                 {"final_elbo", log.final_elbo},
                                 {"final_recon_mse", log.final_recon_mse}}));
  }

  void project() {
    const gen::GeneratorModel g = load_image_model();
    const std::vector<TruthImage> images = truth_images(&g);
    m_.write();
    std::string csv = "image_id,range_error,psnr_db,ssim,seed\n";
    json records = json::array();
    for (const TruthImage& img : images) {
      const std::uint64_t seed = derive_seed(c_.seed, {hash_string(img.id), hash_string("range")});
      m_.seeds()[img.id] = seed;
      const solve::Projection p = solve::range_project(img.image, g, c_.project.steps, c_.project.step_size, seed);
      metrics::MetricReport r = metrics::evaluate(p.image, img.image);
      r.range_error = std::sqrt(r.mse * static_cast<double>(img.image.size()));
      write_png("range_" + img.id + ".png", p.image);
      csv += img.id + "," + metrics::format_number(*r.range_error) + "," +
             metrics::format_number(metrics::psnr_for_file(r.psnr_db)) + "," + metrics::format_number(r.ssim) + "," +
             std::to_string(seed) + "\n";
      records.push_back({{"image_id", img.id},
                         {"seed", seed},
                         {"z", tensor_json(p.z)},
                         {"final_loss", p.loss_trace.empty() ? json(nullptr) : json(p.loss_trace.back())},
                         {"metrics", report_json(r)}});
    }
    write("projections.csv", csv);
    write("projections.json", dump(records));
  }

  blur::BlurKernel chosen_kernel() {
    if (!c_.kernels.empty()) {
      std::vector<blur::BlurKernel> ks = blur::load_kernels(c_.kernels);
      if (c_.kernel_index >= ks.size()) {
        throw ConfigError("kernel_index", "exceeds the " + std::to_string(ks.size()) + " kernels in the set");
      }
      return ks[c_.kernel_index];
    }
    if (!c_.kernel_png.empty()) {
      const diff::Tensor png = io::read_png(c_.kernel_png);
      diff::Tensor k({png.dim(0), png.dim(1)});
      double sum = 0.0;
      for (std::size_t p = 0; p < k.size(); ++p) sum += k[p] = png[p * png.dim(2)];
      if (!(sum > 0.0)) throw ConfigError("kernel_png", "kernel image is all zero");
      for (float& v : k.data()) v = static_cast<float>(v / sum);
      return {k, 0.0, 0};
    }
    const std::uint64_t seed = derive_seed(c_.seed, {hash_string("kernel")});
    m_.seeds()["kernel"] = seed;
    return blur::synthesize_kernel(c_.blur_length, seed);
  }

  void deblur() {
    const bool slack = c_.mode == Mode::DeblurDDS;
    const gen::GeneratorModel gi = load_image_model();
    const gen::GeneratorModel gk = load_kernel_model();

    diff::Tensor y;
    std::optional<diff::Tensor> reference;
    std::optional<double> range_error;
    std::string image_id;
    double kernel_length = 0.0;
    if (!c_.observation.empty()) {
      m_.input(c_.observation);
      y = io::read_png(c_.observation);
      if (y.shape() != gi.output_shape()) {
        throw ConfigError("observation", "shape " + diff::shape_str(y.shape()) + " does not match the image model");
      }
    } else {
      const TruthImage truth = truth_images(&gi).front();
      image_id = truth.id;
      diff::Tensor ref = truth.image;
      if (c_.in_range) {
        const std::uint64_t seed = derive_seed(c_.seed, {hash_string(truth.id), hash_string("range")});
        m_.seeds()["range"] = seed;
        const solve::Projection p = solve::range_project(truth.image, gi, c_.project.steps, c_.project.step_size, seed);
        range_error = std::sqrt(metrics::mse(p.image, truth.image) * static_cast<double>(truth.image.size()));
        ref = p.image;
        write_png("range_image.png", ref);
      }
      const blur::BlurKernel k = chosen_kernel();
      kernel_length = k.length;
      if (k.canvas.dim(0) > ref.dim(0) || k.canvas.dim(1) > ref.dim(1)) {
        throw ConfigError("kernel_png", "kernel is larger than the image");
      }
      const std::uint64_t noise_seed = derive_seed(c_.seed, {hash_string(truth.id), hash_string("noise")});
      m_.seeds()["noise"] = noise_seed;
      const blur::Observation obs = blur::simulate_observation(ref, k.canvas, c_.noise_sigma, noise_seed);
      y = obs.y;
      write_png("observation.png", obs.y_clipped);
      io::write_png16_max_normalized(dir_ / "true_kernel.png", k.canvas);
      m_.output("true_kernel.png");
      reference = ref;
    }

    solve::SolveResult r;
    std::uint64_t solver_seed = 0;
    if (slack) {
      solve::DDSConfig cfg = c_.dds;
      cfg.seed = derive_seed(c_.seed, {hash_string("dds"), c_.dds.seed});
      m_.seeds()["solver"] = solver_seed = cfg.seed;
      m_.write();
      r = solve::deep_deblur_slack(y, gi, gk, cfg);
    } else {
      solve::DDConfig cfg = c_.dd;
      cfg.seed = derive_seed(c_.seed, {hash_string("dd"), c_.dd.seed});
      m_.seeds()["solver"] = solver_seed = cfg.seed;
      m_.write();
      r = solve::deep_deblur(y, gi, gk, cfg);
    }

    std::optional<metrics::MetricReport> report;
    if (reference) {
      report = metrics::evaluate(r.i_hat, *reference);
      report->range_error = range_error;
    }
    write_png("i_hat.png", r.i_hat);
    io::write_png16_max_normalized(dir_ / "k_hat.png", r.k_hat);
    m_.output("k_hat.png");
    write("result.json", dump(solve_record(slack ? "dds" : "dd", r, report)));
    std::string trace = "step,total,measurement\n";
    for (std::size_t t = 0; t < r.loss_trace.size(); ++t)
      trace += std::to_string(t) + "," + metrics::format_number(r.loss_trace[t].total) + "," +
               metrics::format_number(r.loss_trace[t].measurement) + "\n";
    write("loss_trace.csv", trace);
    if (report) {
      const metrics::ResultRow row{image_id, slack ? "dds" : "dd", c_.noise_sigma, kernel_length, *report,
                                   solver_seed};
      write("metrics.csv", metrics::csv_header() + "\n" + metrics::csv_line(row) + "\n");
    }
  }

  void sweep() {
    const gen::GeneratorModel gi = load_image_model();
    const gen::GeneratorModel gk = load_kernel_model();
    const std::vector<TruthImage> images = truth_images(&gi);
    Solvers s;
    s.image_model = &gi;
    s.kernel_model = &gk;
    s.dd = c_.dd;
    s.dds = c_.dds;
    s.methods = c_.sweep.methods;
    s.in_range = c_.in_range;
    s.project = c_.project;
    m_.seeds()["global"] = c_.seed;
    m_.write();

    const fs::path cells = dir_ / "cells";
    SweepOutput out;
    std::string axis;
    if (c_.sweep.axis == "noise") {
      axis = "sigma";
      std::vector<blur::BlurKernel> kernels;
      if (!c_.kernels.empty()) {
        const std::vector<blur::BlurKernel> all = blur::load_kernels(c_.kernels);
        if (all.empty()) throw ConfigError("kernels", "kernel set is empty");
        for (std::size_t i = 0; i < images.size(); ++i) kernels.push_back(all[(c_.kernel_index + i) % all.size()]);
      } else {
        for (const TruthImage& img : images)
          kernels.push_back(blur::synthesize_kernel(
              c_.sweep.fixed_length, derive_seed(c_.seed, {hash_string(img.id), hash_string("kernel")})));
      }
      out = sweep_noise(images, kernels, s, c_.sweep.sigmas, c_.seed, c_.sweep.workers, cells);
    } else {
      axis = "blur_length";
      out = sweep_blur_length(images, c_.sweep.lengths, c_.noise_sigma, s, c_.seed, c_.sweep.workers, cells);
    }
    m_.output("cells/");
    blur::save_kernels(dir_ / "kernels.ddk", out.kernels);
    m_.output("kernels.ddk");
    write("results.csv", results_csv(out.rows));
    write("summary.csv", summary_csv(out.summary, axis));
  }

  const ExperimentConfig& c_;
  Manifest& m_;
  fs::path dir_;
};

}  // namespace

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const UsageError*>(&error) ||
      dynamic_cast<const ShapeError*>(&error) || dynamic_cast<const RangeError*>(&error)) {
    return kExitConfig;
  }
  if (dynamic_cast<const IoError*>(&error) || dynamic_cast<const FormatError*>(&error) ||
      dynamic_cast<const fs::filesystem_error*>(&error)) {
    return kExitIo;
  }
  if (dynamic_cast<const SolverError*>(&error) || dynamic_cast<const NumericError*>(&error)) return kExitSolver;
  return kExitFailure;
}

std::vector<TruthImage> load_truth_images(const ExperimentConfig& config) {
  std::vector<TruthImage> out;
  for (const std::string& path : config.images) out.push_back({fs::path(path).stem().string(), io::read_png(path)});
  for (std::size_t i = 0; i < config.toy_images.count; ++i) {
    const std::size_t index = config.toy_images.offset + i;
    out.push_back({indexed("toy_", index, ""), gen::toy_image(config.toy_images.image, index)});
  }
  return out;
}

json solve_record(const std::string& method, const solve::SolveResult& r,
                  const std::optional<metrics::MetricReport>& report) {
  json restarts = json::array();
  for (const solve::RestartSummary& s : r.restarts) {
    json j = {{"aborted", s.aborted}, {"final_total", s.final_total}, {"final_measurement", s.final_measurement}};
    if (s.aborted) j["diagnostic"] = s.diagnostic;
    restarts.push_back(j);
  }
  json doc = {{"method", method},
              {"chosen_restart", r.chosen_restart},
              {"restarts", restarts},
              {"z_i", tensor_json(r.z_i)},
              {"z_k", tensor_json(r.z_k)},
              {"steps", r.loss_trace.size()}};
  if (!r.loss_trace.empty()) {
    doc["final_total"] = r.loss_trace.back().total;
    doc["final_measurement"] = r.restarts[r.chosen_restart].final_measurement;
  }
  doc["metrics"] = report ? report_json(*report) : json(nullptr);
  return doc;
}

void run(const ExperimentConfig& config) {
  validate(config);
  fs::create_directories(config.output_dir);
  Manifest manifest(config, config.output_dir);
  manifest.write();
  try {
    Run(config, manifest).execute();
  } catch (const std::exception& e) {
    manifest.finish("error", e.what());
    throw;
  }
  manifest.finish("ok");
}

}  // namespace deepdeblur::harness
