#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepdeblur/errors.hpp"
#include "deepdeblur/harness/config.hpp"
#include "deepdeblur/harness/run.hpp"
#include "deepdeblur/io/container.hpp"

namespace {

using nlohmann::json;
using namespace deepdeblur;

// Sets a dotted path inside `doc`, creating objects on the way.
void set_path(json& doc, const std::string& path, json value) {
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "empty path component");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& next = (*node)[key];
    if (!next.is_object()) next = json::object();
    node = &next;
    start = dot + 1;
  }
}

// `--set a.b=value`: the value is read as JSON when it parses, else as a string.
void apply_assignment(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects path=value, got '" + assignment + "'");
  const std::string value = assignment.substr(eq + 1);
  json parsed = json::parse(value, nullptr, false);
  set_path(doc, assignment.substr(0, eq), parsed.is_discarded() ? json(value) : std::move(parsed));
}

struct Flags {
  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir, image_model, kernel_model, observation, kernels, kernel_png, dataset;
  std::vector<std::string> images;
  std::optional<std::size_t> toy_count, toy_offset, kernel_index, steps, restarts, workers, count;
  std::optional<double> blur_length, noise_sigma, step_size;
  std::vector<double> sigmas, lengths;
  std::vector<std::string> methods;
  std::optional<std::string> axis, kind, architecture;
  bool in_range = false;
  bool kernel_pngs = false;
};

// Flag values override the config file; --set assignments are applied last.
json flag_patch(const Flags& f, harness::Mode mode) {
  json p = json::object();
  p["mode"] = harness::to_string(mode);
  if (f.seed) p["seed"] = *f.seed;
  if (f.output_dir) p["output_dir"] = *f.output_dir;
  if (f.image_model) p["image_model"] = *f.image_model;
  if (f.kernel_model) p["kernel_model"] = *f.kernel_model;
  if (f.observation) p["observation"] = *f.observation;
  if (f.kernels) p["kernels"] = *f.kernels;
  if (f.kernel_png) p["kernel_png"] = *f.kernel_png;
  if (f.kernel_index) p["kernel_index"] = *f.kernel_index;
  if (!f.images.empty()) p["images"] = f.images;
  if (f.toy_count) p["toy_images"]["count"] = *f.toy_count;
  if (f.toy_offset) p["toy_images"]["offset"] = *f.toy_offset;
  if (f.blur_length) p["blur_length"] = *f.blur_length;
  if (f.noise_sigma) p["noise_sigma"] = *f.noise_sigma;
  if (f.in_range) p["in_range"] = true;

  const char* solver = mode == harness::Mode::DeblurDDS ? "dds" : mode == harness::Mode::Project ? "project" : "dd";
  if (f.steps) p[solver]["steps"] = *f.steps;
  if (f.step_size) p[solver][mode == harness::Mode::DeblurDDS ? "adam_lr" : "step_size"] = *f.step_size;
  if (f.restarts) p[solver]["restarts"] = *f.restarts;

  if (f.count) p["blur"]["count"] = *f.count;
  if (f.kernel_pngs) p["write_kernel_pngs"] = true;
  if (f.dataset) p["train"]["dataset"] = *f.dataset;
  if (f.kind) p["train"]["kind"] = *f.kind;
  // The default VAE settings scale kernel targets by 100, which image
  // decoders with a sigmoid head cannot absorb.
  if (f.kind == "image") p["train"]["vae"]["data_scale"] = 1.0;
  if (f.architecture) p["train"]["architecture"] = *f.architecture;
  if (f.axis) p["sweep"]["axis"] = *f.axis;
  if (!f.sigmas.empty()) p["sweep"]["sigmas"] = f.sigmas;
  if (!f.lengths.empty()) p["sweep"]["lengths"] = f.lengths;
  if (!f.methods.empty()) p["sweep"]["methods"] = f.methods;
  if (f.workers) p["sweep"]["workers"] = *f.workers;
  for (const std::string& a : f.assignments) apply_assignment(p, a);
  return p;
}

harness::ExperimentConfig build_config(const Flags& f, harness::Mode mode) {
  json doc = json::object();
  if (!f.config_file.empty()) {
    const std::string text = io::read_file(f.config_file);
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config", f.config_file + " is not a JSON object");
  }
  return harness::parse_config(harness::merge_config(doc, flag_patch(f, mode)));
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("-c,--config", f.config_file, "JSON config file; flags override its values");
  sub->add_option("--set", f.assignments, "Override any config field, e.g. --set dd.gamma=0.02")
      ->type_name("PATH=VALUE");
  sub->add_option("--seed", f.seed, "Global seed");
  sub->add_option("-o,--out", f.output_dir, "Output directory");
}

void add_inputs(CLI::App* sub, Flags& f) {
  sub->add_option("--image-model", f.image_model, "Image decoder model file");
  sub->add_option("--images", f.images, "Ground-truth PNG images");
  sub->add_option("--toy-images", f.toy_count, "Number of procedural toy images");
  sub->add_option("--toy-offset", f.toy_offset, "First procedural toy image index");
  sub->add_flag("--in-range", f.in_range, "Replace each truth image by its range projection");
}

void add_blur(CLI::App* sub, Flags& f) {
  sub->add_option("--kernel-model", f.kernel_model, "Kernel decoder model file");
  sub->add_option("--kernels", f.kernels, "Kernel set file");
  sub->add_option("--kernel-index", f.kernel_index, "Kernel index within the set");
  sub->add_option("--noise", f.noise_sigma, "Noise standard deviation");
}

}  // namespace

int main(int argc, char** argv) {
  using harness::Mode;
  CLI::App app{"Blind deblurring with generative priors"};
  app.set_version_flag("--version", harness::kProgramVersion);
  app.require_subcommand(1);
  Flags f;

  CLI::App* gen_blurs = app.add_subcommand("gen-blurs", "Synthesize a motion-blur kernel dataset");
  add_common(gen_blurs, f);
  gen_blurs->add_option("--count", f.count, "Number of kernels");
  gen_blurs->add_flag("--pngs", f.kernel_pngs, "Also write one PNG per kernel");

  CLI::App* train = app.add_subcommand("train-vae", "Train a kernel or image VAE and save its decoder");
  add_common(train, f);
  train->add_option("--kind", f.kind, "kernel or image")->check(CLI::IsMember({"kernel", "image"}));
  train->add_option("--architecture", f.architecture, "blur, svhn or toy");
  train->add_option("--dataset", f.dataset, "Kernel set file (kernel VAEs)");
  train->add_option("--images", f.images, "Training PNG images (image VAEs)");
  train->add_option("--toy-images", f.toy_count, "Number of procedural training images");

  CLI::App* project = app.add_subcommand("project", "Project images onto the range of an image decoder");
  add_common(project, f);
  project->add_option("--image-model", f.image_model, "Image decoder model file");
  project->add_option("--images", f.images, "PNG images");
  project->add_option("--toy-images", f.toy_count, "Number of procedural toy images");
  project->add_option("--toy-offset", f.toy_offset, "First procedural toy image index");
  project->add_option("--steps", f.steps, "Gradient steps");
  project->add_option("--step-size", f.step_size, "Gradient step size");

  std::vector<CLI::App*> deblurs;
  for (const char* name : {"deblur-dd", "deblur-dds"}) {
    CLI::App* sub = app.add_subcommand(name, std::string(name == std::string("deblur-dd")
                                                             ? "Deblur one image with latent alternating descent"
                                                             : "Deblur one image with the slack formulation"));
    add_common(sub, f);
    add_inputs(sub, f);
    add_blur(sub, f);
    sub->add_option("--observation", f.observation, "Blurry PNG without ground truth");
    sub->add_option("--kernel-png", f.kernel_png, "Blur kernel PNG for simulated observations");
    sub->add_option("--blur-length", f.blur_length, "Length of a freshly synthesized kernel");
    sub->add_option("--steps", f.steps, "Iterations per restart");
    sub->add_option("--step-size", f.step_size, "Step size (Adam learning rate for the slack solver)");
    sub->add_option("--restarts", f.restarts, "Random restarts");
    deblurs.push_back(sub);
  }

  CLI::App* sweep = app.add_subcommand("sweep", "Noise or blur-length sweep over images and methods");
  add_common(sweep, f);
  add_inputs(sweep, f);
  add_blur(sweep, f);
  sweep->add_option("--axis", f.axis, "noise or blur_length")->check(CLI::IsMember({"noise", "blur_length"}));
  sweep->add_option("--sigmas", f.sigmas, "Noise levels")->delimiter(',');
  sweep->add_option("--lengths", f.lengths, "Blur lengths")->delimiter(',');
  sweep->add_option("--methods", f.methods, "dd and/or dds")->delimiter(',');
  sweep->add_option("--workers", f.workers, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? harness::kExitOk : harness::kExitConfig;
  }

  Mode mode = Mode::GenBlurs;
  if (train->parsed()) mode = Mode::TrainVae;
  if (project->parsed()) mode = Mode::Project;
  if (deblurs[0]->parsed()) mode = Mode::DeblurDD;
  if (deblurs[1]->parsed()) mode = Mode::DeblurDDS;
  if (sweep->parsed()) mode = Mode::Sweep;

  try {
    const harness::ExperimentConfig config = build_config(f, mode);
    harness::run(config);
    std::cout << "wrote " << config.output_dir << "\n";
    return harness::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return harness::exit_code_for(e);
  }
}
