#include "deepdeblur/harness/config.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <type_traits>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::harness {

using nlohmann::json;

namespace {

constexpr const char* kModeNames[] = {"gen-blurs", "train-vae", "project", "deblur-dd", "deblur-dds", "sweep"};

// Reads fields of one JSON object and remembers which keys were consumed, so
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename T>
    requires(std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
  void read(const std::string& key, T& out) {
    if (const json* v = find(key)) out = static_cast<T>(unsigned_value(*v, field(key)));
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of strings");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a string");
        out.push_back((*v)[i].get<std::string>());
      }
    }
  }
  void read(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  // Nested object reader, or nullopt if absent.
  std::optional<ObjectReader> child(const std::string& key) {
    if (const json* v = find(key)) return ObjectReader(*v, field(key));
    return std::nullopt;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

 private:
  static std::uint64_t unsigned_value(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) throw ConfigError(field, "must be non-negative");
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(field, "expected a non-negative integer");
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dd(ObjectReader& r, solve::DDConfig& c) {
  r.read("gamma", c.gamma);
  r.read("lambda", c.lambda);
  r.read("steps", c.steps);
  r.read("step_size", c.step_size);
  r.read("decay", c.decay);
  r.read("restarts", c.restarts);
  r.read("seed", c.seed);
  r.reject_unknown();
}

json render_dd(const solve::DDConfig& c) {
  return {{"gamma", c.gamma}, {"lambda", c.lambda}, {"steps", c.steps},   {"step_size", c.step_size},
          {"decay", c.decay}, {"restarts", c.restarts}, {"seed", c.seed}};
}

void read_dds(ObjectReader& r, solve::DDSConfig& c) {
  r.read("tau", c.tau);
  r.read("zeta", c.zeta);
  r.read("rho", c.rho);
  r.read("steps", c.steps);
  r.read("adam_lr", c.adam_lr);
  r.read("restarts", c.restarts);
  r.read("seed", c.seed);
  r.read("image_init_mean", c.image_init_mean);
  r.read("image_init_std", c.image_init_std);
  r.reject_unknown();
}

json render_dds(const solve::DDSConfig& c) {
  return {{"tau", c.tau},           {"zeta", c.zeta},
          {"rho", c.rho},           {"steps", c.steps},
          {"adam_lr", c.adam_lr},   {"restarts", c.restarts},
          {"seed", c.seed},         {"image_init_mean", c.image_init_mean},
          {"image_init_std", c.image_init_std}};
}

void read_vae(ObjectReader& r, gen::VaeConfig& c) {
  r.read("latent_dim", c.latent_dim);
  r.read("batch_size", c.batch_size);
  r.read("learning_rate", c.learning_rate);
  r.read("epochs", c.epochs);
  r.read("max_steps", c.max_steps);
  r.read("seed", c.seed);
  r.read("recon_sigma", c.recon_sigma);
  r.read("batchnorm_momentum", c.batchnorm_momentum);
  r.read("data_scale", c.data_scale);
  r.reject_unknown();
}

json render_vae(const gen::VaeConfig& c) {
  return {{"latent_dim", c.latent_dim},   {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"max_steps", c.max_steps},     {"seed", c.seed},
          {"recon_sigma", c.recon_sigma}, {"batchnorm_momentum", c.batchnorm_momentum},
          {"data_scale", c.data_scale}};
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void require_positive(double v, const std::string& field) {
  require(std::isfinite(v) && v > 0.0, field, "must be a positive number");
}

void require_nonnegative(double v, const std::string& field) {
  require(std::isfinite(v) && v >= 0.0, field, "must be a non-negative number");
}

void require_file(const std::string& path, const std::string& field) {
  require(!path.empty(), field, "is required for this mode");
  if (!std::filesystem::is_regular_file(path)) throw IoError(field + ": no such file '" + path + "'");
}

void validate_dd(const solve::DDConfig& c) {
  require_nonnegative(c.gamma, "dd.gamma");
  require_nonnegative(c.lambda, "dd.lambda");
  require_positive(c.step_size, "dd.step_size");
  require_positive(c.decay, "dd.decay");
  require(c.restarts > 0, "dd.restarts", "must be at least 1");
}

void validate_dds(const solve::DDSConfig& c) {
  require_nonnegative(c.tau, "dds.tau");
  require_nonnegative(c.zeta, "dds.zeta");
  require_nonnegative(c.rho, "dds.rho");
  require_positive(c.adam_lr, "dds.adam_lr");
  require(c.restarts > 0, "dds.restarts", "must be at least 1");
  require(std::isfinite(c.image_init_mean), "dds.image_init_mean", "must be finite");
  require_nonnegative(c.image_init_std, "dds.image_init_std");
}

// Truth images come from PNG paths or the toy source, never both.
void validate_truth_images(const ExperimentConfig& c, bool required) {
  require(c.images.empty() || c.toy_images.count == 0, "images", "give either images or toy_images.count, not both");
  if (required) require(!c.images.empty() || c.toy_images.count > 0, "images", "no input images given");
  for (std::size_t i = 0; i < c.images.size(); ++i) require_file(c.images[i], "images[" + std::to_string(i) + "]");
  if (c.toy_images.count > 0) {
    require(c.toy_images.image.size >= 16 && c.toy_images.image.size % 8 == 0, "toy_images.size",
            "must be a multiple of 8, at least 16");
    require(c.toy_images.image.channels == 1 || c.toy_images.image.channels == 3, "toy_images.channels",
            "must be 1 or 3");
  }
}

void validate_blur_source(const ExperimentConfig& c) {
  require(c.kernels.empty() || c.kernel_png.empty(), "kernel_png", "give either kernels or kernel_png, not both");
  if (!c.kernels.empty()) require_file(c.kernels, "kernels");
  if (!c.kernel_png.empty()) require_file(c.kernel_png, "kernel_png");
  require(c.blur_length >= 1.0 && c.blur_length <= static_cast<double>(blur::kCanvas), "blur_length",
          "must lie in [1, 28]");
  require_nonnegative(c.noise_sigma, "noise_sigma");
}

}  // namespace

std::string to_string(Mode mode) { return kModeNames[static_cast<int>(mode)]; }

Mode mode_from_string(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    if (name == kModeNames[i]) return static_cast<Mode>(i);
  }
  throw ConfigError("mode", "unknown mode '" + name + "'");
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  ObjectReader r(doc, "");
  std::string mode = to_string(c.mode);
  r.read("mode", mode);
  c.mode = mode_from_string(mode);
  r.read("seed", c.seed);
  r.read("output_dir", c.output_dir);
  r.read("image_model", c.image_model);
  r.read("kernel_model", c.kernel_model);
  r.read("images", c.images);
  if (auto t = r.child("toy_images")) {
    t->read("count", c.toy_images.count);
    t->read("offset", c.toy_images.offset);
    t->read("size", c.toy_images.image.size);
    t->read("channels", c.toy_images.image.channels);
    t->read("seed", c.toy_images.image.seed);
    t->reject_unknown();
  }
  r.read("observation", c.observation);
  r.read("kernels", c.kernels);
  r.read("kernel_index", c.kernel_index);
  r.read("kernel_png", c.kernel_png);
  r.read("blur_length", c.blur_length);
  r.read("noise_sigma", c.noise_sigma);
  r.read("in_range", c.in_range);
  if (auto p = r.child("project")) {
    p->read("steps", c.project.steps);
    p->read("step_size", c.project.step_size);
    p->reject_unknown();
  }
  if (auto d = r.child("dd")) read_dd(*d, c.dd);
  if (auto d = r.child("dds")) read_dds(*d, c.dds);
  if (auto b = r.child("blur")) {
    b->read("count", c.blur.count);
    b->read("min_length", c.blur.min_length);
    b->read("max_length", c.blur.max_length);
    b->read("test_fraction", c.blur.test_fraction);
    b->read("seed", c.blur.seed);
    b->reject_unknown();
  }
  r.read("write_kernel_pngs", c.write_kernel_pngs);
  if (auto t = r.child("train")) {
    t->read("kind", c.train.kind);
    t->read("architecture", c.train.architecture);
    t->read("width", c.train.width);
    t->read("dataset", c.train.dataset);
    if (auto v = t->child("vae")) read_vae(*v, c.train.vae);
    t->reject_unknown();
  }
  if (auto s = r.child("sweep")) {
    s->read("axis", c.sweep.axis);
    s->read("sigmas", c.sweep.sigmas);
    s->read("lengths", c.sweep.lengths);
    s->read("methods", c.sweep.methods);
    s->read("fixed_length", c.sweep.fixed_length);
    s->read("workers", c.sweep.workers);
    s->reject_unknown();
  }
  r.reject_unknown();
  return c;
}

json render_config(const ExperimentConfig& c) {
  json doc;
  doc["mode"] = to_string(c.mode);
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir;
  doc["image_model"] = c.image_model;
  doc["kernel_model"] = c.kernel_model;
  doc["images"] = c.images;
  doc["toy_images"] = {{"count", c.toy_images.count},
                       {"offset", c.toy_images.offset},
                       {"size", c.toy_images.image.size},
                       {"channels", c.toy_images.image.channels},
                       {"seed", c.toy_images.image.seed}};
  doc["observation"] = c.observation;
  doc["kernels"] = c.kernels;
  doc["kernel_index"] = c.kernel_index;
  doc["kernel_png"] = c.kernel_png;
  doc["blur_length"] = c.blur_length;
  doc["noise_sigma"] = c.noise_sigma;
  doc["in_range"] = c.in_range;
  doc["project"] = {{"steps", c.project.steps}, {"step_size", c.project.step_size}};
  doc["dd"] = render_dd(c.dd);
  doc["dds"] = render_dds(c.dds);
  doc["blur"] = {{"count", c.blur.count},
                 {"min_length", c.blur.min_length},
                 {"max_length", c.blur.max_length},
                 {"test_fraction", c.blur.test_fraction},
                 {"seed", c.blur.seed}};
  doc["write_kernel_pngs"] = c.write_kernel_pngs;
  doc["train"] = {{"kind", c.train.kind},
                  {"architecture", c.train.architecture},
                  {"width", c.train.width},
                  {"dataset", c.train.dataset},
                  {"vae", render_vae(c.train.vae)}};
  doc["sweep"] = {{"axis", c.sweep.axis},
                  {"sigmas", c.sweep.sigmas},
                  {"lengths", c.sweep.lengths},
                  {"methods", c.sweep.methods},
                  {"fixed_length", c.sweep.fixed_length},
                  {"workers", c.sweep.workers}};
  return doc;
}

json merge_config(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      base[key] = merge_config(base[key], value);
    } else {
      base[key] = value;
    }
  }
  return base;
}

void validate(const ExperimentConfig& c) {
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  switch (c.mode) {
    case Mode::GenBlurs: {
      const auto& b = c.blur;
      require(b.count > 0, "blur.count", "must be at least 1");
      require(b.min_length >= 1.0 && b.max_length <= static_cast<double>(blur::kCanvas) &&
                  b.min_length <= b.max_length,
              "blur.min_length", "lengths must satisfy 1 <= min_length <= max_length <= 28");
      require(b.test_fraction >= 0.0 && b.test_fraction < 1.0, "blur.test_fraction", "must lie in [0, 1)");
      break;
    }
    case Mode::TrainVae: {
      const auto& t = c.train;
      require(t.kind == "kernel" || t.kind == "image", "train.kind", "must be 'kernel' or 'image'");
      require(t.architecture == "blur" || t.architecture == "svhn" || t.architecture == "toy", "train.architecture",
              "must be 'blur', 'svhn' or 'toy'");
      require((t.kind == "kernel") == (t.architecture == "blur"), "train.architecture",
              "kernel models use 'blur', image models 'svhn' or 'toy'");
      require(t.width > 0, "train.width", "must be at least 1");
      require(t.vae.latent_dim > 0, "train.vae.latent_dim", "must be at least 1");
      require(t.vae.batch_size > 0, "train.vae.batch_size", "must be at least 1");
      require(t.vae.epochs > 0, "train.vae.epochs", "must be at least 1");
      require_positive(t.vae.learning_rate, "train.vae.learning_rate");
      require_positive(t.vae.recon_sigma, "train.vae.recon_sigma");
      require_positive(t.vae.data_scale, "train.vae.data_scale");
      if (t.kind == "kernel") {
        require_file(t.dataset, "train.dataset");
      } else {
        validate_truth_images(c, true);
      }
      break;
    }
    case Mode::Project:
      require_file(c.image_model, "image_model");
      validate_truth_images(c, true);
      require_positive(c.project.step_size, "project.step_size");
      break;
    case Mode::DeblurDD:
    case Mode::DeblurDDS:
      require_file(c.image_model, "image_model");
      require_file(c.kernel_model, "kernel_model");
      if (c.mode == Mode::DeblurDD) {
        validate_dd(c.dd);
      } else {
        validate_dds(c.dds);
      }
      if (!c.observation.empty()) {
        require_file(c.observation, "observation");
        require(c.images.empty() && c.toy_images.count == 0, "observation",
                "a real observation has no ground truth; drop images/toy_images");
      } else {
        validate_truth_images(c, true);
        require(c.images.size() + c.toy_images.count == 1, "images", "deblur modes take exactly one image");
        validate_blur_source(c);
      }
      if (c.in_range) require_positive(c.project.step_size, "project.step_size");
      break;
    case Mode::Sweep: {
      const auto& s = c.sweep;
      require(s.axis == "noise" || s.axis == "blur_length", "sweep.axis", "must be 'noise' or 'blur_length'");
      if (s.axis == "noise") {
        require(!s.sigmas.empty(), "sweep.sigmas", "must not be empty for a noise sweep");
        for (std::size_t i = 0; i < s.sigmas.size(); ++i)
          require_nonnegative(s.sigmas[i], "sweep.sigmas[" + std::to_string(i) + "]");
        require(s.fixed_length >= 1.0 && s.fixed_length <= static_cast<double>(blur::kCanvas), "sweep.fixed_length",
                "must lie in [1, 28]");
      } else {
        require(!s.lengths.empty(), "sweep.lengths", "must not be empty for a blur-length sweep");
        for (std::size_t i = 0; i < s.lengths.size(); ++i)
          require(s.lengths[i] >= 1.0 && s.lengths[i] <= static_cast<double>(blur::kCanvas),
                  "sweep.lengths[" + std::to_string(i) + "]", "must lie in [1, 28]");
        require(c.kernels.empty() && c.kernel_png.empty(), "kernels",
                "blur-length sweeps synthesize their own kernels");
      }
      require(!s.methods.empty(), "sweep.methods", "must not be empty");
      for (std::size_t i = 0; i < s.methods.size(); ++i)
        require(s.methods[i] == "dd" || s.methods[i] == "dds", "sweep.methods[" + std::to_string(i) + "]",
                "must be 'dd' or 'dds'");
      require(s.workers > 0, "sweep.workers", "must be at least 1");
      require_file(c.image_model, "image_model");
      require_file(c.kernel_model, "kernel_model");
      validate_truth_images(c, true);
      validate_blur_source(c);
      validate_dd(c.dd);
      validate_dds(c.dds);
      if (c.in_range) require_positive(c.project.step_size, "project.step_size");
      break;
    }
  }
}

}  // namespace deepdeblur::harness
