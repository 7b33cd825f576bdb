#pragma once

// Config-driven experiment commands. Each command takes a JSON config (or the
// manifest of an earlier run), fills profile defaults, validates every field,
// writes artifacts under its output directory and records the resolved config
// beside them in manifest.json. Relative output paths resolve against
// $GENIE_OUTPUT_ROOT (default: the working directory).

#include "genie/suite.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace genie::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "GENIE_OUTPUT_ROOT";

inline fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

inline fs::path resolve_output(const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : output_root() / p;
}

/// Model and training defaults for the two shipped profiles.
inline json profile_defaults(const std::string& name) {
  if (name == "desk")
    return {{"model", {{"hidden_dim", 64}, {"depth", 4}, {"omega0", 10.0}}},
            {"training", {{"epochs", 2000}, {"batch_size", 40960}, {"learning_rate", 1e-4}, {"n_points", 10000}}}};
  if (name == "paper")
    return {{"model", {{"hidden_dim", 128}, {"depth", 8}, {"omega0", 30.0}}},
            {"training", {{"epochs", 20000}, {"batch_size", 40960}, {"learning_rate", 1e-4}, {"n_points", 60000}}}};
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

/// Reads a config file. A manifest from an earlier run yields its stored config.
inline json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  if (j.contains("manifest_version") && j.contains("config")) return j["config"];
  return j;
}

/// "a.b.c=value" sets a nested key; value is parsed as JSON, else taken as a string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Validation: every problem is collected, then reported together.

class Checker {
 public:
  void error(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

  void known_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) return;
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) error(join(path, k), "unknown key");
  }

  const json* section(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key)) return nullptr;
    if (!obj[key].is_object()) {
      error(join(path, key), "must be an object");
      return nullptr;
    }
    return &obj[key];
  }

  std::int64_t integer(const json& obj, const std::string& key, const std::string& path, std::int64_t fallback,
                       std::int64_t min = std::numeric_limits<std::int64_t>::min(), bool required = false) {
    if (!obj.contains(key)) {
      if (required) error(join(path, key), "required");
      return fallback;
    }
    const auto& v = obj[key];
    if (!v.is_number_integer()) {
      error(join(path, key), "must be an integer");
      return fallback;
    }
    const auto x = v.get<std::int64_t>();
    if (x < min) error(join(path, key), "must be >= " + std::to_string(min));
    return x;
  }

  double real(const json& obj, const std::string& key, const std::string& path, double fallback,
              bool positive = false, bool required = false) {
    if (!obj.contains(key)) {
      if (required) error(join(path, key), "required");
      return fallback;
    }
    const auto& v = obj[key];
    if (!v.is_number()) {
      error(join(path, key), "must be a number");
      return fallback;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) error(join(path, key), "must be finite");
    if (positive && !(x > 0.0)) error(join(path, key), "must be > 0");
    return x;
  }

  std::string text(const json& obj, const std::string& key, const std::string& path, std::string fallback,
                   bool required = false) {
    if (!obj.contains(key)) {
      if (required) error(join(path, key), "required");
      return fallback;
    }
    if (!obj[key].is_string()) {
      error(join(path, key), "must be a string");
      return fallback;
    }
    return obj[key].get<std::string>();
  }

  std::vector<std::string> strings(const json& obj, const std::string& key, const std::string& path) {
    std::vector<std::string> out;
    if (!obj.contains(key)) return out;
    if (!obj[key].is_array()) {
      error(join(path, key), "must be a list of strings");
      return out;
    }
    for (std::size_t i = 0; i < obj[key].size(); ++i) {
      if (!obj[key][i].is_string()) error(join(path, key) + "[" + std::to_string(i) + "]", "must be a string");
      else out.push_back(obj[key][i].get<std::string>());
    }
    return out;
  }

  std::vector<double> reals(const json& obj, const std::string& key, const std::string& path,
                            std::vector<double> fallback) {
    if (!obj.contains(key)) return fallback;
    std::vector<double> out;
    if (!obj[key].is_array()) {
      error(join(path, key), "must be a list of numbers");
      return fallback;
    }
    for (std::size_t i = 0; i < obj[key].size(); ++i) {
      if (!obj[key][i].is_number()) error(join(path, key) + "[" + std::to_string(i) + "]", "must be a number");
      else out.push_back(obj[key][i].get<double>());
    }
    return out;
  }

  template <class F>
  auto parse(const std::string& path, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      error(path, e.what());
      return {};
    }
  }

  bool ok() const { return errors_.empty(); }
  const std::vector<std::string>& errors() const { return errors_; }

  void finish(const std::string& command) const {
    if (errors_.empty()) return;
    std::string msg = command + " config has " + std::to_string(errors_.size()) + " error(s):";
    for (const auto& e : errors_) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::vector<std::string> errors_;
};

inline Box parse_bounds(Checker& c, const json& obj, const std::string& path, Box fallback = {}) {
  if (!obj.contains("bounds")) return fallback;
  const auto& b = obj["bounds"];
  const std::string p = Checker::join(path, "bounds");
  Box box;
  if (b.is_array() && b.size() == 2 && b[0].is_number() && b[1].is_number()) {
    box.lo = Vec3::Constant(b[0].get<double>());
    box.hi = Vec3::Constant(b[1].get<double>());
  } else if (b.is_array() && b.size() == 2 && b[0].is_array() && b[1].is_array() && b[0].size() == 3 &&
             b[1].size() == 3) {
    for (int a = 0; a < 3; ++a) {
      if (!b[0][a].is_number() || !b[1][a].is_number()) {
        c.error(p, "corners must be numbers");
        return fallback;
      }
      box.lo[a] = b[0][a].get<double>();
      box.hi[a] = b[1][a].get<double>();
    }
  } else {
    c.error(p, "expected [lo, hi] or [[x,y,z], [x,y,z]]");
    return fallback;
  }
  if ((box.hi.array() <= box.lo.array()).any()) c.error(p, "hi must exceed lo on every axis");
  return box;
}

inline json bounds_json(const Box& b) {
  return json::array({{b.lo.x(), b.lo.y(), b.lo.z()}, {b.hi.x(), b.hi.y(), b.hi.z()}});
}

/// {"mode": "volume"|"band", "n_points", "seed", "band_width", "bounds"}.
inline SamplingSpec parse_sampling(Checker& c, const json& parent, const std::string& key, const std::string& path,
                                   SamplingSpec fallback) {
  const json* s = c.section(parent, key, path);
  if (!s) return fallback;
  const std::string p = Checker::join(path, key);
  c.known_keys(*s, p, {"mode", "n_points", "seed", "band_width", "bounds"});
  SamplingSpec out = fallback;
  const std::string mode = c.text(*s, "mode", p, fallback.mode == SamplingSpec::Mode::Band ? "band" : "volume");
  if (mode == "volume") out.mode = SamplingSpec::Mode::Volume;
  else if (mode == "band") out.mode = SamplingSpec::Mode::Band;
  else c.error(Checker::join(p, "mode"), "expected volume or band");
  out.n_points = static_cast<std::size_t>(c.integer(*s, "n_points", p, static_cast<std::int64_t>(fallback.n_points), 1));
  out.seed = static_cast<std::uint64_t>(c.integer(*s, "seed", p, static_cast<std::int64_t>(fallback.seed), 0));
  out.band_width = c.real(*s, "band_width", p, out.mode == SamplingSpec::Mode::Band && fallback.band_width <= 0.0
                                                   ? 0.05 : fallback.band_width, out.mode == SamplingSpec::Mode::Band);
  out.bounds = parse_bounds(c, *s, p, fallback.bounds);
  return out;
}

inline json sampling_json(const SamplingSpec& s) {
  json j{{"mode", s.mode == SamplingSpec::Mode::Band ? "band" : "volume"},
         {"n_points", s.n_points}, {"seed", s.seed}, {"bounds", bounds_json(s.bounds)}};
  if (s.mode == SamplingSpec::Mode::Band) j["band_width"] = s.band_width;
  return j;
}

// ---------------------------------------------------------------------------
// Artifact helpers

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << body;
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

inline void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                           const std::vector<std::string>& outputs) {
  json m{{"manifest_version", 1},
         {"command", command},
         {"version", kVersion},
         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION)},
         {"compiler", __VERSION__},
         {"config", config},
         {"outputs", outputs}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

/// Refuses to write over the input checkpoint.
inline void guard_input(const fs::path& input, const fs::path& output) {
  std::error_code ec;
  if (fs::exists(output) && fs::equivalent(input, output, ec))
    throw ConfigError("refusing to overwrite the input checkpoint '" + input.string() + "'");
  if (fs::weakly_canonical(input, ec) == fs::weakly_canonical(output, ec))
    throw ConfigError("refusing to overwrite the input checkpoint '" + input.string() + "'");
}

inline Model load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw NotFoundError("checkpoint '" + path + "' not found");
  return load_model(path);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// train

struct HeadSpec {
  std::string label;
  std::vector<DeformationField> deform;
};

struct TrainJob {
  json config;  // resolved
  fs::path out;
  std::uint64_t seed = 0;
  Shape shape = Sphere{};
  std::vector<HeadSpec> heads;
  std::string pointcloud;
  std::size_t hidden_dim = 64, depth = 4;
  double omega0 = 10.0;
  TrainConfig training;
  Box bounds{};
};

inline TrainJob parse_train(json raw) {
  Checker c;
  TrainJob job;
  std::string profile = "desk";
  if (raw.contains("profile") && raw["profile"].is_string()) profile = raw["profile"].get<std::string>();
  json cfg;
  try {
    cfg = profile_defaults(profile);
  } catch (const ConfigError& e) {
    c.error("profile", e.what());
    cfg = profile_defaults("desk");
  }
  cfg.merge_patch(raw);
  cfg["profile"] = profile;
  c.known_keys(cfg, "", {"command", "profile", "seed", "output", "shape", "heads", "model", "training", "bounds",
                         "pointcloud"});
  job.seed = static_cast<std::uint64_t>(c.integer(cfg, "seed", "", 0, 0));
  job.out = resolve_output(c.text(cfg, "output", "", "", true));
  job.pointcloud = c.text(cfg, "pointcloud", "", "");
  const std::string shape = c.text(cfg, "shape", "", "sphere:r=0.5");
  job.shape = c.parse("shape", [&] { return parse_shape(shape); });
  job.bounds = parse_bounds(c, cfg, "");

  if (cfg.contains("heads")) {
    if (!cfg["heads"].is_array()) {
      c.error("heads", "must be a list");
    } else if (cfg["heads"].empty()) {
      c.error("heads", "head count must be >= 1");
    } else {
      for (std::size_t i = 0; i < cfg["heads"].size(); ++i) {
        const auto& h = cfg["heads"][i];
        const std::string p = "heads[" + std::to_string(i) + "]";
        if (!h.is_object()) {
          c.error(p, "must be an object");
          continue;
        }
        c.known_keys(h, p, {"label", "deform"});
        HeadSpec spec;
        spec.label = c.text(h, "label", p, i == 0 ? "base" : "head" + std::to_string(i));
        for (const auto& d : c.strings(h, "deform", p))
          spec.deform.push_back(c.parse(p + ".deform", [&] { return parse_deformation(d); }));
        job.heads.push_back(std::move(spec));
      }
    }
  } else {
    job.heads.push_back({"base", {}});
  }
  if (!job.pointcloud.empty() && job.heads.size() > 1)
    c.error("heads", "point-cloud training supports a single head");

  if (const json* m = c.section(cfg, "model", "")) {
    c.known_keys(*m, "model", {"hidden_dim", "depth", "omega0"});
    job.hidden_dim = static_cast<std::size_t>(c.integer(*m, "hidden_dim", "model", 64, 1));
    job.depth = static_cast<std::size_t>(c.integer(*m, "depth", "model", 4, 1));
    job.omega0 = c.real(*m, "omega0", "model", 10.0, true);
  }
  if (const json* t = c.section(cfg, "training", "")) {
    c.known_keys(*t, "training", {"epochs", "batch_size", "learning_rate", "n_points", "beta1", "beta2", "adam_eps"});
    job.training.epochs = c.integer(*t, "epochs", "training", 2000, 0);
    job.training.batch_size = static_cast<std::size_t>(c.integer(*t, "batch_size", "training", 40960, 1));
    job.training.learning_rate = c.real(*t, "learning_rate", "training", 1e-4, true);
    job.training.n_train_points = static_cast<std::size_t>(c.integer(*t, "n_points", "training", 10000, 1));
    job.training.beta1 = c.real(*t, "beta1", "training", 0.9);
    job.training.beta2 = c.real(*t, "beta2", "training", 0.999);
    job.training.adam_eps = c.real(*t, "adam_eps", "training", 1e-8, true);
    if (job.training.beta1 < 0.0 || job.training.beta1 >= 1.0) c.error("training.beta1", "must be in [0, 1)");
    if (job.training.beta2 < 0.0 || job.training.beta2 >= 1.0) c.error("training.beta2", "must be in [0, 1)");
  }
  job.training.seed = job.seed + 2;
  c.finish("train");
  job.config = cfg;
  return job;
}

struct TrainOutcome {
  Model model;
  std::vector<double> loss_history;
  fs::path checkpoint;
};

inline Dataset train_dataset(const TrainJob& job) {
  if (!job.pointcloud.empty()) {
    const auto rows = load_sdf_pointcloud(job.pointcloud);
    if (rows.empty()) throw InputError("point cloud '" + job.pointcloud + "' has no samples");
    Dataset d{Mat(3, static_cast<Eigen::Index>(rows.size())), Mat(static_cast<Eigen::Index>(rows.size()), 1)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.points.col(static_cast<Eigen::Index>(i)) = rows[i].point;
      d.targets(static_cast<Eigen::Index>(i), 0) = rows[i].sdf;
    }
    return d;
  }
  const Points pts = sample(SamplingSpec::volume(job.training.n_train_points, job.seed, job.bounds), shape_field(job.shape));
  Dataset d{pts, Mat(pts.cols(), static_cast<Eigen::Index>(job.heads.size()))};
  for (std::size_t h = 0; h < job.heads.size(); ++h)
    d.targets.col(static_cast<Eigen::Index>(h)) = deformed_field(job.shape, job.heads[h].deform)(pts);
  return d;
}

inline TrainOutcome cmd_train(const TrainJob& job, std::ostream* log = nullptr) {
  ensure_dir(job.out);
  const Dataset data = train_dataset(job);
  Model m = init_model(3, job.hidden_dim, job.depth, job.omega0, job.heads.size(), job.seed + 1);
  for (std::size_t h = 0; h < job.heads.size(); ++h) m.heads[h].label = job.heads[h].label;
  const std::int64_t every = std::max<std::int64_t>(1, job.training.epochs / 20);
  auto res = train(std::move(m), data, job.training, [&](std::int64_t e, double loss) {
    if (log && (e % every == 0 || e + 1 == job.training.epochs))
      *log << "epoch " << e << " loss " << std::setprecision(6) << loss << "\n";
  });
  TrainOutcome out{std::move(res.model), std::move(res.loss_history), job.out / "model.ckpt"};
  save_model(out.model, out.checkpoint.string());
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < out.loss_history.size(); ++e) csv << e << ',' << fmt(out.loss_history[e]) << '\n';
  write_text(job.out / "loss.csv", csv.str());
  write_manifest(job.out, "train", job.config, {"model.ckpt", "loss.csv"});
  return out;
}

// ---------------------------------------------------------------------------
// gram

struct GramJob {
  json config;
  std::string checkpoint;
  fs::path out;
  std::size_t head = 0;
  SamplingSpec sampling = SamplingSpec::volume(20000, 0);
  std::vector<std::int64_t> modes{0, 10, 39};
  double amplitude = 0.03;
  int mesh_resolution = 64;
};

inline std::size_t parse_head(Checker& c, const json& cfg, const std::string& key = "head") {
  return static_cast<std::size_t>(c.integer(cfg, key, "", 0, 0));
}

inline GramJob parse_gram(const json& cfg) {
  Checker c;
  GramJob job;
  c.known_keys(cfg, "", {"command", "checkpoint", "output", "head", "sampling", "modes", "amplitude",
                         "mesh_resolution"});
  job.checkpoint = c.text(cfg, "checkpoint", "", "", true);
  job.out = resolve_output(c.text(cfg, "output", "", "", true));
  job.head = parse_head(c, cfg);
  job.sampling = parse_sampling(c, cfg, "sampling", "", job.sampling);
  if (cfg.contains("modes")) {
    job.modes.clear();
    if (!cfg["modes"].is_array()) c.error("modes", "must be a list of integers");
    else
      for (const auto& k : cfg["modes"]) {
        if (!k.is_number_integer() || k.get<std::int64_t>() < 0) c.error("modes", "entries must be integers >= 0");
        else job.modes.push_back(k.get<std::int64_t>());
      }
  }
  job.amplitude = c.real(cfg, "amplitude", "", job.amplitude, true);
  job.mesh_resolution = static_cast<int>(c.integer(cfg, "mesh_resolution", "", job.mesh_resolution, 0));
  if (job.mesh_resolution == 1) c.error("mesh_resolution", "must be 0 (no meshes) or >= 2");
  c.finish("gram");
  job.config = cfg;
  job.config["sampling"] = sampling_json(job.sampling);
  job.config["modes"] = job.modes;
  job.config["amplitude"] = job.amplitude;
  job.config["mesh_resolution"] = job.mesh_resolution;
  job.config["head"] = job.head;
  return job;
}

/// Points for a spectrum: band mode uses the model's own field as the SDF.
inline Points spectrum_points(const Model& m, std::size_t head, const SamplingSpec& spec) {
  return sample(spec, model_field(m, head));
}

struct ModeRow {
  std::int64_t k = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  double hd_plus = 0.0, hd_minus = 0.0;
};

struct GramOutcome {
  GramSpectrum spectrum;
  std::vector<ModeRow> modes;
};

/// Coefficient giving mode k a field perturbation with RMS `amplitude` at the samples.
inline double mode_alpha(const GramSpectrum& s, std::int64_t k, std::size_t n, double amplitude) {
  const double lambda = s.eigenvalues[k];
  return lambda > 0.0 ? amplitude / std::sqrt(lambda / static_cast<double>(n)) : 0.0;
}

inline GramOutcome cmd_gram(const GramJob& job) {
  const Model m = load_checkpoint(job.checkpoint);
  m.head(job.head);
  ensure_dir(job.out);
  const Points pts = spectrum_points(m, job.head, job.sampling);
  GramOutcome out;
  out.spectrum = spectrum_of(build_feature_matrix(m, pts));
  std::vector<std::string> files{"spectrum.csv", "modes.csv"};
  {
    std::ostringstream os;
    os.precision(17);
    write_spectrum_csv(os, out.spectrum.eigenvalues);
    write_text(job.out / "spectrum.csv", os.str());
  }
  const auto model = std::make_shared<const Model>(m);
  const Box bounds = job.sampling.bounds;
  Mesh base;
  if (job.mesh_resolution >= 2) {
    base = marching_cubes(model_field(model, job.head), bounds, job.mesh_resolution);
    export_mesh(base, (job.out / "base.obj").string());
    files.push_back("base.obj");
  }
  for (auto k : job.modes) {
    if (k >= out.spectrum.dim()) continue;
    ModeRow row{k, out.spectrum.eigenvalues[k], mode_alpha(out.spectrum, k, job.sampling.n_points, job.amplitude)};
    const Vec v = out.spectrum.eigenvectors.col(k);
    const std::string stem = "mode_" + std::to_string(k);
    save_head_patch(Head{v, 0.0, "mode " + std::to_string(k)}, (job.out / (stem + ".head")).string());
    files.push_back(stem + ".head");
    if (job.mesh_resolution >= 2) {
      for (int sign : {1, -1}) {
        const Mesh mesh = marching_cubes(perturbed_field(model, job.head, sign * row.alpha * v), bounds,
                                         job.mesh_resolution);
        const std::string name = stem + (sign > 0 ? "_plus.obj" : "_minus.obj");
        export_mesh(mesh, (job.out / name).string());
        files.push_back(name);
        const double hd = mesh_metrics(mesh, base, 20000, static_cast<std::uint64_t>(k)).hd;
        (sign > 0 ? row.hd_plus : row.hd_minus) = hd;
      }
    }
    out.modes.push_back(row);
  }
  std::ostringstream os;
  os << "k,lambda,alpha,hd_plus,hd_minus\n";
  for (const auto& r : out.modes)
    os << r.k << ',' << fmt(r.lambda) << ',' << fmt(r.alpha) << ',' << fmt(r.hd_plus) << ',' << fmt(r.hd_minus) << '\n';
  write_text(job.out / "modes.csv", os.str());
  write_manifest(job.out, "gram", job.config, files);
  return out;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityJob {
  json config;
  std::string checkpoint;
  fs::path out;
  std::size_t head = 0;
  std::int64_t k = 10;
  std::uint64_t seed = 0;
  std::size_t band_n = 20000;
  std::vector<double> band_widths{0.01, 0.05, 0.2};
  std::vector<double> sample_counts{1000, 5000, 20000, 60000};
  Box bounds{};
};

inline StabilityJob parse_stability(const json& cfg) {
  Checker c;
  StabilityJob job;
  c.known_keys(cfg, "", {"command", "checkpoint", "output", "head", "k", "seed", "band_n_points", "band_widths",
                         "sample_counts", "bounds"});
  job.checkpoint = c.text(cfg, "checkpoint", "", "", true);
  job.out = resolve_output(c.text(cfg, "output", "", "", true));
  job.head = parse_head(c, cfg);
  job.k = c.integer(cfg, "k", "", 10, 1);
  job.seed = static_cast<std::uint64_t>(c.integer(cfg, "seed", "", 0, 0));
  job.band_n = static_cast<std::size_t>(c.integer(cfg, "band_n_points", "", 20000, 1));
  job.band_widths = c.reals(cfg, "band_widths", "", job.band_widths);
  job.sample_counts = c.reals(cfg, "sample_counts", "", job.sample_counts);
  job.bounds = parse_bounds(c, cfg, "");
  for (double w : job.band_widths)
    if (!(w > 0.0)) c.error("band_widths", "widths must be > 0");
  if (job.sample_counts.empty()) c.error("sample_counts", "needs at least one count");
  for (double n : job.sample_counts)
    if (!(n >= 1.0) || n != std::floor(n)) c.error("sample_counts", "counts must be positive integers");
  for (double n : job.sample_counts)
    if (static_cast<double>(job.band_n) > n && n == *std::max_element(job.sample_counts.begin(), job.sample_counts.end()))
      c.error("band_n_points", "must not exceed the largest sample count (the reference)");
  c.finish("stability");
  job.config = cfg;
  job.config["head"] = job.head;
  job.config["k"] = job.k;
  job.config["seed"] = job.seed;
  job.config["band_n_points"] = job.band_n;
  job.config["band_widths"] = job.band_widths;
  job.config["sample_counts"] = job.sample_counts;
  job.config["bounds"] = bounds_json(job.bounds);
  return job;
}

struct StabilityOutcome {
  std::vector<StabilityRow> band;
  std::vector<StabilityRow> count;
};

/// The reference is a volumetric sample at the largest count with its own seed.
inline SamplingSpec stability_reference(const StabilityJob& job) {
  const double n = *std::max_element(job.sample_counts.begin(), job.sample_counts.end());
  return SamplingSpec::volume(static_cast<std::size_t>(n), job.seed + 1000, job.bounds);
}

inline StabilityOutcome run_stability(const Model& m, const StabilityJob& job) {
  const FieldFn field = model_field(m, job.head);
  const SamplingSpec ref = stability_reference(job);
  std::vector<SweepPoint> band, count;
  std::uint64_t s = job.seed;
  for (double w : job.band_widths) band.push_back({detail::num(w), SamplingSpec::band(w, job.band_n, s++, job.bounds)});
  band.push_back({"volume", SamplingSpec::volume(job.band_n, s++, job.bounds)});
  for (double n : job.sample_counts)
    count.push_back({detail::num(n), SamplingSpec::volume(static_cast<std::size_t>(n), s++, job.bounds)});
  StabilityOutcome out;
  out.band = stability_sweep(m, band, ref, job.k, field);
  out.count = stability_sweep(m, count, ref, job.k, field);
  return out;
}

inline StabilityOutcome cmd_stability(const StabilityJob& job) {
  const Model m = load_checkpoint(job.checkpoint);
  m.head(job.head);
  ensure_dir(job.out);
  auto out = run_stability(m, job);
  std::ostringstream a, b;
  a.precision(17);
  b.precision(17);
  write_stability_csv(a, out.band);
  write_stability_csv(b, out.count);
  write_text(job.out / "stability_band.csv", a.str());
  write_text(job.out / "stability_count.csv", b.str());
  write_manifest(job.out, "stability", job.config, {"stability_band.csv", "stability_count.csv"});
  return out;
}

// ---------------------------------------------------------------------------
// edit

struct EditJob {
  json config;
  std::string checkpoint;
  fs::path out;
  std::size_t head = 0;
  std::string type;  // mode-combo | external-field | head-blend
  ModeCoefficients coefficients;
  Shape shape = Sphere{};
  std::vector<DeformationField> deform;
  std::size_t blend_a = 0, blend_b = 1;
  double t = 0.5;
  std::string blend_method = "weights";
  SamplingSpec sampling = SamplingSpec::volume(20000, 0);
  std::optional<double> ridge;
  int mesh_resolution = 128;
  std::size_t metric_samples = kDefaultMetricSamples;
  std::string label;
};

inline EditJob parse_edit(const json& cfg) {
  Checker c;
  EditJob job;
  c.known_keys(cfg, "", {"command", "checkpoint", "output", "head", "recipe", "sampling", "ridge",
                         "mesh_resolution", "metric_samples"});
  job.checkpoint = c.text(cfg, "checkpoint", "", "", true);
  job.out = resolve_output(c.text(cfg, "output", "", "", true));
  job.head = parse_head(c, cfg);
  job.sampling = parse_sampling(c, cfg, "sampling", "", job.sampling);
  if (cfg.contains("ridge") && !cfg["ridge"].is_null()) {
    job.ridge = c.real(cfg, "ridge", "", 0.0);
    if (*job.ridge < 0.0) c.error("ridge", "must be >= 0");
  }
  job.mesh_resolution = static_cast<int>(c.integer(cfg, "mesh_resolution", "", 128, 2));
  job.metric_samples = static_cast<std::size_t>(c.integer(cfg, "metric_samples", "", kDefaultMetricSamples, 1));
  const json* r = c.section(cfg, "recipe", "");
  if (!r) {
    if (!cfg.contains("recipe")) c.error("recipe", "required");
  } else {
    job.type = c.text(*r, "type", "recipe", "", true);
    if (job.type == "mode-combo") {
      c.known_keys(*r, "recipe", {"type", "coefficients", "label"});
      if (!r->contains("coefficients") || !(*r)["coefficients"].is_array())
        c.error("recipe.coefficients", "required list of [k, alpha] pairs");
      else
        for (const auto& kv : (*r)["coefficients"]) {
          if (!kv.is_array() || kv.size() != 2 || !kv[0].is_number_integer() || !kv[1].is_number() ||
              kv[0].get<std::int64_t>() < 0)
            c.error("recipe.coefficients", "entries must be [k >= 0, alpha]");
          else
            job.coefficients.emplace_back(kv[0].get<Eigen::Index>(), kv[1].get<double>());
        }
    } else if (job.type == "external-field") {
      c.known_keys(*r, "recipe", {"type", "shape", "deform", "label"});
      const std::string shape = c.text(*r, "shape", "recipe", "", true);
      if (!shape.empty()) job.shape = c.parse("recipe.shape", [&] { return parse_shape(shape); });
      for (const auto& d : c.strings(*r, "deform", "recipe"))
        job.deform.push_back(c.parse("recipe.deform", [&] { return parse_deformation(d); }));
    } else if (job.type == "head-blend") {
      c.known_keys(*r, "recipe", {"type", "a", "b", "t", "method", "label"});
      job.blend_a = static_cast<std::size_t>(c.integer(*r, "a", "recipe", 0, 0, true));
      job.blend_b = static_cast<std::size_t>(c.integer(*r, "b", "recipe", 1, 0, true));
      job.t = c.real(*r, "t", "recipe", 0.5, false, true);
      job.blend_method = c.text(*r, "method", "recipe", "weights");
      if (job.blend_method != "weights" && job.blend_method != "solve")
        c.error("recipe.method", "expected weights or solve");
    } else if (!job.type.empty()) {
      c.error("recipe.type", "expected mode-combo, external-field or head-blend");
    }
    job.label = c.text(*r, "label", "recipe", job.type);
  }
  c.finish("edit");
  job.config = cfg;
  job.config["sampling"] = sampling_json(job.sampling);
  job.config["head"] = job.head;
  job.config["mesh_resolution"] = job.mesh_resolution;
  job.config["metric_samples"] = job.metric_samples;
  return job;
}

struct EditReport {
  std::string recipe;
  std::size_t head = 0;  // head holding the result in the edited model
  double eta = 1.0;
  double cd = 0.0, hd = 0.0;
  double ridge = 0.0;
  std::size_t n_points = 0;
};

struct EditRun {
  Model edited;
  EditReport report;
  FieldFn target;
  std::optional<EditSolution> solution;
  std::optional<GramSpectrum> spectrum;
};

/// Performs the recipe on a loaded model; no files touched.
inline EditRun run_edit(const Model& m, const EditJob& job) {
  EditRun run;
  run.report.recipe = job.label;
  run.report.head = job.head;
  const auto model = std::make_shared<const Model>(m);
  if (job.type == "head-blend") {
    m.head(job.blend_a);
    m.head(job.blend_b);
    const FieldFn fa = model_field(model, job.blend_a), fb = model_field(model, job.blend_b);
    const double t = job.t;
    run.target = [fa, fb, t](const Points& x) { return Vec((1.0 - t) * fa(x) + t * fb(x)); };
    if (job.blend_method == "weights") {
      run.edited = blend_heads(m, job.blend_a, job.blend_b, t);
      run.report.head = run.edited.n_heads() - 1;
    } else {
      const Points pts = sample(job.sampling, model_field(model, job.blend_a));
      auto out = interpolate_by_solve(m, job.blend_a, job.blend_b, t, pts, job.ridge.value_or(0.0));
      run.edited = std::move(out.edited);
      run.report.head = job.blend_a;
      run.report.eta = out.solution.eta;
      run.report.ridge = out.solution.ridge;
      run.report.n_points = job.sampling.n_points;
      run.solution = std::move(out.solution);
    }
  } else {
    m.head(job.head);
    const Points pts = spectrum_points(m, job.head, job.sampling);
    run.report.n_points = job.sampling.n_points;
    EditOutcome out;
    if (job.type == "mode-combo") {
      const auto h = build_feature_matrix(m, pts);
      run.spectrum = spectrum_of(h);
      out = in_span_edit(m, job.head, *run.spectrum, job.coefficients, pts);
      run.target = perturbed_field(model, job.head, mode_combination(*run.spectrum, job.coefficients));
    } else {
      run.target = deformed_field(job.shape, job.deform);
      out = external_edit(m, job.head, run.target, pts, job.ridge);
      run.spectrum = spectrum_of(build_feature_matrix(m, pts));
    }
    run.edited = std::move(out.edited);
    run.report.eta = out.solution.eta;
    run.report.ridge = out.solution.ridge;
    run.solution = std::move(out.solution);
  }
  return run;
}

inline EditRun cmd_edit(const EditJob& job) {
  const Model m = load_checkpoint(job.checkpoint);
  ensure_dir(job.out);
  guard_input(job.checkpoint, job.out / "edited.ckpt");
  EditRun run = run_edit(m, job);
  const Box bounds = job.sampling.bounds;
  const Mesh edited = marching_cubes(model_field(run.edited, run.report.head), bounds, job.mesh_resolution);
  const Mesh target = marching_cubes(run.target, bounds, job.mesh_resolution);
  const auto metrics = mesh_metrics(edited, target, job.metric_samples, job.sampling.seed);
  run.report.cd = metrics.cd;
  run.report.hd = metrics.hd;
  save_model(run.edited, (job.out / "edited.ckpt").string());
  export_mesh(edited, (job.out / "edited.obj").string());
  export_mesh(target, (job.out / "target.obj").string());
  std::vector<std::string> files{"edited.ckpt", "edited.obj", "target.obj", "metrics.csv"};
  std::ostringstream os;
  os << "recipe,head,eta,cd,hd,ridge,n_points\n"
     << run.report.recipe << ',' << run.report.head << ',' << fmt(run.report.eta) << ',' << fmt(run.report.cd) << ','
     << fmt(run.report.hd) << ',' << fmt(run.report.ridge) << ',' << run.report.n_points << '\n';
  write_text(job.out / "metrics.csv", os.str());
  if (run.solution && run.spectrum) {
    std::ostringstream sol;
    write_solution_csv(sol, *run.spectrum, *run.solution);
    write_text(job.out / "solution.csv", sol.str());
    save_head_patch(Head{run.solution->delta_theta, 0.0, job.label}, (job.out / "solution.head").string());
    files.push_back("solution.csv");
    files.push_back("solution.head");
  }
  write_manifest(job.out, "edit", job.config, files);
  return run;
}

// ---------------------------------------------------------------------------
// compare

struct CompareJob {
  json config;
  fs::path out;
  BumpSuiteConfig suite;
  std::vector<Method> methods = all_methods();
  ComparisonOptions options;
  std::string checkpoint;  // optional cached suite model
};

inline CompareJob parse_compare(const json& cfg) {
  Checker c;
  CompareJob job;
  c.known_keys(cfg, "", {"command", "output", "seed", "suite", "methods", "gd_steps", "metric_samples",
                         "mesh_resolution", "checkpoint"});
  job.out = resolve_output(c.text(cfg, "output", "", "", true));
  job.checkpoint = c.text(cfg, "checkpoint", "", "");
  auto& s = job.suite;
  s.seed = static_cast<std::uint64_t>(c.integer(cfg, "seed", "", 0, 0));
  if (const json* j = c.section(cfg, "suite", "")) {
    c.known_keys(*j, "suite", {"hidden_dim", "depth", "omega0", "n_train", "epochs", "learning_rate", "radius",
                               "ear_eps", "grow_eps", "second_eps", "fractions", "n_volume", "n_band",
                               "band_width", "bounds"});
    s.hidden_dim = static_cast<std::size_t>(c.integer(*j, "hidden_dim", "suite", static_cast<std::int64_t>(s.hidden_dim), 1));
    s.depth = static_cast<std::size_t>(c.integer(*j, "depth", "suite", static_cast<std::int64_t>(s.depth), 1));
    s.omega0 = c.real(*j, "omega0", "suite", s.omega0, true);
    s.n_train = static_cast<std::size_t>(c.integer(*j, "n_train", "suite", static_cast<std::int64_t>(s.n_train), 1));
    s.epochs = c.integer(*j, "epochs", "suite", s.epochs, 0);
    s.learning_rate = c.real(*j, "learning_rate", "suite", s.learning_rate, true);
    s.radius = c.real(*j, "radius", "suite", s.radius, true);
    s.ear_eps = c.real(*j, "ear_eps", "suite", s.ear_eps);
    s.grow_eps = c.real(*j, "grow_eps", "suite", s.grow_eps);
    s.second_eps = c.real(*j, "second_eps", "suite", s.second_eps);
    s.fractions = c.reals(*j, "fractions", "suite", s.fractions);
    s.n_volume = static_cast<std::size_t>(c.integer(*j, "n_volume", "suite", static_cast<std::int64_t>(s.n_volume), 1));
    s.n_band = static_cast<std::size_t>(c.integer(*j, "n_band", "suite", static_cast<std::int64_t>(s.n_band), 1));
    s.band_width = c.real(*j, "band_width", "suite", s.band_width, true);
    s.bounds = parse_bounds(c, *j, "suite", s.bounds);
  }
  if (cfg.contains("methods")) {
    job.methods.clear();
    for (const auto& name : c.strings(cfg, "methods", ""))
      job.methods.push_back(c.parse("methods", [&] { return parse_method(name); }));
    if (job.methods.empty()) c.error("methods", "needs at least one method");
  }
  job.options.gd_steps = c.integer(cfg, "gd_steps", "", kDefaultGdSteps, 1);
  job.options.metric_samples = static_cast<std::size_t>(c.integer(cfg, "metric_samples", "", kDefaultMetricSamples, 1));
  job.options.mesh_resolution = static_cast<int>(c.integer(cfg, "mesh_resolution", "", 64, 2));
  s.mesh_resolution = job.options.mesh_resolution;
  job.options.bounds = s.bounds;
  c.finish("compare");
  job.config = cfg;
  json methods = json::array();
  for (auto m : job.methods) methods.push_back(to_string(m));
  job.config["methods"] = methods;
  job.config["gd_steps"] = job.options.gd_steps;
  job.config["metric_samples"] = job.options.metric_samples;
  job.config["mesh_resolution"] = job.options.mesh_resolution;
  job.config["seed"] = s.seed;
  job.config["suite"] = {{"hidden_dim", s.hidden_dim}, {"depth", s.depth}, {"omega0", s.omega0},
                         {"n_train", s.n_train}, {"epochs", s.epochs}, {"learning_rate", s.learning_rate},
                         {"radius", s.radius}, {"ear_eps", s.ear_eps}, {"grow_eps", s.grow_eps},
                         {"second_eps", s.second_eps}, {"fractions", s.fractions}, {"n_volume", s.n_volume},
                         {"n_band", s.n_band}, {"band_width", s.band_width}, {"bounds", bounds_json(s.bounds)}};
  return job;
}

struct CompareOutcome {
  std::vector<BaselineReport> rows;
  std::vector<BaselineReport> means;
};

inline CompareOutcome cmd_compare(const CompareJob& job, std::ostream* log = nullptr) {
  ensure_dir(job.out);
  std::shared_ptr<const Model> model;
  if (!job.checkpoint.empty() && fs::exists(job.checkpoint)) {
    model = std::make_shared<const Model>(load_model(job.checkpoint));
  } else {
    if (log) *log << "training suite model\n";
    model = std::make_shared<const Model>(train_bump_suite_model(job.suite));
    save_model(*model, (job.out / "suite.ckpt").string());
  }
  const auto tasks = bump_suite_tasks(job.suite, model);
  CompareOutcome out;
  out.rows = run_comparison(tasks, job.methods, job.options);
  out.means = average_by_method(out.rows);
  std::ostringstream a, b;
  write_comparison_csv(a, out.rows);
  write_comparison_csv(b, out.means);
  write_text(job.out / "comparison.csv", a.str());
  write_text(job.out / "comparison_mean.csv", b.str());
  std::vector<std::string> files{"comparison.csv", "comparison_mean.csv"};
  if (job.checkpoint.empty() || !fs::exists(job.checkpoint)) files.push_back("suite.ckpt");
  write_manifest(job.out, "compare", job.config, files);
  return out;
}

// ---------------------------------------------------------------------------
// export-mesh

struct ExportJob {
  std::string checkpoint;
  std::size_t head = 0;
  int resolution = 128;
  Box bounds{};
  std::string obj;   // output mesh path
  std::string grid;  // optional field grid path
};

inline Mesh cmd_export_mesh(const ExportJob& job) {
  const auto m = std::make_shared<const Model>(load_checkpoint(job.checkpoint));
  const FieldFn f = model_field(m, job.head);
  if (job.resolution < 2) throw ConfigError("resolution must be >= 2");
  Mesh mesh;
  if (!job.obj.empty()) {
    guard_input(job.checkpoint, resolve_output(job.obj));
    ensure_dir(resolve_output(job.obj).parent_path());
    mesh = marching_cubes(f, job.bounds, job.resolution);
    export_mesh(mesh, resolve_output(job.obj).string());
  }
  if (!job.grid.empty()) {
    guard_input(job.checkpoint, resolve_output(job.grid));
    ensure_dir(resolve_output(job.grid).parent_path());
    export_field_grid(f, job.bounds, job.resolution, resolve_output(job.grid).string());
  }
  return mesh;
}

}  // namespace genie::cli
