#include "genie/experiments.hpp"
#include "genie/service.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <iostream>

using namespace genie;
namespace gc = genie::cli;

namespace {

gc::json config_from(const std::string& path, const std::vector<std::string>& overrides, const std::string& output,
                     const std::string& checkpoint) {
  gc::json cfg = path.empty() ? gc::json::object() : gc::load_config(path);
  for (const auto& o : overrides) gc::apply_override(cfg, o);
  if (!output.empty()) cfg["output"] = output;
  if (!checkpoint.empty()) cfg["checkpoint"] = checkpoint;
  return cfg;
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gram eigenmode editing for sinusoidal SDF networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gc::kVersion);

  std::string config, output, checkpoint;
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("config", config, "JSON config or manifest")->check(CLI::ExistingFile);
    sub->add_option("-o,--output", output, "output directory (relative to $GENIE_OUTPUT_ROOT)");
    sub->add_option("--set", overrides, "override a config key: a.b=value");
    if (needs_checkpoint) sub->add_option("-c,--checkpoint", checkpoint, "input checkpoint");
  };

  auto* train = app.add_subcommand("train", "train a single- or multi-head model");
  common(train, false);
  std::string profile;
  train->add_option("--profile", profile, "desk or paper");

  auto* gram = app.add_subcommand("gram", "Gram spectrum, mode head patches and mode meshes");
  common(gram, true);
  auto* stability = app.add_subcommand("stability", "eigenspace stability under band width and sample count");
  common(stability, true);
  auto* edit = app.add_subcommand("edit", "one-shot edit from a recipe");
  common(edit, true);
  auto* compare = app.add_subcommand("compare", "GENIE against the gradient-descent baselines");
  common(compare, false);

  auto* serve = app.add_subcommand("serve", "HTTP editing service");
  std::string host = "127.0.0.1", cors = "*";
  int port = 8080, cap = 128;
  std::size_t spectrum_n = 20000;
  std::uint64_t spectrum_seed = 0;
  serve->add_option("-c,--checkpoint", checkpoint, "checkpoint to serve")->required();
  serve->add_option("--host", host);
  serve->add_option("-p,--port", port);
  serve->add_option("--resolution-cap", cap);
  serve->add_option("--spectrum-points", spectrum_n);
  serve->add_option("--spectrum-seed", spectrum_seed);
  serve->add_option("--cors-origin", cors);

  auto* exp = app.add_subcommand("export-mesh", "extract a head's zero level set");
  gc::ExportJob ej;
  double lo = -1.0, hi = 1.0;
  exp->add_option("-c,--checkpoint", ej.checkpoint)->required();
  exp->add_option("--head", ej.head);
  exp->add_option("-r,--resolution", ej.resolution);
  exp->add_option("-o,--output", ej.obj, "OBJ path");
  exp->add_option("--grid", ej.grid, "field grid path");
  exp->add_option("--lo", lo);
  exp->add_option("--hi", hi);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = config_from(config, overrides, output, "");
      if (!profile.empty()) cfg["profile"] = profile;
      const auto job = gc::parse_train(cfg);
      const auto out = gc::cmd_train(job, &std::cerr);
      std::cout << out.checkpoint.string() << "\n";
    } else if (*gram) {
      const auto job = gc::parse_gram(config_from(config, overrides, output, checkpoint));
      const auto out = gc::cmd_gram(job);
      std::cout << "rank " << out.spectrum.rank() << " of " << out.spectrum.dim() << "\n";
    } else if (*stability) {
      const auto out = gc::cmd_stability(gc::parse_stability(config_from(config, overrides, output, checkpoint)));
      for (const auto& r : out.band) std::cout << "band " << r.param << " " << r.similarity << "\n";
      for (const auto& r : out.count) std::cout << "count " << r.param << " " << r.similarity << "\n";
    } else if (*edit) {
      const auto out = gc::cmd_edit(gc::parse_edit(config_from(config, overrides, output, checkpoint)));
      std::cout << "eta " << out.report.eta << " cd " << out.report.cd << " hd " << out.report.hd << "\n";
    } else if (*compare) {
      const auto out = gc::cmd_compare(gc::parse_compare(config_from(config, overrides, output, "")), &std::cerr);
      write_comparison_csv(std::cout, out.means);
    } else if (*serve) {
      ServiceOptions opt;
      opt.spectrum_points = spectrum_n;
      opt.spectrum_seed = spectrum_seed;
      opt.resolution_cap = cap;
      opt.cors_origin = cors;
      opt.checkpoint_path = checkpoint;
      opt.export_root = gc::output_root();
      Service svc(gc::load_checkpoint(checkpoint), opt);
      const int bound = svc.bind(host, port);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << checkpoint << " on http://" << host << ":" << bound << "\n";
      svc.serve();
      g_service = nullptr;
    } else if (*exp) {
      ej.bounds = Box{Vec3::Constant(lo), Vec3::Constant(hi)};
      if (ej.obj.empty() && ej.grid.empty()) throw ConfigError("export-mesh needs --output and/or --grid");
      const Mesh m = gc::cmd_export_mesh(ej);
      if (!ej.obj.empty()) std::cout << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
