#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "glimix/io.hpp"
#include "glimix/metrics.hpp"
#include "glimix/model.hpp"
#include "glimix/scene_gen.hpp"
#include "glimix/trainer.hpp"

namespace fs = std::filesystem;
using namespace glimix;

namespace {

std::string default_out(const std::string& fallback) {
  const char* env = std::getenv("GLIMIX_OUT_DIR");
  return env && *env ? std::string(env) : fallback;
}

bool parse_range(const std::string& text, int& lo, int& hi) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return false;
  try {
    lo = std::stoi(text.substr(0, dots));
    hi = std::stoi(text.substr(dots + 2));
  } catch (...) {
    return false;
  }
  return true;
}

PointCloud load_scene_arg(const std::string& scene) {
  const fs::path p(scene);
  if (fs::is_directory(p)) return load_points_csv((p / "points.csv").string());
  return load_points_csv(scene);
}

int cmd_gen_data(const std::string& out, int n_scenes, std::uint64_t seed,
                 const std::string& objects, double floor_side, double density,
                 double separation, double touch_fraction) {
  SceneGenConfig cfg;
  cfg.floor_side = floor_side;
  cfg.points_per_unit_area = density;
  cfg.min_separation = separation;
  cfg.touch_fraction = touch_fraction;
  if (!parse_range(objects, cfg.object_count_min, cfg.object_count_max) ||
      cfg.object_count_min < 1 || cfg.object_count_max < cfg.object_count_min) {
    std::cerr << "error: invalid --objects range '" << objects
              << "' (want MIN..MAX with 1 <= MIN <= MAX)\n";
    return 2;
  }
  cfg.validate();
  std::vector<SceneSample> samples;
  samples.reserve(n_scenes);
  for (int i = 0; i < n_scenes; ++i)
    samples.push_back(generate_scene(cfg, mix_seed(seed, i)));
  save_dataset(samples, out);
  std::cout << "wrote " << samples.size() << " scenes to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& config_path,
              const std::string& out, int steps, std::uint64_t seed,
              bool ablate, const std::string& resume) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::cerr << "error: cannot read config " << config_path << "\n";
      return 1;
    }
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    cfg = train_config_override(cfg, text);
  }
  if (steps > 0) cfg.steps = steps;
  cfg.seed = seed;
  if (ablate) cfg.model.presence_gnn = false;

  std::vector<SceneSample> dataset = load_dataset(data);
  if (dataset.empty()) {
    std::cerr << "error: no scenes found in " << data << "\n";
    return 1;
  }

  std::unique_ptr<Model> model;
  int start_step = 0;
  if (!resume.empty()) {
    Checkpoint ckpt = read_checkpoint(resume);
    ckpt.config.steps = cfg.steps;  // allow extending the run
    cfg = ckpt.config;
    if (ablate) cfg.model.presence_gnn = false;
    if (steps > 0) cfg.steps = steps;
    model = model_from_checkpoint(ckpt);
    start_step = ckpt.step;
  } else {
    model = std::make_unique<Model>(cfg.model, cfg.seed);
  }

  TrainResult result = train(*model, dataset, cfg, out, start_step);
  std::cout << "trained to step " << result.last_step << "; checkpoint "
            << result.last_checkpoint << "; log " << result.log_path << "\n";
  return 0;
}

int cmd_segment(const std::string& ckpt_path, const std::string& scene,
                const std::string& out, std::uint64_t seed) {
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  PointCloud cloud = load_scene_arg(scene);
  InferResult result = model->infer(cloud, seed);

  fs::create_directories(fs::path(out).parent_path().empty()
                             ? "."
                             : fs::path(out).parent_path().string());
  write_points_csv(out + ".csv", cloud.positions, result.labels);
  write_ply(out + ".ply", cloud.positions, result.labels);
  std::cout << "segmented " << cloud.size() << " points into "
            << 1 + *std::max_element(result.labels.begin(), result.labels.end())
            << " segments; wrote " << out << ".csv and " << out << ".ply\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data,
             const std::string& out) {
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  std::vector<SceneSample> dataset = load_dataset(data);
  if (dataset.empty()) {
    std::cerr << "error: no scenes found in " << data << "\n";
    return 1;
  }
  EvalReport report = evaluate_dataset(dataset, *model);
  write_report(report, out);
  write_svg_curve((fs::path(out) / "curve_ari.svg").string(),
                  report.sorted_ari, "ARI, ascending");
  write_svg_curve((fs::path(out) / "curve_sc.svg").string(), report.sorted_sc,
                  "SC, ascending");
  write_svg_curve((fs::path(out) / "curve_msc.svg").string(),
                  report.sorted_msc, "mSC, ascending");
  std::printf("evaluated %d scenes: ARI %.3f  SC %.3f  mSC %.3f  CDF %.5f  CDB %.5f\n",
              report.evaluated, report.mean_ari, report.mean_sc,
              report.mean_msc, report.mean_cd_forward, report.mean_cd_backward);
  return 0;
}

int cmd_pgf_demo(const std::string& ckpt_path, const std::string& scene,
                 const std::string& out, std::uint64_t seed) {
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  PointCloud cloud = load_scene_arg(scene);
  const int n = cloud.size();

  fs::create_directories(out);
  const double ratios[] = {1.5, 1.25, 1.0, 0.75, 0.5};
  for (double ratio : ratios) {
    const int m = std::max(1, static_cast<int>(std::ceil(ratio * n)));
    MatX3 recon = model->reconstruct_scene(cloud, m, seed);
    char name[64];
    std::snprintf(name, sizeof(name), "recon_%.2fN", ratio);
    const std::string base = (fs::path(out) / name).string();
    std::vector<int> labels(m, 0);
    write_points_csv(base + ".csv", recon, labels);
    write_ply(base + ".ply", recon, labels);
    std::cout << name << ": " << m << " points\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised 3D point-cloud object segmentation by generative "
               "spatial mixtures"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out = default_out("dataset");
  int n_scenes = 10;
  std::uint64_t gen_seed = 1;
  std::string objects = "2..5";
  double floor_side = 4.0, density = 75.0, separation = 0.0, touch = 0.25;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--n-scenes", n_scenes, "number of scenes");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--objects", objects, "object count range MIN..MAX");
  gen->add_option("--floor-side", floor_side, "floor side length");
  gen->add_option("--density", density, "points per unit area");
  gen->add_option("--separation", separation, "min bounding-circle gap");
  gen->add_option("--touch-fraction", touch,
                  "fraction of multi-object scenes with near-zero separation");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_config, tr_out = default_out("run"), tr_resume;
  int tr_steps = 0;
  std::uint64_t tr_seed = 1;
  bool ablate = false;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--config", tr_config, "JSON config overriding defaults");
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--steps", tr_steps, "training steps");
  tr->add_option("--seed", tr_seed, "seed");
  tr->add_flag("--ablate-presence-gnn", ablate,
               "presence logits directly from glimpse features");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // segment
  auto* seg = app.add_subcommand("segment", "segment one scene");
  std::string seg_ckpt, seg_scene, seg_out = default_out("segmented");
  std::uint64_t seg_seed = 0;
  seg->add_option("--ckpt", seg_ckpt, "checkpoint file")->required();
  seg->add_option("--scene", seg_scene, "points.csv or scene directory")
      ->required();
  seg->add_option("--out", seg_out, "output basename (.csv/.ply added)");
  seg->add_option("--seed", seg_seed, "seed");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset");
  std::string ev_ckpt, ev_data, ev_out = default_out("eval");
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "report directory");

  // pgf-demo
  auto* demo = app.add_subcommand(
      "pgf-demo", "reconstruct a cloud at multiple point counts");
  std::string demo_ckpt, demo_scene, demo_out = default_out("pgf_demo");
  std::uint64_t demo_seed = 0;
  demo->add_option("--ckpt", demo_ckpt, "checkpoint file")->required();
  demo->add_option("--scene", demo_scene, "points.csv or scene directory")
      ->required();
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--seed", demo_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, n_scenes, gen_seed, objects, floor_side,
                          density, separation, touch);
    if (tr->parsed())
      return cmd_train(tr_data, tr_config, tr_out, tr_steps, tr_seed, ablate,
                       tr_resume);
    if (seg->parsed()) return cmd_segment(seg_ckpt, seg_scene, seg_out, seg_seed);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
    if (demo->parsed())
      return cmd_pgf_demo(demo_ckpt, demo_scene, demo_out, demo_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
