#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sfield/eval.hpp"
#include "sfield/field.hpp"
#include "sfield/occgrid.hpp"
#include "sfield/renderer.hpp"
#include "sfield/scene.hpp"
#include "sfield/trainer.hpp"

namespace fs = std::filesystem;
using namespace sfield;

namespace {

void cmd_gen_scene(const std::string& spec_path, const std::string& out_dir) {
  const SceneFile scene = load_scene_file(spec_path);
  const CameraRig rig = scene.make_rig();
  std::printf("rendering %d frames for %zu train + %zu test cameras...\n",
              scene.spec.frame_count, rig.train_cameras.size(), rig.test_cameras.size());
  const Dataset dataset = generate_scene(scene.spec, rig);
  write_dataset(dataset, out_dir);
  std::printf("dataset written to %s\n", out_dir.c_str());
}

void cmd_stream(const std::string& dataset_dir, const std::string& config_path,
                const std::string& out_dir, bool deterministic) {
  TrainConfig config = load_train_config(config_path);
  if (deterministic) config.deterministic = true;
  const Dataset dataset = load_dataset(dataset_dir);
  fs::create_directories(fs::path(out_dir) / "renders");

  std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot open metrics.csv under " + out_dir);
  metrics << kMetricsCsvHeader << "\n";
  metrics.flush();

  StreamSinks sinks;
  sinks.on_frame = [&](const FrameMetrics& m, const std::vector<RenderOutput>& renders) {
    metrics << format_metrics_row(m) << "\n";
    metrics.flush();
    for (size_t c = 0; c < renders.size(); ++c) {
      const Camera& cam = dataset.rig.test_cameras[c];
      char name[128];
      std::snprintf(name, sizeof name, "%s_%05d.png", cam.id.c_str(), m.frame);
      save_png_rgb8(renders[c].image, fs::path(out_dir) / "renders" / name);
      std::snprintf(name, sizeof name, "%s_%05d_depth.png", cam.id.c_str(), m.frame);
      save_depth_png(renders[c].depth, renders[c].image.width, renders[c].image.height,
                     cam.far_plane, fs::path(out_dir) / "renders" / name);
    }
    std::printf("frame %d: %.2f dB, train %.0f ms, render %.0f ms, %.1f samples/ray\n",
                m.frame, m.psnr_db, m.train_ms, m.render_ms, m.mean_samples_per_ray);
    std::fflush(stdout);
  };

  const StreamResult result = stream(dataset, config, sinks);
  save_checkpoint(result.state.params, fs::path(out_dir) / "checkpoint.bin");
  save_grid_debug(result.state.grid, fs::path(out_dir) / "grid.raw");
  std::printf("checkpoint + occupancy grid written to %s\n", out_dir.c_str());
}

void cmd_render(const std::string& checkpoint_path, const std::string& dataset_dir, int frame,
                const std::string& camera_id, const std::string& out_path, int samples) {
  const FieldParams params = load_checkpoint(checkpoint_path);
  const Dataset dataset = load_dataset(dataset_dir);
  if (frame < 0 || frame >= dataset.frame_count()) {
    throw std::runtime_error("frame " + std::to_string(frame) + " outside dataset (0.." +
                             std::to_string(dataset.frame_count() - 1) + ")");
  }
  const Camera* camera = dataset.rig.find(camera_id);
  if (!camera) throw std::runtime_error("no camera with id " + camera_id);

  FrameContext ctx;
  ctx.params = &params;
  ctx.rig = &dataset.rig;
  ctx.observation = &dataset.frame(frame);
  ctx.time = dataset.frame_count() > 1
                 ? static_cast<double>(frame) / (dataset.frame_count() - 1)
                 : 0.0;
  RenderConfig rc;
  rc.samples_per_ray = samples;
  rc.background = dataset.background;
  const RenderOutput out = render_image(ctx, nullptr, *camera, rc);

  fs::path path = out_path.empty()
                      ? fs::path(camera_id + "_" + std::to_string(frame) + ".png")
                      : fs::path(out_path);
  if (path.parent_path() != fs::path()) fs::create_directories(path.parent_path());
  save_png_rgb8(out.image, path);
  fs::path depth_path = path;
  depth_path.replace_extension(".depth.png");
  save_depth_png(out.depth, out.image.width, out.image.height, camera->far_plane, depth_path);
  std::printf("wrote %s and %s\n", path.c_str(), depth_path.c_str());
}

void cmd_eval_extrapolation(const std::string& dataset_dir, const std::string& config_path,
                            const std::string& out_dir) {
  const TrainConfig config = load_train_config(config_path);
  const Dataset dataset = load_dataset(dataset_dir);
  fs::create_directories(out_dir);
  const auto log = [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  const ExtrapolationResult result = extrapolation_eval(dataset, config, log);
  write_extrapolation_csv(result, fs::path(out_dir) / "extrapolation.csv");

  auto mean_extrap = [](const std::vector<ExtrapolationRow>& rows) {
    double s = 0.0;
    for (const auto& r : rows) s += r.extrap_psnr;
    return rows.empty() ? 0.0 : s / rows.size();
  };
  std::printf("mean extrapolation PSNR: projected-color %.2f dB, space-time %.2f dB\n",
              mean_extrap(result.projected_color), mean_extrap(result.space_time));
}

void cmd_ablate(const std::string& spec_path, const std::string& out_dir) {
  const AblationSpec spec = parse_ablation_spec(spec_path);
  Dataset dataset;
  if (!spec.dataset_dir.empty()) {
    dataset = load_dataset(spec.dataset_dir);
  } else {
    const SceneFile scene = load_scene_file(spec.scene_path);
    std::printf("generating dataset from %s...\n", spec.scene_path.c_str());
    dataset = generate_scene(scene.spec, scene.make_rig());
  }
  const auto log = [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  const auto rows = run_ablation(spec, dataset, out_dir, log);
  std::printf("%-22s %10s %12s %13s\n", "variant", "psnr_db", "train_ms", "render_ms");
  bool any_failed = false;
  for (const auto& r : rows) {
    if (r.ok) {
      std::printf("%-22s %10.2f %12.1f %13.1f\n", r.variant.c_str(), r.mean_psnr_db,
                  r.median_train_ms, r.median_render_ms);
    } else {
      std::printf("%-22s failed: %s\n", r.variant.c_str(), r.error.c_str());
      any_failed = true;
    }
  }
  if (any_failed) throw std::runtime_error("one or more ablation variants failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamed radiance-field training and evaluation"};
  app.require_subcommand(1);

  std::string scene_spec, gen_out;
  auto* gen = app.add_subcommand("gen-scene", "render an analytic scene into a dataset");
  gen->add_option("spec", scene_spec, "scene description file")->required();
  gen->add_option("out-dir", gen_out, "output dataset directory")->required();

  std::string stream_dataset, stream_config, stream_out;
  bool stream_deterministic = false;
  auto* st = app.add_subcommand("stream", "train frame-by-frame and emit metrics");
  st->add_option("dataset", stream_dataset, "dataset directory")->required();
  st->add_option("--config", stream_config, "training config file")->required();
  st->add_option("--out", stream_out, "output directory")->required();
  st->add_flag("--deterministic", stream_deterministic,
               "fixed seeds and zeroed timing columns");

  std::string render_ckpt, render_dataset, render_camera, render_out;
  int render_frame = 0, render_samples = 128;
  auto* rd = app.add_subcommand("render", "render one view from a checkpoint");
  rd->add_option("checkpoint", render_ckpt, "checkpoint file")->required();
  rd->add_option("dataset", render_dataset, "dataset directory (rig + conditioning images)")
      ->required();
  rd->add_option("--frame", render_frame, "frame index")->required();
  rd->add_option("--camera", render_camera, "camera id")->required();
  rd->add_option("--out", render_out, "output image path");
  rd->add_option("--samples", render_samples, "samples per ray");

  std::string ee_dataset, ee_config, ee_out = ".";
  auto* ee = app.add_subcommand("eval-extrapolation",
                                "render each frame before training on it");
  ee->add_option("dataset", ee_dataset, "dataset directory")->required();
  ee->add_option("--config", ee_config, "training config file")->required();
  ee->add_option("--out", ee_out, "output directory");

  std::string ab_spec, ab_out = "ablation";
  auto* ab = app.add_subcommand("ablate", "run component-knockout comparisons");
  ab->add_option("spec", ab_spec, "ablation spec file")->required();
  ab->add_option("--out", ab_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cmd_gen_scene(scene_spec, gen_out);
    } else if (st->parsed()) {
      cmd_stream(stream_dataset, stream_config, stream_out, stream_deterministic);
    } else if (rd->parsed()) {
      cmd_render(render_ckpt, render_dataset, render_frame, render_camera, render_out,
                 render_samples);
    } else if (ee->parsed()) {
      cmd_eval_extrapolation(ee_dataset, ee_config, ee_out);
    } else if (ab->parsed()) {
      cmd_ablate(ab_spec, ab_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
