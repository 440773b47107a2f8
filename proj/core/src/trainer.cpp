#include "sfield/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "sfield/eval.hpp"
#include "sfield/kvfile.hpp"
#include "sfield/parallel.hpp"

namespace sfield {

void TrainConfig::validate() const {
  if (iters_per_frame < 0) throw std::invalid_argument("iters_per_frame must be >= 0");
  if (warmup_iters < iters_per_frame) {
    throw std::invalid_argument("warmup_iters must be >= iters_per_frame");
  }
  if (rays_per_iter < 1) throw std::invalid_argument("rays_per_iter must be >= 1");
  if (lr_hash <= 0.0 || lr_mlp <= 0.0) throw std::invalid_argument("learning rates must be > 0");
  if (depth_loss_weight < 0.0) throw std::invalid_argument("depth_loss_weight must be >= 0");
  if (grid_resolution < 1) throw std::invalid_argument("grid_resolution must be >= 1");
  if (kernel_stddev <= 0.0) throw std::invalid_argument("kernel_stddev must be > 0");
  if (render_samples_per_ray < 1) {
    throw std::invalid_argument("render_samples_per_ray must be >= 1");
  }
  if (train_batch_rays < 9) throw std::invalid_argument("train_batch_rays must be >= 9");
  if (rebuild_points_per_voxel < 1) {
    throw std::invalid_argument("rebuild_points_per_voxel must be >= 1");
  }
  if (global_update_points < 1) throw std::invalid_argument("global_update_points must be >= 1");
  sampler.validate();
  field.validate();
}

namespace {

Conditioning parse_variant(const std::string& s) {
  if (s == "projected-color") return Conditioning::kProjectedColor;
  if (s == "space-time") return Conditioning::kTime;
  if (s == "unconditioned") return Conditioning::kNone;
  throw std::invalid_argument("unknown variant: " + s);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  const KvFile kv = KvFile::parse_text(text);
  static const std::vector<std::string> known = {
      "warmup_iters", "iters_per_frame", "rays_per_iter", "lr_hash", "lr_mlp",
      "depth_loss_weight", "seed", "deterministic", "variant", "transition", "rejection",
      "global_update", "grid_resolution", "kernel_stddev", "samples_per_ray",
      "rescue_interval", "sigma_min_start", "sigma_min_floor", "ramp_frames", "update_mode",
      "levels", "table_size", "features", "base_resolution", "per_level_scale",
      "hidden_width", "hidden_depth", "dir_octaves", "time_octaves",
      "render_samples_per_ray", "train_batch_rays", "rebuild_points_per_voxel",
      "global_update_points"};
  for (const auto& entry : kv.entries) {
    if (std::find(known.begin(), known.end(), entry.key) == known.end()) {
      throw std::invalid_argument("unknown config key: " + entry.key);
    }
  }
  TrainConfig c;
  if (kv.has("warmup_iters")) c.warmup_iters = kv.get_int("warmup_iters");
  if (kv.has("iters_per_frame")) c.iters_per_frame = kv.get_int("iters_per_frame");
  if (kv.has("rays_per_iter")) c.rays_per_iter = kv.get_int("rays_per_iter");
  if (kv.has("lr_hash")) c.lr_hash = kv.get_double("lr_hash");
  if (kv.has("lr_mlp")) c.lr_mlp = kv.get_double("lr_mlp");
  if (kv.has("depth_loss_weight")) c.depth_loss_weight = kv.get_double("depth_loss_weight");
  if (kv.has("seed")) c.seed = static_cast<uint64_t>(kv.get_int("seed"));
  if (kv.has("deterministic")) c.deterministic = kv.get_bool("deterministic", false);
  if (kv.has("variant")) c.field.conditioning = parse_variant(kv.get_string("variant"));
  if (kv.has("transition")) c.transition_enabled = kv.get_bool("transition", true);
  if (kv.has("rejection")) c.rejection_enabled = kv.get_bool("rejection", true);
  if (kv.has("global_update")) c.global_update = kv.get_bool("global_update", false);
  if (kv.has("grid_resolution")) c.grid_resolution = kv.get_int("grid_resolution");
  if (kv.has("kernel_stddev")) c.kernel_stddev = kv.get_double("kernel_stddev");
  if (kv.has("samples_per_ray")) c.sampler.samples_per_ray = kv.get_int("samples_per_ray");
  if (kv.has("rescue_interval")) c.sampler.rescue_interval = kv.get_int("rescue_interval");
  if (kv.has("sigma_min_start")) c.sampler.sigma_min_start = kv.get_double("sigma_min_start");
  if (kv.has("sigma_min_floor")) c.sampler.sigma_min_floor = kv.get_double("sigma_min_floor");
  if (kv.has("ramp_frames")) c.sampler.ramp_frames = kv.get_int("ramp_frames");
  if (kv.has("update_mode")) {
    const std::string m = kv.get_string("update_mode");
    if (m == "monotone-max") {
      c.sampler.update_mode = UpdateMode::kMonotoneMax;
    } else if (m == "literal") {
      c.sampler.update_mode = UpdateMode::kLiteral;
    } else {
      throw std::invalid_argument("unknown update_mode: " + m);
    }
  }
  if (kv.has("levels")) c.field.levels = kv.get_int("levels");
  if (kv.has("table_size")) c.field.table_size = kv.get_int("table_size");
  if (kv.has("features")) c.field.features = kv.get_int("features");
  if (kv.has("base_resolution")) c.field.base_resolution = kv.get_int("base_resolution");
  if (kv.has("per_level_scale")) c.field.per_level_scale = kv.get_double("per_level_scale");
  if (kv.has("hidden_width")) c.field.hidden_width = kv.get_int("hidden_width");
  if (kv.has("hidden_depth")) c.field.hidden_depth = kv.get_int("hidden_depth");
  if (kv.has("dir_octaves")) c.field.dir_octaves = kv.get_int("dir_octaves");
  if (kv.has("time_octaves")) c.field.time_octaves = kv.get_int("time_octaves");
  if (kv.has("render_samples_per_ray")) {
    c.render_samples_per_ray = kv.get_int("render_samples_per_ray");
  }
  if (kv.has("train_batch_rays")) c.train_batch_rays = kv.get_int("train_batch_rays");
  if (kv.has("rebuild_points_per_voxel")) {
    c.rebuild_points_per_voxel = kv.get_int("rebuild_points_per_voxel");
  }
  if (kv.has("global_update_points")) c.global_update_points = kv.get_int("global_update_points");
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

double rgb_loss(const Eigen::Matrix3Xd& predicted, const Eigen::Matrix3Xd& target,
                Eigen::Matrix3Xd* d_predicted) {
  if (predicted.cols() != target.cols()) throw std::invalid_argument("rgb_loss: shape mismatch");
  const double n = static_cast<double>(predicted.cols());
  if (predicted.cols() == 0) return 0.0;
  const Eigen::Matrix3Xd diff = predicted - target;
  if (d_predicted) *d_predicted = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

double depth_smoothness_loss(const Eigen::ArrayXd& depths, const Eigen::Matrix3Xd& colors,
                             double d_far, Eigen::ArrayXd* d_depths) {
  const Eigen::Index n = depths.size();
  if (colors.cols() != n || n == 0) {
    throw std::invalid_argument("depth_smoothness_loss: shape mismatch");
  }
  if ((depths <= 0.0).any()) {
    throw std::invalid_argument("depth_smoothness_loss: nonpositive depth");
  }
  const Eigen::ArrayXd u = d_far / depths;
  const double u_mean = u.mean();
  const double u_var = (u - u_mean).square().mean();
  const double u_std = std::sqrt(std::max(u_var, 0.0));

  const Eigen::ArrayXXd c = colors.array();
  const double c_mean = c.mean();
  const double c_var = (c - c_mean).square().mean();
  const double c_std = std::sqrt(std::max(c_var, 0.0));
  const double denom = std::max(c_std, 1e-4);

  if (d_depths) {
    d_depths->setZero(n);
    if (u_std > 0.0) {
      // dL/du_i = (u_i - mean)/(n * std * denom); du_i/dd_i = -d_far/d_i^2.
      *d_depths = (u - u_mean) / (static_cast<double>(n) * u_std * denom) *
                  (-d_far / depths.square());
    }
  }
  return u_std / denom;
}

bool adam_step(FieldParams& params, const FieldGradients& grads, AdamState& state,
               double lr_hash, double lr_mlp) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  auto g_blocks = const_cast<FieldTensors&>(grads.tensors).blocks();
  for (const auto& b : g_blocks) {
    for (size_t i = 0; i < b.size; ++i) {
      if (!std::isfinite(b.data[i])) return false;
    }
  }
  auto p_blocks = params.tensors.blocks();
  auto m_blocks = state.m.blocks();
  auto v_blocks = state.v.blocks();
  const long long t = ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (size_t k = 0; k < p_blocks.size(); ++k) {
    const double lr = p_blocks[k].is_hash ? lr_hash : lr_mlp;
    double* p = p_blocks[k].data;
    const double* g = g_blocks[k].data;
    double* m = m_blocks[k].data;
    double* v = v_blocks[k].data;
    for (size_t i = 0; i < p_blocks[k].size; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }
  return true;
}

namespace {

struct IterationOutcome {
  double loss = 0.0;
  long long kept_samples = 0;
};

// One optimization step against one frame's observation. When grid is null
// every sample along every ray is kept (dense phase / disabled rejection).
IterationOutcome train_iteration(FrameState& state, const FrameObservation& obs,
                                 const TrainConfig& config, const OccupancyGrid* grid,
                                 double sigma_min, long long iter_index) {
  const CameraRig& rig = state.rig;
  const int cam_count = static_cast<int>(rig.train_cameras.size());
  if (cam_count == 0) throw std::invalid_argument("train_iteration: no train cameras");
  const bool patches = config.depth_loss_weight > 0.0;

  const Rng iter_root = Rng(config.seed).fork(0x17E2A110ull).fork(static_cast<uint64_t>(iter_index));
  Rng draw_rng = iter_root.fork(0);
  const Rng sample_root = iter_root.fork(1);

  // 1. Draw rays (and ground-truth colors); patches stay contiguous in 9s.
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
  std::vector<double> fars;
  int patch_count = 0;
  if (patches) {
    patch_count = std::max(1, config.rays_per_iter / 9);
    rays.reserve(patch_count * 9);
    for (int p = 0; p < patch_count; ++p) {
      const int ci = static_cast<int>(draw_rng.next_below(cam_count));
      const Camera& cam = rig.train_cameras[ci];
      if (cam.width < 3 || cam.height < 3) {
        throw std::invalid_argument("camera too small for 3x3 patches");
      }
      const int u0 = static_cast<int>(draw_rng.next_below(cam.width - 2));
      const int v0 = static_cast<int>(draw_rng.next_below(cam.height - 2));
      for (int dv = 0; dv < 3; ++dv)
        for (int du = 0; du < 3; ++du) {
          rays.push_back(ray_for_pixel(cam, u0 + du, v0 + dv));
          targets.push_back(obs.train_images[ci].pixel(u0 + du, v0 + dv));
          fars.push_back(cam.far_plane);
        }
    }
  } else {
    rays.reserve(config.rays_per_iter);
    for (int r = 0; r < config.rays_per_iter; ++r) {
      const int ci = static_cast<int>(draw_rng.next_below(cam_count));
      const Camera& cam = rig.train_cameras[ci];
      const int u = static_cast<int>(draw_rng.next_below(cam.width));
      const int v = static_cast<int>(draw_rng.next_below(cam.height));
      rays.push_back(ray_for_pixel(cam, u, v));
      targets.push_back(obs.train_images[ci].pixel(u, v));
      fars.push_back(cam.far_plane);
    }
  }
  const int ray_count = static_cast<int>(rays.size());

  // 2. Sample along every ray (jittered, per-ray stream), occupancy-filtered.
  std::vector<Vec3> positions;
  std::vector<double> ts, deltas;
  std::vector<int> offsets(ray_count + 1, 0);
  const double near = rig.train_cameras[0].near_plane;
  for (int r = 0; r < ray_count; ++r) {
    sample_one_ray(rays[r], near, fars[r], config.sampler.samples_per_ray,
                   /*deterministic=*/false, sample_root.fork(r), grid, sigma_min,
                   config.sampler.rescue_interval, positions, ts, deltas);
    offsets[r + 1] = static_cast<int>(positions.size());
  }
  const int total_samples = static_cast<int>(positions.size());

  // 3. Forward/backward in ray slabs, parallel over patch (or ray) units with
  //    per-chunk gradient buffers merged in chunk order.
  const FrameContext ctx{&state.params, &rig, &obs,
                         state.normalized_time(obs.frame_index)};
  const int units = patches ? patch_count : ray_count;
  const int rays_per_unit = patches ? 9 : 1;
  std::vector<FieldGradients> chunk_grads(kParallelChunks, FieldGradients(config.field));
  std::vector<double> chunk_rgb(kParallelChunks, 0.0);
  std::vector<double> chunk_depth(kParallelChunks, 0.0);
  std::vector<double> sigma_all(total_samples, 0.0);
  const double d_color_scale = 2.0 / ray_count;

  parallel_chunks(0, units, [&](int chunk, int unit_lo, int unit_hi) {
    FieldGradients& grads = chunk_grads[chunk];
    const int slab_units = std::max(1, config.train_batch_rays / rays_per_unit);
    for (int slab_lo = unit_lo; slab_lo < unit_hi; slab_lo += slab_units) {
      const int slab_hi = std::min(slab_lo + slab_units, unit_hi);
      const int ray_lo = slab_lo * rays_per_unit;
      const int ray_hi = slab_hi * rays_per_unit;
      const int s_lo = offsets[ray_lo];
      const int s_hi = offsets[ray_hi];
      const int B = s_hi - s_lo;

      ForwardResult fr;
      GradientTape tape;
      if (B > 0) {
        FieldBatch fb;
        fb.positions.resize(3, B);
        fb.directions.resize(3, B);
        for (int r = ray_lo; r < ray_hi; ++r) {
          for (int s = offsets[r]; s < offsets[r + 1]; ++s) {
            fb.positions.col(s - s_lo) = positions[s];
            fb.directions.col(s - s_lo) = rays[r].direction;
          }
        }
        fb.conditioning = build_conditioning(ctx, fb.positions);
        fr = field_forward(state.params, fb, &tape);
        for (int s = s_lo; s < s_hi; ++s) sigma_all[s] = fr.sigma(s - s_lo);
      }

      Eigen::Map<const Eigen::ArrayXd> slab_t(ts.data() + s_lo, B);
      Eigen::Map<const Eigen::ArrayXd> slab_delta(deltas.data() + s_lo, B);
      Eigen::ArrayXd d_sigma = Eigen::ArrayXd::Zero(B);
      Eigen::Matrix3Xd d_color = Eigen::Matrix3Xd::Zero(3, B);

      // Per-ray composite; collect depths for the patch regularizer.
      std::vector<RenderResult> results(ray_hi - ray_lo);
      for (int r = ray_lo; r < ray_hi; ++r) {
        const int off = offsets[r] - s_lo;
        const int n = offsets[r + 1] - offsets[r];
        results[r - ray_lo] =
            composite(fr.sigma.segment(off, n), fr.color.middleCols(off, n),
                      slab_delta.segment(off, n), slab_t.segment(off, n), state.background);
        const Vec3 diff = results[r - ray_lo].color - targets[r];
        chunk_rgb[chunk] += diff.squaredNorm();
        const Vec3 d_out = d_color_scale * diff;
        composite_backward(fr.sigma.segment(off, n), fr.color.middleCols(off, n),
                           slab_delta.segment(off, n), slab_t.segment(off, n),
                           state.background, d_out, 0.0, d_sigma.segment(off, n),
                           d_color.middleCols(off, n));
      }

      if (patches) {
        for (int p = slab_lo; p < slab_hi; ++p) {
          const int r0 = p * 9;
          Eigen::ArrayXd depths(9);
          Eigen::Matrix3Xd gt(3, 9);
          bool usable = true;
          for (int i = 0; i < 9; ++i) {
            depths(i) = results[r0 + i - ray_lo].expected_depth;
            gt.col(i) = targets[r0 + i];
            if (!(depths(i) > 0.0)) usable = false;
          }
          if (!usable) continue;
          Eigen::ArrayXd d_depths(9);
          const double l =
              depth_smoothness_loss(depths, gt, fars[r0], &d_depths);
          chunk_depth[chunk] += l;
          const double scale = config.depth_loss_weight / patch_count;
          for (int i = 0; i < 9; ++i) {
            const int r = r0 + i;
            const int off = offsets[r] - s_lo;
            const int n = offsets[r + 1] - offsets[r];
            composite_backward(fr.sigma.segment(off, n), fr.color.middleCols(off, n),
                               slab_delta.segment(off, n), slab_t.segment(off, n),
                               state.background, Vec3::Zero(), scale * d_depths(i),
                               d_sigma.segment(off, n), d_color.middleCols(off, n));
          }
        }
      }

      if (B > 0) field_backward(state.params, tape, d_sigma, d_color, grads);
    }
  });

  FieldGradients total(config.field);
  for (int c = 0; c < kParallelChunks; ++c) total.add(chunk_grads[c]);
  double rgb_sum = 0.0, depth_sum = 0.0;
  for (int c = 0; c < kParallelChunks; ++c) {
    rgb_sum += chunk_rgb[c];
    depth_sum += chunk_depth[c];
  }

  if (!adam_step(state.params, total, state.adam, config.lr_hash, config.lr_mlp)) {
    std::cerr << "iteration " << iter_index << ": non-finite gradients, update skipped\n";
  }

  // 4. Grid measurement update from every evaluated sample.
  for (int s = 0; s < total_samples; ++s) {
    update_at(state.grid, positions[s], sigma_all[s], config.sampler);
  }

  IterationOutcome out;
  out.loss = rgb_sum / ray_count +
             (patches && patch_count > 0 ? config.depth_loss_weight * depth_sum / patch_count
                                         : 0.0);
  out.kept_samples = total_samples;
  return out;
}

// Overwrites the grid from the current field: per voxel, max occupancy score
// over (optionally the center and) seeded uniform points.
void sweep_grid_from_field(FrameState& state, const FrameObservation& obs,
                           const TrainConfig& config, int points_per_voxel,
                           bool include_center, uint64_t tag) {
  OccupancyGrid& grid = state.grid;
  const int n = grid.resolution();
  const double inv_n = 1.0 / n;
  const FrameContext ctx{&state.params, &state.rig, &obs,
                         state.normalized_time(obs.frame_index)};
  const Rng sweep_root = Rng(config.seed).fork(0x5EEDull).fork(tag);

  parallel_chunks(0, n, [&](int, int z_lo, int z_hi) {
    const int cols = n * n * points_per_voxel;
    Eigen::Matrix3Xd pts(3, cols);
    for (int k = z_lo; k < z_hi; ++k) {
      int col = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          Rng voxel_rng = sweep_root.fork(grid.index(i, j, k));
          for (int p = 0; p < points_per_voxel; ++p) {
            Vec3 x;
            if (include_center && p == 0) {
              x = Vec3((i + 0.5) * inv_n, (j + 0.5) * inv_n, (k + 0.5) * inv_n);
            } else {
              x = Vec3((i + voxel_rng.next_double()) * inv_n,
                       (j + voxel_rng.next_double()) * inv_n,
                       (k + voxel_rng.next_double()) * inv_n);
            }
            pts.col(col++) = x;
          }
        }
      const Eigen::MatrixXd cond = build_conditioning(ctx, pts);
      const Eigen::ArrayXd sigma = density_forward(state.params, pts, cond);
      col = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          float best = 0.0f;
          for (int p = 0; p < points_per_voxel; ++p) {
            best = std::max(best,
                            occupancy_score(sigma(col++), config.sampler.samples_per_ray));
          }
          grid.at(i, j, k) = best;
        }
    }
  });
}

}  // namespace

FrameState warmup_first_frame(const Dataset& dataset, const TrainConfig& config,
                              std::vector<double>* loss_log) {
  config.validate();
  if (dataset.frames.empty()) throw std::invalid_argument("dataset has no frames");
  const Rng root(config.seed);
  FrameState state(config.field, root.fork(0xF1E1Dull), config.grid_resolution,
                   config.kernel_stddev);
  state.rig = dataset.rig;
  state.background = dataset.background;
  state.frame_count = static_cast<int>(dataset.frames.size());
  const FrameObservation& obs = dataset.frame(0);

  const int half = config.warmup_iters / 2;
  for (int iter = 0; iter < config.warmup_iters; ++iter) {
    if (iter == half && half > 0) {
      sweep_grid_from_field(state, obs, config, config.rebuild_points_per_voxel,
                            /*include_center=*/true, /*tag=*/0);
    }
    const bool rejecting = config.rejection_enabled && half > 0 && iter >= half;
    const IterationOutcome o =
        train_iteration(state, obs, config, rejecting ? &state.grid : nullptr,
                        config.sampler.sigma_min_floor, state.iterations_done++);
    if (loss_log) loss_log->push_back(o.loss);
  }
  if (config.warmup_iters > 0) {
    sweep_grid_from_field(state, obs, config, config.rebuild_points_per_voxel,
                          /*include_center=*/true, /*tag=*/1);
  }
  state.frame_index = 0;
  state.grid.frame_index = 0;
  return state;
}

void train_frame(FrameState& state, const FrameObservation& observation,
                 const TrainConfig& config) {
  const int k = state.frame_index + 1;
  if (observation.frame_index != k) {
    throw std::invalid_argument("train_frame: expected frame " + std::to_string(k) +
                                ", got " + std::to_string(observation.frame_index));
  }
  if (config.global_update) {
    sweep_grid_from_field(state, observation, config, config.global_update_points,
                          /*include_center=*/false, /*tag=*/0x60000000ull + k);
    state.grid.frame_index = k;
  } else if (config.transition_enabled) {
    transition(state.grid, state.kernel);
  } else {
    state.grid.frame_index = k;
  }

  const double sigma_min = threshold_schedule(config.sampler, k);
  for (int j = 0; j < config.iters_per_frame; ++j) {
    train_iteration(state, observation, config,
                    config.rejection_enabled ? &state.grid : nullptr, sigma_min,
                    state.iterations_done++);
  }
  state.frame_index = k;
}

std::string format_metrics_row(const FrameMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.4f,%.3f,%.3f,%.4f", m.frame, m.psnr_db, m.train_ms,
                m.render_ms, m.mean_samples_per_ray);
  return std::string(buf);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

StreamResult stream(const Dataset& dataset, const TrainConfig& config,
                    const StreamSinks& sinks) {
  config.validate();
  if (dataset.frames.empty()) throw std::invalid_argument("dataset has no frames");
  if (dataset.rig.test_cameras.empty()) {
    throw std::invalid_argument("stream needs at least one test camera for metrics");
  }

  auto evaluate = [&](FrameState& state, const FrameObservation& obs,
                      FrameMetrics& m) -> std::vector<RenderOutput> {
    if (obs.test_images.size() != dataset.rig.test_cameras.size()) {
      throw std::invalid_argument("frame " + std::to_string(obs.frame_index) +
                                  " lacks test images");
    }
    RenderConfig rc;
    rc.samples_per_ray = config.render_samples_per_ray;
    rc.sigma_min = config.rejection_enabled ? config.sampler.sigma_min_floor : 0.0;
    rc.rescue_interval = config.sampler.rescue_interval;
    rc.deterministic = true;
    rc.background = dataset.background;
    const FrameContext ctx{&state.params, &state.rig, &obs,
                           state.normalized_time(obs.frame_index)};
    std::vector<RenderOutput> renders;
    const auto t0 = Clock::now();
    double psnr_sum = 0.0, samples_sum = 0.0;
    for (size_t i = 0; i < dataset.rig.test_cameras.size(); ++i) {
      renders.push_back(render_image(ctx, config.rejection_enabled ? &state.grid : nullptr,
                                     dataset.rig.test_cameras[i], rc));
      psnr_sum += psnr(renders.back().image, obs.test_images[i]);
      samples_sum += renders.back().mean_samples_per_ray;
    }
    m.render_ms = ms_since(t0);
    m.psnr_db = psnr_sum / dataset.rig.test_cameras.size();
    m.mean_samples_per_ray = samples_sum / dataset.rig.test_cameras.size();
    return renders;
  };

  StreamResult result{{}, FrameState(config.field, Rng(config.seed), config.grid_resolution,
                                     config.kernel_stddev)};

  auto t0 = Clock::now();
  result.state = warmup_first_frame(dataset, config, nullptr);
  double train_ms = ms_since(t0);
  for (int k = 0; k < static_cast<int>(dataset.frames.size()); ++k) {
    const FrameObservation& obs = dataset.frame(k);
    if (k > 0) {
      t0 = Clock::now();
      train_frame(result.state, obs, config);
      train_ms = ms_since(t0);
    }
    FrameMetrics m;
    m.frame = k;
    m.train_ms = train_ms;
    std::vector<RenderOutput> renders = evaluate(result.state, obs, m);
    if (config.deterministic) {
      m.train_ms = 0.0;
      m.render_ms = 0.0;
    }
    result.metrics.push_back(m);
    if (sinks.on_frame) sinks.on_frame(m, renders);
  }
  return result;
}

}  // namespace sfield
