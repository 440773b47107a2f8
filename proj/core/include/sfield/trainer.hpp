#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "sfield/field.hpp"
#include "sfield/occgrid.hpp"
#include "sfield/renderer.hpp"
#include "sfield/scene.hpp"

namespace sfield {

struct TrainConfig {
  int warmup_iters = 500;    // first frame
  int iters_per_frame = 10;  // J
  int rays_per_iter = 4096;
  double lr_hash = 1e-2;
  double lr_mlp = 1e-3;
  double depth_loss_weight = 0.0;  // 3x3 patch sampling kicks in when > 0
  uint64_t seed = 1;
  bool deterministic = false;  // reported timings zeroed, fixed everything else

  // Component switches (ablations).
  bool transition_enabled = true;
  bool rejection_enabled = true;
  bool global_update = false;  // per-frame full-grid resample instead of transition

  int grid_resolution = 64;
  double kernel_stddev = 0.8;  // voxels
  SamplerConfig sampler{};
  FieldConfig field{};  // field.conditioning selects the model variant

  int render_samples_per_ray = 128;
  int train_batch_rays = 256;        // forward/backward slab size
  int rebuild_points_per_voxel = 2;  // warm-up grid rebuild sweep
  int global_update_points = 1;      // per voxel, global-update mode

  void validate() const;  // throws std::invalid_argument
};

// Key-value config file covering every TrainConfig field (see load for keys).
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& text);

struct AdamState {
  FieldTensors m, v;
  long long step = 0;

  explicit AdamState(const FieldConfig& config)
      : m(FieldTensors::zeros(config)), v(FieldTensors::zeros(config)) {}
};

// Mean over rays of the squared L2 color error; gradient is 2(pred-target)/rays.
double rgb_loss(const Eigen::Matrix3Xd& predicted, const Eigen::Matrix3Xd& target,
                Eigen::Matrix3Xd* d_predicted = nullptr);

// Patch regularizer: std(d_far / depths) / max(std(colors), 1e-4), population
// standard deviations, color std over all 3n channel values. Colors are
// ground truth, so the gradient (optional) covers depths only.
// Throws std::invalid_argument on nonpositive depths.
double depth_smoothness_loss(const Eigen::ArrayXd& depths, const Eigen::Matrix3Xd& colors,
                             double d_far, Eigen::ArrayXd* d_depths = nullptr);

// Bias-corrected Adam (beta 0.9/0.999, eps 1e-8) over parameter blocks; hash
// tables use lr_hash, the MLP lr_mlp. Returns false and leaves everything
// untouched when grads are non-finite.
bool adam_step(FieldParams& params, const FieldGradients& grads, AdamState& state,
               double lr_hash, double lr_mlp);

struct FrameState {
  int frame_index = -1;
  FieldParams params;
  AdamState adam;
  OccupancyGrid grid;
  TransitionKernel kernel;
  CameraRig rig;        // copied from the dataset at warm-up
  Vec3 background = Vec3::Zero();
  int frame_count = 1;  // normalizes time for the kTime variant
  long long iterations_done = 0;  // rng stream position across frames

  FrameState(const FieldConfig& config, const Rng& rng, int grid_resolution,
             double kernel_stddev)
      : params(FieldParams::init(config, rng)),
        adam(config),
        grid(grid_resolution, 1.0f),
        kernel(TransitionKernel::gaussian(kernel_stddev)) {}

  double normalized_time(int frame) const {
    return frame_count > 1 ? static_cast<double>(frame) / (frame_count - 1) : 0.0;
  }
};

// Train on frame 0 only. The grid starts all-ones (everything sampled), is
// rebuilt from the field densities mid-way (enabling rejection for the second
// half), and rebuilt again at the end so the first transition sees real
// occupancy. loss_log, when given, receives one total-loss value per iteration.
FrameState warmup_first_frame(const Dataset& dataset, const TrainConfig& config,
                              std::vector<double>* loss_log = nullptr);

// One streamed frame: occupancy transition (per config), then J
// iterations of {ray batch, rejection, render, loss, backward, Adam, grid
// update}. Touches only this frame's observation.
void train_frame(FrameState& state, const FrameObservation& observation,
                 const TrainConfig& config);

struct FrameMetrics {
  int frame = 0;
  double psnr_db = 0.0;
  double train_ms = 0.0;
  double render_ms = 0.0;
  double mean_samples_per_ray = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "frame,psnr_db,train_ms,render_ms,mean_samples_per_ray";
std::string format_metrics_row(const FrameMetrics& m);

struct StreamSinks {
  // Called once per frame after its training and evaluation render.
  std::function<void(const FrameMetrics&, const std::vector<RenderOutput>&)> on_frame;
};

struct StreamResult {
  std::vector<FrameMetrics> metrics;
  FrameState state;
};

// Warm-up, then per frame: train, render every test view against ground
// truth, emit metrics. Deterministic mode zeroes wall-clock columns so runs
// byte-compare.
StreamResult stream(const Dataset& dataset, const TrainConfig& config,
                    const StreamSinks& sinks = {});

}  // namespace sfield
