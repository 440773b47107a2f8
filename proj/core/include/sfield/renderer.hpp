#pragma once

#include <optional>
#include <vector>

#include "sfield/field.hpp"
#include "sfield/geometry.hpp"
#include "sfield/image.hpp"
#include "sfield/occgrid.hpp"
#include "sfield/rng.hpp"
#include "sfield/scene.hpp"

namespace sfield {

struct RenderResult {
  Vec3 color = Vec3::Zero();
  double final_transmittance = 1.0;
  double expected_depth = 0.0;  // 0 when no opacity was collected
  int sample_count = 0;
};

// n equal bins over [near, far]; bin midpoints in deterministic mode,
// uniform jitter within each bin otherwise. delta is the shared bin width.
struct UniformSamples {
  std::vector<double> t;
  double delta = 0.0;
};
UniformSamples sample_uniform(double near, double far, int n, bool deterministic, Rng rng);

// Ray/unit-cube intersection clipped to [near, far]. False when the ray
// misses the cube entirely.
bool clip_ray_to_cube(const Ray& ray, double near, double far, double& t0, double& t1);

// Discrete volume rendering over one ray's ordered samples:
//   w_i = T_i (1 - exp(-sigma_i delta_i)),  T_i = exp(-sum_{j<i} sigma_j delta_j)
//   color = sum w_i c_i + T_final * background
//   expected_depth = sum w_i t_i / max(sum w_i, 1e-10)
// Throws std::invalid_argument on negative sigma or delta.
RenderResult composite(Eigen::Ref<const Eigen::ArrayXd> sigma,
                       Eigen::Ref<const Eigen::Matrix3Xd> color,
                       Eigen::Ref<const Eigen::ArrayXd> delta,
                       Eigen::Ref<const Eigen::ArrayXd> t,
                       const Vec3& background = Vec3::Zero());

// Exact adjoint of composite for (color, expected_depth) outputs.
// Accumulates into d_sigma / d_color (must be pre-sized and zeroed or holding
// prior gradients).
void composite_backward(Eigen::Ref<const Eigen::ArrayXd> sigma,
                        Eigen::Ref<const Eigen::Matrix3Xd> color,
                        Eigen::Ref<const Eigen::ArrayXd> delta,
                        Eigen::Ref<const Eigen::ArrayXd> t,
                        const Vec3& background, const Vec3& d_color_out, double d_depth_out,
                        Eigen::Ref<Eigen::ArrayXd> d_sigma,
                        Eigen::Ref<Eigen::Matrix3Xd> d_color);

// Everything the field needs to answer queries for frame k.
struct FrameContext {
  const FieldParams* params = nullptr;
  const CameraRig* rig = nullptr;                 // projected-color conditioning
  const FrameObservation* observation = nullptr;  // current frame's train images
  double time = 0.0;                              // normalized time, kTime variant
};

// Conditioning rows for a batch of positions, shaped for ctx.params->config.
Eigen::MatrixXd build_conditioning(const FrameContext& ctx, const Eigen::Matrix3Xd& positions);

// Uniform samples along the ray clipped to the unit cube, then occupancy
// rejection (skipped when grid is null). Appends kept samples to the flat
// arrays and returns the kept count.
int sample_one_ray(const Ray& ray, double near, double far, int n, bool deterministic,
                   Rng rng, const OccupancyGrid* grid, double sigma_min, int rescue_interval,
                   std::vector<Vec3>& positions, std::vector<double>& ts,
                   std::vector<double>& deltas);

struct RenderConfig {
  int samples_per_ray = 128;
  double sigma_min = 0.0;        // 0 keeps everything
  int rescue_interval = 20;
  bool deterministic = true;
  uint64_t seed = 0;             // jitter seed (ignored when deterministic)
  Vec3 background = Vec3::Zero();
  double min_transmittance = 1e-4;  // early ray termination; 0 marches full rays
};

struct RenderOutput {
  Image image;
  std::vector<float> depth;  // scene units, row-major, 0 where nothing was hit
  double mean_samples_per_ray = 0.0;  // post-rejection kept samples
};

// Full-frame render: per pixel ray -> uniform sampling -> occupancy rejection
// -> conditioning -> field -> composite onto the background. grid may be null.
RenderOutput render_image(const FrameContext& ctx, const OccupancyGrid* grid,
                          const Camera& camera, const RenderConfig& config);

// Depth map scaled by 1/far and written as 16-bit grayscale.
void save_depth_png(const std::vector<float>& depth, int width, int height, double far_plane,
                    const std::filesystem::path& path);

}  // namespace sfield
