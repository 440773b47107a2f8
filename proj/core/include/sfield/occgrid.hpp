#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "sfield/common.hpp"
#include "sfield/rng.hpp"

namespace sfield {

// 3x3x3 Gaussian transition kernel, normalized to sum 1.
struct TransitionKernel {
  double weights[3][3][3];

  // exp(-d^2 / (2 sigma^2)) over the 27 integer offsets, normalized.
  static TransitionKernel gaussian(double sigma_voxels);
  // Dirac delta; transition with it is a no-op on the values.
  static TransitionKernel identity();
};

// Dense probabilistic occupancy grid over the unit cube. Voxel (i,j,k)
// covers [i/n,(i+1)/n) x ... and holds the occupancy probability of that
// cell. Stored x-fastest.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(int resolution, float initial_value);

  int resolution() const { return n_; }
  size_t voxel_count() const { return values_.size(); }
  int frame_index = 0;  // advanced by transition(), recorded in debug dumps

  float& at(int i, int j, int k) { return values_[index(i, j, k)]; }
  float at(int i, int j, int k) const { return values_[index(i, j, k)]; }

  // Occupancy of the voxel containing x. Points outside the unit cube read 0.
  float value_at(const Vec3& x) const;

  // Voxel index of x along each axis, clamped into range.
  void voxel_of(const Vec3& x, int& i, int& j, int& k) const;

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }

  size_t index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * n_ + j) * n_ + i;
  }

 private:
  int n_ = 0;
  std::vector<float> values_;
};

enum class UpdateMode {
  kMonotoneMax,  // G <- max(G, s); decay comes from the transition blur
  kLiteral,      // s < G: keep; else G <- clamp(s * G, 0, 1)
};

struct SamplerConfig {
  int samples_per_ray = 64;       // N; also sets the score step dv = 1/N
  int rescue_interval = 20;       // R: every R-th sample kept unconditionally
  double sigma_min_start = 1.0;   // threshold at frame 1
  double sigma_min_floor = 0.05;  // threshold from ramp_frames on
  int ramp_frames = 10;
  UpdateMode update_mode = UpdateMode::kMonotoneMax;

  void validate() const;  // throws std::invalid_argument
};

// Occupancy evidence of one density sample: s = 1 - exp(-sigma * dv) with
// dv = 1/samples_per_ray. Maps unbounded density into [0,1] so the grid
// stays a probability.
float occupancy_score(double sigma, int samples_per_ray);

// Temporal prediction step: convolve the grid with the kernel,
// clamp-to-edge padding, result clamped to [0,1]. Advances frame_index.
void transition(OccupancyGrid& grid, const TransitionKernel& kernel);

// Measurement update from one density sample. No-op outside the cube.
void update_at(OccupancyGrid& grid, const Vec3& x, double sigma, const SamplerConfig& config);

// Same, with the occupancy score already computed.
void update_score_at(OccupancyGrid& grid, const Vec3& x, float score, UpdateMode mode);

// Occupancy threshold for rejection at a given frame index. Linear ramp from
// sigma_min_start at frame 1 to sigma_min_floor at frame ramp_frames,
// constant after. Frame 0 trains dense and never consults this.
double threshold_schedule(const SamplerConfig& config, int frame_index);

// Keep rule for sample i (0-based position along its ray): occupancy at its
// voxel >= sigma_min, or i falls on the rescue lattice (i mod R == R/2) so
// fully rejected rays retain a sparse probe set.
bool keep_sample(float grid_value, double sigma_min, int sample_index, int rescue_interval);

// Indices of kept samples, in order. points[i] pairs with sample index i.
std::vector<int> rejection_filter(const OccupancyGrid& grid, const std::vector<Vec3>& points,
                                  double sigma_min, int rescue_interval);

// Non-recursive baseline: overwrite every voxel with the max occupancy score
// over points_per_voxel uniform random points inside it, erasing temporal
// context. Reproduces the miss-thin-structures failure the recursive scheme
// avoids.
void global_update_baseline(OccupancyGrid& grid,
                            const std::function<double(const Vec3&)>& density_at,
                            int points_per_voxel, int samples_per_ray, const Rng& rng);

// Raw little-endian float32 dump plus a JSON sidecar {resolution, frame_index,
// extent, dtype, layout}. Sidecar path is the raw path with extension .json.
void save_grid_debug(const OccupancyGrid& grid, const std::filesystem::path& raw_path);
OccupancyGrid load_grid_debug(const std::filesystem::path& raw_path);

}  // namespace sfield
