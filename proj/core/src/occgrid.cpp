#include "sfield/occgrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sfield/parallel.hpp"

namespace sfield {

TransitionKernel TransitionKernel::gaussian(double sigma_voxels) {
  TransitionKernel k{};
  double sum = 0.0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const double d2 = dx * dx + dy * dy + dz * dz;
        const double w = std::exp(-d2 / (2.0 * sigma_voxels * sigma_voxels));
        k.weights[dz + 1][dy + 1][dx + 1] = w;
        sum += w;
      }
  for (auto& plane : k.weights)
    for (auto& row : plane)
      for (auto& w : row) w /= sum;
  return k;
}

TransitionKernel TransitionKernel::identity() {
  TransitionKernel k{};
  k.weights[1][1][1] = 1.0;
  return k;
}

OccupancyGrid::OccupancyGrid(int resolution, float initial_value) : n_(resolution) {
  if (resolution <= 0) throw std::invalid_argument("grid resolution must be positive");
  values_.assign(static_cast<size_t>(n_) * n_ * n_, initial_value);
}

void OccupancyGrid::voxel_of(const Vec3& x, int& i, int& j, int& k) const {
  i = std::clamp(static_cast<int>(x.x() * n_), 0, n_ - 1);
  j = std::clamp(static_cast<int>(x.y() * n_), 0, n_ - 1);
  k = std::clamp(static_cast<int>(x.z() * n_), 0, n_ - 1);
}

float OccupancyGrid::value_at(const Vec3& x) const {
  if (!in_unit_cube(x)) return 0.0f;
  int i, j, k;
  voxel_of(x, i, j, k);
  return at(i, j, k);
}

void SamplerConfig::validate() const {
  if (samples_per_ray < 1) throw std::invalid_argument("samples_per_ray must be >= 1");
  if (rescue_interval < 1) throw std::invalid_argument("rescue_interval must be >= 1");
  if (!(0.0 <= sigma_min_floor && sigma_min_floor <= sigma_min_start && sigma_min_start <= 1.0)) {
    throw std::invalid_argument("need 0 <= sigma_min_floor <= sigma_min_start <= 1");
  }
  if (ramp_frames < 1) throw std::invalid_argument("ramp_frames must be >= 1");
}

float occupancy_score(double sigma, int samples_per_ray) {
  const double dv = 1.0 / samples_per_ray;
  return static_cast<float>(1.0 - std::exp(-sigma * dv));
}

void transition(OccupancyGrid& grid, const TransitionKernel& kernel) {
  const int n = grid.resolution();
  if (n < 1) throw std::invalid_argument("transition on an empty grid");
  std::vector<float> out(grid.voxel_count());
  const std::vector<float>& in = grid.values();
  auto clampi = [n](int v) { return std::clamp(v, 0, n - 1); };
  parallel_chunks(0, n, [&](int, int z_lo, int z_hi) {
    for (int z = z_lo; z < z_hi; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double acc = 0.0;
          for (int dz = -1; dz <= 1; ++dz) {
            const int zz = clampi(z + dz);
            for (int dy = -1; dy <= 1; ++dy) {
              const int yy = clampi(y + dy);
              for (int dx = -1; dx <= 1; ++dx) {
                const int xx = clampi(x + dx);
                acc += kernel.weights[dz + 1][dy + 1][dx + 1] * in[grid.index(xx, yy, zz)];
              }
            }
          }
          out[grid.index(x, y, z)] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
  });
  grid.values() = std::move(out);
  ++grid.frame_index;
}

void update_score_at(OccupancyGrid& grid, const Vec3& x, float score, UpdateMode mode) {
  if (!in_unit_cube(x)) return;
  int i, j, k;
  grid.voxel_of(x, i, j, k);
  float& g = grid.at(i, j, k);
  switch (mode) {
    case UpdateMode::kMonotoneMax:
      g = std::max(g, score);
      break;
    case UpdateMode::kLiteral:
      if (score >= g) g = std::clamp(score * g, 0.0f, 1.0f);
      break;
  }
}

void update_at(OccupancyGrid& grid, const Vec3& x, double sigma, const SamplerConfig& config) {
  update_score_at(grid, x, occupancy_score(sigma, config.samples_per_ray), config.update_mode);
}

double threshold_schedule(const SamplerConfig& config, int frame_index) {
  if (frame_index <= 1) return config.sigma_min_start;
  if (frame_index >= config.ramp_frames) return config.sigma_min_floor;
  const double u = static_cast<double>(frame_index - 1) / (config.ramp_frames - 1);
  return config.sigma_min_start + u * (config.sigma_min_floor - config.sigma_min_start);
}

bool keep_sample(float grid_value, double sigma_min, int sample_index, int rescue_interval) {
  if (grid_value >= sigma_min) return true;
  return sample_index % rescue_interval == rescue_interval / 2;
}

std::vector<int> rejection_filter(const OccupancyGrid& grid, const std::vector<Vec3>& points,
                                  double sigma_min, int rescue_interval) {
  std::vector<int> kept;
  kept.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    if (keep_sample(grid.value_at(points[i]), sigma_min, static_cast<int>(i), rescue_interval)) {
      kept.push_back(static_cast<int>(i));
    }
  }
  return kept;
}

void global_update_baseline(OccupancyGrid& grid,
                            const std::function<double(const Vec3&)>& density_at,
                            int points_per_voxel, int samples_per_ray, const Rng& rng) {
  const int n = grid.resolution();
  const double inv_n = 1.0 / n;
  parallel_chunks(0, n, [&](int, int z_lo, int z_hi) {
    for (int k = z_lo; k < z_hi; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          Rng voxel_rng = rng.fork(grid.index(i, j, k));
          float best = 0.0f;
          for (int p = 0; p < points_per_voxel; ++p) {
            const Vec3 x((i + voxel_rng.next_double()) * inv_n,
                         (j + voxel_rng.next_double()) * inv_n,
                         (k + voxel_rng.next_double()) * inv_n);
            best = std::max(best, occupancy_score(density_at(x), samples_per_ray));
          }
          grid.at(i, j, k) = best;
        }
  });
}

void save_grid_debug(const OccupancyGrid& grid, const std::filesystem::path& raw_path) {
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw std::runtime_error("cannot open " + raw_path.string());
  raw.write(reinterpret_cast<const char*>(grid.values().data()),
            static_cast<std::streamsize>(grid.voxel_count() * sizeof(float)));
  if (!raw) throw std::runtime_error("short write to " + raw_path.string());

  nlohmann::json meta;
  meta["resolution"] = grid.resolution();
  meta["frame_index"] = grid.frame_index;
  meta["extent"] = {0.0, 0.0, 0.0, 1.0, 1.0, 1.0};
  meta["dtype"] = "float32";
  meta["layout"] = "x-fastest";
  std::filesystem::path meta_path = raw_path;
  meta_path.replace_extension(".json");
  std::ofstream out(meta_path);
  out << meta.dump(2) << "\n";
}

OccupancyGrid load_grid_debug(const std::filesystem::path& raw_path) {
  std::filesystem::path meta_path = raw_path;
  meta_path.replace_extension(".json");
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw std::runtime_error("cannot open " + meta_path.string());
  nlohmann::json meta = nlohmann::json::parse(meta_in);
  const int n = meta.at("resolution").get<int>();
  OccupancyGrid grid(n, 0.0f);
  grid.frame_index = meta.value("frame_index", 0);
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw std::runtime_error("cannot open " + raw_path.string());
  raw.read(reinterpret_cast<char*>(grid.values().data()),
           static_cast<std::streamsize>(grid.voxel_count() * sizeof(float)));
  if (raw.gcount() != static_cast<std::streamsize>(grid.voxel_count() * sizeof(float))) {
    throw std::runtime_error("grid raw file truncated: " + raw_path.string());
  }
  return grid;
}

}  // namespace sfield
