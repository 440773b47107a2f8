#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sfield/occgrid.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

OccupancyGrid random_grid(int n, uint64_t seed) {
  OccupancyGrid grid(n, 0.0f);
  Rng rng(seed);
  for (float& v : grid.values()) v = static_cast<float>(rng.next_double());
  return grid;
}

// Direct triple-loop convolution with clamp-to-edge padding.
std::vector<float> convolve_oracle(const OccupancyGrid& grid, const TransitionKernel& kernel) {
  const int n = grid.resolution();
  std::vector<float> out(grid.voxel_count());
  auto clampi = [n](int v) { return std::clamp(v, 0, n - 1); };
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int dz = -1; dz <= 1; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              acc += kernel.weights[dz + 1][dy + 1][dx + 1] *
                     grid.at(clampi(i + dx), clampi(j + dy), clampi(k + dz));
            }
          }
        }
        out[grid.index(i, j, k)] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian kernel is normalized and flip-symmetric") {
  const TransitionKernel k = TransitionKernel::gaussian(0.8);
  double sum = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) sum += k.weights[a][b][c];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        CHECK(k.weights[a][b][c] == doctest::Approx(k.weights[2 - a][b][c]).epsilon(1e-12));
        CHECK(k.weights[a][b][c] == doctest::Approx(k.weights[a][2 - b][c]).epsilon(1e-12));
        CHECK(k.weights[a][b][c] == doctest::Approx(k.weights[a][b][2 - c]).epsilon(1e-12));
      }
  CHECK(k.weights[1][1][1] > k.weights[0][1][1]);  // peaked at the center
  CHECK(k.weights[1][1][1] < 1.0);                 // blur actually spreads
}

TEST_CASE("identity kernel transition is bit-exact") {
  OccupancyGrid grid = random_grid(16, 3);
  const std::vector<float> before = grid.values();
  transition(grid, TransitionKernel::identity());
  CHECK(grid.values() == before);
  CHECK(grid.frame_index == 1);
}

TEST_CASE("uniform grid stays uniform in the interior") {
  OccupancyGrid grid(12, 0.625f);
  transition(grid, TransitionKernel::gaussian(0.8));
  for (int k = 1; k < 11; ++k)
    for (int j = 1; j < 11; ++j)
      for (int i = 1; i < 11; ++i) {
        CHECK(grid.at(i, j, k) == doctest::Approx(0.625).epsilon(1e-6));
      }
}

TEST_CASE("transition matches the direct convolution oracle") {
  const TransitionKernel kernel = TransitionKernel::gaussian(0.8);
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    OccupancyGrid grid = random_grid(32, seed);
    const std::vector<float> expected = convolve_oracle(grid, kernel);
    transition(grid, kernel);
    float max_err = 0.f;
    for (size_t i = 0; i < expected.size(); ++i) {
      max_err = std::max(max_err, std::abs(expected[i] - grid.values()[i]));
    }
    CHECK(max_err < 1e-7f);
  }
}

TEST_CASE("single voxel spreads like the kernel") {
  OccupancyGrid grid(8, 0.0f);
  grid.at(4, 4, 4) = 1.0f;
  const TransitionKernel kernel = TransitionKernel::gaussian(0.8);
  transition(grid, kernel);
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        CHECK(grid.at(4 + dx, 4 + dy, 4 + dz) ==
              doctest::Approx(kernel.weights[dz + 1][dy + 1][dx + 1]).epsilon(1e-7));
      }
  CHECK(grid.at(1, 4, 4) == 0.0f);
}

TEST_CASE("transition conserves interior mass and decays peaks") {
  OccupancyGrid grid(24, 0.0f);
  Rng rng(77);
  // Random mass away from the borders.
  for (int t = 0; t < 200; ++t) {
    const int i = 4 + static_cast<int>(rng.next_below(16));
    const int j = 4 + static_cast<int>(rng.next_below(16));
    const int k = 4 + static_cast<int>(rng.next_below(16));
    grid.at(i, j, k) = static_cast<float>(rng.next_double() * 0.5);
  }
  const double mass_before =
      std::accumulate(grid.values().begin(), grid.values().end(), 0.0);
  const float peak_before = *std::max_element(grid.values().begin(), grid.values().end());
  transition(grid, TransitionKernel::gaussian(0.8));
  const double mass_after =
      std::accumulate(grid.values().begin(), grid.values().end(), 0.0);
  const float peak_after = *std::max_element(grid.values().begin(), grid.values().end());
  CHECK(std::abs(mass_before - mass_after) < 1e-4);
  CHECK(peak_after < peak_before);
}

TEST_CASE("occupancy score saturates with density") {
  CHECK(occupancy_score(0.0, 64) == doctest::Approx(0.0));
  CHECK(occupancy_score(64.0 * std::log(2.0), 64) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(occupancy_score(1e6, 64) == doctest::Approx(1.0));
  CHECK(occupancy_score(5.0, 64) ==
        doctest::Approx(1.0 - std::exp(-5.0 / 64.0)).epsilon(1e-6));
}

TEST_CASE("update cases from the Bayesian rule") {
  SamplerConfig config;
  config.samples_per_ray = 64;
  const Vec3 x(0.51, 0.52, 0.53);
  // Densities chosen so the score is 0.3 / 0.9.
  const double sigma_03 = -64.0 * std::log(1.0 - 0.3);
  const double sigma_09 = -64.0 * std::log(1.0 - 0.9);

  OccupancyGrid grid(4, 0.5f);
  config.update_mode = UpdateMode::kMonotoneMax;
  update_at(grid, x, sigma_03, config);
  CHECK(grid.value_at(x) == doctest::Approx(0.5));  // s < G: unchanged
  config.update_mode = UpdateMode::kLiteral;
  update_at(grid, x, sigma_03, config);
  CHECK(grid.value_at(x) == doctest::Approx(0.5));

  OccupancyGrid low(4, 0.2f);
  config.update_mode = UpdateMode::kLiteral;
  update_at(low, x, sigma_09, config);
  CHECK(low.value_at(x) == doctest::Approx(0.18).epsilon(1e-6));  // 0.9 * 0.2
  OccupancyGrid low2(4, 0.2f);
  config.update_mode = UpdateMode::kMonotoneMax;
  update_at(low2, x, sigma_09, config);
  CHECK(low2.value_at(x) == doctest::Approx(0.9).epsilon(1e-6));

  OccupancyGrid zero(4, 0.0f);
  config.update_mode = UpdateMode::kLiteral;
  update_at(zero, x, 1e9, config);
  CHECK(zero.value_at(x) == 0.0f);  // absorbing zero
}

TEST_CASE("update outside the cube is a no-op") {
  SamplerConfig config;
  OccupancyGrid grid(4, 0.25f);
  const std::vector<float> before = grid.values();
  update_at(grid, Vec3(1.5, 0.5, 0.5), 1e9, config);
  update_at(grid, Vec3(0.5, -0.1, 0.5), 1e9, config);
  CHECK(grid.values() == before);
}

TEST_CASE("monotone-max update is idempotent and order-independent") {
  SamplerConfig config;
  config.update_mode = UpdateMode::kMonotoneMax;
  Rng rng(5);
  std::vector<Vec3> points;
  std::vector<double> sigmas;
  for (int i = 0; i < 50; ++i) {
    points.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
    sigmas.push_back(rng.next_double() * 200.0);
  }
  OccupancyGrid fwd(8, 0.1f), rev(8, 0.1f), twice(8, 0.1f);
  for (int i = 0; i < 50; ++i) update_at(fwd, points[i], sigmas[i], config);
  for (int i = 49; i >= 0; --i) update_at(rev, points[i], sigmas[i], config);
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < 50; ++i) update_at(twice, points[i], sigmas[i], config);
  }
  CHECK(fwd.values() == rev.values());
  CHECK(fwd.values() == twice.values());
}

TEST_CASE("threshold schedule endpoints and tail") {
  SamplerConfig config;
  CHECK(threshold_schedule(config, 1) == doctest::Approx(1.0));
  CHECK(threshold_schedule(config, 10) == doctest::Approx(0.05));
  CHECK(threshold_schedule(config, 50) == doctest::Approx(0.05));
  // Linear in between: frame 5 sits 4/9 of the way down.
  CHECK(threshold_schedule(config, 5) == doctest::Approx(1.0 + (0.05 - 1.0) * 4.0 / 9.0));
}

TEST_CASE("fully rejected ray keeps exactly the rescue lattice") {
  OccupancyGrid grid(8, 0.0f);
  std::vector<Vec3> points;
  for (int i = 0; i < 40; ++i) points.emplace_back(0.5, 0.5, (i + 0.5) / 40.0);
  const std::vector<int> kept = rejection_filter(grid, points, 0.5, 20);
  CHECK(kept == std::vector<int>{10, 30});
}

TEST_CASE("fully occupied grid keeps everything") {
  OccupancyGrid grid(8, 1.0f);
  std::vector<Vec3> points;
  for (int i = 0; i < 64; ++i) points.emplace_back(0.3, 0.7, (i + 0.5) / 64.0);
  const std::vector<int> kept = rejection_filter(grid, points, 0.9, 20);
  CHECK(static_cast<int>(kept.size()) == 64);
}

TEST_CASE("rejection filter matches the per-sample predicate on random cases") {
  Rng rng(902);
  for (int trial = 0; trial < 200; ++trial) {
    OccupancyGrid grid = random_grid(8, 1000 + trial);
    const int n = 1 + static_cast<int>(rng.next_below(100));
    const double sigma_min = rng.next_double();
    std::vector<Vec3> points;
    for (int i = 0; i < n; ++i) {
      points.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
    }
    const std::vector<int> kept = rejection_filter(grid, points, sigma_min, 20);
    std::vector<int> expected;
    for (int i = 0; i < n; ++i) {
      if (grid.value_at(points[i]) >= sigma_min || i % 20 == 10) expected.push_back(i);
    }
    CHECK(kept == expected);
  }
}

TEST_CASE("global update baseline replaces values from the field") {
  OccupancyGrid grid(8, 0.7f);
  global_update_baseline(grid, [](const Vec3&) { return 0.0; }, 2, 64, Rng(4));
  for (float v : grid.values()) CHECK(v == 0.0f);

  OccupancyGrid grid2(8, 0.0f);
  global_update_baseline(grid2, [](const Vec3&) { return 1e6; }, 2, 64, Rng(4));
  for (float v : grid2.values()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("global update samples points inside each voxel") {
  OccupancyGrid grid(4, 0.0f);
  // Density only inside voxel (2,1,3): score 1 there, 0 elsewhere.
  auto density = [](const Vec3& x) {
    const bool inside = x.x() >= 0.5 && x.x() < 0.75 && x.y() >= 0.25 && x.y() < 0.5 &&
                        x.z() >= 0.75;
    return inside ? 1e9 : 0.0;
  };
  global_update_baseline(grid, density, 4, 64, Rng(11));
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        if (i == 2 && j == 1 && k == 3) {
          CHECK(grid.at(i, j, k) == doctest::Approx(1.0));
        } else {
          CHECK(grid.at(i, j, k) == 0.0f);
        }
      }
}

TEST_CASE("grid debug dump round-trips") {
  OccupancyGrid grid = random_grid(8, 21);
  grid.frame_index = 7;
  const auto raw = std::filesystem::temp_directory_path() / "sfield_grid_test.raw";
  save_grid_debug(grid, raw);
  const OccupancyGrid back = load_grid_debug(raw);
  CHECK(back.resolution() == 8);
  CHECK(back.frame_index == 7);
  CHECK(back.values() == grid.values());
  std::filesystem::remove(raw);
  auto sidecar = raw;
  sidecar.replace_extension(".json");
  std::filesystem::remove(sidecar);
}

TEST_CASE("sampler config validation") {
  SamplerConfig config;
  CHECK_NOTHROW(config.validate());
  config.rescue_interval = 0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SamplerConfig{};
  config.sigma_min_floor = 2.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SamplerConfig{};
  config.sigma_min_start = 0.01;  // below the floor
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
