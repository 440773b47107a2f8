#include <benchmark/benchmark.h>

#include "sfield/field.hpp"
#include "sfield/occgrid.hpp"
#include "sfield/renderer.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

FieldBatch random_batch(const FieldConfig& config, int n, Rng rng) {
  FieldBatch batch;
  batch.positions.resize(3, n);
  batch.directions.resize(3, n);
  batch.conditioning.resize(config.conditioning_dim(), n);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < 3; ++r) {
      batch.positions(r, i) = rng.next_double();
      batch.directions(r, i) = rng.next_double() * 2.0 - 1.0;
    }
    batch.positions.col(i) *= 0.999;
    batch.directions.col(i).normalize();
    for (int r = 0; r < config.conditioning_dim(); ++r) {
      batch.conditioning(r, i) = rng.next_double();
    }
  }
  return batch;
}

void bm_field_forward(benchmark::State& state) {
  FieldConfig config;
  const FieldParams params = FieldParams::init(config, Rng(7));
  const FieldBatch batch = random_batch(config, static_cast<int>(state.range(0)), Rng(11));
  for (auto _ : state) {
    ForwardResult out = field_forward(params, batch, nullptr);
    benchmark::DoNotOptimize(out.sigma.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_field_forward)->Arg(1024)->Arg(8192);

void bm_field_backward(benchmark::State& state) {
  FieldConfig config;
  const FieldParams params = FieldParams::init(config, Rng(7));
  const int n = static_cast<int>(state.range(0));
  const FieldBatch batch = random_batch(config, n, Rng(11));
  GradientTape tape;
  field_forward(params, batch, &tape);
  const Eigen::ArrayXd d_sigma = Eigen::ArrayXd::Constant(n, 1e-3);
  const Eigen::Matrix3Xd d_color = Eigen::Matrix3Xd::Constant(3, n, 1e-3);
  FieldGradients grads(config);
  for (auto _ : state) {
    grads.tensors.set_zero();
    field_backward(params, tape, d_sigma, d_color, grads);
    benchmark::DoNotOptimize(grads.tensors.trunk_w[0].data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_field_backward)->Arg(1024)->Arg(8192);

void bm_composite(benchmark::State& state) {
  const int n = 128;
  Rng rng(3);
  Eigen::ArrayXd sigma(n), delta(n), t(n);
  Eigen::Matrix3Xd color(3, n);
  for (int i = 0; i < n; ++i) {
    sigma[i] = rng.next_double() * 10.0;
    delta[i] = 1.0 / n;
    t[i] = (i + 0.5) / n;
    color.col(i) = Vec3(rng.next_double(), rng.next_double(), rng.next_double());
  }
  for (auto _ : state) {
    RenderResult r = composite(sigma, color, delta, t);
    benchmark::DoNotOptimize(r.color);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_composite);

void bm_grid_transition(benchmark::State& state) {
  OccupancyGrid grid(64, 0.0f);
  Rng rng(5);
  for (float& v : grid.values()) v = static_cast<float>(rng.next_double());
  const TransitionKernel kernel = TransitionKernel::gaussian(0.8);
  for (auto _ : state) {
    transition(grid, kernel);
    benchmark::DoNotOptimize(grid.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 64 * 64 * 64);
}
BENCHMARK(bm_grid_transition);

}  // namespace

BENCHMARK_MAIN();
