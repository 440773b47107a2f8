#include "sfield/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sfield/parallel.hpp"
#include "sfield/projcolor.hpp"

namespace sfield {

UniformSamples sample_uniform(double near, double far, int n, bool deterministic, Rng rng) {
  if (!(near < far)) throw std::invalid_argument("sample_uniform: need near < far");
  if (n < 1) throw std::invalid_argument("sample_uniform: need n >= 1");
  UniformSamples s;
  s.delta = (far - near) / n;
  s.t.resize(n);
  for (int i = 0; i < n; ++i) {
    const double u = deterministic ? 0.5 : rng.next_double();
    s.t[i] = near + (i + u) * s.delta;
  }
  return s;
}

bool clip_ray_to_cube(const Ray& ray, double near, double far, double& t0, double& t1) {
  t0 = near;
  t1 = far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-12) {
      if (o < 0.0 || o > 1.0) return false;
      continue;
    }
    double ta = (0.0 - o) / d;
    double tb = (1.0 - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

namespace {

void check_composite_args(Eigen::Ref<const Eigen::ArrayXd> sigma,
                          Eigen::Ref<const Eigen::Matrix3Xd> color,
                          Eigen::Ref<const Eigen::ArrayXd> delta,
                          Eigen::Ref<const Eigen::ArrayXd> t) {
  const Eigen::Index n = sigma.size();
  if (color.cols() != n || delta.size() != n || t.size() != n) {
    throw std::invalid_argument("composite: mismatched sample arrays");
  }
  if (n > 0 && (sigma.minCoeff() < 0.0 || delta.minCoeff() < 0.0)) {
    throw std::invalid_argument("composite: negative sigma or delta");
  }
}

}  // namespace

RenderResult composite(Eigen::Ref<const Eigen::ArrayXd> sigma,
                       Eigen::Ref<const Eigen::Matrix3Xd> color,
                       Eigen::Ref<const Eigen::ArrayXd> delta,
                       Eigen::Ref<const Eigen::ArrayXd> t, const Vec3& background) {
  check_composite_args(sigma, color, delta, t);
  RenderResult r;
  double T = 1.0;
  Vec3 csum = Vec3::Zero();
  double wsum = 0.0, dsum = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double att = std::exp(-sigma(i) * delta(i));
    const double w = T * (1.0 - att);
    csum += w * color.col(i);
    dsum += w * t(i);
    wsum += w;
    T *= att;
  }
  r.color = csum + T * background;
  r.final_transmittance = T;
  r.expected_depth = dsum / std::max(wsum, 1e-10);
  r.sample_count = static_cast<int>(sigma.size());
  return r;
}

void composite_backward(Eigen::Ref<const Eigen::ArrayXd> sigma,
                        Eigen::Ref<const Eigen::Matrix3Xd> color,
                        Eigen::Ref<const Eigen::ArrayXd> delta,
                        Eigen::Ref<const Eigen::ArrayXd> t,
                        const Vec3& background, const Vec3& d_color_out, double d_depth_out,
                        Eigen::Ref<Eigen::ArrayXd> d_sigma,
                        Eigen::Ref<Eigen::Matrix3Xd> d_color) {
  check_composite_args(sigma, color, delta, t);
  const Eigen::Index n = sigma.size();
  if (d_sigma.size() != n || d_color.cols() != n) {
    throw std::invalid_argument("composite_backward: gradient arrays not pre-sized");
  }
  // Forward quantities: T_i before each sample, weights, totals.
  Eigen::ArrayXd T_before(n);
  Eigen::ArrayXd w(n);
  double T = 1.0;
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    T_before(i) = T;
    const double att = std::exp(-sigma(i) * delta(i));
    w(i) = T * (1.0 - att);
    wsum += w(i);
    T *= att;
  }
  const double T_final = T;
  const double denom = std::max(wsum, 1e-10);
  const bool denom_active = wsum > 1e-10;  // gradient of max() picks wsum only then
  double depth_num = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) depth_num += w(i) * t(i);

  // Suffix accumulators: everything downstream of sample i that carries its
  // transmittance factor.
  Vec3 suffix_c = T_final * background;
  double suffix_t = 0.0;
  double suffix_w = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double T_next = T_before(i) * std::exp(-sigma(i) * delta(i));
    d_color.col(i) += w(i) * d_color_out;

    // d color_out / d sigma_i
    const Vec3 dc = T_next * color.col(i) - suffix_c;
    double g = d_color_out.dot(dc) * delta(i);

    // d expected_depth / d sigma_i
    if (d_depth_out != 0.0) {
      const double d_num = delta(i) * (T_next * t(i) - suffix_t);
      const double d_den = denom_active ? delta(i) * (T_next - suffix_w) : 0.0;
      g += d_depth_out * (d_num * denom - depth_num * d_den) / (denom * denom);
    }
    d_sigma(i) += g;

    suffix_c += w(i) * color.col(i);
    suffix_t += w(i) * t(i);
    suffix_w += w(i);
  }
}

Eigen::MatrixXd build_conditioning(const FrameContext& ctx, const Eigen::Matrix3Xd& positions) {
  const FieldConfig& config = ctx.params->config;
  const int B = static_cast<int>(positions.cols());
  switch (config.conditioning) {
    case Conditioning::kProjectedColor: {
      if (!ctx.rig || !ctx.observation) {
        throw std::logic_error("projected-color conditioning needs rig and observation");
      }
      Eigen::MatrixXd cond(6, B);
      for (int s = 0; s < B; ++s) {
        const ProjectedColorStats stats =
            projected_color_stats(positions.col(s), *ctx.observation, *ctx.rig);
        cond.col(s) = conditioning_from_stats(stats);
      }
      return cond;
    }
    case Conditioning::kTime: {
      Eigen::VectorXd enc(2 * config.time_octaves);
      frequency_encode(ctx.time, config.time_octaves, enc.data());
      return enc.replicate(1, B);
    }
    case Conditioning::kNone:
      return Eigen::MatrixXd(0, B);
  }
  throw std::logic_error("unknown conditioning");
}

int sample_one_ray(const Ray& ray, double near, double far, int n, bool deterministic,
                   Rng rng, const OccupancyGrid* grid, double sigma_min, int rescue_interval,
                   std::vector<Vec3>& positions, std::vector<double>& ts,
                   std::vector<double>& deltas) {
  double t0, t1;
  if (!clip_ray_to_cube(ray, near, far, t0, t1)) return 0;
  const UniformSamples s = sample_uniform(t0, t1, n, deterministic, rng);
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    Vec3 x = ray.origin + s.t[i] * ray.direction;
    x = x.cwiseMax(0.0).cwiseMin(1.0);  // clip endpoints graze the cube faces
    if (grid && !keep_sample(grid->value_at(x), sigma_min, i, rescue_interval)) continue;
    positions.push_back(x);
    ts.push_back(s.t[i]);
    deltas.push_back(s.delta);
    ++kept;
  }
  return kept;
}

namespace {

// Marching state of one pixel's ray while its samples are consumed in
// segments (keeps field evaluation batched without losing early termination).
struct RayState {
  int offset = 0;
  int count = 0;
  int cursor = 0;
  double T = 1.0;
  Vec3 csum = Vec3::Zero();
  double wsum = 0.0;
  double dsum = 0.0;
};

constexpr int kSegment = 32;  // samples marched per ray per field batch

}  // namespace

RenderOutput render_image(const FrameContext& ctx, const OccupancyGrid* grid,
                          const Camera& camera, const RenderConfig& config) {
  if (!ctx.params) throw std::logic_error("render_image: missing field params");
  const int w = camera.width, h = camera.height;
  RenderOutput out;
  out.image = Image(w, h);
  out.depth.assign(static_cast<size_t>(w) * h, 0.0f);

  const int pixel_count = w * h;
  std::vector<long long> chunk_kept(kParallelChunks, 0);
  const Rng base(config.seed);

  parallel_chunks(0, pixel_count, [&](int chunk, int lo, int hi) {
    std::vector<Vec3> positions;
    std::vector<double> ts, deltas;
    std::vector<RayState> states(hi - lo);
    std::vector<Ray> rays(hi - lo);
    for (int p = lo; p < hi; ++p) {
      const int u = p % w, v = p / w;
      rays[p - lo] = ray_for_pixel(camera, u, v);
      RayState& st = states[p - lo];
      st.offset = static_cast<int>(positions.size());
      st.count = sample_one_ray(rays[p - lo], camera.near_plane, camera.far_plane,
                                config.samples_per_ray, config.deterministic, base.fork(p),
                                grid, config.sigma_min, config.rescue_interval, positions, ts,
                                deltas);
      chunk_kept[chunk] += st.count;
    }

    // March all rays of the chunk together, one segment per pass.
    std::vector<int> batch_ray;  // state index per batch entry group
    std::vector<int> batch_lo, batch_n;
    for (;;) {
      batch_ray.clear();
      batch_lo.clear();
      batch_n.clear();
      int total = 0;
      for (size_t r = 0; r < states.size(); ++r) {
        RayState& st = states[r];
        if (st.cursor >= st.count) continue;
        if (config.min_transmittance > 0.0 && st.T < config.min_transmittance) continue;
        const int take = std::min(kSegment, st.count - st.cursor);
        batch_ray.push_back(static_cast<int>(r));
        batch_lo.push_back(st.offset + st.cursor);
        batch_n.push_back(take);
        total += take;
      }
      if (total == 0) break;

      FieldBatch fb;
      fb.positions.resize(3, total);
      fb.directions.resize(3, total);
      Eigen::ArrayXd seg_t(total);
      Eigen::ArrayXd seg_delta(total);
      int cursor = 0;
      for (size_t g = 0; g < batch_ray.size(); ++g) {
        const Vec3 dir = rays[batch_ray[g]].direction;
        for (int k = 0; k < batch_n[g]; ++k) {
          fb.positions.col(cursor) = positions[batch_lo[g] + k];
          fb.directions.col(cursor) = dir;
          seg_t(cursor) = ts[batch_lo[g] + k];
          seg_delta(cursor) = deltas[batch_lo[g] + k];
          ++cursor;
        }
      }
      fb.conditioning = build_conditioning(ctx, fb.positions);
      const ForwardResult fr = field_forward(*ctx.params, fb, nullptr);

      cursor = 0;
      for (size_t g = 0; g < batch_ray.size(); ++g) {
        RayState& st = states[batch_ray[g]];
        for (int k = 0; k < batch_n[g]; ++k, ++cursor) {
          if (config.min_transmittance > 0.0 && st.T < config.min_transmittance) continue;
          const double att = std::exp(-fr.sigma(cursor) * seg_delta(cursor));
          const double wgt = st.T * (1.0 - att);
          st.csum += wgt * fr.color.col(cursor);
          st.dsum += wgt * seg_t(cursor);
          st.wsum += wgt;
          st.T *= att;
          ++st.cursor;
        }
      }
    }

    for (int p = lo; p < hi; ++p) {
      const RayState& st = states[p - lo];
      const Vec3 c = st.csum + st.T * config.background;
      out.image.set_pixel(p % w, p / w, c);
      out.depth[p] = static_cast<float>(st.dsum / std::max(st.wsum, 1e-10));
    }
  });

  long long kept = 0;
  for (long long k : chunk_kept) kept += k;
  out.mean_samples_per_ray = pixel_count > 0 ? static_cast<double>(kept) / pixel_count : 0.0;
  return out;
}

void save_depth_png(const std::vector<float>& depth, int width, int height, double far_plane,
                    const std::filesystem::path& path) {
  std::vector<float> scaled(depth.size());
  const float inv = far_plane > 0.0 ? static_cast<float>(1.0 / far_plane) : 1.0f;
  for (size_t i = 0; i < depth.size(); ++i) scaled[i] = depth[i] * inv;
  save_png_gray16(scaled, width, height, path);
}

}  // namespace sfield
