#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sfield/projcolor.hpp"
#include "sfield/rng.hpp"
#include "sfield/scene.hpp"

using namespace sfield;

namespace {

Image ramp_image(int w, int h) {
  Image img(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      img.set_pixel(u, v, Vec3(u / double(w), v / double(h), (u + v) % 2));
    }
  }
  return img;
}

Image constant_image(int w, int h, const Vec3& c) {
  Image img(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) img.set_pixel(u, v, c);
  }
  return img;
}

}  // namespace

TEST_CASE("bilinear sample at a pixel center returns that pixel") {
  const Image img = ramp_image(8, 6);
  for (int v = 0; v < 6; ++v) {
    for (int u = 0; u < 8; ++u) {
      const Vec3 got = bilinear_sample(img, Vec2(u + 0.5, v + 0.5));
      CHECK((got - img.pixel(u, v)).norm() == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilinear sample at a 2x2 midpoint averages the block") {
  const Image img = ramp_image(8, 6);
  const Vec3 got = bilinear_sample(img, Vec2(3.0, 4.0));  // corner between pixels 2,3 / 3,4
  const Vec3 expected = 0.25 * (img.pixel(2, 3) + img.pixel(3, 3) + img.pixel(2, 4) + img.pixel(3, 4));
  CHECK((got - expected).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bilinear sample matches the explicit 4-weight formula") {
  const Image img = ramp_image(11, 7);
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const double u = rng.next_double() * 11.0;
    const double v = rng.next_double() * 7.0;
    // Weights around the four nearest pixel centers, clamped at the border.
    const double su = u - 0.5, sv = v - 0.5;
    const int u0 = std::clamp(static_cast<int>(std::floor(su)), 0, 10);
    const int v0 = std::clamp(static_cast<int>(std::floor(sv)), 0, 6);
    const int u1 = std::min(u0 + 1, 10);
    const int v1 = std::min(v0 + 1, 6);
    const double fu = std::clamp(su - std::floor(su), 0.0, 1.0);
    const double fv = std::clamp(sv - std::floor(sv), 0.0, 1.0);
    const double wu = (su < 0.0) ? 0.0 : (su >= 10.0 ? 1.0 : fu);
    const double wv = (sv < 0.0) ? 0.0 : (sv >= 6.0 ? 1.0 : fv);
    const Vec3 expected = (1 - wu) * (1 - wv) * img.pixel(u0, v0) +
                          wu * (1 - wv) * img.pixel(u1, v0) +
                          (1 - wu) * wv * img.pixel(u0, v1) + wu * wv * img.pixel(u1, v1);
    const Vec3 got = bilinear_sample(img, Vec2(u, v));
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("bilinear sample rejects out-of-bounds uv") {
  const Image img = ramp_image(4, 4);
  CHECK_THROWS_AS(bilinear_sample(img, Vec2(-0.01, 2.0)), std::out_of_range);
  CHECK_THROWS_AS(bilinear_sample(img, Vec2(4.0, 2.0)), std::out_of_range);
  CHECK_NOTHROW(bilinear_sample(img, Vec2(3.999, 3.999)));
  CHECK_NOTHROW(bilinear_sample(img, Vec2(0.0, 0.0)));
}

TEST_CASE("constant observations give zero variance and the constant mean") {
  const CameraRig rig = make_forward_facing_rig(2, 3, 30.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                                RigOptions{.width = 16, .height = 16});
  const Vec3 c(0.3, 0.6, 0.9);
  FrameObservation frame;
  for (size_t i = 0; i < rig.train_cameras.size(); ++i) {
    frame.train_images.push_back(constant_image(16, 16, c));
  }
  const ProjectedColorStats stats = projected_color_stats(Vec3(0.5, 0.5, 0.5), frame, rig);
  CHECK(stats.valid_count == 6);
  // Images store float, so the mean comes back float-rounded.
  const Vec3 cf = c.cast<float>().cast<double>();
  CHECK((stats.mean - cf).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(stats.variance.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-point population variance") {
  // Two cameras, one black one white image: mean 0.5, variance 0.25.
  CameraRig rig = make_forward_facing_rig(1, 2, 20.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                          RigOptions{.width = 8, .height = 8});
  rig.train_cameras.resize(2);
  FrameObservation frame;
  frame.train_images.push_back(constant_image(8, 8, Vec3::Zero()));
  frame.train_images.push_back(constant_image(8, 8, Vec3::Ones()));
  const ProjectedColorStats stats = projected_color_stats(Vec3(0.5, 0.5, 0.5), frame, rig);
  REQUIRE(stats.valid_count == 2);
  CHECK((stats.mean - Vec3(0.5, 0.5, 0.5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((stats.variance - Vec3(0.25, 0.25, 0.25)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stats match a per-camera enumeration oracle on the valid subset") {
  const CameraRig rig = make_forward_facing_rig(3, 4, 40.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                                RigOptions{.width = 24, .height = 24});
  FrameObservation frame;
  Rng img_rng(23);
  for (size_t i = 0; i < rig.train_cameras.size(); ++i) {
    Image img(24, 24);
    for (float& f : img.data) f = static_cast<float>(img_rng.next_double());
    frame.train_images.push_back(std::move(img));
  }
  Rng rng(31);
  int exercised_partial = 0;
  for (int trial = 0; trial < 100; ++trial) {
    // Positions biased to the cube faces so some projections fall outside.
    Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    if (trial % 2 == 0) x[trial % 3] = rng.next_double() < 0.5 ? 0.001 : 0.999;
    const ProjectedColorStats stats = projected_color_stats(x, frame, rig);

    int n = 0;
    Vec3 sum = Vec3::Zero(), sum_sq = Vec3::Zero();
    for (size_t c = 0; c < rig.train_cameras.size(); ++c) {
      const Projection p = project_point(rig.train_cameras[c], x);
      if (!p.valid) continue;
      const Vec3 s = bilinear_sample(frame.train_images[c], p.uv);
      sum += s;
      sum_sq += s.cwiseProduct(s);
      ++n;
    }
    CHECK(stats.valid_count == n);
    if (n == 0) {
      CHECK(stats.mean.isZero());
      CHECK(stats.variance.isApprox(Vec3::Ones()));
      continue;
    }
    if (n < static_cast<int>(rig.train_cameras.size())) ++exercised_partial;
    const Vec3 mean = sum / n;
    const Vec3 var = (sum_sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
    CHECK((stats.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((stats.variance - var).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(stats.variance.minCoeff() >= 0.0);
  }
  CHECK(exercised_partial > 0);
}

TEST_CASE("no valid projection yields the uncertainty sentinel") {
  CameraRig rig = make_forward_facing_rig(1, 1, 0.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                          RigOptions{.width = 8, .height = 8});
  rig.train_cameras[0].rotation = Mat3::Identity();  // stare along +z from origin
  rig.train_cameras[0].translation = Vec3(0, 0, -10.0);
  FrameObservation frame;
  frame.train_images.push_back(constant_image(8, 8, Vec3::Ones()));
  // A point behind this camera.
  const ProjectedColorStats stats =
      projected_color_stats(Vec3(0.5, 0.5, -20.0), frame, rig);
  CHECK(stats.valid_count == 0);
  CHECK(stats.mean.isZero());
  CHECK(stats.variance.isApprox(Vec3::Ones()));
}

TEST_CASE("camera order does not change the stats") {
  CameraRig rig = make_forward_facing_rig(2, 3, 35.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                          RigOptions{.width = 12, .height = 12});
  FrameObservation frame;
  Rng img_rng(7);
  for (size_t i = 0; i < rig.train_cameras.size(); ++i) {
    Image img(12, 12);
    for (float& f : img.data) f = static_cast<float>(img_rng.next_double());
    frame.train_images.push_back(std::move(img));
  }
  CameraRig reversed = rig;
  std::reverse(reversed.train_cameras.begin(), reversed.train_cameras.end());
  FrameObservation rev_frame;
  rev_frame.train_images.assign(frame.train_images.rbegin(), frame.train_images.rend());

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    const ProjectedColorStats a = projected_color_stats(x, frame, rig);
    const ProjectedColorStats b = projected_color_stats(x, rev_frame, reversed);
    CHECK(a.valid_count == b.valid_count);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-12);
  }
}
