#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sfield/geometry.hpp"
#include "sfield/image.hpp"
#include "sfield/rng.hpp"
#include "sfield/scene.hpp"

using namespace sfield;
namespace fs = std::filesystem;

namespace {

Camera look_at_center() {
  const CameraRig rig = make_forward_facing_rig(1, 1, 0.0, 1.6, Vec3(0.5, 0.5, 0.5));
  return rig.test_cameras.at(0);
}

SceneSpec one_sphere(double density, double radius = 0.2) {
  SceneSpec spec;
  spec.background = Vec3(0.1, 0.2, 0.3);
  Primitive p;
  p.shape = Primitive::Shape::Sphere;
  p.color = Vec3(0.8, 0.4, 0.2);
  p.density = density;
  p.radius = radius;
  p.waypoints = {Vec3(0.5, 0.5, 0.5)};
  spec.primitives = {p};
  spec.frame_count = 1;
  return spec;
}

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("sfield_scene_") + tag);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("png round-trip stays within 8-bit quantization") {
  Image img(17, 9);
  Rng rng(5);
  for (float& v : img.data) v = static_cast<float>(rng.next_double());
  const fs::path path = fs::temp_directory_path() / "sfield_rt.png";
  save_png_rgb8(img, path);
  const Image back = load_png_rgb8(path);
  fs::remove(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  float max_err = 0.f;
  for (size_t i = 0; i < img.data.size(); ++i) {
    max_err = std::max(max_err, std::abs(img.data[i] - back.data[i]));
  }
  CHECK(max_err <= 1.0f / 510.0f + 1e-7f);
}

TEST_CASE("empty scene renders the background everywhere") {
  SceneSpec spec;
  spec.background = Vec3(0.25, 0.5, 0.75);
  spec.frame_count = 1;
  const Image img = oracle_render(spec, look_at_center(), 0);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Vec3 px = img.pixel(u, v);
      CHECK(px.isApprox(spec.background, 1e-12));
    }
  }
}

TEST_CASE("chord with optical depth ln 2 blends color and background equally") {
  // Central ray crosses the full diameter: L = 2r, so density ln(2)/(2r)
  // gives alpha = 1 - e^{-ln 2} = 0.5 exactly.
  const double radius = 0.2;
  const SceneSpec spec = one_sphere(std::log(2.0) / (2.0 * radius), radius);
  const Camera cam = look_at_center();
  const Image img = oracle_render(spec, cam, 0);
  const Projection center = project_point(cam, Vec3(0.5, 0.5, 0.5));
  REQUIRE(center.valid);
  const Vec3 expected = 0.5 * spec.primitives[0].color + 0.5 * spec.background;
  const Vec3 got = img.pixel(static_cast<int>(center.uv.x()), static_cast<int>(center.uv.y()));
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-3);  // half-pixel off-axis chord
}

TEST_CASE("opaque sphere silhouette matches the projected disc radius") {
  const SceneSpec spec = one_sphere(1e4, 0.2);
  const Camera cam = look_at_center();
  const Image img = oracle_render(spec, cam, 0);
  // Pinhole view of a sphere at distance d subtends asin(r/d); the disc
  // radius in pixels is fx * tan(asin(r/d)).
  const double d = (cam.center() - Vec3(0.5, 0.5, 0.5)).norm();
  const double pix_radius = cam.fx * std::tan(std::asin(0.2 / d));
  int count = 0;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      if ((img.pixel(u, v) - spec.background).norm() > 1e-3) ++count;
    }
  }
  const double r_measured = std::sqrt(count / kPi);
  CHECK(std::abs(r_measured - pix_radius) <= 1.0);
}

TEST_CASE("two disjoint primitives match numeric quadrature of the volume integral") {
  SceneSpec spec;
  spec.background = Vec3(0.05, 0.05, 0.1);
  Primitive a;
  a.shape = Primitive::Shape::Sphere;
  a.color = Vec3(0.9, 0.2, 0.1);
  a.density = 6.0;
  a.radius = 0.12;
  a.waypoints = {Vec3(0.5, 0.5, 0.35)};
  Primitive b;
  b.shape = Primitive::Shape::Box;
  b.color = Vec3(0.1, 0.6, 0.9);
  b.density = 11.0;
  b.half_extents = Vec3(0.1, 0.1, 0.07);
  b.waypoints = {Vec3(0.5, 0.5, 0.72)};
  spec.primitives = {a, b};
  spec.frame_count = 1;

  const Camera cam = look_at_center();
  const Image img = oracle_render(spec, cam, 0);

  // Fine Riemann quadrature of the volume-rendering integral along a few rays.
  auto density_color = [&](const Vec3& x, Vec3& color) {
    double sigma = 0.0;
    color = Vec3::Zero();
    if ((x - a.waypoints[0]).norm() <= a.radius) {
      sigma = a.density;
      color = a.color;
    } else if (((x - b.waypoints[0]).cwiseAbs() - b.half_extents).maxCoeff() <= 0.0) {
      sigma = b.density;
      color = b.color;
    }
    return sigma;
  };
  Rng rng(9);
  for (int trial = 0; trial < 12; ++trial) {
    const int u = 20 + static_cast<int>(rng.next_below(24));
    const int v = 20 + static_cast<int>(rng.next_below(24));
    const Ray ray = ray_for_pixel(cam, u, v);
    const int n = 40000;
    const double t0 = 0.5, t1 = 3.0;
    const double dt = (t1 - t0) / n;
    double T = 1.0;
    Vec3 acc = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const Vec3 x = ray.origin + (t0 + (i + 0.5) * dt) * ray.direction;
      Vec3 c;
      const double s = density_color(x, c);
      if (s > 0.0) {
        const double w = T * (1.0 - std::exp(-s * dt));
        acc += w * c;
        T *= std::exp(-s * dt);
      }
    }
    acc += T * spec.background;
    const Vec3 got = img.pixel(u, v);
    CHECK((got - acc).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("static spec renders identical frames") {
  SceneSpec spec = one_sphere(30.0);
  spec.frame_count = 3;
  const Camera cam = look_at_center();
  const Image f0 = oracle_render(spec, cam, 0);
  const Image f2 = oracle_render(spec, cam, 2);
  CHECK(f0.data == f2.data);
}

TEST_CASE("moving primitive follows its piecewise-linear path") {
  Primitive p;
  p.waypoints = {Vec3(0.2, 0.5, 0.5), Vec3(0.6, 0.5, 0.5), Vec3(0.6, 0.9, 0.5)};
  CHECK(p.position_at(0, 5).isApprox(Vec3(0.2, 0.5, 0.5)));
  CHECK(p.position_at(4, 5).isApprox(Vec3(0.6, 0.9, 0.5)));
  CHECK(p.position_at(2, 5).isApprox(Vec3(0.6, 0.5, 0.5)));  // middle waypoint
  CHECK(p.position_at(1, 5).isApprox(Vec3(0.4, 0.5, 0.5)));  // halfway on segment 0
}

TEST_CASE("scene validation rejects primitives leaving the unit cube") {
  SceneSpec spec = one_sphere(10.0);
  spec.primitives[0].waypoints = {Vec3(0.95, 0.5, 0.5)};  // radius 0.2 pokes out
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = one_sphere(10.0);
  spec.primitives[0].density = -1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("dataset write/load round-trip within quantization") {
  const CameraRig rig = make_forward_facing_rig(2, 2, 30.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                                RigOptions{.width = 16, .height = 16});
  SceneSpec spec = one_sphere(40.0);
  spec.frame_count = 2;
  const Dataset ds = generate_scene(spec, rig);
  const fs::path dir = temp_dir("rt");
  write_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  REQUIRE(back.frames.size() == ds.frames.size());
  REQUIRE(back.rig.train_cameras.size() == 4);
  REQUIRE(back.rig.test_cameras.size() == 1);
  CHECK(back.background.isApprox(spec.background, 1e-6));
  float max_err = 0.f;
  for (size_t k = 0; k < ds.frames.size(); ++k) {
    for (size_t c = 0; c < ds.frames[k].train_images.size(); ++c) {
      const auto& orig = ds.frames[k].train_images[c].data;
      const auto& load = back.frames[k].train_images[c].data;
      REQUIRE(orig.size() == load.size());
      for (size_t i = 0; i < orig.size(); ++i) {
        max_err = std::max(max_err, std::abs(orig[i] - load[i]));
      }
    }
  }
  CHECK(max_err <= 1.0f / 510.0f + 1e-7f);
  fs::remove_all(dir);
}

TEST_CASE("loading a dataset with a missing frame names camera and frame") {
  const CameraRig rig = make_forward_facing_rig(1, 2, 20.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                                RigOptions{.width = 8, .height = 8});
  SceneSpec spec = one_sphere(40.0);
  spec.frame_count = 2;
  const Dataset ds = generate_scene(spec, rig);
  const fs::path dir = temp_dir("missing");
  write_dataset(ds, dir);
  fs::remove(dir / "frames" / "train_r0c1" / "00001.png");
  try {
    load_dataset(dir);
    FAIL("expected a load error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("train_r0c1") != std::string::npos);
    CHECK(msg.find("00001") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("generate_scene is deterministic") {
  const CameraRig rig = make_forward_facing_rig(1, 2, 20.0, 1.6, Vec3(0.5, 0.5, 0.5),
                                                RigOptions{.width = 12, .height = 12});
  SceneSpec spec = one_sphere(25.0);
  spec.frame_count = 2;
  const Dataset a = generate_scene(spec, rig);
  const Dataset b = generate_scene(spec, rig);
  for (size_t k = 0; k < a.frames.size(); ++k) {
    for (size_t c = 0; c < a.frames[k].train_images.size(); ++c) {
      CHECK(a.frames[k].train_images[c].data == b.frames[k].train_images[c].data);
    }
  }
}

TEST_CASE("scene file parser builds spec and rig") {
  const std::string text = R"(
frame_count 4
background 0.1 0.1 0.2
rig_rows 2
rig_cols 2
rig_width 32
rig_height 24
primitive sphere color 0.9 0.1 0.1 density 12 radius 0.1 path 0.3 0.5 0.5 0.7 0.5 0.5
primitive box color 0.1 0.9 0.1 density 5 half_extents 0.05 0.05 0.05 path 0.5 0.3 0.5
)";
  const SceneFile file = parse_scene_text(text);
  CHECK(file.spec.frame_count == 4);
  CHECK(file.spec.background.isApprox(Vec3(0.1, 0.1, 0.2)));
  REQUIRE(file.spec.primitives.size() == 2);
  CHECK(file.spec.primitives[0].shape == Primitive::Shape::Sphere);
  CHECK(file.spec.primitives[0].waypoints.size() == 2);
  CHECK(file.spec.primitives[1].shape == Primitive::Shape::Box);
  CHECK(file.rig_rows == 2);
  const CameraRig rig = file.make_rig();
  CHECK(rig.train_cameras.size() == 4);
  CHECK(rig.train_cameras[0].width == 32);
  CHECK(rig.train_cameras[0].height == 24);
  CHECK_THROWS(parse_scene_text("frame_count 2\nnot_a_key 1\n"));
}
