#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sfield/geometry.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

Camera axis_camera() {
  Camera cam;
  cam.id = "axis";
  cam.width = 64;
  cam.height = 48;
  cam.fx = 70.0;
  cam.fy = 70.0;
  cam.cx = 32.0;
  cam.cy = 24.0;
  cam.rotation = Mat3::Identity();
  cam.translation = Vec3::Zero();
  return cam;
}

}  // namespace

TEST_CASE("project then cast returns the same direction") {
  const CameraRig rig = make_forward_facing_rig(3, 4, 40.0, 1.6, Vec3(0.5, 0.5, 0.5));
  Rng rng(41);
  for (const Camera& cam : rig.train_cameras) {
    for (int trial = 0; trial < 50; ++trial) {
      const Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
      const Projection p = project_point(cam, x);
      if (!p.valid) continue;
      const Ray ray = ray_for_pixel(cam, p.uv.x() - 0.5, p.uv.y() - 0.5);
      const Vec3 to_x = (x - ray.origin).normalized();
      CHECK(ray.direction.dot(to_x) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(p.depth == doctest::Approx((cam.rotation * x + cam.translation).z()));
    }
  }
}

TEST_CASE("principal point projects to the image center pixel") {
  const Camera cam = axis_camera();
  const Projection p = project_point(cam, Vec3(0, 0, 2.0));
  REQUIRE(p.valid);
  CHECK(p.uv.x() == doctest::Approx(32.0));
  CHECK(p.uv.y() == doctest::Approx(24.0));
  CHECK(p.depth == doctest::Approx(2.0));
}

TEST_CASE("known off-axis projection") {
  // Pinhole: u = fx * x/z + cx. x = 0.5, z = 2 -> u = 70 * 0.25 + 32 = 49.5.
  const Camera cam = axis_camera();
  const Projection p = project_point(cam, Vec3(0.5, -0.3, 2.0));
  REQUIRE(p.valid);
  CHECK(p.uv.x() == doctest::Approx(49.5));
  CHECK(p.uv.y() == doctest::Approx(24.0 - 70.0 * 0.15));
}

TEST_CASE("points behind the camera or outside the frame are invalid") {
  const Camera cam = axis_camera();
  CHECK_FALSE(project_point(cam, Vec3(0, 0, -1.0)).valid);
  CHECK_FALSE(project_point(cam, Vec3(0, 0, 0.0)).valid);
  CHECK_FALSE(project_point(cam, Vec3(5.0, 0, 2.0)).valid);  // u = 207, off frame
}

TEST_CASE("ray_for_pixel rejects out-of-image pixels") {
  const Camera cam = axis_camera();
  CHECK_THROWS_AS(ray_for_pixel(cam, -1.0, 0.0), std::out_of_range);
  CHECK_THROWS_AS(ray_for_pixel(cam, 0.0, 48.0), std::out_of_range);
  CHECK_NOTHROW(ray_for_pixel(cam, 63.9, 47.9));
}

TEST_CASE("rig cameras all look at the target from the requested distance") {
  const Vec3 target(0.5, 0.5, 0.5);
  const CameraRig rig = make_forward_facing_rig(3, 4, 40.0, 1.6, target);
  REQUIRE(rig.train_cameras.size() == 12);
  REQUIRE(rig.test_cameras.size() == 1);
  for (const Camera& cam : rig.train_cameras) {
    CHECK((cam.center() - target).norm() == doctest::Approx(1.6).epsilon(1e-9));
    const Vec3 toward = (target - cam.center()).normalized();
    CHECK(cam.optical_axis().dot(toward) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_NOTHROW(cam.validate());
  }
  // Test camera sits at the patch center: exactly on the distance sphere,
  // axis through the target.
  const Camera& test = rig.test_cameras[0];
  CHECK((test.center() - target).norm() == doctest::Approx(1.6).epsilon(1e-9));
}

TEST_CASE("rig camera ids are unique") {
  const CameraRig rig = make_forward_facing_rig(3, 4, 40.0, 1.6, Vec3(0.5, 0.5, 0.5));
  std::vector<std::string> ids;
  for (const Camera& c : rig.train_cameras) ids.push_back(c.id);
  for (const Camera& c : rig.test_cameras) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  CHECK(rig.find("train_r0c0") != nullptr);
  CHECK(rig.find("nope") == nullptr);
}

TEST_CASE("cameras.json round-trip preserves every field") {
  const CameraRig rig = make_forward_facing_rig(2, 3, 30.0, 1.4, Vec3(0.5, 0.4, 0.6));
  const auto path = std::filesystem::temp_directory_path() / "sfield_cams_test.json";
  save_cameras(rig, path);
  const CameraRig back = load_cameras(path);
  std::filesystem::remove(path);
  REQUIRE(back.train_cameras.size() == rig.train_cameras.size());
  REQUIRE(back.test_cameras.size() == rig.test_cameras.size());
  for (size_t i = 0; i < rig.train_cameras.size(); ++i) {
    const Camera& a = rig.train_cameras[i];
    const Camera& b = back.train_cameras[i];
    CHECK(a.id == b.id);
    CHECK(a.width == b.width);
    CHECK(a.height == b.height);
    CHECK(a.fx == doctest::Approx(b.fx).epsilon(1e-12));
    CHECK((a.rotation - b.rotation).norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((a.translation - b.translation).norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(a.near_plane == doctest::Approx(b.near_plane));
    CHECK(a.far_plane == doctest::Approx(b.far_plane));
  }
}

TEST_CASE("validate rejects malformed cameras") {
  Camera cam = axis_camera();
  cam.fx = -1.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = axis_camera();
  cam.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = axis_camera();
  cam.near_plane = 5.0;
  cam.far_plane = 1.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}
