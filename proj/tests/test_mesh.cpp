#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fer4d/error.hpp"
#include "fer4d/mesh.hpp"
#include "properties.hpp"

using namespace fer4d;

namespace {

LandmarkSet box_landmarks() {
  LandmarkSet lm;
  lm.left_face_bound = {-10, 0, 0};
  lm.right_face_bound = {10, 0, 0};
  lm.chin = {0, -10, 0};
  lm.nose_tip = {0, 0, 5};
  lm.left_eyebrow = {-3, 5, 0};
  lm.right_eyebrow = {3, 5, 0};
  return lm;
}

// Shell symmetric under x -> -x with symmetric landmarks.
ScanFrame symmetric_frame() {
  ScanFrame f;
  const int cols = 9, rows = 13;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = -20.0 + 5.0 * c, y = -30.0 + 5.0 * r;
      f.mesh.vertices.push_back({x, y, 30.0 - 0.01 * (x * x + y * y)});
      f.mesh.colors.push_back({0.5, 0.5, 0.5});
    }
  }
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const auto i = static_cast<std::uint32_t>(r * cols + c);
      f.mesh.faces.push_back({i, i + 1, i + cols});
      f.mesh.faces.push_back({i + 1, i + cols + 1, i + cols});
    }
  }
  f.landmarks.left_face_bound = {-18, 0, 26};
  f.landmarks.right_face_bound = {18, 0, 26};
  f.landmarks.chin = {0, -28, 22};
  f.landmarks.nose_tip = {0, -5, 31};
  f.landmarks.left_eyebrow = {-8, 10, 28};
  f.landmarks.right_eyebrow = {8, 10, 28};
  return f;
}

std::vector<Vertex3> sorted(std::vector<Vertex3> v) {
  std::sort(v.begin(), v.end(), [](const Vertex3& a, const Vertex3& b) {
    return std::tie(a.y, a.x, a.z) < std::tie(b.y, b.x, b.z);
  });
  return v;
}

}  // namespace

TEST_CASE("rotate_mesh: zero yaw is the identity") {
  const auto f = symmetric_frame();
  CHECK(rotate_mesh(f.mesh, 0.0) == f.mesh);
}

TEST_CASE("rotate_mesh: +90 deg takes +x to -z about the centroid") {
  FaceMesh m;
  m.vertices = {{1, 0, 0}, {-1, 0, 0}};
  const auto r = rotate_mesh(m, 90.0);
  CHECK(r.vertices[0].x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r.vertices[0].y == 0.0);
  CHECK(r.vertices[0].z == doctest::Approx(-1.0));
  CHECK(r.vertices[1].z == doctest::Approx(1.0));
}

TEST_CASE("rotate_mesh: non-finite yaw is a domain error") {
  const auto f = symmetric_frame();
  CHECK_THROWS_AS(rotate_mesh(f.mesh, NAN), Error);
}

TEST_CASE("crop_face: a mesh inside the box is unchanged") {
  FaceMesh m;
  m.vertices = {{0, 0, 0}, {1, 1, 1}, {-2, -3, 2}};
  m.faces = {{0, 1, 2}};
  CHECK(crop_face(m, box_landmarks()) == m);
}

TEST_CASE("crop_face: the single vertex below the chin is dropped") {
  FaceMesh m;
  m.vertices = {{0, 0, 0}, {1, 1, 1}, {-2, -3, 2}, {0, -11, 0}, {4, 2, 1}};
  m.faces = {{0, 1, 2}, {2, 3, 4}, {0, 1, 4}};
  const auto out = crop_face(m, box_landmarks());
  REQUIRE(out.vertex_count() == 4);
  CHECK(std::find(out.vertices.begin(), out.vertices.end(), Vertex3{0, -11, 0}) == out.vertices.end());
  CHECK(out.vertices == std::vector<Vertex3>{{0, 0, 0}, {1, 1, 1}, {-2, -3, 2}, {4, 2, 1}});
  // Faces touching the removed vertex disappear; the rest are re-indexed.
  CHECK(out.faces == std::vector<Face>{{0, 1, 2}, {0, 1, 3}});
}

TEST_CASE("crop_face: vertices on the box boundary are kept") {
  FaceMesh m;
  m.vertices = {{-10, -10, 0}, {10, 0, 0}};
  CHECK(crop_face(m, box_landmarks()).vertex_count() == 2);
}

TEST_CASE("crop_face: an empty result is a degenerate crop") {
  FaceMesh m;
  m.vertices = {{100, 0, 0}};
  try {
    crop_face(m, box_landmarks());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCrop);
  }
}

TEST_CASE("crop_box: forehead fraction outside (0, 2] is rejected") {
  CropParams p;
  p.forehead_fraction = 0.0;
  CHECK_THROWS_AS(crop_box(box_landmarks(), p), Error);
  p.forehead_fraction = 2.5;
  CHECK_THROWS_AS(crop_box(box_landmarks(), p), Error);
}

TEST_CASE("preprocess_scan: zero yaw with an enclosing box is the identity per frame") {
  auto f = symmetric_frame();
  f.landmarks.left_face_bound.x = -100;
  f.landmarks.right_face_bound.x = 100;
  f.landmarks.chin.y = -100;
  ScanSequence seq{"S01", 3, {f, f, f}};
  CropParams tall;
  tall.forehead_fraction = 2.0;
  const auto out = preprocess_scan(seq, 0.0, tall);
  CHECK(out.length() == 3);
  for (const auto& fr : out.frames) CHECK(fr.mesh == f.mesh);
}

TEST_CASE("preprocess_scan: rotate-then-crop keeps a vertex that only the rotated box contains") {
  // Centroid at the origin; (-5, 0, -4) is behind the depth cut before the 30 deg yaw and inside it after.
  FaceMesh m;
  m.vertices = {{-5, 0, -4}, {5, 0, 4}, {0, 1, 0}, {0, -1, 0}};
  ScanSequence seq{"S01", 1, {ScanFrame{m, box_landmarks()}}};
  const auto out = preprocess_scan(seq, 30.0);
  const auto& got = out.frames.front().mesh.vertices;
  REQUIRE(got.size() == 4);
  const double c = std::sqrt(3.0) / 2.0, s = 0.5;
  CHECK(got[0].x == doctest::Approx(-5 * c - 4 * s));
  CHECK(got[0].z == doctest::Approx(5 * s - 4 * c));
  // Cropping first loses it.
  CHECK(rotate_mesh(crop_face(m, box_landmarks()), 30.0).vertex_count() == 3);
}

TEST_CASE("preprocess_scan: a degenerate crop names its frame") {
  auto f = symmetric_frame();
  auto bad = f;
  for (auto& v : bad.mesh.vertices) v.y += 1000.0;
  ScanSequence seq{"S01", 1, {f, bad}};
  try {
    preprocess_scan(seq, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCrop);
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("generate_views: single zero view equals preprocess_scan") {
  const auto f = symmetric_frame();
  ScanSequence seq{"S01", 2, {f, f}};
  const std::vector<double> angles{0.0};
  const auto views = generate_views(seq, angles);
  REQUIRE(views.size() == 1);
  CHECK(views.at(0.0) == preprocess_scan(seq, 0.0));
}

TEST_CASE("generate_views: five views keep every frame") {
  const auto f = symmetric_frame();
  ScanSequence seq{"S01", 2, {f, f, f, f}};
  const std::vector<double> angles{-30, -15, 0, 15, 30};
  const auto views = generate_views(seq, angles);
  CHECK(views.size() == 5);
  for (const auto& [theta, v] : views) CHECK(v.length() == 4);
}

TEST_CASE("generate_views: duplicate or empty angle sets are configuration errors") {
  const auto f = symmetric_frame();
  ScanSequence seq{"S01", 2, {f}};
  const std::vector<double> dup{0.0, 15.0, 0.0}, none{};
  CHECK_THROWS_AS(generate_views(seq, dup), Error);
  CHECK_THROWS_AS(generate_views(seq, none), Error);
}

TEST_CASE("generate_views: opposite yaws of a symmetric face are mirror images") {
  const auto f = symmetric_frame();
  ScanSequence seq{"S01", 2, {f}};
  const std::vector<double> angles{-20.0, 20.0};
  const auto views = generate_views(seq, angles);
  auto left = views.at(-20.0).frames.front().mesh.vertices;
  auto right = views.at(20.0).frames.front().mesh.vertices;
  REQUIRE(left.size() == right.size());
  for (auto& v : left) v.x = -v.x;
  left = sorted(left);
  right = sorted(right);
  double worst = 0.0;
  for (std::size_t i = 0; i < left.size(); ++i) worst = std::max(worst, distance(left[i], right[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("preprocess_scan: deterministic") {
  const auto f = symmetric_frame();
  ScanSequence seq{"S01", 2, {f, f}};
  CHECK(preprocess_scan(seq, 12.5) == preprocess_scan(seq, 12.5));
}

TEST_CASE("geometry laws on randomized meshes") {
  const auto r = props::geometry_laws(100, 7);
  INFO(r.detail);
  CHECK(r.ok);
}

TEST_CASE("FaceMesh::validate rejects dangling faces and partial colors") {
  FaceMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 3}};
  CHECK_THROWS_AS(m.validate(), Error);
  m.faces = {{0, 1, 2}};
  m.colors = {{0, 0, 0}};
  CHECK_THROWS_AS(m.validate(), Error);
}
