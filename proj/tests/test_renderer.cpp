#include <doctest.h>

#include <algorithm>

#include "fer4d/error.hpp"
#include "fer4d/renderer.hpp"
#include "properties.hpp"

using namespace fer4d;

namespace {

FaceMesh big_triangle(double z, double lum = 0.5) {
  FaceMesh m;
  m.vertices = {{-0.5, -0.5, z}, {0.5, -0.5, z}, {0.0, 0.6, z}};
  m.faces = {{0, 1, 2}};
  m.colors.assign(3, Rgb{lum, lum, lum});
  return m;
}

}  // namespace

TEST_CASE("render_depth: no faces gives the background") {
  FaceMesh m;
  m.vertices = {{0, 0, 0}};
  CameraSpec cam;
  cam.background = 0.25;
  const auto img = render_depth(m, cam, 16);
  CHECK(img.domain == Domain::Depth);
  CHECK(std::all_of(img.pixels.begin(), img.pixels.end(), [](double p) { return p == 0.25; }));
}

TEST_CASE("render_depth: constant-z triangle covers the centre, not the corners") {
  const auto img = render_depth(big_triangle(3.0), CameraSpec{}, 9);
  // A single depth level is the nearest level.
  CHECK(img.at(4, 4) == 1.0);
  for (auto [r, c] : {std::pair{0, 0}, {0, 8}, {8, 0}, {8, 8}}) CHECK(img.at(r, c) == 0.0);
}

TEST_CASE("render_depth: the nearer of two coaxial triangles wins") {
  FaceMesh m = big_triangle(10.0);
  FaceMesh back = big_triangle(20.0);
  // Second triangle shifted right so both depths appear somewhere.
  for (auto& v : back.vertices) v.x += 0.3;
  m.vertices.insert(m.vertices.end(), back.vertices.begin(), back.vertices.end());
  m.faces.push_back({3, 4, 5});
  const CameraSpec cam;
  const auto raw = rasterize(m, cam, 32);
  const auto img = render_depth(m, cam, 32);
  int overlapped = 0;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const auto i = static_cast<std::size_t>(r) * 32 + c;
      if (!raw.covered[i]) continue;
      // Wherever the z=20 triangle reaches it wins and maps to the top of the range.
      if (raw.depth[i] > 15.0) {
        CHECK(raw.depth[i] == doctest::Approx(20.0).epsilon(1e-12));
        CHECK(img.pixels[i] == doctest::Approx(1.0).epsilon(1e-12));
        ++overlapped;
      } else {
        CHECK(raw.depth[i] == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(img.pixels[i] == doctest::Approx(kDepthFloor).epsilon(1e-9));
      }
    }
  }
  CHECK(overlapped > 0);
  // The centre lies in both triangles.
  CHECK(raw.depth[16 * 32 + 16] == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("render_texture: uniform luminance") {
  const auto img = render_texture(big_triangle(0.0, 0.5), CameraSpec{}, 24);
  int covered = 0;
  for (double p : img.pixels) {
    if (p != 0.0) {
      CHECK(p == doctest::Approx(0.5));
      ++covered;
    }
  }
  CHECK(covered > 0);
}

TEST_CASE("render_texture: barycentric interpolation at the centroid") {
  // Centroid (0, 0) is the centre of pixel (1, 1) at K=3 with the default window.
  FaceMesh m;
  m.vertices = {{-0.9, -0.6, 0}, {0.9, -0.6, 0}, {0.0, 1.2, 0}};
  m.faces = {{0, 1, 2}};
  m.colors = {{0, 0, 0}, {0, 0, 0}, {1, 1, 1}};
  const auto img = render_texture(m, CameraSpec{}, 3);
  CHECK(img.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("render_texture: missing colors") {
  FaceMesh m = big_triangle(0.0);
  m.colors.clear();
  try {
    render_texture(m, CameraSpec{}, 8);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingAttribute);
  }
}

TEST_CASE("render_views: cardinality, range, determinism, resolution") {
  ScanSequence seq{"S01", 1, {}};
  for (int t = 0; t < 3; ++t) seq.frames.push_back({big_triangle(0.1 * t), {}});
  ViewMap<ScanSequence> views{{0.0, seq}};
  const auto out = render_views(views, CameraSpec{}, 20);
  REQUIRE(out.size() == 1);
  const auto& v = out.at(0.0);
  CHECK(v.texture.length() == 3);
  CHECK(v.depth.length() == 3);
  for (const auto* s : {&v.texture, &v.depth}) {
    for (const auto& f : s->frames) {
      CHECK(f.size == 20);
      CHECK(f.pixel_count() == 400);
      CHECK_NOTHROW(f.validate());
    }
  }
  CHECK(render_views(views, CameraSpec{}, 20).at(0.0).depth == v.depth);
  CHECK(v.texture.frames[0] == v.texture.frames[1]);
  CHECK(render_depth(big_triangle(0.0), CameraSpec{}).size == 224);
}

TEST_CASE("render_views: errors carry view and frame") {
  ScanSequence seq{"S01", 1, {}};
  seq.frames.push_back({big_triangle(0.0), {}});
  FaceMesh bare = big_triangle(0.0);
  bare.colors.clear();
  seq.frames.push_back({bare, {}});
  ViewMap<ScanSequence> views{{15.0, seq}};
  try {
    render_views(views, CameraSpec{}, 8);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("view 15") != std::string::npos);
    CHECK(what.find("frame 1") != std::string::npos);
  }
}

TEST_CASE("CameraSpec: invalid extents and fitting") {
  CameraSpec bad;
  bad.x_max = bad.x_min;
  CHECK_THROWS_AS(bad.validate(), Error);
  const auto cam = CameraSpec::fit(big_triangle(0.0), 0.0);
  CHECK(cam.x_max - cam.x_min == doctest::Approx(1.1));
  CHECK(cam.y_max - cam.y_min == doctest::Approx(1.1));
}

TEST_CASE("rasterizer matches the brute-force z-max oracle") {
  const auto r = props::rasterizer_oracle(100, 32, 11);
  INFO(r.detail);
  CHECK(r.ok);
}
