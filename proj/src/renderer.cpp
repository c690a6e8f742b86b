#include "fer4d/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fer4d/error.hpp"

namespace fer4d {

void CameraSpec::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !std::isfinite(x_max - x_min) ||
      !std::isfinite(y_max - y_min)) {
    fail(ErrorCode::Config, "camera extents must be finite and strictly positive");
  }
  if (!(background >= 0.0 && background <= 1.0)) fail(ErrorCode::Config, "background must lie in [0,1]");
}

CameraSpec CameraSpec::fit(const FaceMesh& mesh, double margin, double background) {
  CameraSpec cam;
  cam.background = background;
  if (mesh.vertices.empty()) return cam;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& v : mesh.vertices) {
    x0 = std::min(x0, v.x);
    x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y);
    y1 = std::max(y1, v.y);
  }
  double half = 0.5 * std::max(x1 - x0, y1 - y0) * (1.0 + margin);
  if (!(half > 0.0)) half = 1.0;
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  cam.x_min = cx - half;
  cam.x_max = cx + half;
  cam.y_min = cy - half;
  cam.y_max = cy + half;
  return cam;
}

RasterResult rasterize(const FaceMesh& mesh, const CameraSpec& cam, int k,
                       const std::vector<double>* vertex_attribute) {
  if (k < 1) fail(ErrorCode::Domain, "image size must be >= 1");
  cam.validate();
  if (vertex_attribute && vertex_attribute->size() != mesh.vertices.size()) {
    fail(ErrorCode::Shape, "vertex attribute count does not match vertex count");
  }

  const auto n = static_cast<std::size_t>(k) * k;
  RasterResult out;
  out.size = k;
  out.depth.assign(n, -std::numeric_limits<double>::infinity());
  out.covered.assign(n, 0);
  if (vertex_attribute) out.attribute.assign(n, 0.0);

  // Continuous pixel coordinates: pixel centre (r, c) sits at (c, r).
  const double sx = k / (cam.x_max - cam.x_min);
  const double sy = k / (cam.y_max - cam.y_min);
  struct P {
    double c, r, z;
  };
  auto project = [&](const Vertex3& v) { return P{(v.x - cam.x_min) * sx - 0.5, (cam.y_max - v.y) * sy - 0.5, v.z}; };
  auto edge = [](const P& a, const P& b, double pc, double pr) {
    return (b.c - a.c) * (pr - a.r) - (b.r - a.r) * (pc - a.c);
  };

  for (const auto& f : mesh.faces) {
    const P v0 = project(mesh.vertices[f[0]]);
    const P v1 = project(mesh.vertices[f[1]]);
    const P v2 = project(mesh.vertices[f[2]]);
    const double area = edge(v0, v1, v2.c, v2.r);
    if (area == 0.0 || !std::isfinite(area)) continue;

    const int c0 = std::max(0, static_cast<int>(std::ceil(std::min({v0.c, v1.c, v2.c}))));
    const int c1 = std::min(k - 1, static_cast<int>(std::floor(std::max({v0.c, v1.c, v2.c}))));
    const int r0 = std::max(0, static_cast<int>(std::ceil(std::min({v0.r, v1.r, v2.r}))));
    const int r1 = std::min(k - 1, static_cast<int>(std::floor(std::max({v0.r, v1.r, v2.r}))));
    const double inv_area = 1.0 / area;

    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        double w0 = edge(v1, v2, c, r);
        double w1 = edge(v2, v0, c, r);
        double w2 = edge(v0, v1, c, r);
        const bool inside = area > 0.0 ? (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0)
                                       : (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
        if (!inside) continue;
        w0 *= inv_area;
        w1 *= inv_area;
        w2 *= inv_area;
        const double z = w0 * v0.z + w1 * v1.z + w2 * v2.z;
        const auto idx = static_cast<std::size_t>(r) * k + c;
        if (out.covered[idx] && z <= out.depth[idx]) continue;
        out.covered[idx] = 1;
        out.depth[idx] = z;
        if (vertex_attribute) {
          const auto& a = *vertex_attribute;
          out.attribute[idx] = w0 * a[f[0]] + w1 * a[f[1]] + w2 * a[f[2]];
        }
      }
    }
  }
  return out;
}

DomainImage normalize_depth(const RasterResult& raster, double background) {
  DomainImage img(Domain::Depth, raster.size, background);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < raster.depth.size(); ++i) {
    if (!raster.covered[i]) continue;
    lo = std::min(lo, raster.depth[i]);
    hi = std::max(hi, raster.depth[i]);
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < raster.depth.size(); ++i) {
    if (!raster.covered[i]) continue;
    img.pixels[i] = range > 0.0 ? kDepthFloor + (1.0 - kDepthFloor) * (raster.depth[i] - lo) / range : 1.0;
  }
  return img;
}

DomainImage render_depth(const FaceMesh& mesh, const CameraSpec& cam, int k) {
  return normalize_depth(rasterize(mesh, cam, k), cam.background);
}

DomainImage render_texture(const FaceMesh& mesh, const CameraSpec& cam, int k) {
  if (!mesh.has_colors()) fail(ErrorCode::MissingAttribute, "texture rendering needs per-vertex colors");
  std::vector<double> luminance;
  luminance.reserve(mesh.colors.size());
  for (const auto& c : mesh.colors) luminance.push_back(c.luminance());
  const RasterResult raster = rasterize(mesh, cam, k, &luminance);

  DomainImage img(Domain::Texture, k, cam.background);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (raster.covered[i]) img.pixels[i] = std::clamp(raster.attribute[i], 0.0, 1.0);
  }
  return img;
}

RenderedView render_sequence(const ScanSequence& seq, const CameraSpec& cam, int k) {
  RenderedView view;
  view.texture.frames.reserve(seq.frames.size());
  view.depth.frames.reserve(seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    try {
      view.texture.frames.push_back(render_texture(seq.frames[t].mesh, cam, k));
      view.depth.frames.push_back(render_depth(seq.frames[t].mesh, cam, k));
    } catch (const Error& e) {
      throw e.with_context("frame " + std::to_string(t));
    }
  }
  return view;
}

ViewMap<RenderedView> render_views(const ViewMap<ScanSequence>& views, const CameraSpec& cam, int k) {
  ViewMap<RenderedView> out;
  for (const auto& [theta, seq] : views) {
    try {
      out.emplace(theta, render_sequence(seq, cam, k));
    } catch (const Error& e) {
      throw e.with_context("view " + std::to_string(theta));
    }
  }
  return out;
}

}  // namespace fer4d
