#pragma once

#include <utility>
#include <vector>

#include "fer4d/image.hpp"
#include "fer4d/mesh.hpp"

namespace fer4d {

inline constexpr int kDefaultImageSize = 224;

// Orthographic window looking down -z (camera at +z). Pixel (r, c) samples the world point
// x = x_min + (c + 0.5) * w / K, y = y_max - (r + 0.5) * h / K.
struct CameraSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  double background = 0.0;

  void validate() const;

  // Square window centred on the mesh's xy bounding box, enlarged by `margin` (fraction).
  static CameraSpec fit(const FaceMesh& mesh, double margin = 0.05, double background = 0.0);

  double pixel_x(int col, int k) const { return x_min + (col + 0.5) * (x_max - x_min) / k; }
  double pixel_y(int row, int k) const { return y_max - (row + 0.5) * (y_max - y_min) / k; }
};

// Raw z-buffer: max z over covering triangles, plus an optional interpolated attribute.
struct RasterResult {
  int size = 0;
  std::vector<double> depth;
  std::vector<double> attribute;
  std::vector<unsigned char> covered;
};

// Closed-edge coverage at pixel centres; degenerate triangles are skipped.
RasterResult rasterize(const FaceMesh& mesh, const CameraSpec& cam, int k,
                       const std::vector<double>* vertex_attribute = nullptr);

// Smallest normalized depth given to a covered pixel (the farthest face point).
inline constexpr double kDepthFloor = 1.0 / 255.0;

// Maps raw covered depths to [kDepthFloor, 1] per frame (nearest = 1); background elsewhere.
DomainImage normalize_depth(const RasterResult& raster, double background);

DomainImage render_depth(const FaceMesh& mesh, const CameraSpec& cam, int k = kDefaultImageSize);
DomainImage render_texture(const FaceMesh& mesh, const CameraSpec& cam, int k = kDefaultImageSize);

struct RenderedView {
  ImageSequence texture;
  ImageSequence depth;
};

RenderedView render_sequence(const ScanSequence& seq, const CameraSpec& cam, int k);

ViewMap<RenderedView> render_views(const ViewMap<ScanSequence>& views, const CameraSpec& cam, int k);

}  // namespace fer4d
