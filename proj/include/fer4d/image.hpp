#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace fer4d {

enum class Domain { Texture, Depth, EnhancedDepth, CrossDomain };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view name);

// Square single-channel raster, row-major with the origin at the top-left pixel.
struct DomainImage {
  Domain domain = Domain::Texture;
  int size = 0;
  std::vector<double> pixels;

  DomainImage() = default;
  DomainImage(Domain d, int k, double fill = 0.0);

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * size + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * size + col]; }
  std::size_t pixel_count() const { return pixels.size(); }

  // Throws unless K >= 1, the buffer is KxK and every pixel is finite and in [0,1].
  void validate() const;

  friend bool operator==(const DomainImage&, const DomainImage&) = default;
};

struct ImageSequence {
  std::vector<DomainImage> frames;

  std::size_t length() const { return frames.size(); }
  int size() const { return frames.empty() ? 0 : frames.front().size; }
  Domain domain() const { return frames.front().domain; }

  // Throws Shape unless non-empty with homogeneous K and domain.
  void validate() const;

  friend bool operator==(const ImageSequence&, const ImageSequence&) = default;
};

}  // namespace fer4d
