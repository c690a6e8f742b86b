#include "fer4d/image.hpp"

#include <cmath>
#include <string>

#include "fer4d/error.hpp"

namespace fer4d {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Texture: return "texture";
    case Domain::Depth: return "depth";
    case Domain::EnhancedDepth: return "edepth";
    case Domain::CrossDomain: return "cd";
  }
  return "unknown";
}

Domain parse_domain(std::string_view name) {
  if (name == "texture") return Domain::Texture;
  if (name == "depth") return Domain::Depth;
  if (name == "edepth" || name == "enhanced_depth") return Domain::EnhancedDepth;
  if (name == "cd" || name == "cross_domain") return Domain::CrossDomain;
  fail(ErrorCode::Config, "unknown image domain '" + std::string(name) + "'");
}

DomainImage::DomainImage(Domain d, int k, double fill) : domain(d), size(k) {
  if (k < 1) fail(ErrorCode::Domain, "image size must be >= 1");
  pixels.assign(static_cast<std::size_t>(k) * k, fill);
}

void DomainImage::validate() const {
  if (size < 1) fail(ErrorCode::Domain, "image size must be >= 1");
  if (pixels.size() != static_cast<std::size_t>(size) * size) {
    fail(ErrorCode::Shape, "pixel buffer is not KxK");
  }
  for (double p : pixels) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) fail(ErrorCode::Domain, "pixel outside [0,1]");
  }
}

void ImageSequence::validate() const {
  if (frames.empty()) fail(ErrorCode::Shape, "image sequence is empty");
  for (const auto& f : frames) {
    if (f.size != frames.front().size) fail(ErrorCode::Shape, "image sequence mixes image sizes");
    if (f.domain != frames.front().domain) fail(ErrorCode::Shape, "image sequence mixes domains");
    if (f.pixels.size() != static_cast<std::size_t>(f.size) * f.size) {
      fail(ErrorCode::Shape, "pixel buffer is not KxK");
    }
  }
}

}  // namespace fer4d
