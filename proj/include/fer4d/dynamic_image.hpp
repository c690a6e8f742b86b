#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fer4d/image.hpp"

namespace fer4d {

struct RankPoolCoefficients {
  std::vector<double> alphas;
  std::size_t length() const { return alphas.size(); }
};

// Signed, unnormalized pooling of a whole sequence into one raster.
struct DynamicImage {
  Domain domain = Domain::CrossDomain;
  int size = 0;
  std::size_t source_length = 0;
  std::vector<double> pixels;

  friend bool operator==(const DynamicImage&, const DynamicImage&) = default;
};

// Approximate rank pooling weights:
//   alpha_t = 2 (T - t + 1) - (T + 1) (H_T - H_{t-1}),  t = 1..T,  H_k = sum_{i<=k} 1/i.
// They sum to zero, so constant sequences pool to zero.
RankPoolCoefficients rank_pool_coefficients(std::size_t length);

// Sum_t alpha_t * frame_t.
DynamicImage compute_dynamic_image(std::span<const DomainImage> frames);
DynamicImage compute_dynamic_image(const ImageSequence& seq);

// Reference ranking regression used to cross-check the closed form. Frames are smoothed with
// their running mean, centred over time, and u minimises
//   sum_t (<u, v_t> - (t - mean t))^2 + regularizer * |u|^2.
// The smaller of the primal (pixel) and dual (frame) normal systems is solved; a singular system
// (only possible with regularizer = 0) raises RankDeficiency.
DynamicImage rank_pool_exact(const ImageSequence& seq, double regularizer);

// Affine map of [min, max] onto [0, 1]; a constant image maps to 0.5 everywhere.
DomainImage normalize_for_display(const DynamicImage& di);

// Flat binary: uint32 K, uint32 T (little-endian), then K*K little-endian float32, row-major.
void write_dynamic_image(const DynamicImage& di, const std::filesystem::path& path);
DynamicImage read_dynamic_image(const std::filesystem::path& path);

}  // namespace fer4d
