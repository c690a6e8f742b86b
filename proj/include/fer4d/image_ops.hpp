#pragma once

#include <limits>
#include <span>
#include <vector>

#include "fer4d/image.hpp"

namespace fer4d {

struct ClaheParams {
  int tiles = 8;           // tiles per side
  double clip_limit = 2.0; // multiples of the uniform bin height; +inf disables clipping
  int bins = 256;
};

// Contrast-limited adaptive histogram equalization of a depth image.
//
// Each tile maps a pixel to the clipped-histogram CDF at its 8-bit bin, and pixel values are
// bilinearly blended from the four surrounding tile centres. A tile whose pixels all fall in one
// bin has no contrast to redistribute and maps values to themselves, so constant images are fixed
// points. K need not be divisible by `tiles`: the image is reflect-padded up to a multiple and
// the result cropped back.
DomainImage clahe_enhance(const DomainImage& img, const ClaheParams& params = {});

ImageSequence clahe_sequence(const ImageSequence& seq, const ClaheParams& params = {});

// Pixel-wise weighted mean (equal weights when `weights` is empty); domain = cross_domain.
DomainImage cross_domain_fuse(std::span<const DomainImage> images, std::span<const double> weights = {});

// Frame-wise fusion of the texture, depth and enhanced-depth sequences.
// `weights`, when given, are ordered (texture, depth, enhanced depth).
ImageSequence fuse_sequence(const ImageSequence& texture, const ImageSequence& depth,
                            const ImageSequence& edepth, std::span<const double> weights = {});

}  // namespace fer4d
