#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fer4d/image.hpp"

namespace fer4d {

// 8-bit grayscale PNG, value = round(clamp(pixel, 0, 1) * 255).
std::vector<unsigned char> encode_png(const DomainImage& img);
void write_png(const DomainImage& img, const std::filesystem::path& path);

// Decoded pixels are byte / 255; the domain is supplied by the caller.
DomainImage read_png(const std::filesystem::path& path, Domain domain);

// Filename for an exported raster: <subject>_<expression>_v<theta>_t<frame>_<domain>.png.
// Frame < 0 omits the frame field (used for whole-sequence images such as CDIs).
std::string image_filename(const std::string& subject, int expression_label, double theta, int frame,
                           const std::string& suffix);

}  // namespace fer4d
