#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fer4d/mesh.hpp"

namespace fer4d {

// Gaussian-weighted displacement centred at (cx, cy) on the rest face (mm). At the apex a vertex at
// rest position p moves by exp(-|p - c|^2 / (2 sigma^2)) * (dx, dy, dz); mirrored bumps share a
// profile by setting `mirror`, which adds the reflection through x = 0 with dx negated.
struct DeformationBump {
  double cx = 0.0, cy = 0.0;
  double sigma = 10.0;
  double dx = 0.0, dy = 0.0, dz = 0.0;
  bool mirror = false;
};

struct ClassProfile {
  std::vector<DeformationBump> bumps;
};

// Onset-to-apex amplitude: smoothstep from 0 at frame 1 to 1 at frame T.
double ramp_amplitude(std::size_t frame_index, std::size_t length);

struct SyntheticSpec {
  int subjects = 12;
  std::size_t frames_per_clip = 32;
  double fps = 25.0;
  // Per-vertex, per-frame Gaussian jitter in units of the face half-height.
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Face half-ellipsoid semi-axes (mm) and grid resolution.
  double semi_x = 70.0, semi_y = 95.0, semi_z = 60.0;
  int grid_cols = 48, grid_rows = 64;
  std::array<ClassProfile, kNumClasses> profiles = default_profiles();

  void validate() const;
  static std::array<ClassProfile, kNumClasses> default_profiles();
};

// subjects x 6 sequences, subject-major, labels 1..6 within each subject. Subject ids are "S01"...
Dataset generate_dataset(const SyntheticSpec& spec);

struct SeparationOptions {
  int image_size = 32;
  int feature_side = 16;
};

// Mean between-class over mean within-class Euclidean distance of frontal CDI features.
// No between-class pairs gives 0; between-class pairs but zero within-class spread gives +inf.
double class_separation(const Dataset& ds, const SeparationOptions& options = {});

}  // namespace fer4d
