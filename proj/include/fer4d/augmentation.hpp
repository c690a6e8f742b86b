#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fer4d/image.hpp"
#include "fer4d/mesh.hpp"

namespace fer4d {

struct Passband {
  double low_hz = 0.4;
  double high_hz = 3.0;
};

struct WindowPass {
  std::size_t window = 1;
  std::size_t stride = 1;
};

// Five-step augmentation: per-view domain stacks -> {original, magnified} x {forward, reversed}
// x {identity, flip, rotations} x {pass-1 windows + pass-2 windows}.
struct AugmentationPlan {
  double magnification_alpha = 4.0;
  Passband passband{};
  double fps = 25.0;
  bool include_original = true;
  bool include_magnified = true;
  bool include_reversal = true;
  bool include_flip = true;
  std::vector<double> inplane_rotations_deg{-10.0, 10.0};
  // Temporal pass (long windows, short stride) then spatial pass (short windows, long stride).
  // With neither pass set, each variant yields one whole-sequence clip.
  std::optional<WindowPass> pass1 = WindowPass{16, 2};
  std::optional<WindowPass> pass2 = WindowPass{8, 8};

  void validate() const;

  // Augmentation levels compared in the ablation.
  static AugmentationPlan original();           // unmodified clips only
  static AugmentationPlan magnified_variants(); // EVM clips and their variants
  static AugmentationPlan original_variants();  // original clips and their variants
  static AugmentationPlan all();                // original + EVM + variants
};

enum class SpatialKind { Identity, Flip, Rotate };

struct SpatialOp {
  SpatialKind kind = SpatialKind::Identity;
  double degrees = 0.0;

  std::string label() const;
  friend bool operator==(const SpatialOp&, const SpatialOp&) = default;
};

struct ClipProvenance {
  std::size_t source = 0;  // index of the originating sequence
  double view = 0.0;       // yaw of the originating view
  bool magnified = false;
  bool reversed = false;
  SpatialOp spatial{};
  int pass = 0;            // 0 = whole sequence, 1 or 2 = windowing pass
  std::size_t offset = 0;  // 0-based first frame of the window
  std::size_t length = 0;

  friend bool operator==(const ClipProvenance&, const ClipProvenance&) = default;
};

// One sequence per image domain, all the same length and size.
using DomainStack = std::vector<ImageSequence>;

struct Clip {
  ClipProvenance provenance;
  int label = 0;
  DomainStack domains;
};

struct ClipSet {
  std::vector<Clip> clips;
  std::size_t size() const { return clips.size(); }
};

// Ideal FFT bandpass per pixel, output = clamp(input + alpha * bandpassed, 0, 1).
ImageSequence magnify_motion(const ImageSequence& seq, double alpha, const Passband& band, double fps);

ImageSequence reverse_sequence(const ImageSequence& seq);
ImageSequence flip_frames(const ImageSequence& seq);
// Bilinear in-plane rotation about the image centre, counter-clockwise as displayed; samples that
// fall outside the frame read as 0.
ImageSequence rotate_frames(const ImageSequence& seq, double degrees);
DomainImage rotate_image(const DomainImage& img, double degrees);

// 0-based window starts: 0, stride, ... while start + window <= T.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, std::size_t stride);
ClipSet window_sequence(const ImageSequence& seq, std::size_t window, std::size_t stride);

// Deterministic clip order for one view: source variant, direction, spatial op, pass-1 windows,
// pass-2 windows.
std::vector<ClipProvenance> enumerate_clips(std::size_t source, double view, std::size_t length,
                                            const AugmentationPlan& plan);

using ClipVisitor =
    std::function<void(const ClipProvenance&, const std::vector<std::span<const DomainImage>>&)>;

// Streams every clip of one view without materializing the whole set: each full-length variant
// is built once and its windows are passed as spans (one per domain).
void for_each_clip(const DomainStack& stack, std::size_t source, double view, const AugmentationPlan& plan,
                   const ClipVisitor& visit);

// Rebuilds a single clip from its provenance.
DomainStack materialize_clip(const DomainStack& stack, const ClipProvenance& prov, const AugmentationPlan& plan);

ClipSet augment_dataset(const ViewMap<DomainStack>& views, const AugmentationPlan& plan, std::size_t source = 0,
                        int label = 0);

}  // namespace fer4d
