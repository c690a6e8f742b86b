#include "fer4d/augmentation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "fer4d/error.hpp"

namespace fer4d {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void validate_band(const Passband& band, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) fail(ErrorCode::Config, "fps must be > 0");
  if (!(band.low_hz >= 0.0 && band.low_hz < band.high_hz && band.high_hz < fps / 2.0)) {
    fail(ErrorCode::Config, "passband must satisfy 0 <= low < high < fps/2");
  }
}

void validate_pass(const std::optional<WindowPass>& pass, const char* name) {
  if (pass && (pass->window < 1 || pass->stride < 1)) {
    fail(ErrorCode::Config, std::string(name) + " window and stride must be >= 1");
  }
}

}  // namespace

void AugmentationPlan::validate() const {
  if (!(magnification_alpha >= 0.0) || !std::isfinite(magnification_alpha)) {
    fail(ErrorCode::Config, "magnification alpha must be finite and >= 0");
  }
  if (!include_original && !include_magnified) {
    fail(ErrorCode::Config, "augmentation must keep original or magnified clips");
  }
  if (include_magnified) validate_band(passband, fps);
  for (double r : inplane_rotations_deg) {
    if (!std::isfinite(r)) fail(ErrorCode::Config, "rotation angles must be finite");
  }
  validate_pass(pass1, "pass1");
  validate_pass(pass2, "pass2");
}

AugmentationPlan AugmentationPlan::original() {
  AugmentationPlan p;
  p.include_magnified = false;
  p.include_reversal = false;
  p.include_flip = false;
  p.inplane_rotations_deg.clear();
  p.pass1.reset();
  p.pass2.reset();
  return p;
}

AugmentationPlan AugmentationPlan::magnified_variants() {
  AugmentationPlan p;
  p.include_original = false;
  return p;
}

AugmentationPlan AugmentationPlan::original_variants() {
  AugmentationPlan p;
  p.include_magnified = false;
  return p;
}

AugmentationPlan AugmentationPlan::all() { return AugmentationPlan{}; }

std::string SpatialOp::label() const {
  switch (kind) {
    case SpatialKind::Identity: return "id";
    case SpatialKind::Flip: return "flip";
    case SpatialKind::Rotate: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "rot%+g", degrees);
      return buf;
    }
  }
  return "?";
}

ImageSequence magnify_motion(const ImageSequence& seq, double alpha, const Passband& band, double fps) {
  if (seq.length() < 2) fail(ErrorCode::TooShort, "motion magnification needs T >= 2");
  validate_band(band, fps);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail(ErrorCode::Config, "alpha must be finite and >= 0");
  seq.validate();
  if (alpha == 0.0) return seq;

  const int t_len = static_cast<int>(seq.length());
  const int pixels = static_cast<int>(seq.frames.front().pixels.size());
  const int bins = t_len / 2 + 1;

  // Time-major: sample (t, p) at t * pixels + p, so each pixel is a strided 1-D signal.
  std::vector<double> signal(static_cast<std::size_t>(t_len) * pixels);
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(bins) * pixels);
  auto* sig = signal.data();
  auto* spec = reinterpret_cast<fftw_complex*>(spectrum.data());

  fftw_plan forward, inverse;
  {
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_many_dft_r2c(1, &t_len, pixels, sig, nullptr, pixels, 1, spec, nullptr, pixels, 1,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse = fftw_plan_many_dft_c2r(1, &t_len, pixels, spec, nullptr, pixels, 1, sig, nullptr, pixels, 1,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  for (int t = 0; t < t_len; ++t) {
    std::copy(seq.frames[t].pixels.begin(), seq.frames[t].pixels.end(), signal.begin() + std::size_t(t) * pixels);
  }
  fftw_execute(forward);
  for (int k = 0; k < bins; ++k) {
    const double f = k * fps / t_len;
    if (f >= band.low_hz && f <= band.high_hz) continue;
    std::fill_n(spectrum.begin() + std::size_t(k) * pixels, pixels, std::complex<double>(0.0, 0.0));
  }
  fftw_execute(inverse);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }

  ImageSequence out = seq;
  const double gain = alpha / t_len;  // c2r is unnormalized
  for (int t = 0; t < t_len; ++t) {
    auto& px = out.frames[t].pixels;
    const double* band_t = signal.data() + std::size_t(t) * pixels;
    for (int p = 0; p < pixels; ++p) px[p] = std::clamp(px[p] + gain * band_t[p], 0.0, 1.0);
  }
  return out;
}

ImageSequence reverse_sequence(const ImageSequence& seq) {
  ImageSequence out;
  out.frames.assign(seq.frames.rbegin(), seq.frames.rend());
  return out;
}

ImageSequence flip_frames(const ImageSequence& seq) {
  ImageSequence out = seq;
  for (auto& f : out.frames) {
    for (int r = 0; r < f.size; ++r) {
      auto row = f.pixels.begin() + static_cast<std::ptrdiff_t>(r) * f.size;
      std::reverse(row, row + f.size);
    }
  }
  return out;
}

DomainImage rotate_image(const DomainImage& img, double degrees) {
  if (degrees == 0.0) return img;
  const int k = img.size;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double centre = 0.5 * (k - 1);

  auto sample = [&](int r, int col) { return (r < 0 || r >= k || col < 0 || col >= k) ? 0.0 : img.at(r, col); };

  DomainImage out(img.domain, k);
  for (int r = 0; r < k; ++r) {
    for (int col = 0; col < k; ++col) {
      // Inverse-map the output pixel; y points up in the rotation frame.
      const double dx = col - centre, dy = centre - r;
      const double sx = c * dx + s * dy;
      const double sy = -s * dx + c * dy;
      const double src_col = centre + sx, src_row = centre - sy;
      const int c0 = static_cast<int>(std::floor(src_col)), r0 = static_cast<int>(std::floor(src_row));
      const double wc = src_col - c0, wr = src_row - r0;
      const double v = (1 - wr) * ((1 - wc) * sample(r0, c0) + wc * sample(r0, c0 + 1)) +
                       wr * ((1 - wc) * sample(r0 + 1, c0) + wc * sample(r0 + 1, c0 + 1));
      out.at(r, col) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

ImageSequence rotate_frames(const ImageSequence& seq, double degrees) {
  if (!std::isfinite(degrees)) fail(ErrorCode::Domain, "rotation angle must be finite");
  if (degrees == 0.0) return seq;
  ImageSequence out;
  out.frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) out.frames.push_back(rotate_image(f, degrees));
  return out;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) fail(ErrorCode::Config, "window and stride must be >= 1");
  if (window > length) {
    fail(ErrorCode::WindowTooLarge,
         "window " + std::to_string(window) + " exceeds sequence length " + std::to_string(length));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= length; s += stride) starts.push_back(s);
  return starts;
}

ClipSet window_sequence(const ImageSequence& seq, std::size_t window, std::size_t stride) {
  ClipSet set;
  for (auto start : window_starts(seq.length(), window, stride)) {
    Clip clip;
    clip.provenance.pass = 1;
    clip.provenance.offset = start;
    clip.provenance.length = window;
    ImageSequence sub;
    sub.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(start),
                      seq.frames.begin() + static_cast<std::ptrdiff_t>(start + window));
    clip.domains.push_back(std::move(sub));
    set.clips.push_back(std::move(clip));
  }
  return set;
}

namespace {

std::vector<SpatialOp> spatial_ops(const AugmentationPlan& plan) {
  std::vector<SpatialOp> ops{{SpatialKind::Identity, 0.0}};
  if (plan.include_flip) ops.push_back({SpatialKind::Flip, 0.0});
  for (double deg : plan.inplane_rotations_deg) ops.push_back({SpatialKind::Rotate, deg});
  return ops;
}

std::vector<bool> source_variants(const AugmentationPlan& plan) {
  std::vector<bool> out;
  if (plan.include_original) out.push_back(false);
  if (plan.include_magnified) out.push_back(true);
  return out;
}

struct Window {
  int pass;
  std::size_t offset, length;
};

std::vector<Window> windows_for(std::size_t length, const AugmentationPlan& plan) {
  std::vector<Window> out;
  if (!plan.pass1 && !plan.pass2) {
    out.push_back({0, 0, length});
    return out;
  }
  if (plan.pass1) {
    for (auto s : window_starts(length, plan.pass1->window, plan.pass1->stride)) out.push_back({1, s, plan.pass1->window});
  }
  if (plan.pass2) {
    for (auto s : window_starts(length, plan.pass2->window, plan.pass2->stride)) out.push_back({2, s, plan.pass2->window});
  }
  return out;
}

ImageSequence apply_variant(const ImageSequence& base, bool magnified, bool reversed, const SpatialOp& op,
                            const AugmentationPlan& plan) {
  ImageSequence seq = magnified ? magnify_motion(base, plan.magnification_alpha, plan.passband, plan.fps) : base;
  if (reversed) seq = reverse_sequence(seq);
  switch (op.kind) {
    case SpatialKind::Identity: break;
    case SpatialKind::Flip: seq = flip_frames(seq); break;
    case SpatialKind::Rotate: seq = rotate_frames(seq, op.degrees); break;
  }
  return seq;
}

void check_stack(const DomainStack& stack) {
  if (stack.empty()) fail(ErrorCode::Shape, "view has no domain sequences");
  for (const auto& s : stack) {
    s.validate();
    if (s.length() != stack.front().length()) fail(ErrorCode::Shape, "domain sequences differ in length");
  }
}

}  // namespace

std::vector<ClipProvenance> enumerate_clips(std::size_t source, double view, std::size_t length,
                                            const AugmentationPlan& plan) {
  plan.validate();
  const auto windows = windows_for(length, plan);
  std::vector<ClipProvenance> out;
  for (bool magnified : source_variants(plan)) {
    for (bool reversed : {false, true}) {
      if (reversed && !plan.include_reversal) continue;
      for (const auto& op : spatial_ops(plan)) {
        for (const auto& w : windows) {
          out.push_back({source, view, magnified, reversed, op, w.pass, w.offset, w.length});
        }
      }
    }
  }
  return out;
}

void for_each_clip(const DomainStack& stack, std::size_t source, double view, const AugmentationPlan& plan,
                   const ClipVisitor& visit) {
  plan.validate();
  check_stack(stack);
  const std::size_t length = stack.front().length();
  const auto windows = windows_for(length, plan);

  for (bool magnified : source_variants(plan)) {
    // Magnification is the costly step, so it runs once per source variant.
    DomainStack source_stack;
    for (const auto& s : stack) {
      source_stack.push_back(magnified ? magnify_motion(s, plan.magnification_alpha, plan.passband, plan.fps) : s);
    }
    for (bool reversed : {false, true}) {
      if (reversed && !plan.include_reversal) continue;
      for (const auto& op : spatial_ops(plan)) {
        DomainStack variant;
        for (const auto& s : source_stack) variant.push_back(apply_variant(s, false, reversed, op, plan));
        for (const auto& w : windows) {
          std::vector<std::span<const DomainImage>> spans;
          for (const auto& s : variant) spans.emplace_back(s.frames.data() + w.offset, w.length);
          visit({source, view, magnified, reversed, op, w.pass, w.offset, w.length}, spans);
        }
      }
    }
  }
}

DomainStack materialize_clip(const DomainStack& stack, const ClipProvenance& prov, const AugmentationPlan& plan) {
  check_stack(stack);
  if (prov.offset + prov.length > stack.front().length() || prov.length == 0) {
    fail(ErrorCode::Shape, "clip window lies outside the source sequence");
  }
  DomainStack out;
  for (const auto& s : stack) {
    const auto full = apply_variant(s, prov.magnified, prov.reversed, prov.spatial, plan);
    ImageSequence sub;
    sub.frames.assign(full.frames.begin() + static_cast<std::ptrdiff_t>(prov.offset),
                      full.frames.begin() + static_cast<std::ptrdiff_t>(prov.offset + prov.length));
    out.push_back(std::move(sub));
  }
  return out;
}

ClipSet augment_dataset(const ViewMap<DomainStack>& views, const AugmentationPlan& plan, std::size_t source,
                        int label) {
  ClipSet set;
  for (const auto& [theta, stack] : views) {
    for_each_clip(stack, source, theta, plan, [&](const ClipProvenance& prov, const auto& spans) {
      Clip clip;
      clip.provenance = prov;
      clip.label = label;
      for (const auto& span : spans) {
        ImageSequence sub;
        sub.frames.assign(span.begin(), span.end());
        clip.domains.push_back(std::move(sub));
      }
      set.clips.push_back(std::move(clip));
    });
  }
  return set;
}

}  // namespace fer4d
