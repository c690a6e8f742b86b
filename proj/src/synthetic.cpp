#include "fer4d/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "fer4d/classifier.hpp"
#include "fer4d/dynamic_image.hpp"
#include "fer4d/error.hpp"
#include "fer4d/image_ops.hpp"
#include "fer4d/renderer.hpp"

namespace fer4d {

double ramp_amplitude(std::size_t frame_index, std::size_t length) {
  if (length < 2) return 1.0;
  const double s = static_cast<double>(frame_index) / static_cast<double>(length - 1);
  return s * s * (3.0 - 2.0 * s);
}

void SyntheticSpec::validate() const {
  if (subjects < 1) fail(ErrorCode::Config, "synthetic spec needs at least one subject");
  if (frames_per_clip < 2) fail(ErrorCode::Config, "synthetic clips need T >= 2");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail(ErrorCode::Config, "noise_sigma must be >= 0");
  if (!(fps > 0.0)) fail(ErrorCode::Config, "fps must be > 0");
  if (!(semi_x > 0.0 && semi_y > 0.0 && semi_z > 0.0)) fail(ErrorCode::Config, "semi-axes must be > 0");
  if (grid_cols < 8 || grid_rows < 8) fail(ErrorCode::Config, "face grid must be at least 8x8");
}

std::array<ClassProfile, kNumClasses> SyntheticSpec::default_profiles() {
  std::array<ClassProfile, kNumClasses> p;
  // anger: brows drawn down and together, lips pressed back
  p[0].bumps = {{20, 32, 11, -4, -6, -2, true}, {0, -40, 10, 0, 0, -4, false}};
  // disgust: nose wrinkle and upper-lip raise
  p[1].bumps = {{12, -18, 9, 0, 5, 4, true}, {0, -32, 9, 0, 5, 2, false}};
  // fear: inner brows up, mouth stretched sideways
  p[2].bumps = {{12, 33, 9, 0, 7, 0, true}, {22, -40, 9, 6, -2, 0, true}};
  // happiness: mouth corners up and out, cheeks raised
  p[3].bumps = {{25, -38, 10, 4, 8, 3, true}, {35, -12, 14, 0, 3, 4, true}};
  // sadness: mouth corners down, inner brows up
  p[4].bumps = {{25, -42, 10, 0, -7, 0, true}, {9, 31, 8, 0, 5, 1, true}};
  // surprise: brows up, jaw dropped
  p[5].bumps = {{25, 32, 15, 0, 8, 2, true}, {0, -62, 20, 0, -12, -4, false}};
  return p;
}

namespace {

struct Bump3 {
  double cx, cy, sigma, dx, dy, dz;
};

std::vector<Bump3> expand(const ClassProfile& profile) {
  std::vector<Bump3> out;
  for (const auto& b : profile.bumps) {
    out.push_back({b.cx, b.cy, b.sigma, b.dx, b.dy, b.dz});
    if (b.mirror) out.push_back({-b.cx, b.cy, b.sigma, -b.dx, b.dy, b.dz});
  }
  return out;
}

double gauss2(double x, double y, double cx, double cy, double sx, double sy) {
  const double u = (x - cx) / sx, v = (y - cy) / sy;
  return std::exp(-0.5 * (u * u + v * v));
}

// Rest albedo as a function of nominal (unscaled) face position.
double albedo(double x, double y, double tone) {
  double l = tone + 0.08 * (y / 95.0);
  for (double sx : {-1.0, 1.0}) {
    l -= 0.45 * gauss2(x, y, sx * 25.0, 30.0, 12.0, 4.0);  // brows
    l -= 0.40 * gauss2(x, y, sx * 28.0, 15.0, 9.0, 4.0);   // eyes
  }
  l -= 0.30 * gauss2(x, y, 0.0, -40.0, 18.0, 5.0);  // lips
  return std::clamp(l, 0.0, 1.0);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b};
  return std::mt19937_64(seq);
}

struct SubjectShape {
  double scale = 1.0;
  double tone = 0.7;
  std::vector<Bump3> bumps;
};

SubjectShape draw_subject(std::uint64_t seed, int subject) {
  auto rng = make_rng(seed, static_cast<std::uint32_t>(subject), 0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> amp(0.0, 2.5);
  SubjectShape s;
  s.scale = 0.93 + 0.14 * u01(rng);
  s.tone = 0.6 + 0.2 * u01(rng);
  for (int i = 0; i < 4; ++i) {
    const double cx = -40.0 + 80.0 * u01(rng);
    const double cy = -60.0 + 120.0 * u01(rng);
    const double sigma = 15.0 + 15.0 * u01(rng);
    s.bumps.push_back({cx, cy, sigma, 0.0, 0.0, amp(rng)});
  }
  return s;
}

}  // namespace

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const int cols = spec.grid_cols, rows = spec.grid_rows;
  const double a = spec.semi_x, b = spec.semi_y, c = spec.semi_z;

  // Grid vertices strictly inside the unit disc (in (u, v)), top row first.
  std::vector<int> index(static_cast<std::size_t>(cols) * rows, -1);
  std::vector<std::pair<double, double>> uv;
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      const double u = -1.0 + 2.0 * q / (cols - 1);
      const double v = 1.0 - 2.0 * r / (rows - 1);
      if (u * u + v * v <= 0.97) {
        index[static_cast<std::size_t>(r) * cols + q] = static_cast<int>(uv.size());
        uv.emplace_back(u, v);
      }
    }
  }
  std::vector<Face> faces;
  for (int r = 0; r + 1 < rows; ++r) {
    for (int q = 0; q + 1 < cols; ++q) {
      const int i00 = index[static_cast<std::size_t>(r) * cols + q];
      const int i01 = index[static_cast<std::size_t>(r) * cols + q + 1];
      const int i10 = index[static_cast<std::size_t>(r + 1) * cols + q];
      const int i11 = index[static_cast<std::size_t>(r + 1) * cols + q + 1];
      if (i00 < 0 || i01 < 0 || i10 < 0 || i11 < 0) continue;
      faces.push_back({static_cast<std::uint32_t>(i00), static_cast<std::uint32_t>(i10), static_cast<std::uint32_t>(i01)});
      faces.push_back({static_cast<std::uint32_t>(i01), static_cast<std::uint32_t>(i10), static_cast<std::uint32_t>(i11)});
    }
  }

  // Nominal positions pick the landmark vertices; nearest grid vertex to each target.
  const std::array<std::pair<double, double>, 6> targets = {{
      {-0.85 * a, 0.0}, {0.85 * a, 0.0}, {0.0, -0.85 * b}, {0.0, -5.0}, {-25.0, 30.0}, {25.0, 30.0}}};
  std::array<std::size_t, 6> landmark_vertex{};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < uv.size(); ++i) {
      const double dx = a * uv[i].first - targets[k].first, dy = b * uv[i].second - targets[k].second;
      const double d = dx * dx + dy * dy;
      if (d < best) best = d, landmark_vertex[k] = i;
    }
  }

  std::vector<unsigned char> is_anchor(uv.size(), 0);
  for (auto i : landmark_vertex) is_anchor[i] = 1;

  std::array<std::vector<Bump3>, kNumClasses> class_bumps;
  for (int l = 0; l < kNumClasses; ++l) class_bumps[l] = expand(spec.profiles[l]);

  Dataset ds;
  const std::size_t nv = uv.size();
  const std::size_t len = spec.frames_per_clip;
  for (int subject = 0; subject < spec.subjects; ++subject) {
    const SubjectShape shape = draw_subject(spec.seed, subject);
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", subject + 1);

    // Rest geometry in nominal millimetres, then scaled per subject.
    std::vector<Vertex3> rest(nv);
    std::vector<Rgb> colors(nv);
    for (std::size_t i = 0; i < nv; ++i) {
      const auto [u, v] = uv[i];
      const double x = a * u, y = b * v;
      double z = c * std::sqrt(std::max(0.0, 1.0 - u * u - v * v));
      z += 18.0 * gauss2(x, y, 0.0, -5.0, 9.0, 14.0);  // nose
      for (const auto& sb : shape.bumps) z += sb.dz * gauss2(x, y, sb.cx, sb.cy, sb.sigma, sb.sigma);
      rest[i] = {x, y, z};
      const double lum = albedo(x, y, shape.tone);
      colors[i] = {lum, lum, lum};
    }

    for (int label = 1; label <= kNumClasses; ++label) {
      auto rng = make_rng(spec.seed, static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(label));
      std::uniform_real_distribution<double> intensity_dist(0.75, 1.25);
      const double intensity = intensity_dist(rng);
      std::normal_distribution<double> jitter(0.0, spec.noise_sigma * b);

      // Apex displacement per vertex.
      std::vector<Vertex3> apex(nv);
      for (std::size_t i = 0; i < nv; ++i) {
        for (const auto& cb : class_bumps[label - 1]) {
          const double w = intensity * gauss2(rest[i].x, rest[i].y, cb.cx, cb.cy, cb.sigma, cb.sigma);
          apex[i] = apex[i] + Vertex3{w * cb.dx, w * cb.dy, w * cb.dz};
        }
      }

      ScanSequence sq;
      sq.subject_id = id;
      sq.expression_label = label;
      sq.frames.reserve(len);
      for (std::size_t t = 0; t < len; ++t) {
        const double amp = ramp_amplitude(t, len);
        ScanFrame frame;
        frame.mesh.faces = faces;
        frame.mesh.colors = colors;
        frame.mesh.vertices.resize(nv);
        for (std::size_t i = 0; i < nv; ++i) {
          Vertex3 p = rest[i] + amp * apex[i];
          // Annotated anchors are exact, so landmarks stay on the surface and the crop box steady.
          if (spec.noise_sigma > 0.0 && !is_anchor[i]) p = p + Vertex3{jitter(rng), jitter(rng), jitter(rng)};
          frame.mesh.vertices[i] = shape.scale * p;
        }
        auto anchors = frame.landmarks.anchors();
        for (std::size_t k = 0; k < anchors.size(); ++k) *anchors[k] = frame.mesh.vertices[landmark_vertex[k]];
        sq.frames.push_back(std::move(frame));
      }
      ds.sequences.push_back(std::move(sq));
    }
  }
  return ds;
}

double class_separation(const Dataset& ds, const SeparationOptions& options) {
  std::vector<std::vector<double>> features;
  features.reserve(ds.sequences.size());
  for (const auto& seq : ds.sequences) {
    const ScanSequence frontal = preprocess_scan(seq, 0.0);
    const CameraSpec cam = CameraSpec::fit(frontal.frames.front().mesh);
    const RenderedView view = render_sequence(frontal, cam, options.image_size);
    const ImageSequence cd = fuse_sequence(view.texture, view.depth, clahe_sequence(view.depth));
    features.push_back(featurize(compute_dynamic_image(cd), options.feature_side));
  }
  double between = 0.0, within = 0.0;
  std::size_t nb = 0, nw = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t p = 0; p < features[i].size(); ++p) {
        const double d = features[i][p] - features[j][p];
        d2 += d * d;
      }
      const double d = std::sqrt(d2);
      if (ds.sequences[i].expression_label == ds.sequences[j].expression_label) {
        within += d, ++nw;
      } else {
        between += d, ++nb;
      }
    }
  }
  if (nb == 0) return 0.0;
  between /= static_cast<double>(nb);
  if (nw == 0 || within == 0.0) return std::numeric_limits<double>::infinity();
  return between / (within / static_cast<double>(nw));
}

}  // namespace fer4d
