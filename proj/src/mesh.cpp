#include "fer4d/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fer4d/error.hpp"

namespace fer4d {

bool Vertex3::finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

Vertex3 operator+(const Vertex3& a, const Vertex3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vertex3 operator-(const Vertex3& a, const Vertex3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vertex3 operator*(double s, const Vertex3& v) { return {s * v.x, s * v.y, s * v.z}; }

double distance(const Vertex3& a, const Vertex3& b) {
  const Vertex3 d = a - b;
  return std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
}

Vertex3 FaceMesh::centroid() const {
  if (vertices.empty()) return {};
  Vertex3 sum;
  for (const auto& v : vertices) sum = sum + v;
  return (1.0 / static_cast<double>(vertices.size())) * sum;
}

void FaceMesh::validate() const {
  const auto m = vertices.size();
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (auto idx : faces[i]) {
      if (idx >= m) {
        fail(ErrorCode::Shape, "face " + std::to_string(i) + " references vertex " +
                                   std::to_string(idx) + " but mesh has " + std::to_string(m));
      }
    }
  }
  if (!colors.empty() && colors.size() != m) {
    fail(ErrorCode::Shape, "color count " + std::to_string(colors.size()) +
                               " does not match vertex count " + std::to_string(m));
  }
  for (const auto& v : vertices) {
    if (!v.finite()) fail(ErrorCode::Domain, "non-finite vertex coordinate");
  }
}

std::array<Vertex3*, 6> LandmarkSet::anchors() {
  return {&left_face_bound, &right_face_bound, &chin, &nose_tip, &left_eyebrow, &right_eyebrow};
}

std::array<const Vertex3*, 6> LandmarkSet::anchors() const {
  return {&left_face_bound, &right_face_bound, &chin, &nose_tip, &left_eyebrow, &right_eyebrow};
}

void LandmarkSet::validate() const {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (!anchors()[i]->finite()) {
      fail(ErrorCode::Domain, "landmark " + std::string(kNames[i]) + " is not finite");
    }
  }
}

void ScanSequence::validate() const {
  if (frames.empty()) fail(ErrorCode::Shape, "sequence " + subject_id + " has no frames");
  if (expression_label < 1 || expression_label > kNumClasses) {
    fail(ErrorCode::Domain, "expression label " + std::to_string(expression_label) + " outside 1..6");
  }
  for (const auto& f : frames) {
    f.mesh.validate();
    f.landmarks.validate();
  }
}

void Dataset::validate() const {
  for (const auto& s : sequences) s.validate();
}

CropBox crop_box(const LandmarkSet& lm, const CropParams& params) {
  if (!(params.forehead_fraction > 0.0 && params.forehead_fraction <= 2.0)) {
    fail(ErrorCode::Config, "forehead_fraction must lie in (0, 2]");
  }
  if (!(params.depth_margin_factor >= 0.0) || !std::isfinite(params.depth_margin_factor)) {
    fail(ErrorCode::Config, "depth_margin_factor must be finite and non-negative");
  }
  lm.validate();
  const Vertex3 brow = lm.eyebrow_mid();
  const double brow_to_nose = distance(brow, lm.nose_tip);
  CropBox box{};
  box.x_min = std::min(lm.left_face_bound.x, lm.right_face_bound.x);
  box.x_max = std::max(lm.left_face_bound.x, lm.right_face_bound.x);
  box.y_min = lm.chin.y;
  box.y_max = brow.y + params.forehead_fraction * brow_to_nose;
  box.z_min = lm.nose_tip.z - params.depth_margin_factor * brow_to_nose;
  return box;
}

namespace {

struct YawRotation {
  double c, s;
  Vertex3 pivot;

  explicit YawRotation(double yaw_deg, Vertex3 p) : pivot(p) {
    const double rad = yaw_deg * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }

  Vertex3 operator()(const Vertex3& v) const {
    const Vertex3 d = v - pivot;
    return {pivot.x + c * d.x + s * d.z, v.y, pivot.z - s * d.x + c * d.z};
  }
};

}  // namespace

FaceMesh rotate_mesh(const FaceMesh& mesh, double yaw_deg) {
  if (!std::isfinite(yaw_deg)) fail(ErrorCode::Domain, "yaw must be finite");
  if (yaw_deg == 0.0) return mesh;
  FaceMesh out = mesh;
  const YawRotation rot(yaw_deg, mesh.centroid());
  for (auto& v : out.vertices) v = rot(v);
  return out;
}

ScanFrame rotate_frame(const ScanFrame& frame, double yaw_deg) {
  if (!std::isfinite(yaw_deg)) fail(ErrorCode::Domain, "yaw must be finite");
  if (yaw_deg == 0.0) return frame;
  ScanFrame out;
  out.mesh = rotate_mesh(frame.mesh, yaw_deg);
  const YawRotation rot(yaw_deg, frame.mesh.centroid());
  out.landmarks = frame.landmarks;
  for (auto* a : out.landmarks.anchors()) *a = rot(*a);
  return out;
}

FaceMesh crop_face(const FaceMesh& mesh, const LandmarkSet& lm, const CropParams& params) {
  const CropBox box = crop_box(lm, params);
  constexpr auto kRemoved = static_cast<std::uint32_t>(-1);

  std::vector<std::uint32_t> remap(mesh.vertices.size(), kRemoved);
  FaceMesh out;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (!box.contains(mesh.vertices[i])) continue;
    remap[i] = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[i]);
    if (mesh.has_colors()) out.colors.push_back(mesh.colors[i]);
  }
  if (out.vertices.empty()) fail(ErrorCode::DegenerateCrop, "no vertex survives the crop box");

  for (const auto& f : mesh.faces) {
    const Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
    if (g[0] != kRemoved && g[1] != kRemoved && g[2] != kRemoved) out.faces.push_back(g);
  }
  return out;
}

ScanSequence preprocess_scan(const ScanSequence& seq, double yaw_deg, const CropParams& params) {
  ScanSequence out;
  out.subject_id = seq.subject_id;
  out.expression_label = seq.expression_label;
  out.frames.reserve(seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    ScanFrame rotated = rotate_frame(seq.frames[t], yaw_deg);
    try {
      rotated.mesh = crop_face(rotated.mesh, rotated.landmarks, params);
    } catch (const Error& e) {
      throw e.with_context("frame " + std::to_string(t));
    }
    out.frames.push_back(std::move(rotated));
  }
  return out;
}

ViewMap<ScanSequence> generate_views(const ScanSequence& seq, std::span<const double> angles,
                                     const CropParams& params) {
  if (angles.empty()) fail(ErrorCode::Config, "view angle set is empty");
  ViewMap<ScanSequence> views;
  for (double theta : angles) {
    if (views.contains(theta)) {
      fail(ErrorCode::Config, "duplicate view angle " + std::to_string(theta));
    }
    views.emplace(theta, preprocess_scan(seq, theta, params));
  }
  return views;
}

}  // namespace fer4d
