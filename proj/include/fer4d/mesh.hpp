#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fer4d {

struct Vertex3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const;
  friend bool operator==(const Vertex3&, const Vertex3&) = default;
};

Vertex3 operator+(const Vertex3& a, const Vertex3& b);
Vertex3 operator-(const Vertex3& a, const Vertex3& b);
Vertex3 operator*(double s, const Vertex3& v);
double distance(const Vertex3& a, const Vertex3& b);

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  // Rec. 601 luma.
  double luminance() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using Face = std::array<std::uint32_t, 3>;

// Triangle mesh of one face scan. `colors` is either empty or parallel to `vertices`.
struct FaceMesh {
  std::vector<Vertex3> vertices;
  std::vector<Face> faces;
  std::vector<Rgb> colors;

  bool has_colors() const { return !colors.empty(); }
  std::size_t vertex_count() const { return vertices.size(); }
  Vertex3 centroid() const;

  // Throws Error(Shape) when a face index is out of range or colors are not per-vertex.
  void validate() const;

  friend bool operator==(const FaceMesh&, const FaceMesh&) = default;
};

struct LandmarkSet {
  Vertex3 left_face_bound;
  Vertex3 right_face_bound;
  Vertex3 chin;
  Vertex3 nose_tip;
  Vertex3 left_eyebrow;
  Vertex3 right_eyebrow;

  Vertex3 eyebrow_mid() const { return 0.5 * (left_eyebrow + right_eyebrow); }
  void validate() const;

  static constexpr std::array<std::string_view, 6> kNames = {
      "left_face_bound", "right_face_bound", "chin", "nose_tip", "left_eyebrow", "right_eyebrow"};
  std::array<Vertex3*, 6> anchors();
  std::array<const Vertex3*, 6> anchors() const;

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

struct ScanFrame {
  FaceMesh mesh;
  LandmarkSet landmarks;
  friend bool operator==(const ScanFrame&, const ScanFrame&) = default;
};

inline constexpr int kNumClasses = 6;
inline constexpr std::array<std::string_view, kNumClasses> kExpressionNames = {
    "anger", "disgust", "fear", "happiness", "sadness", "surprise"};

// One subject performing one expression; labels are 1-based (1 = anger ... 6 = surprise).
struct ScanSequence {
  std::string subject_id;
  int expression_label = 1;
  std::vector<ScanFrame> frames;

  std::size_t length() const { return frames.size(); }
  void validate() const;
  friend bool operator==(const ScanSequence&, const ScanSequence&) = default;
};

struct Dataset {
  std::vector<ScanSequence> sequences;

  std::size_t size() const { return sequences.size(); }
  void validate() const;
};

struct CropParams {
  // Forehead cut height above the eyebrow midline, in eyebrow-to-nose-tip distances.
  double forehead_fraction = 1.0;
  // Depth cut behind the nose tip, in eyebrow-to-nose-tip distances.
  double depth_margin_factor = 1.2;
};

// Closed axis-aligned box; z has no upper bound.
struct CropBox {
  double x_min, x_max;
  double y_min, y_max;
  double z_min;

  bool contains(const Vertex3& v) const {
    return v.x >= x_min && v.x <= x_max && v.y >= y_min && v.y <= y_max && v.z >= z_min;
  }
};

CropBox crop_box(const LandmarkSet& lm, const CropParams& params);

// Rigid yaw about the vertical axis through the vertex centroid. +90 deg takes +x to -z.
FaceMesh rotate_mesh(const FaceMesh& mesh, double yaw_deg);

// Rotates mesh and landmarks together, both about the mesh centroid.
ScanFrame rotate_frame(const ScanFrame& frame, double yaw_deg);

// Keeps vertices inside crop_box(lm); surviving vertices keep their relative order and
// faces touching a removed vertex are dropped.
FaceMesh crop_face(const FaceMesh& mesh, const LandmarkSet& lm, const CropParams& params = {});

// Per frame: crop_face(rotate_frame(frame, yaw)).
ScanSequence preprocess_scan(const ScanSequence& seq, double yaw_deg, const CropParams& params = {});

template <typename T>
using ViewMap = std::map<double, T>;

ViewMap<ScanSequence> generate_views(const ScanSequence& seq, std::span<const double> angles,
                                     const CropParams& params = {});

}  // namespace fer4d
