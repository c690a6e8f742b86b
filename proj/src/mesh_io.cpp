#include "fer4d/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fer4d/error.hpp"

namespace fer4d {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + what);
}

double to_double(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    parse_fail(line_no, "invalid number '" + std::string(tok) + "'");
  }
  return v;
}

long long to_int(std::string_view tok, std::size_t line_no) {
  long long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_fail(line_no, "invalid integer '" + std::string(tok) + "'");
  return v;
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double check_color(double c, std::size_t line_no) {
  if (c < 0.0 || c > 1.0) parse_fail(line_no, "vertex color component outside [0,1]");
  return c;
}

std::ifstream open_in(const fs::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

// ---- PLY -----------------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(std::string_view s, std::size_t line_no) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  parse_fail(line_no, "unknown PLY property type '" + std::string(s) + "'");
}

bool is_integral(PlyType t) { return t != PlyType::Float32 && t != PlyType::Float64; }

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    fail(ErrorCode::Parse, "unexpected end of binary PLY body");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

double read_binary(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(in);
    case PlyType::UInt8: return read_le<std::uint8_t>(in);
    case PlyType::Int16: return read_le<std::int16_t>(in);
    case PlyType::UInt16: return read_le<std::uint16_t>(in);
    case PlyType::Int32: return read_le<std::int32_t>(in);
    case PlyType::UInt32: return read_le<std::uint32_t>(in);
    case PlyType::Float32: return read_le<float>(in);
    case PlyType::Float64: return read_le<double>(in);
  }
  return 0.0;
}

// Yields property values either from ASCII lines or from a little-endian byte stream.
class PlyReader {
 public:
  PlyReader(std::istream& in, bool ascii, std::size_t first_line)
      : in_(in), ascii_(ascii), line_no_(first_line) {}

  void begin_entry() {
    if (!ascii_) return;
    std::string line;
    do {
      if (!std::getline(in_, line)) fail(ErrorCode::Parse, "unexpected end of PLY body at line " + std::to_string(line_no_ + 1));
      ++line_no_;
      line_ = line;
      tokens_ = split_ws(line_);
    } while (tokens_.empty());
    cursor_ = 0;
  }

  double next(PlyType t) {
    if (!ascii_) return read_binary(in_, t);
    if (cursor_ >= tokens_.size()) parse_fail(line_no_, "too few values on PLY line");
    const auto tok = tokens_[cursor_++];
    return is_integral(t) ? static_cast<double>(to_int(tok, line_no_)) : to_double(tok, line_no_);
  }

  void end_entry() {
    if (ascii_ && cursor_ != tokens_.size()) parse_fail(line_no_, "extra values on PLY line");
  }

  std::size_t line() const { return line_no_; }
  bool ascii() const { return ascii_; }

 private:
  std::istream& in_;
  bool ascii_;
  std::size_t line_no_;
  std::string line_;
  std::vector<std::string_view> tokens_;
  std::size_t cursor_ = 0;
};

}  // namespace

MeshFormat parse_mesh_format(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (!lower.empty() && lower.front() == '.') lower.erase(0, 1);
  if (lower == "obj") return MeshFormat::Obj;
  if (lower == "ply") return MeshFormat::Ply;
  fail(ErrorCode::Format, "unsupported mesh format '" + std::string(name) + "'");
}

MeshFormat mesh_format_from_path(const fs::path& path) {
  return parse_mesh_format(path.extension().string());
}

FaceMesh load_mesh(const fs::path& path, MeshFormat format) {
  auto in = open_in(path, format == MeshFormat::Ply);
  try {
    return format == MeshFormat::Obj ? read_obj(in) : read_ply(in);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

FaceMesh read_obj(std::istream& in) {
  FaceMesh mesh;
  struct PendingFace {
    std::vector<long long> idx;
    std::size_t line_no;
  };
  std::vector<PendingFace> pending;
  bool colored = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;

    if (tok[0] == "v") {
      const std::size_t n = tok.size() - 1;
      if (n != 3 && n != 4 && n != 6) parse_fail(line_no, "vertex needs 3, 4 or 6 values");
      mesh.vertices.push_back({to_double(tok[1], line_no), to_double(tok[2], line_no),
                               to_double(tok[3], line_no)});
      const bool has_rgb = n == 6;
      if (mesh.vertices.size() == 1) colored = has_rgb;
      if (has_rgb != colored) parse_fail(line_no, "vertex colors present on some vertices only");
      if (has_rgb) {
        mesh.colors.push_back({check_color(to_double(tok[4], line_no), line_no),
                               check_color(to_double(tok[5], line_no), line_no),
                               check_color(to_double(tok[6], line_no), line_no)});
      }
    } else if (tok[0] == "f") {
      if (tok.size() < 4) parse_fail(line_no, "face needs at least 3 vertices");
      PendingFace face{{}, line_no};
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto ref = tok[i].substr(0, tok[i].find('/'));
        long long idx = to_int(ref, line_no);
        if (idx == 0) parse_fail(line_no, "face index 0 is invalid in OBJ");
        if (idx < 0) idx += static_cast<long long>(mesh.vertices.size()) + 1;
        face.idx.push_back(idx - 1);
      }
      pending.push_back(std::move(face));
    }
    // vt, vn, g, o, s, usemtl, mtllib: not needed for rendering.
  }

  const auto m = static_cast<long long>(mesh.vertices.size());
  for (const auto& face : pending) {
    for (auto idx : face.idx) {
      if (idx < 0 || idx >= m) {
        parse_fail(face.line_no, "face index " + std::to_string(idx + 1) + " out of range (" +
                                     std::to_string(m) + " vertices)");
      }
    }
    for (std::size_t k = 1; k + 1 < face.idx.size(); ++k) {
      mesh.faces.push_back({static_cast<std::uint32_t>(face.idx[0]),
                            static_cast<std::uint32_t>(face.idx[k]),
                            static_cast<std::uint32_t>(face.idx[k + 1])});
    }
  }
  return mesh;
}

FaceMesh read_ply(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "unexpected end of PLY header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return split_ws(line);
  };

  auto tok = next_line();
  if (tok.size() != 1 || tok[0] != "ply") parse_fail(line_no, "missing 'ply' magic");

  bool ascii = true;
  bool have_format = false;
  std::vector<PlyElement> elements;
  while (true) {
    tok = next_line();
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3) parse_fail(line_no, "malformed format line");
      if (tok[1] == "ascii") {
        ascii = true;
      } else if (tok[1] == "binary_little_endian") {
        ascii = false;
      } else {
        fail(ErrorCode::Format, "PLY encoding '" + std::string(tok[1]) + "' is not supported");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) parse_fail(line_no, "malformed element line");
      const auto count = to_int(tok[2], line_no);
      if (count < 0) parse_fail(line_no, "negative element count");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(line_no, "property before any element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = parse_ply_type(tok[2], line_no);
        p.type = parse_ply_type(tok[3], line_no);
        p.name = tok[4];
      } else if (tok.size() == 3) {
        p.type = parse_ply_type(tok[1], line_no);
        p.name = tok[2];
      } else {
        parse_fail(line_no, "malformed property line");
      }
      elements.back().props.push_back(p);
    } else {
      parse_fail(line_no, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) parse_fail(line_no, "missing format line");

  FaceMesh mesh;
  PlyReader reader(in, ascii, line_no);
  for (const auto& el : elements) {
    if (el.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
      for (int i = 0; i < static_cast<int>(el.props.size()); ++i) {
        const auto& n = el.props[i].name;
        if (n == "x") ix = i;
        if (n == "y") iy = i;
        if (n == "z") iz = i;
        if (n == "red" || n == "r" || n == "diffuse_red") ir = i;
        if (n == "green" || n == "g" || n == "diffuse_green") ig = i;
        if (n == "blue" || n == "b" || n == "diffuse_blue") ib = i;
      }
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(line_no, "vertex element lacks x/y/z");
      const bool colored = ir >= 0 && ig >= 0 && ib >= 0;
      std::vector<double> vals(el.props.size());
      for (std::size_t k = 0; k < el.count; ++k) {
        reader.begin_entry();
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          const auto& p = el.props[i];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.next(p.count_type));
            for (std::size_t j = 0; j < n; ++j) reader.next(p.type);
            vals[i] = 0.0;
          } else {
            vals[i] = reader.next(p.type);
          }
        }
        reader.end_entry();
        const std::size_t where = reader.ascii() ? reader.line() : k;
        Vertex3 v{vals[ix], vals[iy], vals[iz]};
        if (!v.finite()) parse_fail(where, "non-finite vertex");
        mesh.vertices.push_back(v);
        if (colored) {
          auto channel = [&](int i) {
            const double raw = vals[i];
            const double c = is_integral(el.props[i].type) ? raw / 255.0 : raw;
            return check_color(c, where);
          };
          mesh.colors.push_back({channel(ir), channel(ig), channel(ib)});
        }
      }
    } else if (el.name == "face") {
      for (std::size_t k = 0; k < el.count; ++k) {
        reader.begin_entry();
        std::vector<long long> idx;
        for (const auto& p : el.props) {
          if (p.is_list) {
            const auto n = static_cast<long long>(reader.next(p.count_type));
            std::vector<long long> vals;
            for (long long j = 0; j < n; ++j) vals.push_back(static_cast<long long>(reader.next(p.type)));
            if (p.name == "vertex_indices" || p.name == "vertex_index") idx = std::move(vals);
          } else {
            reader.next(p.type);
          }
        }
        reader.end_entry();
        const std::size_t where = reader.ascii() ? reader.line() : k;
        if (idx.size() < 3) parse_fail(where, "face with fewer than 3 vertices");
        for (auto i : idx) {
          if (i < 0 || i >= static_cast<long long>(mesh.vertices.size())) {
            parse_fail(where, "face index " + std::to_string(i) + " out of range");
          }
        }
        for (std::size_t j = 1; j + 1 < idx.size(); ++j) {
          mesh.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[j]),
                                static_cast<std::uint32_t>(idx[j + 1])});
        }
      }
    } else {
      for (std::size_t k = 0; k < el.count; ++k) {
        reader.begin_entry();
        for (const auto& p : el.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.next(p.count_type));
            for (std::size_t j = 0; j < n; ++j) reader.next(p.type);
          } else {
            reader.next(p.type);
          }
        }
        reader.end_entry();
      }
    }
  }
  return mesh;
}

void write_obj(const FaceMesh& mesh, std::ostream& out) {
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    out << "v " << fmt(v.x) << ' ' << fmt(v.y) << ' ' << fmt(v.z);
    if (mesh.has_colors()) {
      const auto& c = mesh.colors[i];
      out << ' ' << fmt(c.r) << ' ' << fmt(c.g) << ' ' << fmt(c.b);
    }
    out << '\n';
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void save_obj(const FaceMesh& mesh, const fs::path& path) {
  auto out = open_out(path);
  write_obj(mesh, out);
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

void write_ply_ascii(const FaceMesh& mesh, std::ostream& out) {
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n";
  if (mesh.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.faces.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  auto byte = [](double c) { return static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    out << fmt(v.x) << ' ' << fmt(v.y) << ' ' << fmt(v.z);
    if (mesh.has_colors()) {
      const auto& c = mesh.colors[i];
      out << ' ' << byte(c.r) << ' ' << byte(c.g) << ' ' << byte(c.b);
    }
    out << '\n';
  }
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

LandmarkSet read_landmarks(std::istream& in) {
  LandmarkSet lm;
  std::array<bool, 6> seen{};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4) parse_fail(line_no, "landmark line needs a name and 3 coordinates");
    const auto it = std::find(LandmarkSet::kNames.begin(), LandmarkSet::kNames.end(), tok[0]);
    if (it == LandmarkSet::kNames.end()) parse_fail(line_no, "unknown landmark '" + std::string(tok[0]) + "'");
    const auto slot = static_cast<std::size_t>(it - LandmarkSet::kNames.begin());
    if (seen[slot]) parse_fail(line_no, "duplicate landmark '" + std::string(tok[0]) + "'");
    seen[slot] = true;
    *lm.anchors()[slot] = {to_double(tok[1], line_no), to_double(tok[2], line_no), to_double(tok[3], line_no)};
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) parse_fail(line_no, "missing landmark '" + std::string(LandmarkSet::kNames[i]) + "'");
  }
  return lm;
}

LandmarkSet load_landmarks(const fs::path& path) {
  auto in = open_in(path, false);
  try {
    return read_landmarks(in);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

void save_landmarks(const LandmarkSet& lm, const fs::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < LandmarkSet::kNames.size(); ++i) {
    const auto& v = *lm.anchors()[i];
    out << LandmarkSet::kNames[i] << ' ' << fmt(v.x) << ' ' << fmt(v.y) << ' ' << fmt(v.z) << '\n';
  }
}

namespace {

std::string frame_stem(std::size_t t) {
  std::ostringstream s;
  s << "frame_" << std::setw(4) << std::setfill('0') << t;
  return s.str();
}

}  // namespace

void save_corpus(const Dataset& ds, const fs::path& root) {
  nlohmann::json index;
  index["format"] = "fer4d-corpus";
  index["version"] = 1;
  index["sequences"] = nlohmann::json::array();
  for (const auto& seq : ds.sequences) {
    const std::string rel = seq.subject_id + "/" + std::string(kExpressionNames.at(seq.expression_label - 1));
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      save_obj(seq.frames[t].mesh, root / rel / (frame_stem(t) + ".obj"));
      save_landmarks(seq.frames[t].landmarks, root / rel / (frame_stem(t) + ".lmk"));
    }
    index["sequences"].push_back(
        {{"subject", seq.subject_id}, {"label", seq.expression_label}, {"path", rel}, {"frames", seq.frames.size()}});
  }
  auto out = open_out(root / "corpus.json");
  out << index.dump(2) << '\n';
}

Dataset load_corpus(const fs::path& root) {
  auto in = open_in(root / "corpus.json", false);
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, (root / "corpus.json").string() + ": " + e.what());
  }
  if (index.value("format", "") != "fer4d-corpus") fail(ErrorCode::Format, "not a fer4d corpus index");
  Dataset ds;
  for (const auto& entry : index.at("sequences")) {
    ScanSequence seq;
    seq.subject_id = entry.at("subject").get<std::string>();
    seq.expression_label = entry.at("label").get<int>();
    const auto rel = entry.at("path").get<std::string>();
    const auto frames = entry.at("frames").get<std::size_t>();
    for (std::size_t t = 0; t < frames; ++t) {
      ScanFrame f;
      f.mesh = load_mesh(root / rel / (frame_stem(t) + ".obj"), MeshFormat::Obj);
      f.landmarks = load_landmarks(root / rel / (frame_stem(t) + ".lmk"));
      seq.frames.push_back(std::move(f));
    }
    seq.validate();
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace fer4d
