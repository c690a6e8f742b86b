#pragma once

#include <filesystem>
#include <iosfwd>

#include "fer4d/mesh.hpp"

namespace fer4d {

enum class MeshFormat { Obj, Ply };

// Parses "obj" / "ply" (case-insensitive); anything else is a format error.
MeshFormat parse_mesh_format(std::string_view name);
MeshFormat mesh_format_from_path(const std::filesystem::path& path);

FaceMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
FaceMesh read_obj(std::istream& in);
FaceMesh read_ply(std::istream& in);

void save_obj(const FaceMesh& mesh, const std::filesystem::path& path);
void write_obj(const FaceMesh& mesh, std::ostream& out);
void write_ply_ascii(const FaceMesh& mesh, std::ostream& out);

// Landmark record: one "<anchor-name> x y z" line per anchor, all six required.
LandmarkSet load_landmarks(const std::filesystem::path& path);
LandmarkSet read_landmarks(std::istream& in);
void save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path);

// Corpus layout: <root>/corpus.json indexes <root>/<subject>/<expression>/frame_NNNN.{obj,lmk}.
void save_corpus(const Dataset& ds, const std::filesystem::path& root);
Dataset load_corpus(const std::filesystem::path& root);

}  // namespace fer4d
