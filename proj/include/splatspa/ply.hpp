#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatspa/sparsifier.hpp"

namespace splatspa {

struct PlyProperty {
  std::string type;  // PLY scalar type name as written in the header
  std::string name;

  bool operator==(const PlyProperty&) const = default;
};

/// Byte size of a PLY scalar type name, or 0 if unknown.
std::size_t ply_type_size(const std::string& type);

/// Vertex table of a binary little-endian 3DGS PLY. The payload is kept as raw
/// bytes so every property, known or not, survives a round trip untouched.
struct SplatPlyRecord {
  std::vector<std::string> comments;  // comment / obj_info lines, verbatim
  std::vector<PlyProperty> properties;
  std::size_t vertex_count = 0;
  std::vector<std::uint8_t> payload;

  std::size_t stride() const;
  std::optional<std::size_t> offset_of(const std::string& name) const;

  float get(std::size_t vertex, const std::string& name) const;
  void set(std::size_t vertex, const std::string& name, float value);
  std::vector<float> column(const std::string& name) const;

  /// Record with the standard property set, all zeros.
  static SplatPlyRecord with_standard_properties(std::size_t vertex_count);

  bool operator==(const SplatPlyRecord&) const = default;
};

/// x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3
const std::vector<std::string>& standard_splat_properties();

SplatPlyRecord parse_splat_ply(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_splat_ply(const SplatPlyRecord& record);

/// Throws SchemaError listing every missing required property.
SplatPlyRecord read_splat_ply(const std::filesystem::path& path);
void write_splat_ply(const SplatPlyRecord& record, const std::filesystem::path& path);

/// Keeps the kappa vertices with the highest sigmoid(opacity), or the highest
/// external scores, preserving their original order and bytes.
SplatPlyRecord simplify_splat_ply(const SplatPlyRecord& record, std::size_t kappa,
                                  const ProjectionCriterion& criterion = ProjectionCriterion::magnitude());

}  // namespace splatspa
