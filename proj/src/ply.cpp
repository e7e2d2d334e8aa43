#include "splatspa/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "splatspa/checkpoint.hpp"
#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

std::uint32_t load_le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void store_le32(std::uint8_t* p, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) p[b] = static_cast<std::uint8_t>(v >> (8 * b));
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

const std::vector<std::string>& standard_splat_properties() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 45; ++i) v.push_back("f_rest_" + std::to_string(i));
    v.push_back("opacity");
    for (int i = 0; i < 3; ++i) v.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) v.push_back("rot_" + std::to_string(i));
    return v;
  }();
  return names;
}

std::size_t SplatPlyRecord::stride() const {
  std::size_t s = 0;
  for (const auto& p : properties) s += ply_type_size(p.type);
  return s;
}

std::optional<std::size_t> SplatPlyRecord::offset_of(const std::string& name) const {
  std::size_t off = 0;
  for (const auto& p : properties) {
    if (p.name == name) return off;
    off += ply_type_size(p.type);
  }
  return std::nullopt;
}

float SplatPlyRecord::get(std::size_t vertex, const std::string& name) const {
  const auto off = offset_of(name);
  if (!off) throw SchemaError("ply: no property named " + name);
  return std::bit_cast<float>(load_le32(payload.data() + vertex * stride() + *off));
}

void SplatPlyRecord::set(std::size_t vertex, const std::string& name, float value) {
  const auto off = offset_of(name);
  if (!off) throw SchemaError("ply: no property named " + name);
  store_le32(payload.data() + vertex * stride() + *off, std::bit_cast<std::uint32_t>(value));
}

std::vector<float> SplatPlyRecord::column(const std::string& name) const {
  const auto off = offset_of(name);
  if (!off) throw SchemaError("ply: no property named " + name);
  const std::size_t s = stride();
  std::vector<float> out(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) out[v] = std::bit_cast<float>(load_le32(payload.data() + v * s + *off));
  return out;
}

SplatPlyRecord SplatPlyRecord::with_standard_properties(std::size_t vertex_count) {
  SplatPlyRecord r;
  for (const auto& n : standard_splat_properties()) r.properties.push_back({"float", n});
  r.vertex_count = vertex_count;
  r.payload.assign(vertex_count * r.stride(), 0);
  return r;
}

SplatPlyRecord parse_splat_ply(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::string_view kEnd = "end_header";
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ply", 3) != 0) throw UnsupportedFormat("ply: missing 'ply' magic");
  // Locate the end of the header without assuming anything about the payload.
  std::size_t header_end = std::string::npos;
  for (std::size_t i = 0; i + kEnd.size() < bytes.size() && i < (1u << 20); ++i) {
    if ((i == 0 || bytes[i - 1] == '\n') && std::memcmp(bytes.data() + i, kEnd.data(), kEnd.size()) == 0) {
      std::size_t j = i + kEnd.size();
      if (j < bytes.size() && bytes[j] == '\r') ++j;
      if (j < bytes.size() && bytes[j] == '\n') {
        header_end = j + 1;
        break;
      }
    }
  }
  if (header_end == std::string::npos) throw SchemaError("ply: header has no end_header line");

  std::istringstream header(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header_end)));
  SplatPlyRecord r;
  std::string line;
  bool have_format = false, have_vertex = false;
  std::getline(header, line);  // "ply"
  while (std::getline(header, line)) {
    line = trim_cr(line);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian") throw UnsupportedFormat("ply: only binary_little_endian is supported, got " + fmt);
      have_format = true;
    } else if (key == "comment" || key == "obj_info") {
      r.comments.push_back(line);
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name != "vertex") throw UnsupportedFormat("ply: unsupported element '" + name + "'");
      if (have_vertex) throw SchemaError("ply: duplicate vertex element");
      r.vertex_count = count;
      have_vertex = true;
    } else if (key == "property") {
      std::string type, name;
      ls >> type;
      if (type == "list") throw UnsupportedFormat("ply: list properties are not supported");
      ls >> name;
      if (!have_vertex) throw SchemaError("ply: property before element vertex");
      if (ply_type_size(type) == 0) throw SchemaError("ply: unknown property type '" + type + "'");
      r.properties.push_back({type, name});
    } else if (key == "end_header") {
      break;
    } else if (!key.empty()) {
      throw SchemaError("ply: unexpected header line '" + line + "'");
    }
  }
  if (!have_format) throw SchemaError("ply: missing format line");
  if (!have_vertex) throw SchemaError("ply: missing element vertex");

  std::vector<std::string> missing;
  for (const auto& name : standard_splat_properties()) {
    auto it = std::find_if(r.properties.begin(), r.properties.end(), [&](const PlyProperty& p) { return p.name == name; });
    if (it == r.properties.end()) {
      missing.push_back(name);
    } else if (it->type != "float" && it->type != "float32") {
      throw SchemaError("ply: property " + name + " must be float, got " + it->type);
    }
  }
  if (!missing.empty()) {
    std::string msg = "ply: missing required properties:";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }

  const std::size_t expected = r.vertex_count * r.stride();
  if (bytes.size() - header_end != expected) {
    throw SchemaError("ply: payload has " + std::to_string(bytes.size() - header_end) + " bytes, header implies " +
                      std::to_string(expected));
  }
  r.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_end), bytes.end());
  return r;
}

std::vector<std::uint8_t> serialize_splat_ply(const SplatPlyRecord& r) {
  if (r.payload.size() != r.vertex_count * r.stride()) throw InvalidArgument("ply: payload size disagrees with vertex count");
  std::string header = "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : r.comments) header += c + "\n";
  header += "element vertex " + std::to_string(r.vertex_count) + "\n";
  for (const auto& p : r.properties) header += "property " + p.type + " " + p.name + "\n";
  header += "end_header\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.payload.begin(), r.payload.end());
  return out;
}

SplatPlyRecord read_splat_ply(const std::filesystem::path& path) { return parse_splat_ply(read_file_bytes(path)); }

void write_splat_ply(const SplatPlyRecord& record, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_splat_ply(record));
}

SplatPlyRecord simplify_splat_ply(const SplatPlyRecord& record, std::size_t kappa, const ProjectionCriterion& criterion) {
  if (kappa > record.vertex_count) {
    throw InvalidBudget("prune-ply: kappa = " + std::to_string(kappa) + " exceeds vertex count " +
                        std::to_string(record.vertex_count));
  }
  std::vector<double> score;
  if (criterion.is_magnitude()) {
    // sigmoid is monotone, so ranking the raw logits selects the same set
    // without saturating at large logits.
    const auto logits = record.column("opacity");
    score.assign(logits.begin(), logits.end());
  } else {
    score = criterion.scores();
    if (score.size() != record.vertex_count) {
      throw InvalidArgument("prune-ply: score vector has length " + std::to_string(score.size()) + ", expected " +
                            std::to_string(record.vertex_count));
    }
  }
  std::vector<std::size_t> kept = top_k_indices(score, kappa);
  std::sort(kept.begin(), kept.end());

  SplatPlyRecord out;
  out.comments = record.comments;
  out.properties = record.properties;
  out.vertex_count = kept.size();
  const std::size_t s = record.stride();
  out.payload.reserve(kept.size() * s);
  for (std::size_t v : kept) {
    const auto first = record.payload.begin() + static_cast<std::ptrdiff_t>(v * s);
    out.payload.insert(out.payload.end(), first, first + static_cast<std::ptrdiff_t>(s));
  }
  return out;
}

}  // namespace splatspa
