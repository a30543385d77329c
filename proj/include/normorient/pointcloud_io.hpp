#pragma once

// Point cloud and scanner metadata files.
//
// PLY 1.0 is supported in ascii and binary_little_endian encodings. The
// vertex element must carry x, y, z; nx/ny/nz, red/green/blue and scan_id are
// picked up when present. Other elements are skipped. Files are written with
// double-precision positions and normals so a binary round trip is bit exact.

#include "normorient/geometry.hpp"

#include <bit>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace normorient {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;              // empty, or one unit vector per point
  std::vector<std::uint32_t> scan_ids;    // empty, or one id per point
  std::vector<Rgb> colors;                // empty, or one color per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_scan_ids() const { return !scan_ids.empty(); }
  bool has_colors() const { return !colors.empty(); }

  void validate() const {
    const auto n = points.size();
    if (!normals.empty() && normals.size() != n) throw IoError("normals length differs from point count");
    if (!scan_ids.empty() && scan_ids.size() != n) throw IoError("scan_ids length differs from point count");
    if (!colors.empty() && colors.size() != n) throw IoError("colors length differs from point count");
    for (std::size_t i = 0; i < normals.size(); ++i) {
      if (std::abs(normals[i].norm() - 1.0) > 1e-6) {
        throw IoError("normal of point " + std::to_string(i) + " is not unit length");
      }
    }
  }
};

struct ScannerMetadata {
  std::map<std::uint32_t, Vec3> positions;

  const Vec3* find(std::uint32_t id) const {
    auto it = positions.find(id);
    return it == positions.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return positions.size(); }
};

enum class CloudFormat { ply_ascii, ply_binary_le, xyz };

enum class PointLabel : std::uint8_t { interior, exterior, outside, off_patch, correct, incorrect };

inline Rgb label_color(PointLabel label) {
  switch (label) {
    case PointLabel::interior: return {0, 255, 0};
    case PointLabel::exterior: return {0, 0, 255};
    case PointLabel::outside: return {255, 255, 0};
    case PointLabel::off_patch: return {128, 128, 128};
    case PointLabel::correct: return {0, 255, 0};
    case PointLabel::incorrect: return {255, 0, 0};
  }
  return {0, 0, 0};
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view tok) {
  std::string s(tok);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view tok) {
  Int v{};
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) return std::nullopt;
  return v;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<PlyType> ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8: case PlyType::u8: return 1;
    case PlyType::i16: case PlyType::u16: return 2;
    case PlyType::i32: case PlyType::u32: case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

struct PlyHeader {
  CloudFormat format = CloudFormat::ply_ascii;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;
  std::size_t body_line = 0;  // 1-based line number of the first body line
};

inline PlyHeader parse_ply_header(std::string_view data, const std::string& where) {
  PlyHeader h;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_format = false;
  auto fail = [&](const std::string& msg) -> IoError {
    return IoError(where + ": line " + std::to_string(line_no) + ": " + msg);
  };
  for (;;) {
    if (pos >= data.size()) {
      ++line_no;
      throw fail("unexpected end of file in header (missing end_header)");
    }
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string_view::npos) eol = data.size();
    std::string_view line = data.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    ++line_no;
    auto tok = split_ws(line);
    if (line_no == 1) {
      if (tok.size() != 1 || tok[0] != "ply") throw fail("not a PLY file (missing 'ply' magic)");
      continue;
    }
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3 || tok[2] != "1.0") throw fail("unsupported format line");
      if (tok[1] == "ascii") h.format = CloudFormat::ply_ascii;
      else if (tok[1] == "binary_little_endian") h.format = CloudFormat::ply_binary_le;
      else if (tok[1] == "binary_big_endian") throw fail("big-endian PLY is not supported");
      else throw fail("unknown PLY encoding '" + std::string(tok[1]) + "'");
      saw_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw fail("malformed element line");
      auto count = parse_int<std::size_t>(tok[2]);
      if (!count) throw fail("bad element count '" + std::string(tok[2]) + "'");
      h.elements.push_back({std::string(tok[1]), *count, {}});
    } else if (tok[0] == "property") {
      if (h.elements.empty()) throw fail("property before any element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = ply_type(tok[2]);
        auto vt = ply_type(tok[3]);
        if (!ct || !vt) throw fail("unknown list property type");
        p = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        auto t = ply_type(tok[1]);
        if (!t) throw fail("unknown property type '" + std::string(tok[1]) + "'");
        p = {std::string(tok[2]), *t, false, PlyType::u8};
      } else {
        throw fail("malformed property line");
      }
      h.elements.back().props.push_back(std::move(p));
    } else if (tok[0] == "end_header") {
      if (!saw_format) throw fail("missing format line");
      h.body_offset = pos;
      h.body_line = line_no + 1;
      return h;
    } else {
      throw fail("unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
}

inline double read_binary_scalar(const char* p, PlyType t) {
  static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
  switch (t) {
    case PlyType::i8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::u8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::f32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::f64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct VertexSlots {
  int x = -1, y = -1, z = -1, nx = -1, ny = -1, nz = -1, r = -1, g = -1, b = -1, scan = -1;
};

inline VertexSlots vertex_slots(const PlyElement& e, const std::string& where) {
  VertexSlots s;
  for (int i = 0; i < static_cast<int>(e.props.size()); ++i) {
    const auto& n = e.props[i].name;
    int* slot = nullptr;
    if (n == "x") slot = &s.x;
    else if (n == "y") slot = &s.y;
    else if (n == "z") slot = &s.z;
    else if (n == "nx") slot = &s.nx;
    else if (n == "ny") slot = &s.ny;
    else if (n == "nz") slot = &s.nz;
    else if (n == "red") slot = &s.r;
    else if (n == "green") slot = &s.g;
    else if (n == "blue") slot = &s.b;
    else if (n == "scan_id") slot = &s.scan;
    if (slot) {
      if (e.props[i].is_list) throw IoError(where + ": vertex property '" + n + "' must be a scalar");
      *slot = i;
    }
  }
  if (s.x < 0 || s.y < 0 || s.z < 0) throw IoError(where + ": vertex element lacks x/y/z");
  const int nn = (s.nx >= 0) + (s.ny >= 0) + (s.nz >= 0);
  if (nn != 0 && nn != 3) throw IoError(where + ": incomplete normal properties (need nx, ny, nz)");
  const int nc = (s.r >= 0) + (s.g >= 0) + (s.b >= 0);
  if (nc != 0 && nc != 3) throw IoError(where + ": incomplete color properties (need red, green, blue)");
  return s;
}

inline void store_vertex(PointCloud& cloud, const VertexSlots& s, const std::vector<double>& v,
                         std::size_t index, const std::string& where) {
  cloud.points[index] = Vec3(v[s.x], v[s.y], v[s.z]);
  if (s.nx >= 0) {
    Vec3 n(v[s.nx], v[s.ny], v[s.nz]);
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw IoError(where + ": vertex " + std::to_string(index) + " has a zero or invalid normal");
    }
    if (std::abs(len - 1.0) > 1e-6) n /= len;
    cloud.normals[index] = n;
  }
  if (s.r >= 0) {
    cloud.colors[index] = {static_cast<std::uint8_t>(v[s.r]), static_cast<std::uint8_t>(v[s.g]),
                           static_cast<std::uint8_t>(v[s.b])};
  }
  if (s.scan >= 0) {
    const double id = v[s.scan];
    if (id < 0.0 || id != std::floor(id) || id > 4294967295.0) {
      throw IoError(where + ": vertex " + std::to_string(index) + " has an invalid scan_id");
    }
    cloud.scan_ids[index] = static_cast<std::uint32_t>(id);
  }
}

inline PointCloud parse_ply(std::string_view data, CloudFormat declared, const std::string& where) {
  PlyHeader h = parse_ply_header(data, where);
  if (h.format != declared) {
    throw IoError(where + ": header encoding does not match the declared format");
  }
  PointCloud cloud;
  bool have_vertex = false;
  std::size_t pos = h.body_offset;
  std::size_t line_no = h.body_line;

  for (const auto& elem : h.elements) {
    const bool is_vertex = elem.name == "vertex";
    VertexSlots slots;
    if (is_vertex) {
      if (have_vertex) throw IoError(where + ": duplicate vertex element");
      have_vertex = true;
      slots = vertex_slots(elem, where);
      cloud.points.resize(elem.count);
      if (slots.nx >= 0) cloud.normals.resize(elem.count);
      if (slots.r >= 0) cloud.colors.resize(elem.count);
      if (slots.scan >= 0) cloud.scan_ids.resize(elem.count);
    }
    std::vector<double> values(elem.props.size());

    for (std::size_t row = 0; row < elem.count; ++row) {
      if (h.format == CloudFormat::ply_ascii) {
        // One element per line; blank lines are tolerated.
        std::vector<std::string_view> tok;
        while (tok.empty()) {
          if (pos >= data.size()) {
            throw IoError(where + ": line " + std::to_string(line_no) + ": truncated payload, expected " +
                          std::to_string(elem.count) + " " + elem.name + " rows, got " + std::to_string(row));
          }
          std::size_t eol = data.find('\n', pos);
          if (eol == std::string_view::npos) eol = data.size();
          tok = split_ws(data.substr(pos, eol - pos));
          pos = eol + 1;
          ++line_no;
        }
        const std::size_t this_line = line_no - 1;
        auto bad = [&](const std::string& msg) {
          return IoError(where + ": line " + std::to_string(this_line) + ": " + msg);
        };
        std::size_t t = 0;
        for (std::size_t p = 0; p < elem.props.size(); ++p) {
          const auto& prop = elem.props[p];
          if (prop.is_list) {
            if (t >= tok.size()) throw bad("missing list count");
            auto cnt = parse_int<std::size_t>(tok[t++]);
            if (!cnt) throw bad("bad list count");
            if (t + *cnt > tok.size()) throw bad("list shorter than its count");
            t += *cnt;
            values[p] = 0.0;
          } else {
            if (t >= tok.size()) throw bad("too few values for element '" + elem.name + "'");
            auto v = parse_double(tok[t++]);
            if (!v) throw bad("non-numeric value '" + std::string(tok[t - 1]) + "'");
            values[p] = *v;
          }
        }
        if (t != tok.size()) throw bad("too many values for element '" + elem.name + "'");
      } else {
        for (std::size_t p = 0; p < elem.props.size(); ++p) {
          const auto& prop = elem.props[p];
          auto need = [&](std::size_t bytes) {
            if (pos + bytes > data.size()) {
              throw IoError(where + ": byte " + std::to_string(pos) + ": truncated payload in element '" +
                            elem.name + "' row " + std::to_string(row));
            }
          };
          if (prop.is_list) {
            need(ply_size(prop.count_type));
            const double cnt = read_binary_scalar(data.data() + pos, prop.count_type);
            pos += ply_size(prop.count_type);
            if (cnt < 0) throw IoError(where + ": byte " + std::to_string(pos) + ": negative list count");
            const std::size_t bytes = static_cast<std::size_t>(cnt) * ply_size(prop.type);
            need(bytes);
            pos += bytes;
            values[p] = 0.0;
          } else {
            need(ply_size(prop.type));
            values[p] = read_binary_scalar(data.data() + pos, prop.type);
            pos += ply_size(prop.type);
          }
        }
      }
      if (is_vertex) store_vertex(cloud, slots, values, row, where);
    }
  }
  if (!have_vertex) throw IoError(where + ": no vertex element");
  if (h.format == CloudFormat::ply_binary_le && pos != data.size()) {
    throw IoError(where + ": byte " + std::to_string(pos) + ": " + std::to_string(data.size() - pos) +
                  " trailing bytes after the declared elements");
  }
  return cloud;
}

inline PointCloud parse_xyz(std::string_view data, const std::string& where) {
  PointCloud cloud;
  std::size_t pos = 0, line_no = 0;
  int columns = -1;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string_view::npos) eol = data.size();
    std::string_view line = data.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    const int n = static_cast<int>(tok.size());
    if (n != 3 && n != 6) {
      throw IoError(where + ": line " + std::to_string(line_no) + ": expected 3 or 6 columns, got " +
                    std::to_string(n));
    }
    if (columns < 0) columns = n;
    if (n != columns) {
      throw IoError(where + ": line " + std::to_string(line_no) + ": column count changed from " +
                    std::to_string(columns) + " to " + std::to_string(n));
    }
    double v[6];
    for (int i = 0; i < n; ++i) {
      auto d = parse_double(tok[i]);
      if (!d) {
        throw IoError(where + ": line " + std::to_string(line_no) + ": non-numeric value '" +
                      std::string(tok[i]) + "'");
      }
      v[i] = *d;
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (n == 6) {
      Vec3 nn(v[3], v[4], v[5]);
      const double len = nn.norm();
      if (!(len > 0.0)) throw IoError(where + ": line " + std::to_string(line_no) + ": zero normal");
      if (std::abs(len - 1.0) > 1e-6) nn /= len;
      cloud.normals.push_back(nn);
    }
  }
  return cloud;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
void append_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

inline void append_double_text(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  out.append(buf, p);
}

}  // namespace detail

inline CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::xyz;
  if (ext != ".ply") throw IoError("cannot infer point cloud format from '" + path.string() + "'");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  for (int i = 0; i < 64 && std::getline(in, line); ++i) {
    if (line.rfind("format ascii", 0) == 0) return CloudFormat::ply_ascii;
    if (line.rfind("format binary_little_endian", 0) == 0) return CloudFormat::ply_binary_le;
    if (line.rfind("format binary_big_endian", 0) == 0) throw IoError(path.string() + ": big-endian PLY is not supported");
  }
  throw IoError(path.string() + ": no PLY format line");
}

inline PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format) {
  const std::string data = detail::read_file(path);
  PointCloud cloud = format == CloudFormat::xyz ? detail::parse_xyz(data, path.string())
                                                : detail::parse_ply(data, format, path.string());
  cloud.validate();
  return cloud;
}

inline PointCloud load_point_cloud(const std::filesystem::path& path) {
  return load_point_cloud(path, format_from_path(path));
}

inline std::string encode_ply(const PointCloud& cloud, CloudFormat format) {
  cloud.validate();
  if (format == CloudFormat::xyz) throw IoError("encode_ply called with xyz format");
  const bool ascii = format == CloudFormat::ply_ascii;
  std::string out;
  out += "ply\nformat ";
  out += ascii ? "ascii" : "binary_little_endian";
  out += " 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_normals()) out += "property double nx\nproperty double ny\nproperty double nz\n";
  if (cloud.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_scan_ids()) out += "property uint scan_id\n";
  out += "end_header\n";
  out.reserve(out.size() + cloud.size() * (ascii ? 64 : 56));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (ascii) {
      auto put = [&](double v, bool last = false) {
        detail::append_double_text(out, v);
        out += last ? '\n' : ' ';
      };
      const bool tail_n = !cloud.has_colors() && !cloud.has_scan_ids();
      put(cloud.points[i].x()); put(cloud.points[i].y());
      put(cloud.points[i].z(), !cloud.has_normals() && tail_n);
      if (cloud.has_normals()) {
        put(cloud.normals[i].x()); put(cloud.normals[i].y()); put(cloud.normals[i].z(), tail_n);
      }
      if (cloud.has_colors()) {
        const auto& c = cloud.colors[i];
        out += std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' + std::to_string(c.b);
        out += cloud.has_scan_ids() ? ' ' : '\n';
      }
      if (cloud.has_scan_ids()) out += std::to_string(cloud.scan_ids[i]) + '\n';
    } else {
      for (int k = 0; k < 3; ++k) detail::append_le(out, cloud.points[i][k]);
      if (cloud.has_normals()) for (int k = 0; k < 3; ++k) detail::append_le(out, cloud.normals[i][k]);
      if (cloud.has_colors()) {
        detail::append_le(out, cloud.colors[i].r);
        detail::append_le(out, cloud.colors[i].g);
        detail::append_le(out, cloud.colors[i].b);
      }
      if (cloud.has_scan_ids()) detail::append_le(out, cloud.scan_ids[i]);
    }
  }
  return out;
}

inline void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  if (format == CloudFormat::xyz) {
    cloud.validate();
    std::string out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        detail::append_double_text(out, cloud.points[i][k]);
        out += ' ';
      }
      if (cloud.has_normals()) {
        for (int k = 0; k < 3; ++k) {
          detail::append_double_text(out, cloud.normals[i][k]);
          out += ' ';
        }
      }
      out.back() = '\n';
    }
    detail::write_file(path, out);
    return;
  }
  detail::write_file(path, encode_ply(cloud, format));
}

/// Writes positions plus per-vertex colors encoding the labels. Point order
/// and count are preserved.
inline void save_labeled_cloud(const PointCloud& cloud, const std::vector<PointLabel>& labels,
                               const std::filesystem::path& path,
                               CloudFormat format = CloudFormat::ply_binary_le) {
  if (labels.size() != cloud.size()) throw IoError("label count does not match point count");
  PointCloud out;
  out.points = cloud.points;
  out.colors.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.colors[i] = label_color(labels[i]);
  save_point_cloud(out, path, format);
}

inline ScannerMetadata parse_scanner_metadata(std::string_view data, const std::string& where) {
  ScannerMetadata meta;
  std::size_t pos = 0, line_no = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string_view::npos) eol = data.size();
    std::string_view line = data.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& msg) {
      return IoError(where + ": line " + std::to_string(line_no) + ": " + msg);
    };
    if (tok.size() != 4) throw fail("expected 'id x y z'");
    auto id = detail::parse_int<std::uint32_t>(tok[0]);
    if (!id) throw fail("invalid scanner id '" + std::string(tok[0]) + "'");
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      auto v = detail::parse_double(tok[k + 1]);
      if (!v) throw fail("non-numeric coordinate '" + std::string(tok[k + 1]) + "'");
      p[k] = *v;
    }
    if (!meta.positions.emplace(*id, p).second) throw fail("duplicate scanner id " + std::to_string(*id));
  }
  return meta;
}

inline ScannerMetadata load_scanner_metadata(const std::filesystem::path& path) {
  return parse_scanner_metadata(detail::read_file(path), path.string());
}

inline void save_scanner_metadata(const ScannerMetadata& meta, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, p] : meta.positions) {
    out += std::to_string(id);
    for (int k = 0; k < 3; ++k) {
      out += ' ';
      detail::append_double_text(out, p[k]);
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

}  // namespace normorient
