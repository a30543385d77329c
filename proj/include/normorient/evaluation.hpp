#pragma once

// Scoring against scanner-derived ground truth and the run report.
//
// report.json layout:
//   { "schema": "normorient-report/1",
//     "input": str, "seed": uint, "config": {key: str, ...},
//     "statistics": {"points", "scans", "points_on_patches", "non_outside_points",
//                    "undefined_ground_truth"},
//     "plane_detection": {"planes", "patches", "patches_in", "patches_ex",
//                         "patches_out", "dropped_planes"},
//     "correctness": {"1A"|"1B"|"2A"|"2B": {"correct", "total", "percent"}} }
// Wall-clock timings go to a separate timings.json ("stages": {name: ms},
// "total_ms") so that the report itself is reproducible byte for byte.

#include "normorient/pointcloud_io.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace normorient {

inline constexpr std::string_view kReportSchema = "normorient-report/1";
inline constexpr std::array<std::string_view, 4> kPhaseKeys = {"1A", "1B", "2A", "2B"};

/// +1 when the normal faces the scanner that saw the point, -1 when it faces
/// away, 0 when the scanner lies in the tangent plane.
inline std::vector<std::int8_t> ground_truth_signs(const PointCloud& cloud, const ScannerMetadata& scanners) {
  if (!cloud.has_scan_ids()) throw IoError("ground truth needs per-point scan ids");
  if (!cloud.has_normals()) throw IoError("ground truth needs normals");
  std::vector<std::int8_t> gt(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3* s = scanners.find(cloud.scan_ids[i]);
    if (!s) throw IoError("no scanner position for scan id " + std::to_string(cloud.scan_ids[i]));
    const double d = cloud.normals[i].dot(*s - cloud.points[i]);
    gt[i] = static_cast<std::int8_t>((d > 0.0) - (d < 0.0));
  }
  return gt;
}

struct PhaseScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double percent() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  friend bool operator==(const PhaseScore&, const PhaseScore&) = default;
};

/// `sign[i]` is the decision for point i relative to the normal `gt` was
/// computed on (+1 keep, -1 flip, 0 unscored). Points with undefined ground
/// truth are skipped. An optional mask restricts scoring to a subset.
inline PhaseScore score_phase(std::span<const std::int8_t> sign, std::span<const std::int8_t> gt,
                              std::span<const std::uint8_t> mask = {}) {
  if (sign.size() != gt.size() || (!mask.empty() && mask.size() != gt.size())) {
    throw std::invalid_argument("score_phase: inputs cover different point counts");
  }
  PhaseScore s;
  for (std::size_t i = 0; i < sign.size(); ++i) {
    if (sign[i] == 0 || gt[i] == 0 || (!mask.empty() && !mask[i])) continue;
    ++s.total;
    s.correct += sign[i] == gt[i];
  }
  return s;
}

struct Timings {
  std::vector<std::pair<std::string, double>> stages;  // milliseconds, in execution order
  double total_ms = 0.0;

  double stage_sum() const {
    double s = 0.0;
    for (const auto& [_, ms] : stages) s += ms;
    return s;
  }
};

struct EvalReport {
  std::string input;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;

  std::size_t points = 0, scans = 0;
  std::size_t points_on_patches = 0, non_outside_points = 0, undefined_ground_truth = 0;

  std::size_t planes = 0, patches = 0, patches_in = 0, patches_ex = 0, patches_out = 0, dropped_planes = 0;

  std::array<std::optional<PhaseScore>, 4> correctness;  // absent without ground truth
  std::optional<Timings> timings;                         // not part of report.json

  double fraction_on_patches() const { return points ? static_cast<double>(points_on_patches) / static_cast<double>(points) : 0.0; }
  double fraction_non_outside() const { return points ? static_cast<double>(non_outside_points) / static_cast<double>(points) : 0.0; }
};

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["input"] = r.input;
  j["seed"] = r.seed;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["statistics"] = {{"points", r.points},
                     {"scans", r.scans},
                     {"points_on_patches", r.points_on_patches},
                     {"non_outside_points", r.non_outside_points},
                     {"undefined_ground_truth", r.undefined_ground_truth}};
  j["plane_detection"] = {{"planes", r.planes},           {"patches", r.patches},
                          {"patches_in", r.patches_in},   {"patches_ex", r.patches_ex},
                          {"patches_out", r.patches_out}, {"dropped_planes", r.dropped_planes}};
  auto& corr = j["correctness"] = nlohmann::ordered_json::object();
  for (std::size_t p = 0; p < 4; ++p) {
    if (!r.correctness[p]) continue;
    const PhaseScore& s = *r.correctness[p];
    corr[std::string(kPhaseKeys[p])] = {{"correct", s.correct}, {"total", s.total}, {"percent", s.percent()}};
  }
  return j;
}

inline nlohmann::ordered_json timings_to_json(const Timings& t) {
  nlohmann::ordered_json j;
  auto& st = j["stages"] = nlohmann::ordered_json::object();
  for (const auto& [k, ms] : t.stages) st[k] = ms;
  j["total_ms"] = t.total_ms;
  return j;
}

/// Reads a report back and checks it against the schema above.
inline EvalReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("schema").get<std::string>() != kReportSchema) throw ReportError("unknown report schema");
    EvalReport r;
    r.input = j.at("input").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    const auto& st = j.at("statistics");
    r.points = st.at("points").get<std::size_t>();
    r.scans = st.at("scans").get<std::size_t>();
    r.points_on_patches = st.at("points_on_patches").get<std::size_t>();
    r.non_outside_points = st.at("non_outside_points").get<std::size_t>();
    r.undefined_ground_truth = st.at("undefined_ground_truth").get<std::size_t>();
    const auto& pd = j.at("plane_detection");
    r.planes = pd.at("planes").get<std::size_t>();
    r.patches = pd.at("patches").get<std::size_t>();
    r.patches_in = pd.at("patches_in").get<std::size_t>();
    r.patches_ex = pd.at("patches_ex").get<std::size_t>();
    r.patches_out = pd.at("patches_out").get<std::size_t>();
    r.dropped_planes = pd.at("dropped_planes").get<std::size_t>();
    const auto& corr = j.at("correctness");
    for (std::size_t p = 0; p < 4; ++p) {
      const std::string key(kPhaseKeys[p]);
      if (!corr.contains(key)) continue;
      PhaseScore s{corr.at(key).at("correct").get<std::size_t>(), corr.at(key).at("total").get<std::size_t>()};
      if (s.correct > s.total) throw ReportError("correctness " + key + ": correct exceeds total");
      r.correctness[p] = s;
    }
    if (r.points_on_patches > r.points || r.non_outside_points > r.points_on_patches) {
      throw ReportError("inconsistent point counts");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
}

inline EvalReport parse_report(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

namespace detail {

inline std::string fmt(const char* f, auto... args) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

}  // namespace detail

/// Human-readable table with the Statistics / Plane detection / Correctness /
/// Runtime blocks.
inline std::string format_report_table(const EvalReport& r) {
  std::ostringstream o;
  auto pct = [](double f) { return 100.0 * f; };
  o << "Statistics\n";
  o << detail::fmt("  %-28s %12zu\n", "points", r.points);
  o << detail::fmt("  %-28s %12zu\n", "scans", r.scans);
  o << detail::fmt("  %-28s %11.2f%%\n", "points on patches", pct(r.fraction_on_patches()));
  o << detail::fmt("  %-28s %11.2f%%\n", "points on non-outside", pct(r.fraction_non_outside()));
  o << "Plane detection\n";
  o << detail::fmt("  %-28s %12zu\n", "planes", r.planes);
  o << detail::fmt("  %-28s %12zu\n", "patches", r.patches);
  o << detail::fmt("  %-28s %4zu/%4zu/%4zu\n", "patches in/ex/out", r.patches_in, r.patches_ex, r.patches_out);
  o << "Correctness\n";
  for (std::size_t p = 0; p < 4; ++p) {
    const std::string label = "phase " + std::string(kPhaseKeys[p]);
    if (r.correctness[p]) {
      const PhaseScore& s = *r.correctness[p];
      o << detail::fmt("  %-28s %11.2f%%  (%zu/%zu)\n", label.c_str(), s.percent(), s.correct, s.total);
    } else {
      o << detail::fmt("  %-28s %12s\n", label.c_str(), "n/a");
    }
  }
  o << "Runtime\n";
  if (r.timings) {
    for (const auto& [name, ms] : r.timings->stages) o << detail::fmt("  %-28s %9.1f ms\n", name.c_str(), ms);
    o << detail::fmt("  %-28s %9.1f ms\n", "total", r.timings->total_ms);
  } else {
    o << detail::fmt("  %-28s %12s\n", "(not measured)", "");
  }
  return o.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// Writes report.json to `path` and, when timings are present, a sibling
/// timings.json. Returns the text table.
inline std::string emit_report(const EvalReport& r, const std::filesystem::path& path) {
  write_text_file(path, report_to_json(r).dump(2) + "\n");
  if (r.timings) write_text_file(path.parent_path() / "timings.json", timings_to_json(*r.timings).dump(2) + "\n");
  return format_report_table(r);
}

}  // namespace normorient
