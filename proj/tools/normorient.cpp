// normorient: scene synthesis, normal orientation, evaluation and ablation.

#include "normorient/normorient.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace normorient;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,      // command line or config file
  kInput = 3,      // unreadable/invalid input, unwritable output
  kPipeline = 4,   // orientation could not run (e.g. no planes)
  kNoTruth = 5,    // evaluation without scan ids or scanner positions
};

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

std::string num(double v) {
  std::string s;
  detail::append_double_text(s, v);
  return s;
}

CloudFormat parse_format(const std::string& f) {
  if (f == "binary") return CloudFormat::ply_binary_le;
  if (f == "ascii") return CloudFormat::ply_ascii;
  throw ExitError(kUsage, "--format must be binary or ascii");
}

struct RunConfig {
  std::string input, output_dir = ".", scanners, report, format = "binary";
  bool estimate_normals = false, dump_bitmaps = false, dump_phases = false, warmup = false;
  std::size_t knn = kDefaultKnn;
  DetectionParams detection;
  double cell_size = kDefaultCellSize;
  TraceConfig trace;
  bool tau_set = false;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  // Everything that influences the result; thread count and output
  // location do not and are left out so reports compare byte for byte.
  std::vector<std::pair<std::string, std::string>> describe() const {
    return {{"input", input},
            {"scanners", scanners},
            {"estimate-normals", estimate_normals ? "true" : "false"},
            {"knn", std::to_string(knn)},
            {"ransac-eps", num(detection.epsilon)},
            {"ransac-alpha", num(detection.alpha_deg)},
            {"min-support", std::to_string(detection.min_support)},
            {"connectivity-cell", num(detection.connectivity_cell)},
            {"max-candidates", std::to_string(detection.max_candidates)},
            {"cell-size", num(cell_size)},
            {"rays", std::to_string(trace.rays)},
            {"bounces", std::to_string(trace.bounces)},
            {"tau", num(trace.tau)},
            {"cone-deg", num(trace.cone_half_angle)},
            {"t-min", num(trace.t_min)},
            {"seed", std::to_string(seed)}};
  }
};

void add_run_options(CLI::App& sub, RunConfig& c, bool with_bounces) {
  sub.add_option("--input", c.input, "Input cloud (.ply or .xyz)")->required();
  sub.add_option("--output-dir", c.output_dir, "Directory for all outputs");
  sub.add_option("--scanners", c.scanners, "Scanner positions, one 'id x y z' per line");
  sub.add_option("--report", c.report, "Report path (default <output-dir>/report.json)");
  sub.add_flag("--estimate-normals", c.estimate_normals, "Estimate normals by PCA instead of using the input's");
  sub.add_option("--knn", c.knn, "Neighbors for normal estimation")->check(CLI::Range(3, 1 << 20));
  sub.add_option("--ransac-eps", c.detection.epsilon, "Plane distance threshold (m)");
  sub.add_option("--ransac-alpha", c.detection.alpha_deg, "Normal deviation threshold (deg)");
  sub.add_option("--min-support", c.detection.min_support, "Minimum points per plane");
  sub.add_option("--connectivity-cell", c.detection.connectivity_cell, "Cell size of the plane connectivity grid (m)");
  sub.add_option("--max-candidates", c.detection.max_candidates, "Candidate planes sampled per extraction round");
  sub.add_option("--cell-size", c.cell_size, "Patch size (m)");
  sub.add_option("--rays", c.trace.rays, "Rays per patch side (k)");
  if (with_bounces) sub.add_option("--bounces", c.trace.bounces, "Maximum bounces per path (b)");
  sub.add_option("--tau", c.trace.tau, "Bounce threshold (default b/2)");
  sub.add_option("--cone-deg", c.trace.cone_half_angle, "Cone half-angle (deg)");
  sub.add_option("--t-min", c.trace.t_min, "Self-intersection offset (m)");
  sub.add_option("--seed", c.seed, "Random seed");
  sub.add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  sub.add_option("--format", c.format, "Output PLY encoding: binary or ascii");
  sub.add_flag("--dump-bitmaps", c.dump_bitmaps, "Write per-plane occupancy bitmaps as PGM");
  sub.add_flag("--dump-phases", c.dump_phases, "Write the per-patch phase table");
  sub.add_flag("--warmup", c.warmup, "Run the orientation once untimed before the measured run");
}

void finalize(RunConfig& c, const CLI::App& sub) {
  c.tau_set = sub.count("--tau") > 0;
  if (!c.tau_set) c.trace.tau = c.trace.bounces / 2.0;
  c.detection.seed = c.seed;
  c.trace.seed = c.seed;
  set_thread_count(c.threads);
  try {
    c.detection.validate();
    c.trace.validate();
  } catch (const std::invalid_argument& e) {
    throw ExitError(kUsage, e.what());
  }
  if (!(c.cell_size > 0.0)) throw ExitError(kUsage, "--cell-size must be > 0");
  parse_format(c.format);
}

/// Loads "key = value" lines and appends them as command-line arguments
/// for every key not already given on the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
  std::vector<std::string> out;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ExitError(kUsage, "--config needs a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (config_path.empty() || out.empty()) return out;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(out.front());
  } catch (const CLI::OptionNotFound&) {
    return out;
  }
  std::set<std::string> given;
  for (const auto& a : out) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::string text;
  try {
    text = detail::read_file(config_path);
  } catch (const IoError& e) {
    throw ExitError(kInput, e.what());
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = config_path + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ExitError(kUsage, where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw ExitError(kUsage, where + "unknown key '" + key + "'");
    if (given.count(key)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes") out.push_back("--" + key);
      else if (value != "false" && value != "0" && value != "no") throw ExitError(kUsage, where + "'" + key + "' expects true or false");
    } else {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  return out;
}

struct Inputs {
  PointCloud cloud;
  std::optional<ScannerMetadata> scanners;
};

Inputs load_inputs(const RunConfig& c) {
  Inputs in;
  try {
    in.cloud = load_point_cloud(c.input);
    if (!c.scanners.empty()) in.scanners = load_scanner_metadata(c.scanners);
  } catch (const IoError& e) {
    throw ExitError(kInput, e.what());
  }
  if (in.cloud.empty()) throw ExitError(kInput, c.input + ": no points");
  return in;
}

struct OrientRun {
  PointCloud cloud;  // cloud the pipeline saw (estimated normals if requested)
  PlaneDetection detection;
  PatchSet patches;
  PipelineResult result;
  OrientedCloud oriented;
  Timings timings;
};

OrientRun run_orientation(const RunConfig& c, PointCloud input, Timings& timings) {
  OrientRun run;
  auto t0 = Clock::now();
  if (c.estimate_normals) {
    if (input.size() < 3) throw ExitError(kInput, "normal estimation needs at least 3 points");
    const KnnIndex index = build_knn_index(input);
    run.cloud = estimate_normals(input, index, std::min(c.knn, input.size())).cloud;
    timings.stages.emplace_back("normal estimation", ms_since(t0));
  } else {
    if (!input.has_normals()) throw ExitError(kInput, c.input + ": no normals (use --estimate-normals)");
    run.cloud = std::move(input);
  }

  t0 = Clock::now();
  run.detection = detect_planes(run.cloud, c.detection);
  timings.stages.emplace_back("plane detection", ms_since(t0));
  if (run.detection.planes.empty()) {
    throw ExitError(kPipeline, "no planes detected (min-support " + std::to_string(c.detection.min_support) +
                                   ", ransac-eps " + num(c.detection.epsilon) + ")");
  }

  t0 = Clock::now();
  run.patches = build_patches(run.detection.planes, run.cloud, c.cell_size);
  timings.stages.emplace_back("patches", ms_since(t0));

  if (c.warmup) run_pipeline(run.patches, run.detection.planes.size(), c.trace);
  run.result = run_pipeline(run.patches, run.detection.planes.size(), c.trace);
  for (std::size_t p = 0; p < 4; ++p) {
    timings.stages.emplace_back("phase " + std::string(kPhaseNames[p]), run.result.timings.ms[p]);
  }

  t0 = Clock::now();
  run.oriented = propagate_to_points(run.cloud, run.patches, run.result);
  timings.stages.emplace_back("propagation", ms_since(t0));
  return run;
}

EvalReport make_report(const RunConfig& c, const OrientRun& run, const std::optional<ScannerMetadata>& scanners) {
  EvalReport r;
  r.input = c.input;
  r.seed = c.seed;
  r.config = c.describe();
  r.points = run.cloud.size();
  std::set<std::uint32_t> scans(run.cloud.scan_ids.begin(), run.cloud.scan_ids.end());
  r.scans = scans.size();
  r.points_on_patches = run.patches.on_patch_count();
  for (auto l : run.oriented.labels) r.non_outside_points += l == PointLabel::interior || l == PointLabel::exterior;
  r.planes = run.detection.planes.size();
  r.patches = run.patches.patches.size();
  r.patches_in = run.result.count(PatchClass::in);
  r.patches_ex = run.result.count(PatchClass::ex);
  r.patches_out = run.result.count(PatchClass::out);
  r.dropped_planes = run.result.dropped_planes.size();
  if (scanners && run.cloud.has_scan_ids()) {
    const auto gt = ground_truth_signs(run.cloud, *scanners);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      r.undefined_ground_truth += gt[i] == 0 && run.oriented.phase_sign[3][i] != 0;
    }
    for (std::size_t p = 0; p < 4; ++p) r.correctness[p] = score_phase(run.oriented.phase_sign[p], gt);
  }
  return r;
}

void write_phase_table(const OrientRun& run, const fs::path& path) {
  std::string out = "patch\tplane\tclass\t1A\t1B\t2A\t2B\tB+\tB-\tL+\tL-\tphi\n";
  for (const Patch& p : run.patches.patches) {
    const PatchDecision& d = run.result.decisions[p.id];
    out += std::to_string(p.id) + '\t' + std::to_string(p.plane) + '\t' + std::string(to_string(d.cls));
    for (auto s : d.sign) out += '\t' + std::to_string(static_cast<int>(s));
    for (double v : {d.plus.bounces, d.minus.bounces, d.plus.length, d.minus.length}) out += '\t' + num(v);
    out += '\t' + std::to_string(d.phi) + '\n';
  }
  write_text_file(path, out);
}

void write_outputs(const RunConfig& c, const OrientRun& run, const std::optional<ScannerMetadata>& scanners) {
  const fs::path dir = c.output_dir;
  const CloudFormat fmt = parse_format(c.format);
  save_point_cloud(run.oriented.cloud, dir / "oriented.ply", fmt);

  PointCloud labeled = run.oriented.cloud;
  labeled.colors.resize(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) labeled.colors[i] = label_color(run.oriented.labels[i]);
  save_point_cloud(labeled, dir / "labels.ply", fmt);

  if (scanners && run.cloud.has_scan_ids()) {
    const auto gt = ground_truth_signs(run.cloud, *scanners);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const auto s = run.oriented.phase_sign[3][i];
      const PointLabel l = s == 0 || gt[i] == 0 ? PointLabel::off_patch
                           : s == gt[i]         ? PointLabel::correct
                                                : PointLabel::incorrect;
      labeled.colors[i] = label_color(l);
    }
    save_point_cloud(labeled, dir / "correctness.ply", fmt);
  }
  if (c.dump_phases) write_phase_table(run, dir / "phases.tsv");
  if (c.dump_bitmaps) {
    fs::create_directories(dir / "bitmaps");
    for (const auto& bm : run.patches.bitmaps) {
      if (bm.width == 0) continue;
      char name[32];
      std::snprintf(name, sizeof name, "plane_%04u.pgm", bm.plane);
      write_bitmap_pgm(bm, dir / "bitmaps" / name);
    }
  }
}

void prepare_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ExitError(kInput, "cannot create output directory " + dir + ": " + ec.message());
}

int cmd_orient(RunConfig& c) {
  const auto start = Clock::now();
  prepare_output_dir(c.output_dir);
  Timings timings;
  auto t0 = Clock::now();
  Inputs in = load_inputs(c);
  timings.stages.emplace_back("load", ms_since(t0));
  if (in.scanners && !in.cloud.has_scan_ids()) throw ExitError(kNoTruth, c.input + ": no scan_id property");

  OrientRun run = run_orientation(c, std::move(in.cloud), timings);
  t0 = Clock::now();
  EvalReport report = make_report(c, run, in.scanners);
  write_outputs(c, run, in.scanners);
  timings.stages.emplace_back("output", ms_since(t0));
  timings.total_ms = ms_since(start);
  report.timings = timings;
  const fs::path report_path = c.report.empty() ? fs::path(c.output_dir) / "report.json" : fs::path(c.report);
  std::cout << emit_report(report, report_path);
  return kOk;
}

struct EvalOptions {
  std::string input, scanners, labels, report;
};

int cmd_eval(const EvalOptions& o) {
  PointCloud cloud;
  ScannerMetadata scanners;
  std::vector<std::uint8_t> mask;
  try {
    cloud = load_point_cloud(o.input);
    scanners = load_scanner_metadata(o.scanners);
    if (!o.labels.empty()) {
      const PointCloud labels = load_point_cloud(o.labels);
      if (labels.size() != cloud.size() || !labels.has_colors()) {
        throw IoError(o.labels + ": expected one colored point per input point");
      }
      mask.resize(cloud.size());
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Rgb col = labels.colors[i];
        mask[i] = col == label_color(PointLabel::interior) || col == label_color(PointLabel::exterior);
      }
    }
  } catch (const IoError& e) {
    throw ExitError(kInput, e.what());
  }
  if (!cloud.has_scan_ids()) throw ExitError(kNoTruth, o.input + ": no scan_id property");
  if (!cloud.has_normals()) throw ExitError(kInput, o.input + ": no normals to evaluate");
  std::vector<std::int8_t> gt;
  try {
    gt = ground_truth_signs(cloud, scanners);
  } catch (const IoError& e) {
    throw ExitError(kNoTruth, e.what());
  }
  // The cloud is scored as it stands: every point keeps its normal.
  const std::vector<std::int8_t> keep(cloud.size(), 1);
  EvalReport r;
  r.input = o.input;
  r.points = cloud.size();
  r.scans = std::set<std::uint32_t>(cloud.scan_ids.begin(), cloud.scan_ids.end()).size();
  std::size_t scored = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool in = mask.empty() || mask[i];
    scored += in;
    r.undefined_ground_truth += in && gt[i] == 0;
  }
  r.points_on_patches = r.non_outside_points = scored;
  r.correctness[3] = score_phase(keep, gt, mask);
  if (o.report.empty()) {
    std::cout << format_report_table(r);
  } else {
    std::cout << emit_report(r, o.report);
  }
  return kOk;
}

struct SynthOptions {
  std::string scene, spec, output_dir = ".", format = "binary";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

int cmd_synth(const SynthOptions& o) {
  if (o.scene.empty() == o.spec.empty()) throw ExitError(kUsage, "give exactly one of --scene or --spec");
  set_thread_count(o.threads);
  SceneSpec spec;
  SyntheticScan scan;
  try {
    spec = o.scene.empty() ? load_scene_spec(o.spec) : preset_scene(o.scene);
    if (o.seed) spec.scan.seed = *o.seed;
    if (spec.name.empty()) spec.name = fs::path(o.spec).stem().string();
    const SurfaceModel model = build_building(spec.building);
    scan = simulate_scan(model, spec.scanners, spec.scan);
  } catch (const SceneSpecError& e) {
    throw ExitError(kInput, e.what());
  } catch (const IoError& e) {
    throw ExitError(kInput, e.what());
  }
  prepare_output_dir(o.output_dir);
  const fs::path dir = o.output_dir;
  save_point_cloud(scan.cloud, dir / (spec.name + ".ply"), parse_format(o.format));
  save_scanner_metadata(scan.scanners, dir / (spec.name + ".scanners"));
  write_text_file(dir / (spec.name + ".scene"), format_scene_spec(spec));
  std::cout << spec.name << ": " << scan.cloud.size() << " points from " << scan.scanners.size() << " scanners -> "
            << (dir / (spec.name + ".ply")).string() << "\n";
  return kOk;
}

struct AblateOptions {
  std::vector<std::uint32_t> bounces = {1, 2, 8};
};

int cmd_ablate(RunConfig& c, const AblateOptions& a) {
  prepare_output_dir(c.output_dir);
  Inputs in = load_inputs(c);
  if (!in.scanners || !in.cloud.has_scan_ids()) throw ExitError(kNoTruth, "ablation needs --scanners and scan ids");
  const auto& list = a.bounces;
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  std::printf("%8s %8s %9s %9s %9s %9s %8s\n", "bounces", "tau", "1A", "1B", "2A", "2B", "out");
  for (auto b : list) {
    RunConfig rc = c;
    rc.trace.bounces = b;
    if (!c.tau_set) rc.trace.tau = b / 2.0;
    Timings t;
    const OrientRun run = run_orientation(rc, in.cloud, t);
    const EvalReport r = make_report(rc, run, in.scanners);
    nlohmann::ordered_json row = {{"bounces", b}, {"tau", rc.trace.tau}, {"patches_out", r.patches_out}};
    std::printf("%8u %8.2f", b, rc.trace.tau);
    for (std::size_t p = 0; p < 4; ++p) {
      row[std::string(kPhaseKeys[p])] = r.correctness[p]->percent();
      std::printf(" %8.2f%%", r.correctness[p]->percent());
    }
    std::printf(" %8zu\n", r.patches_out);
    out.push_back(row);
  }
  write_text_file(fs::path(c.output_dir) / "ablation.json", out.dump(2) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normal orientation for indoor point clouds"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");
  app.footer("Options may also come from --config FILE ('key = value' lines); command-line flags win.");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic scan (PLY + scanner file)");
  s->add_option("--scene", synth.scene, "Built-in scene: S1, S2, S3 or S4");
  s->add_option("--spec", synth.spec, "Scene description file");
  s->add_option("--output-dir", synth.output_dir, "Output directory");
  s->add_option("--seed", synth.seed, "Override the scan seed");
  s->add_option("--format", synth.format, "PLY encoding: binary or ascii");
  s->add_option("--threads", synth.threads, "Worker threads (0 = all cores)");

  RunConfig orient;
  auto* o = app.add_subcommand("orient", "Orient normals and write labeled clouds plus a report");
  add_run_options(*o, orient, true);

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Score an oriented cloud against scanner positions");
  e->add_option("--input", eval.input, "Oriented cloud with scan_id")->required();
  e->add_option("--scanners", eval.scanners, "Scanner positions")->required();
  e->add_option("--labels", eval.labels, "labels.ply from orient; restricts scoring to non-outside patches");
  e->add_option("--report", eval.report, "Write report JSON here");

  RunConfig ablate;
  AblateOptions abl;
  auto* a = app.add_subcommand("ablate", "Compare phase correctness over several bounce limits");
  add_run_options(*a, ablate, false);
  a->add_option("--bounces-list", abl.bounces, "Comma-separated bounce limits")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(args, app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  } catch (const ExitError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return ex.code;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*o) {
      finalize(orient, *o);
      return cmd_orient(orient);
    }
    if (*e) return cmd_eval(eval);
    if (*a) {
      finalize(ablate, *a);
      return cmd_ablate(ablate, abl);
    }
  } catch (const ExitError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return ex.code;
  } catch (const IoError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kInput;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kPipeline;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kPipeline;
  }
  return kOk;
}
