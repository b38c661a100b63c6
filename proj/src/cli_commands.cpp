#include "elastocal/cli_io.hpp"

#include "elastocal/error.hpp"
#include "elastocal/random.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <unistd.h>

namespace elastocal {

namespace {

// Sub-seed streams of the project seed.
enum Stream : std::uint64_t {
  kIdentificationNoise = 1,
  kValidationNoise = 2,
  kTraceNoise = 3,
  kPlanGrid = 4,
  kValidationPoses = 5,
  kPlanSearch = 6,
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::filesystem::path report_dir(const CommandInputs& in) {
  if (const char* env = std::getenv(kReportDirEnv); env && *env) return env;
  return in.out_dir;
}

const std::filesystem::path& require_input(const CommandInputs& in, const std::string& name,
                                           std::string_view verb) {
  const auto it = in.files.find(name);
  if (it == in.files.end() || it->second.empty()) {
    throw Error(ErrorCategory::missing_input,
                std::string(verb) + " requires the '" + name + "' input file");
  }
  if (!std::filesystem::exists(it->second)) {
    throw Error(ErrorCategory::missing_input, "input '" + name + "' not found: " + it->second.string());
  }
  return it->second;
}

const std::filesystem::path* optional_input(const CommandInputs& in, const std::string& name) {
  const auto it = in.files.find(name);
  if (it == in.files.end() || it->second.empty()) return nullptr;
  if (!std::filesystem::exists(it->second)) {
    throw Error(ErrorCategory::missing_input, "input '" + name + "' not found: " + it->second.string());
  }
  return &it->second;
}

void write_report(const CommandInputs& in, const std::string& name, const Report& report, std::ostream& log) {
  const auto path = report_dir(in) / name;
  write_file_atomic(path, emit_report(report));
  log << "report: " << path.string() << "\n";
}

void write_artifact(const CommandInputs& in, const std::string& name, std::string_view content,
                    std::ostream& log) {
  const auto path = in.out_dir / name;
  write_file_atomic(path, content);
  log << "wrote: " << path.string() << "\n";
}

PlanSearchResult run_planner(const ProjectConfig& cfg, std::size_t& q2_groups) {
  const ElastoModel model = cfg.nominal_model();
  const auto& p = cfg.plan;
  CandidateGrid grid;
  for (std::size_t i = 0; i < p.force_magnitudes.size(); ++i) {
    GridOptions go;
    go.q2_levels = model.compensator ? p.q2_levels : std::vector<double>{};
    go.poses_per_level = p.poses_per_level;
    go.force_magnitude = p.force_magnitudes[i];
    go.load_lever = p.load_lever;
    go.seed = derive_seed(cfg.seed, kPlanGrid, i);
    CandidateGrid g = build_candidate_grid(model, go);
    grid.candidates.insert(grid.candidates.end(), g.candidates.begin(), g.candidates.end());
    grid.stratum.insert(grid.stratum.end(), g.stratum.begin(), g.stratum.end());
  }
  SearchConfig sc;
  sc.restarts = p.restarts;
  sc.seed = derive_seed(cfg.seed, kPlanSearch);
  if (!grid.stratum.empty()) {
    const std::size_t levels = p.q2_levels.size();
    sc.per_stratum.assign(levels, p.m / levels);
    for (std::size_t s = 0; s < p.m % levels; ++s) ++sc.per_stratum[s];
  }
  const PlanSearchResult result = optimize_plan(grid, p.m, {p.test_q, p.test_F}, model, sc);
  q2_groups = model.compensator ? result.plan.q2_groups(model.compensator->joint).size() : 0;
  return result;
}

CompensatorGeometry resolve_geometry(const ProjectConfig& cfg, const CommandInputs& in) {
  if (const auto* path = optional_input(in, "geometry")) return geometry_from_report(parse_report(read_file(*path)));
  if (!cfg.compensator) return {};
  if (cfg.compensator_to_identify) {
    throw Error(ErrorCategory::missing_input,
                "compensator geometry is marked for identification; pass a geometry report");
  }
  return cfg.compensator->geometry;
}

int cmd_simulate(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  ExperimentPlan plan;
  if (const auto* path = optional_input(in, "plan")) {
    plan = parse_plan(read_file(*path));
  } else {
    std::size_t groups = 0;
    plan = run_planner(cfg, groups).plan;
    write_artifact(in, "plan.csv", format_plan(plan), log);
  }
  NoiseSpec noise = cfg.noise;
  noise.seed = derive_seed(cfg.seed, kIdentificationNoise);
  CalibrationDataset data = generate_calibration_dataset(plan, cfg.truth, noise, cfg.repetitions);
  data.manifest.seed = cfg.seed;
  write_artifact(in, "measurements.csv", format_measurements(data.measurements), log);

  const auto poses = random_validation_entries(cfg.truth.true_model().robot, cfg.validation_configs,
                                               cfg.validation_force, derive_seed(cfg.seed, kValidationPoses));
  NoiseSpec vnoise = cfg.noise;
  vnoise.seed = derive_seed(cfg.seed, kValidationNoise);
  std::vector<LoadedMeasurement> validation;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto reps = simulate_loaded_measurement(cfg.truth, poses[i].q, poses[i].F, vnoise, cfg.repetitions, i);
    validation.insert(validation.end(), reps.begin(), reps.end());
  }
  if (!validation.empty()) write_artifact(in, "validation.csv", format_measurements(validation), log);

  if (cfg.truth.model.compensator) {
    NoiseSpec tnoise = cfg.noise;
    tnoise.seed = derive_seed(cfg.seed, kTraceNoise);
    const auto traces = simulate_compensator_markers(cfg.truth, cfg.geometry_q2, cfg.compensator_markers, tnoise);
    write_artifact(in, "traces.csv", format_traces(traces), log);
  }
  write_artifact(in, "manifest.txt", format_manifest(data.manifest), log);
  log << "simulated " << data.manifest.entries << " configurations x " << data.manifest.repetitions
      << " repetitions, " << poses.size() << " validation configurations\n";
  return 0;
}

int cmd_identify_geometry(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  const auto traces = parse_traces(read_file(require_input(in, "traces", "identify-geometry")));
  const MarkerTrace* p1 = nullptr;
  std::vector<MarkerTrace> body;
  for (const auto& t : traces) {
    if (t.marker_id == "P1") {
      p1 = &t;
    } else {
      body.push_back(t);
    }
  }
  if (!p1) throw Error(ErrorCategory::invalid_input, "trace file has no 'P1' marker");
  if (body.empty()) throw Error(ErrorCategory::invalid_input, "trace file has no pivot-body markers");
  const SpringConvention conv = cfg.compensator ? cfg.compensator->geometry.convention : SpringConvention::plus;
  const GeometryFitResult fit = identify_compensator_geometry(*p1, body, conv);
  const BalanceResidual balance = marker_balance_residual(body);
  log << "L = " << fmt(fit.L) << " m (+/- " << fmt(fit.ci_half_widths[0]) << ")\n"
      << "a_x = " << fmt(fit.a_x) << " m (+/- " << fmt(fit.ci_half_widths[1]) << ")\n"
      << "a_y = " << fmt(fit.a_y) << " m (+/- " << fmt(fit.ci_half_widths[2]) << ")\n"
      << "marker balance residual = " << fmt(balance.norm()) << " m\n";
  Report report;
  report.sections.push_back(geometry_section(fit, conv));
  write_report(in, "geometry.report", report, log);
  return 0;
}

int cmd_identify_elastostatics(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  const auto data = parse_measurements(read_file(require_input(in, "measurements", "identify-elastostatics")));
  IdentificationOptions options = cfg.identification;
  if (in.serial_only || !cfg.compensator) options.mode = IdentificationMode::serial_only;
  const CompensatorGeometry geometry =
      options.mode == IdentificationMode::serial_only ? CompensatorGeometry{} : resolve_geometry(cfg, in);
  const TwoStepResult result = run_two_step_identification(data, geometry, cfg.robot, options);

  Report report;
  if (const auto* path = optional_input(in, "geometry")) {
    const Report g = parse_report(read_file(*path));
    if (const auto* s = g.find("geometry")) report.sections.push_back(*s);
  }
  report.sections.push_back(elastostatics_section(result, options.mode));
  log << "condition number = " << fmt(result.step1.condition_number) << "\n";
  if (result.step2) {
    log << "K_theta2_0 = " << fmt(result.step2->K_theta2_0) << " Nm/rad, K_c = " << fmt(result.step2->K_c)
        << " N/m, s_0 = " << fmt(result.step2->s_0) << " m\n";
  }
  write_report(in, "elastostatics.report", report, log);
  return 0;
}

int cmd_plan(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  std::size_t groups = 0;
  const PlanSearchResult result = run_planner(cfg, groups);
  write_artifact(in, "plan.csv", format_plan(result.plan), log);
  log << "plan entries = " << result.plan.entries.size() << ", q2 groups = " << groups
      << ", criterion = " << fmt(result.criterion) << "\n";
  Report report;
  report.sections.push_back(plan_section(result, groups));
  write_report(in, "plan.report", report, log);
  return 0;
}

ElastoModel identified_model(const ProjectConfig& cfg, const CommandInputs& in, std::string_view verb) {
  const Report report = parse_report(read_file(require_input(in, "identified", verb)));
  ElastoModel model = model_from_report(report, cfg.robot);
  model.validate();
  return model;
}

int cmd_compensate(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  const ElastoModel model = identified_model(cfg, in, "compensate");
  const ExperimentPlan targets = parse_plan(read_file(require_input(in, "targets", "compensate")));
  CompensationOptions options;
  options.hessian = in.hessian ? LoadHessian::on : LoadHessian::off;
  const auto n = model.robot.n_joints();
  std::string out = "target_id";
  for (std::size_t j = 0; j < n; ++j) out += ",q" + std::to_string(j + 1);
  out += ",x,y,z,cx,cy,cz,clipped\n";
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < targets.entries.size(); ++i) {
    const auto r = compensated_target(model, targets.entries[i].q, targets.entries[i].F, options);
    out += std::to_string(i);
    for (Eigen::Index j = 0; j < r.corrected_q.size(); ++j) out += "," + fmt(r.corrected_q[j]);
    for (int k = 0; k < 3; ++k) out += "," + fmt(r.desired.position[k]);
    for (int k = 0; k < 3; ++k) out += "," + fmt(r.corrected_target.position[k]);
    out += r.clipped ? ",1\n" : ",0\n";
    if (r.clipped) {
      ++clipped;
      log << "warning: target " << i << " deflection clipped to the trust radius\n";
    }
  }
  write_artifact(in, "compensated.csv", out, log);
  log << "compensated " << targets.entries.size() << " targets (" << clipped << " clipped)\n";
  return 0;
}

int cmd_evaluate(const ProjectConfig& cfg, const CommandInputs& in, std::ostream& log) {
  const auto& validation_path = require_input(in, "validation", "evaluate");
  const ElastoModel model = identified_model(cfg, in, "evaluate");
  const auto validation = parse_measurements(read_file(validation_path));
  const AccuracyReport acc =
      evaluate_accuracy(validation, model, in.hessian ? LoadHessian::on : LoadHessian::off);
  log << "before: max " << fmt(acc.max_before * 1e3) << " mm, rms " << fmt(acc.rms_before * 1e3) << " mm\n"
      << "after:  max " << fmt(acc.max_after * 1e3) << " mm, rms " << fmt(acc.rms_after * 1e3) << " mm\n"
      << "compensated fraction = " << fmt(acc.compensated_fraction) << " %\n";
  Report report;
  report.sections.push_back(accuracy_section(acc));
  write_report(in, "accuracy.report", report, log);
  return 0;
}

}  // namespace

const std::vector<std::string>& command_verbs() {
  static const std::vector<std::string> verbs = {"simulate", "identify-geometry", "identify-elastostatics",
                                                 "plan",     "compensate",        "evaluate"};
  return verbs;
}

int run_command(std::string_view verb, const CommandInputs& inputs, std::ostream& log, std::ostream& err) {
  try {
    using Handler = int (*)(const ProjectConfig&, const CommandInputs&, std::ostream&);
    Handler handler = nullptr;
    if (verb == "simulate") handler = cmd_simulate;
    if (verb == "identify-geometry") handler = cmd_identify_geometry;
    if (verb == "identify-elastostatics") handler = cmd_identify_elastostatics;
    if (verb == "plan") handler = cmd_plan;
    if (verb == "compensate") handler = cmd_compensate;
    if (verb == "evaluate") handler = cmd_evaluate;
    if (!handler) throw Error(ErrorCategory::unknown_verb, "unknown verb '" + std::string(verb) + "'");
    if (inputs.project.empty()) throw Error(ErrorCategory::missing_input, "no project file given");
    const ProjectConfig cfg = parse_project(inputs.project);
    std::filesystem::create_directories(inputs.out_dir);
    return handler(cfg, inputs, log);
  } catch (const Error& e) {
    err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCategory::io, "write to '" + tmp.string() + "' failed");
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCategory::io, "cannot move report into place at '" + path.string() + "'");
  }
}

}  // namespace elastocal
