#pragma once

// Operational shell: project files, data file formats, reports and the
// command verbs that chain the numerical modules together.

#include "elastocal/compensation_pipeline.hpp"
#include "elastocal/compensator_geometry.hpp"
#include "elastocal/elasto_ident.hpp"
#include "elastocal/experiment_design.hpp"
#include "elastocal/measurement_simulator.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elastocal {

// ---- units ----------------------------------------------------------------

enum class Dimension {
  length,
  angle,
  force,
  torque,
  compliance,          // rad/(N*m)
  linear_stiffness,    // N/m
  rotational_stiffness,  // N*m/rad
  count,               // dimensionless
};

struct Unit {
  std::string_view name;
  Dimension dimension;
  double to_si;
};

// Throws Error(parse) for an unknown unit symbol.
const Unit& find_unit(std::string_view symbol);
double to_si(double value, std::string_view unit);
double from_si(double value, std::string_view unit);

// "0.623 urad/Nm", "1 2 3 mm" -> SI values. A bare number takes the SI unit.
std::vector<double> parse_quantities(std::string_view text, Dimension dimension);

// ---- project configuration ------------------------------------------------

struct PlanParameters {
  std::size_t m = 15;
  std::vector<double> q2_levels;             // rad
  std::size_t poses_per_level = 40;
  std::vector<double> force_magnitudes = {1500.0};  // N
  std::size_t restarts = 16;
  Eigen::Vector3d load_lever = Eigen::Vector3d(0.20, 0.10, 0.0);  // tool frame, m
  JointVector test_q;                         // rad
  Wrench test_F;
};

struct ProjectConfig {
  std::filesystem::path source;
  RobotModel robot;                         // nominal robot
  std::optional<CompensatorModel> compensator;
  bool compensator_to_identify = false;     // geometry must come from a geometry report
  GroundTruth truth;                        // used by `simulate`
  NoiseSpec noise;
  std::size_t repetitions = 3;
  PlanParameters plan;
  std::vector<double> geometry_q2;          // rad
  std::vector<MarkerPlacement> compensator_markers;
  std::size_t validation_configs = 12;
  double validation_force = 1500.0;         // N
  IdentificationOptions identification;
  std::uint64_t seed = 1;

  ElastoModel nominal_model() const { return {robot, compensator}; }
};

ProjectConfig parse_project(const std::filesystem::path& path);
ProjectConfig parse_project_text(std::string_view text,
                                 const std::filesystem::path& base_dir = {});

// ---- data files -----------------------------------------------------------

// One row per (measurement, marker, phase):
// config_id,q1..qn,fx,fy,fz,mx,my,mz,marker_id,phase,x,y,z,repetition
std::string format_measurements(std::span<const LoadedMeasurement> data);
std::vector<LoadedMeasurement> parse_measurements(std::string_view text);

// marker_id,q2,x,y,z
std::string format_traces(std::span<const MarkerTrace> traces);
std::vector<MarkerTrace> parse_traces(std::string_view text);

// kind,q1..qn,fx,fy,fz,mx,my,mz with kind in {test, entry}
std::string format_plan(const ExperimentPlan& plan);
ExperimentPlan parse_plan(std::string_view text);

std::string format_manifest(const DatasetManifest& manifest);

// ---- reports --------------------------------------------------------------

struct ReportSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> fields;

  const std::string* find(std::string_view key) const;
  bool operator==(const ReportSection&) const = default;
};

struct Report {
  std::vector<ReportSection> sections;

  const ReportSection* find(std::string_view name) const;
  bool operator==(const Report&) const = default;
};

// Throws Error(invalid_input) when there is nothing to emit.
std::string emit_report(const Report& report);
Report parse_report(std::string_view text);

ReportSection geometry_section(const GeometryFitResult& fit, SpringConvention convention);
ReportSection elastostatics_section(const TwoStepResult& result, IdentificationMode mode);
ReportSection plan_section(const PlanSearchResult& result, std::size_t q2_groups);
ReportSection accuracy_section(const AccuracyReport& report);

CompensatorGeometry geometry_from_report(const Report& report);
// Rebuilds the identified model on top of the nominal robot.
ElastoModel model_from_report(const Report& report, const RobotModel& nominal);

// ---- command dispatch -----------------------------------------------------

inline constexpr const char* kReportDirEnv = "ELASTOCAL_REPORT_DIR";

struct CommandInputs {
  std::filesystem::path project;
  // Named input files: traces, measurements, validation, geometry,
  // identified, plan, targets.
  std::map<std::string, std::filesystem::path> files;
  std::filesystem::path out_dir = ".";
  bool serial_only = false;
  bool hessian = false;
};

const std::vector<std::string>& command_verbs();

// Runs one verb. Returns the process exit status; errors are reported on
// `err` as "error[<category>]: <message>".
int run_command(std::string_view verb, const CommandInputs& inputs, std::ostream& log,
                std::ostream& err);

// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace elastocal
