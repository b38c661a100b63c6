#include "elastocal/cli_io.hpp"

#include "elastocal/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace elastocal {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_list(const double* v, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += fmt(v[i]);
  }
  return out;
}

std::string fmt_vec(const Eigen::VectorXd& v) { return fmt_list(v.data(), static_cast<std::size_t>(v.size())); }

std::string fmt_transform(const Eigen::Isometry3d& T) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) v.push_back(T.matrix()(r, c));
  }
  return fmt_list(v.data(), v.size());
}

double parse_number(std::string_view token, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ", column " + std::string(column) +
                                          ": '" + std::string(token) + "' is not a number");
  }
  return v;
}

std::vector<double> parse_numbers(std::string_view text, std::string_view field) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) out.push_back(parse_number(text.substr(start, i - start), 0, field));
  }
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    out.push_back(l);
  }
  return out;
}

// Header of the joint/wrench tables: returns the joint count implied by q1..qn.
std::size_t joint_columns(const std::vector<std::string_view>& header, std::size_t first) {
  std::size_t n = 0;
  while (first + n < header.size() && header[first + n] == "q" + std::to_string(n + 1)) ++n;
  if (n == 0) throw Error(ErrorCategory::parse, "line 1: header has no joint columns q1..qn");
  return n;
}

void expect_columns(const std::vector<std::string_view>& header, std::size_t at,
                    std::initializer_list<std::string_view> names) {
  for (auto name : names) {
    if (at >= header.size() || header[at] != name) {
      throw Error(ErrorCategory::parse, "line 1: expected column '" + std::string(name) + "' at position " +
                                            std::to_string(at + 1));
    }
    ++at;
  }
}

std::string joint_header(std::size_t n) {
  std::string out;
  for (std::size_t j = 0; j < n; ++j) out += ",q" + std::to_string(j + 1);
  return out + ",fx,fy,fz,mx,my,mz";
}

std::string joint_row(const JointVector& q, const Wrench& F) {
  std::string out;
  for (Eigen::Index j = 0; j < q.size(); ++j) out += "," + fmt(q[j]);
  const Vector6d w = F.stacked();
  for (int i = 0; i < 6; ++i) out += "," + fmt(w[i]);
  return out;
}

void read_joint_row(const std::vector<std::string_view>& cells, std::size_t at, std::size_t n,
                    std::size_t line, JointVector& q, Wrench& F) {
  static constexpr std::string_view kWrench[] = {"fx", "fy", "fz", "mx", "my", "mz"};
  q.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    q[static_cast<Eigen::Index>(j)] = parse_number(cells[at + j], line, "q" + std::to_string(j + 1));
  }
  Vector6d w;
  for (int i = 0; i < 6; ++i) w[i] = parse_number(cells[at + n + static_cast<std::size_t>(i)], line, kWrench[i]);
  F = Wrench::from_stacked(w);
}

template <class Fn>
void for_data_rows(const std::vector<std::string_view>& lines, std::size_t columns, Fn&& fn) {
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split(lines[i], ',');
    if (cells.size() != columns) {
      throw Error(ErrorCategory::parse, "line " + std::to_string(i + 1) + ": expected " +
                                            std::to_string(columns) + " columns, got " +
                                            std::to_string(cells.size()));
    }
    fn(cells, i + 1);
  }
}

std::size_t parse_index(std::string_view token, std::size_t line, std::string_view column) {
  std::size_t v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ", column " + std::string(column) +
                                          ": '" + std::string(token) + "' is not an index");
  }
  return v;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (c == '=' || c == '\n' || c == '[' || c == ']' || c == '#' || std::isspace(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

bool valid_value(std::string_view v) {
  if (v.find('\n') != std::string_view::npos) return false;
  return v.empty() || (!std::isspace(static_cast<unsigned char>(v.front())) &&
                       !std::isspace(static_cast<unsigned char>(v.back())));
}

const char* mode_name(IdentificationMode m) {
  return m == IdentificationMode::serial_only ? "serial-only" : "compensator-aware";
}

const std::string& require_field(const ReportSection& s, std::string_view key) {
  const std::string* v = s.find(key);
  if (!v) {
    throw Error(ErrorCategory::parse, "report section [" + s.name + "] lacks field '" + std::string(key) + "'");
  }
  return *v;
}

std::vector<double> require_numbers(const ReportSection& s, std::string_view key, std::size_t count) {
  auto v = parse_numbers(require_field(s, key), key);
  if (v.size() != count) {
    throw Error(ErrorCategory::parse, "report field [" + s.name + "] " + std::string(key) + " expects " +
                                          std::to_string(count) + " numbers");
  }
  return v;
}

Eigen::Isometry3d require_transform(const ReportSection& s, std::string_view key) {
  const auto v = require_numbers(s, key, 12);
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) T.matrix()(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  }
  return T;
}

}  // namespace

// ---- measurements ----

std::string format_measurements(std::span<const LoadedMeasurement> data) {
  if (data.empty()) throw Error(ErrorCategory::empty_dataset, "no measurements to write");
  const auto n = static_cast<std::size_t>(data.front().q.size());
  std::string out = "config_id" + joint_header(n) + ",marker_id,phase,x,y,z,repetition\n";
  for (const auto& m : data) {
    const std::string prefix = std::to_string(m.config_id) + joint_row(m.q, m.F);
    const std::string rep = std::to_string(m.repetition);
    for (int phase = 0; phase < 2; ++phase) {
      const auto& pts = phase == 0 ? m.markers_unloaded : m.markers_loaded;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        out += prefix + ",M" + std::to_string(j + 1) + (phase == 0 ? ",unloaded," : ",loaded,") +
               fmt(pts[j].x()) + "," + fmt(pts[j].y()) + "," + fmt(pts[j].z()) + "," + rep + "\n";
      }
    }
  }
  return out;
}

std::vector<LoadedMeasurement> parse_measurements(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0].empty()) throw Error(ErrorCategory::parse, "line 1: missing header");
  const auto header = split(lines[0], ',');
  expect_columns(header, 0, {"config_id"});
  const std::size_t n = joint_columns(header, 1);
  expect_columns(header, 1 + n, {"fx", "fy", "fz", "mx", "my", "mz", "marker_id", "phase", "x", "y", "z",
                                 "repetition"});
  const std::size_t columns = 1 + n + 12;

  std::vector<LoadedMeasurement> out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  for_data_rows(lines, columns, [&](const std::vector<std::string_view>& c, std::size_t line) {
    LoadedMeasurement row;
    row.config_id = parse_index(c[0], line, "config_id");
    row.repetition = parse_index(c[columns - 1], line, "repetition");
    read_joint_row(c, 1, n, line, row.q, row.F);
    const auto marker_cell = c[7 + n];
    if (marker_cell.size() < 2 || marker_cell[0] != 'M') {
      throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ", column marker_id: expected M<k>");
    }
    const std::size_t marker = parse_index(marker_cell.substr(1), line, "marker_id");
    if (marker == 0) throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ": markers start at M1");
    const auto phase = c[8 + n];
    if (phase != "unloaded" && phase != "loaded") {
      throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ", column phase: expected unloaded|loaded");
    }
    const Eigen::Vector3d p(parse_number(c[9 + n], line, "x"), parse_number(c[10 + n], line, "y"),
                            parse_number(c[11 + n], line, "z"));

    const auto key = std::make_pair(row.config_id, row.repetition);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back(row);
    }
    auto& m = out[it->second];
    if (m.q != row.q || m.F.stacked() != row.F.stacked()) {
      throw Error(ErrorCategory::parse, "line " + std::to_string(line) +
                                            ": joint angles or wrench differ within one measurement");
    }
    auto& pts = phase == "unloaded" ? m.markers_unloaded : m.markers_loaded;
    if (pts.size() != marker - 1) {
      throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ": marker M" + std::to_string(marker) +
                                            " out of order");
    }
    pts.push_back(p);
  });
  for (const auto& m : out) {
    if (m.markers_loaded.size() != m.markers_unloaded.size() || m.markers_loaded.empty()) {
      throw Error(ErrorCategory::parse, "configuration " + std::to_string(m.config_id) +
                                            " lacks matching unloaded/loaded marker rows");
    }
  }
  return out;
}

// ---- traces ----

std::string format_traces(std::span<const MarkerTrace> traces) {
  std::string out = "marker_id,q2,x,y,z,radius,phase\n";
  for (const auto& t : traces) {
    for (const auto& s : t.samples) {
      out += t.marker_id + "," + fmt(s.q2) + "," + fmt(s.position.x()) + "," + fmt(s.position.y()) + "," +
             fmt(s.position.z()) + "," + fmt(t.radius) + "," + fmt(t.phase) + "\n";
    }
  }
  return out;
}

std::vector<MarkerTrace> parse_traces(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0].empty()) throw Error(ErrorCategory::parse, "line 1: missing header");
  expect_columns(split(lines[0], ','), 0, {"marker_id", "q2", "x", "y", "z", "radius", "phase"});
  std::vector<MarkerTrace> out;
  for_data_rows(lines, 7, [&](const std::vector<std::string_view>& c, std::size_t line) {
    if (c[0].empty()) throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ": empty marker_id");
    auto it = std::find_if(out.begin(), out.end(), [&](const MarkerTrace& t) { return t.marker_id == c[0]; });
    if (it == out.end()) {
      out.emplace_back();
      it = std::prev(out.end());
      it->marker_id = std::string(c[0]);
      it->radius = parse_number(c[5], line, "radius");
      it->phase = parse_number(c[6], line, "phase");
    }
    it->samples.push_back({parse_number(c[1], line, "q2"),
                           {parse_number(c[2], line, "x"), parse_number(c[3], line, "y"),
                            parse_number(c[4], line, "z")}});
  });
  if (out.empty()) throw Error(ErrorCategory::empty_dataset, "trace file has no samples");
  return out;
}

// ---- plans ----

std::string format_plan(const ExperimentPlan& plan) {
  if (plan.entries.empty()) throw Error(ErrorCategory::empty_dataset, "plan has no entries");
  const auto n = static_cast<std::size_t>(plan.entries.front().q.size());
  std::string out = "kind" + joint_header(n) + "\n";
  if (plan.test.q0.size() == static_cast<Eigen::Index>(n)) out += "test" + joint_row(plan.test.q0, plan.test.F0) + "\n";
  for (const auto& e : plan.entries) out += "entry" + joint_row(e.q, e.F) + "\n";
  return out;
}

ExperimentPlan parse_plan(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0].empty()) throw Error(ErrorCategory::parse, "line 1: missing header");
  const auto header = split(lines[0], ',');
  expect_columns(header, 0, {"kind"});
  const std::size_t n = joint_columns(header, 1);
  expect_columns(header, 1 + n, {"fx", "fy", "fz", "mx", "my", "mz"});
  ExperimentPlan plan;
  for_data_rows(lines, 7 + n, [&](const std::vector<std::string_view>& c, std::size_t line) {
    PlanEntry e;
    read_joint_row(c, 1, n, line, e.q, e.F);
    if (c[0] == "test") {
      plan.test = {e.q, e.F};
    } else if (c[0] == "entry") {
      plan.entries.push_back(std::move(e));
    } else {
      throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ", column kind: expected test|entry");
    }
  });
  if (plan.entries.empty()) throw Error(ErrorCategory::empty_dataset, "plan file has no entries");
  return plan;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "seed = " << m.seed << "\n"
      << "sigma_position = " << fmt(m.sigma_position) << "\n"
      << "repetitions = " << m.repetitions << "\n"
      << "entries = " << m.entries << "\n"
      << "q2_groups = " << m.q2_groups << "\n"
      << "truth_hash = " << m.truth_hash << "\n";
  return out.str();
}

// ---- reports ----

const std::string* ReportSection::find(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

const ReportSection* Report::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string emit_report(const Report& report) {
  if (report.sections.empty()) throw Error(ErrorCategory::invalid_input, "report has no result sections");
  std::string out = "# elastocal report\n";
  for (const auto& s : report.sections) {
    if (!valid_key(s.name)) throw Error(ErrorCategory::invalid_input, "invalid section name '" + s.name + "'");
    out += "\n[" + s.name + "]\n";
    for (const auto& [k, v] : s.fields) {
      if (!valid_key(k) || !valid_value(v)) {
        throw Error(ErrorCategory::invalid_input, "field '" + k + "' in [" + s.name + "] cannot be emitted");
      }
      out += k + " = " + v + "\n";
    }
  }
  return out;
}

Report parse_report(std::string_view text) {
  Report r;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCategory::parse, "line " + std::to_string(i + 1) + ": bad section header");
      r.sections.push_back({std::string(line.substr(1, line.size() - 2)), {}});
      continue;
    }
    const auto eq = line.find(" = ");
    const bool bare = eq == std::string_view::npos && line.size() > 2 && line.substr(line.size() - 2) == " =";
    if ((eq == std::string_view::npos && !bare) || r.sections.empty()) {
      throw Error(ErrorCategory::parse, "line " + std::to_string(i + 1) + ": expected 'key = value'");
    }
    if (bare) {
      r.sections.back().fields.emplace_back(std::string(line.substr(0, line.size() - 2)), "");
    } else {
      r.sections.back().fields.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 3)));
    }
  }
  if (r.sections.empty()) throw Error(ErrorCategory::parse, "report has no sections");
  return r;
}

ReportSection geometry_section(const GeometryFitResult& fit, SpringConvention convention) {
  ReportSection s{"geometry", {}};
  const double value[3] = {fit.L, fit.a_x, fit.a_y};
  s.fields = {
      {"columns", "L a_x a_y"},
      {"unit", "m"},
      {"value", fmt_list(value, 3)},
      {"ci_3sigma", fmt_vec(fit.ci_half_widths)},
      {"convention", convention == SpringConvention::plus ? "plus" : "minus"},
      {"pivot_p0", fmt_vec(fit.p0)},
      {"center_p2", fmt_vec(fit.center)},
      {"plane_normal", fmt_vec(fit.plane_normal)},
      {"residual_rms", fmt(fit.residual_rms)},
  };
  return s;
}

ReportSection elastostatics_section(const TwoStepResult& result, IdentificationMode mode) {
  ReportSection s{"elastostatics", {}};
  auto add = [&](std::string k, std::string v) { s.fields.emplace_back(std::move(k), std::move(v)); };
  const auto& step1 = result.step1;
  add("mode", mode_name(mode));
  add("parameters", std::to_string(step1.k.size()));
  for (Eigen::Index i = 0; i < step1.k.size(); ++i) {
    const std::string key = "param" + std::to_string(i + 1);
    add(key + ".name", step1.layout.parameter_name(i));
    const double v[2] = {step1.k[i], 3.0 * std::sqrt(std::max(step1.covariance(i, i), 0.0))};
    add(key, fmt_list(v, 2));
  }
  add("condition_number", fmt(step1.condition_number));
  add("residual_rms", fmt(step1.residual_rms));
  add("equations", std::to_string(step1.equations));
  if (result.step2) {
    const auto& r = *result.step2;
    add("compensator_present", r.compensator_present ? "yes" : "no");
    const double values[3] = {r.K_theta2_0, r.K_c, r.s_0};
    const char* names[3] = {"K_theta2_0", "K_c", "s_0"};
    for (int i = 0; i < 3; ++i) {
      const double v[2] = {values[i], 3.0 * std::sqrt(std::max(r.covariance(i, i), 0.0))};
      add(names[i], fmt_list(v, 2));
    }
  }
  add("registration_rms", fmt(result.corrections.residual_rms));
  add("base_correction", fmt_transform(result.corrections.base_correction));
  add("tool_correction", fmt_transform(result.corrections.tool_correction));
  add("model.compliances", fmt_vec(result.identified.robot.compliances));
  if (const auto& c = result.identified.compensator) {
    add("model.compensator", "yes");
    add("model.joint", std::to_string(c->joint + 1));
    const double g[3] = {c->geometry.L, c->geometry.a_x, c->geometry.a_y};
    add("model.geometry", fmt_list(g, 3));
    add("model.convention", c->geometry.convention == SpringConvention::plus ? "plus" : "minus");
    const double spring[3] = {c->K_theta2_0, c->K_c, c->s_0};
    add("model.spring", fmt_list(spring, 3));
  } else {
    add("model.compensator", "no");
  }
  return s;
}

ReportSection plan_section(const PlanSearchResult& result, std::size_t q2_groups) {
  ReportSection s{"plan", {}};
  s.fields = {
      {"entries", std::to_string(result.plan.entries.size())},
      {"q2_groups", std::to_string(q2_groups)},
      {"criterion", fmt(result.criterion)},
      {"evaluations", std::to_string(result.evaluations)},
  };
  return s;
}

ReportSection accuracy_section(const AccuracyReport& r) {
  ReportSection s{"accuracy", {}};
  s.fields = {
      {"columns", "max rms"},
      {"unit", "m"},
      {"before", fmt(r.max_before) + " " + fmt(r.rms_before)},
      {"after", fmt(r.max_after) + " " + fmt(r.rms_after)},
      {"improvement_factor", fmt(r.max_after > 0.0 ? r.max_before / r.max_after
                                                   : std::numeric_limits<double>::infinity()) +
                                 " " + fmt(r.improvement_factor)},
      {"compensated_fraction_percent", fmt(r.compensated_fraction)},
      {"residual_pairs", std::to_string(r.residuals_before.size())},
      {"orientation_rms_rad", fmt(r.orientation_rms)},
      {"orientation_max_rad", fmt(r.orientation_max)},
  };
  return s;
}

CompensatorGeometry geometry_from_report(const Report& report) {
  const ReportSection* s = report.find("geometry");
  if (!s) throw Error(ErrorCategory::missing_input, "report has no [geometry] section");
  const auto v = require_numbers(*s, "value", 3);
  const std::string& conv = require_field(*s, "convention");
  if (conv != "plus" && conv != "minus") throw Error(ErrorCategory::parse, "unknown convention '" + conv + "'");
  return {v[0], v[1], v[2], conv == "plus" ? SpringConvention::plus : SpringConvention::minus};
}

ElastoModel model_from_report(const Report& report, const RobotModel& nominal) {
  const ReportSection* s = report.find("elastostatics");
  if (!s) throw Error(ErrorCategory::missing_input, "report has no [elastostatics] section");
  ElastoModel m;
  m.robot = nominal;
  m.robot.base = require_transform(*s, "base_correction") * nominal.base;
  m.robot.tool = nominal.tool * require_transform(*s, "tool_correction");
  const auto k = require_numbers(*s, "model.compliances", nominal.n_joints());
  m.robot.compliances = Eigen::Map<const Eigen::VectorXd>(k.data(), static_cast<Eigen::Index>(k.size()));
  if (require_field(*s, "model.compensator") == "yes") {
    CompensatorModel c;
    const auto j = parse_numbers(require_field(*s, "model.joint"), "model.joint");
    if (j.size() != 1 || j[0] < 1.0) throw Error(ErrorCategory::parse, "bad model.joint");
    c.joint = static_cast<std::size_t>(j[0]) - 1;
    const auto g = require_numbers(*s, "model.geometry", 3);
    const std::string& conv = require_field(*s, "model.convention");
    c.geometry = {g[0], g[1], g[2], conv == "minus" ? SpringConvention::minus : SpringConvention::plus};
    const auto spring = require_numbers(*s, "model.spring", 3);
    c.K_theta2_0 = spring[0];
    c.K_c = spring[1];
    c.s_0 = spring[2];
    m.compensator = c;
  }
  return m;
}

}  // namespace elastocal
