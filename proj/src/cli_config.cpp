#include "elastocal/cli_io.hpp"

#include "elastocal/error.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace elastocal {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

constexpr std::array kUnits = {
    Unit{"m", Dimension::length, 1.0},
    Unit{"mm", Dimension::length, 1e-3},
    Unit{"um", Dimension::length, 1e-6},
    Unit{"rad", Dimension::angle, 1.0},
    Unit{"deg", Dimension::angle, kDeg},
    Unit{"mrad", Dimension::angle, 1e-3},
    Unit{"urad", Dimension::angle, 1e-6},
    Unit{"N", Dimension::force, 1.0},
    Unit{"kN", Dimension::force, 1e3},
    Unit{"Nm", Dimension::torque, 1.0},
    Unit{"kNm", Dimension::torque, 1e3},
    Unit{"rad/Nm", Dimension::compliance, 1.0},
    Unit{"urad/Nm", Dimension::compliance, 1e-6},
    Unit{"N/m", Dimension::linear_stiffness, 1.0},
    Unit{"N/mm", Dimension::linear_stiffness, 1e3},
    Unit{"Nm/rad", Dimension::rotational_stiffness, 1.0},
    Unit{"kNm/rad", Dimension::rotational_stiffness, 1e3},
    Unit{"MNm/rad", Dimension::rotational_stiffness, 1e6},
};

const char* dimension_name(Dimension d) {
  switch (d) {
    case Dimension::length: return "length";
    case Dimension::angle: return "angle";
    case Dimension::force: return "force";
    case Dimension::torque: return "torque";
    case Dimension::compliance: return "compliance";
    case Dimension::linear_stiffness: return "linear stiffness";
    case Dimension::rotational_stiffness: return "rotational stiffness";
    case Dimension::count: return "count";
  }
  return "?";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> to_double(std::string_view token) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_tokens(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == ',')) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != ',') ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

// --- INI-like reader ---

struct Entry {
  std::string value;
  int line = 0;
};

class ConfigText {
 public:
  void load(std::string_view text) {
    std::string section;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail_line(line_no, "unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        if (section.empty()) fail_line(line_no, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail_line(line_no, "expected 'key = value'");
      if (section.empty()) fail_line(line_no, "field outside of any section");
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) fail_line(line_no, "empty field name");
      auto& sec = sections_[section];
      if (sec.count(key)) {
        throw Error(ErrorCategory::parse, "line " + std::to_string(line_no) + ", field [" + section +
                                              "] " + key + ": duplicate field");
      }
      sec[key] = Entry{std::string(trim(line.substr(eq + 1))), line_no};
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key);
  }

  const Entry* get(const std::string& section, const std::string& key) {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "\n" + key);
    return &k->second;
  }

  [[noreturn]] static void fail(const Entry& e, const std::string& section, const std::string& key,
                                const std::string& what, ErrorCategory cat = ErrorCategory::parse) {
    throw Error(cat, "line " + std::to_string(e.line) + ", field [" + section + "] " + key + ": " + what);
  }

  std::vector<double> quantities(const std::string& section, const std::string& key, Dimension d,
                                 std::optional<std::size_t> expected = std::nullopt) {
    const Entry* e = get(section, key);
    if (!e) return {};
    std::vector<double> v;
    try {
      v = parse_quantities(e->value, d);
    } catch (const Error& err) {
      fail(*e, section, key, err.what());
    }
    if (expected && v.size() != *expected) {
      fail(*e, section, key,
           "expected " + std::to_string(*expected) + " values, got " + std::to_string(v.size()));
    }
    return v;
  }

  std::optional<double> scalar(const std::string& section, const std::string& key, Dimension d) {
    auto v = quantities(section, key, d, 1);
    if (v.empty()) return std::nullopt;
    return v[0];
  }

  std::optional<std::uint64_t> integer(const std::string& section, const std::string& key) {
    const Entry* e = get(section, key);
    if (!e) return std::nullopt;
    std::uint64_t v = 0;
    const auto* end = e->value.data() + e->value.size();
    const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc() || ptr != end) fail(*e, section, key, "expected a non-negative integer");
    return v;
  }

  std::optional<std::string> word(const std::string& section, const std::string& key,
                                  std::initializer_list<std::string_view> allowed) {
    const Entry* e = get(section, key);
    if (!e) return std::nullopt;
    for (auto a : allowed) {
      if (e->value == a) return e->value;
    }
    std::string list;
    for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail(*e, section, key, "expected one of {" + list + "}, got '" + e->value + "'");
  }

  // Any field that was never consumed is a typo or an unsupported option.
  void reject_unused() const {
    for (const auto& [section, fields] : sections_) {
      for (const auto& [key, entry] : fields) {
        if (!used_.count(section + "\n" + key)) fail(entry, section, key, "unknown field");
      }
    }
  }

  void mark_used(const std::string& section, const std::string& key) { used_.insert(section + "\n" + key); }

  const std::map<std::string, std::map<std::string, Entry>>& sections() const { return sections_; }

 private:
  [[noreturn]] static void fail_line(int line, const std::string& what) {
    throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ": " + what);
  }

  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::set<std::string> used_;
};

void require_positive(ConfigText& cfg, const std::string& section, const std::string& key, double v,
                      bool allow_zero = false) {
  if (allow_zero ? v >= 0.0 : v > 0.0) return;
  const Entry* e = cfg.get(section, key);
  ConfigText::fail(*e, section, key, allow_zero ? "must be >= 0" : "must be > 0",
                   ErrorCategory::validation);
}

Eigen::Isometry3d read_transform(ConfigText& cfg, const std::string& section, const std::string& prefix,
                                 const Eigen::Isometry3d& fallback) {
  const auto xyz = cfg.quantities(section, prefix + ".xyz", Dimension::length, 3);
  const auto rpy = cfg.quantities(section, prefix + ".rpy", Dimension::angle, 3);
  if (xyz.empty() && rpy.empty()) return fallback;
  Eigen::Vector3d t = fallback.translation();
  Eigen::Vector3d r = rpy_of(fallback.linear());
  if (!xyz.empty()) t = {xyz[0], xyz[1], xyz[2]};
  if (!rpy.empty()) r = {rpy[0], rpy[1], rpy[2]};
  return make_transform(t, r);
}

void read_robot(ConfigText& cfg, RobotModel& robot) {
  const std::string s = "robot";
  const auto preset = cfg.word(s, "preset", {"heavy-6r", "none"});
  if (preset && *preset == "heavy-6r") robot = heavy_6r_reference();
  if (const auto n = cfg.integer(s, "joints")) {
    robot.links.resize(*n);
    robot.compliances.conservativeResize(static_cast<Eigen::Index>(*n));
  }
  for (std::size_t j = 0; j < robot.links.size(); ++j) {
    const std::string tag = "link" + std::to_string(j + 1);
    auto& l = robot.links[j];
    for (auto [name, field] : {std::pair{"a", &l.a}, std::pair{"d", &l.d}}) {
      if (auto v = cfg.scalar(s, tag + "." + name, Dimension::length)) {
        *field = *v;
        require_positive(cfg, s, tag + "." + name, *v, true);
      }
    }
    for (auto [name, field] : {std::pair{"alpha", &l.alpha}, std::pair{"offset", &l.offset},
                               std::pair{"q_min", &l.q_min}, std::pair{"q_max", &l.q_max}}) {
      if (auto v = cfg.scalar(s, tag + "." + name, Dimension::angle)) *field = *v;
    }
    const std::string ck = "compliance" + std::to_string(j + 1);
    if (auto v = cfg.scalar(s, ck, Dimension::compliance)) {
      robot.compliances[static_cast<Eigen::Index>(j)] = *v;
      require_positive(cfg, s, ck, *v);
    }
  }
  robot.base = read_transform(cfg, s, "base", robot.base);
  robot.tool = read_transform(cfg, s, "tool", robot.tool);
  for (std::size_t j = 0;; ++j) {
    const std::string key = "marker" + std::to_string(j + 1);
    if (!cfg.has(s, key)) break;
    const auto v = cfg.quantities(s, key, Dimension::length, 3);
    if (j == 0) robot.marker_offsets.clear();
    robot.marker_offsets.emplace_back(v[0], v[1], v[2]);
  }
}

void read_compensator(ConfigText& cfg, ProjectConfig& out) {
  const std::string s = "compensator";
  const auto mode = cfg.word(s, "mode", {"nominal", "identify", "none"});
  const bool any = cfg.sections().count(s) > 0;
  if (!any || (mode && *mode == "none")) {
    for (const auto& [key, e] : any ? cfg.sections().at(s) : std::map<std::string, Entry>{}) {
      cfg.mark_used(s, key);
    }
    out.compensator.reset();
    return;
  }
  out.compensator_to_identify = mode && *mode == "identify";
  CompensatorModel c = reference_compensator();
  if (auto j = cfg.integer(s, "joint")) {
    if (*j == 0) ConfigText::fail(*cfg.get(s, "joint"), s, "joint", "joints are numbered from 1",
                                  ErrorCategory::validation);
    c.joint = *j - 1;
  }
  if (auto v = cfg.scalar(s, "L", Dimension::length)) c.geometry.L = *v;
  if (auto v = cfg.scalar(s, "a_x", Dimension::length)) c.geometry.a_x = *v;
  if (auto v = cfg.scalar(s, "a_y", Dimension::length)) c.geometry.a_y = *v;
  if (auto w = cfg.word(s, "convention", {"plus", "minus"})) {
    c.geometry.convention = *w == "plus" ? SpringConvention::plus : SpringConvention::minus;
  }
  if (auto v = cfg.scalar(s, "K_c", Dimension::linear_stiffness)) c.K_c = *v;
  if (auto v = cfg.scalar(s, "s_0", Dimension::length)) c.s_0 = *v;
  if (auto v = cfg.scalar(s, "K_theta2_0", Dimension::rotational_stiffness)) c.K_theta2_0 = *v;
  out.compensator = c;
}

void read_truth(ConfigText& cfg, ProjectConfig& out) {
  const std::string s = "truth";
  GroundTruth& t = out.truth;
  t.model = out.nominal_model();
  t.base_perturbation = read_transform(cfg, s, "base", Eigen::Isometry3d::Identity());
  t.tool_perturbation = read_transform(cfg, s, "tool", Eigen::Isometry3d::Identity());
  t.compensator_frame = read_transform(cfg, s, "frame", Eigen::Isometry3d::Identity());
  if (auto w = cfg.word(s, "deflection", {"linear", "nonlinear"})) {
    t.deflection_model = *w == "linear" ? LoadHessian::off : LoadHessian::on;
  }
  for (Eigen::Index j = 0; j < t.model.robot.compliances.size(); ++j) {
    const std::string key = "compliance" + std::to_string(j + 1);
    if (auto v = cfg.scalar(s, key, Dimension::compliance)) {
      require_positive(cfg, s, key, *v);
      t.model.robot.compliances[j] = *v;
    }
  }
  if (t.model.compensator) {
    auto& c = *t.model.compensator;
    if (auto v = cfg.scalar(s, "K_c", Dimension::linear_stiffness)) c.K_c = *v;
    if (auto v = cfg.scalar(s, "s_0", Dimension::length)) c.s_0 = *v;
    if (auto v = cfg.scalar(s, "K_theta2_0", Dimension::rotational_stiffness)) c.K_theta2_0 = *v;
  }
}

void read_plan(ConfigText& cfg, ProjectConfig& out) {
  const std::string s = "plan";
  PlanParameters& p = out.plan;
  p.q2_levels = {-20 * kDeg, -45 * kDeg, -70 * kDeg, -95 * kDeg, -120 * kDeg};
  if (auto v = cfg.integer(s, "m")) p.m = *v;
  if (auto v = cfg.quantities(s, "q2_levels", Dimension::angle); !v.empty()) p.q2_levels = v;
  if (auto v = cfg.integer(s, "poses_per_level")) p.poses_per_level = *v;
  if (auto v = cfg.quantities(s, "force", Dimension::force); !v.empty()) p.force_magnitudes = v;
  if (auto v = cfg.integer(s, "restarts")) p.restarts = *v;
  if (auto v = cfg.quantities(s, "load_lever", Dimension::length, 3); !v.empty()) {
    p.load_lever = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  const std::size_t n = out.robot.n_joints();
  if (auto v = cfg.quantities(s, "test_q", Dimension::angle, n); !v.empty()) {
    p.test_q = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
  } else if (n == 6) {
    p.test_q.resize(6);
    p.test_q << 0.0, -50 * kDeg, 30 * kDeg, 0.0, 40 * kDeg, 0.0;
  } else {
    throw Error(ErrorCategory::validation, "field [plan] test_q is required for a non-6R robot");
  }
  p.test_F.force = {1000.0, 500.0, -1000.0};
  if (auto v = cfg.quantities(s, "test_force", Dimension::force, 3); !v.empty()) {
    p.test_F.force = {v[0], v[1], v[2]};
  }
  if (auto v = cfg.quantities(s, "test_torque", Dimension::torque, 3); !v.empty()) {
    p.test_F.torque = {v[0], v[1], v[2]};
  }
  if (p.m == 0) ConfigText::fail(*cfg.get(s, "m"), s, "m", "must be > 0", ErrorCategory::validation);
  for (double f : p.force_magnitudes) {
    if (!(f > 0.0)) ConfigText::fail(*cfg.get(s, "force"), s, "force", "must be > 0", ErrorCategory::validation);
  }
}

void read_geometry(ConfigText& cfg, ProjectConfig& out) {
  const std::string s = "geometry";
  out.geometry_q2 = geometry_sweep_q2();
  if (auto v = cfg.quantities(s, "q2", Dimension::angle); !v.empty()) out.geometry_q2 = v;
  out.compensator_markers = balanced_marker_placement();
  for (std::size_t j = 0;; ++j) {
    const std::string tag = "marker" + std::to_string(j + 1);
    if (!cfg.has(s, tag + ".radius")) break;
    if (j == 0) out.compensator_markers.clear();
    MarkerPlacement m;
    m.radius = *cfg.scalar(s, tag + ".radius", Dimension::length);
    if (auto v = cfg.scalar(s, tag + ".phase", Dimension::angle)) m.phase = *v;
    if (auto v = cfg.scalar(s, tag + ".axial", Dimension::length)) m.axial_offset = *v;
    out.compensator_markers.push_back(m);
  }
}

}  // namespace

const Unit& find_unit(std::string_view symbol) {
  for (const auto& u : kUnits) {
    if (u.name == symbol) return u;
  }
  throw Error(ErrorCategory::parse, "unknown unit '" + std::string(symbol) + "'");
}

double to_si(double value, std::string_view unit) { return value * find_unit(unit).to_si; }
double from_si(double value, std::string_view unit) { return value / find_unit(unit).to_si; }

std::vector<double> parse_quantities(std::string_view text, Dimension dimension) {
  auto tokens = split_tokens(text);
  if (tokens.empty()) throw Error(ErrorCategory::parse, "missing value");
  double factor = 1.0;
  if (!to_double(tokens.back())) {
    if (dimension == Dimension::count) {
      throw Error(ErrorCategory::parse, "'" + std::string(tokens.back()) + "' is not a number");
    }
    const Unit& u = find_unit(tokens.back());
    if (u.dimension != dimension) {
      throw Error(ErrorCategory::parse, "unit '" + std::string(u.name) + "' is not a " +
                                            dimension_name(dimension) + " unit");
    }
    factor = u.to_si;
    tokens.pop_back();
    if (tokens.empty()) throw Error(ErrorCategory::parse, "unit without a value");
  }
  std::vector<double> out;
  for (auto t : tokens) {
    const auto v = to_double(t);
    if (!v || !std::isfinite(*v)) {
      throw Error(ErrorCategory::parse, "'" + std::string(t) + "' is not a finite number");
    }
    out.push_back(*v * factor);
  }
  return out;
}

ProjectConfig parse_project_text(std::string_view text, const std::filesystem::path& base_dir) {
  ConfigText cfg;
  cfg.load(text);
  ProjectConfig out;
  out.robot = heavy_6r_reference();

  // A referenced robot file supplies the [robot] section; local fields override it.
  if (const Entry* ref = cfg.get("robot", "file")) {
    const auto path = base_dir / ref->value;
    if (!std::filesystem::exists(path)) {
      ConfigText::fail(*ref, "robot", "file", "referenced file '" + path.string() + "' does not exist",
                       ErrorCategory::missing_input);
    }
    ConfigText robot_cfg;
    robot_cfg.load(read_file(path));
    read_robot(robot_cfg, out.robot);
    robot_cfg.reject_unused();
  }
  read_robot(cfg, out.robot);

  if (auto v = cfg.integer("project", "seed")) out.seed = *v;
  cfg.get("project", "name");
  read_compensator(cfg, out);

  if (auto v = cfg.scalar("noise", "sigma", Dimension::length)) {
    require_positive(cfg, "noise", "sigma", *v, true);
    out.noise.sigma_position = *v;
  }
  if (auto v = cfg.integer("noise", "repetitions")) {
    if (*v == 0) ConfigText::fail(*cfg.get("noise", "repetitions"), "noise", "repetitions", "must be > 0",
                                  ErrorCategory::validation);
    out.repetitions = *v;
  }
  out.noise.seed = out.seed;

  read_plan(cfg, out);
  read_geometry(cfg, out);
  if (auto v = cfg.integer("validation", "configurations")) out.validation_configs = *v;
  if (auto v = cfg.scalar("validation", "force", Dimension::force)) {
    require_positive(cfg, "validation", "force", *v);
    out.validation_force = *v;
  }
  if (auto w = cfg.word("identification", "mode", {"compensator-aware", "serial-only"})) {
    out.identification.mode =
        *w == "serial-only" ? IdentificationMode::serial_only : IdentificationMode::compensator_aware;
  }
  if (auto v = cfg.scalar("identification", "max_condition", Dimension::count)) {
    out.identification.max_condition = *v;
  }
  if (auto v = cfg.scalar("identification", "group_tolerance", Dimension::angle)) {
    out.identification.group_tolerance = *v;
  }
  if (out.compensator) out.identification.compensated_joint = out.compensator->joint;

  read_truth(cfg, out);
  cfg.reject_unused();

  try {
    out.nominal_model().validate();
    out.truth.model.validate();
  } catch (const Error& e) {
    throw Error(ErrorCategory::validation, std::string("project: ") + e.what());
  }
  return out;
}

ProjectConfig parse_project(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCategory::missing_input, "project file '" + path.string() + "' does not exist");
  }
  ProjectConfig out = parse_project_text(read_file(path), path.parent_path());
  out.source = path;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace elastocal
