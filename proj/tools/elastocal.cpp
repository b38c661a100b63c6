// Command line front end: one subcommand per pipeline verb.

#include "elastocal/cli_io.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Elastostatic calibration of heavy serial robots with a spring gravity compensator"};
  app.require_subcommand(1);

  elastocal::CommandInputs inputs;
  std::string out_dir = ".";
  std::map<std::string, std::string> files;

  struct VerbSpec {
    const char* name;
    const char* help;
    std::vector<std::pair<const char*, const char*>> files;
  };
  const std::vector<VerbSpec> verbs = {
      {"simulate", "generate synthetic identification, validation and compensator-trace data",
       {{"plan", "plan file to simulate (default: run the planner)"}}},
      {"identify-geometry", "fit the compensator geometry from marker traces",
       {{"traces", "compensator marker trace file"}}},
      {"identify-elastostatics", "two-step compliance and spring identification",
       {{"measurements", "identification measurement file"}, {"geometry", "geometry report"}}},
      {"plan", "select measurement configurations for the test pose", {}},
      {"compensate", "compute compensated targets",
       {{"identified", "elastostatics report"}, {"targets", "target poses (plan file format)"}}},
      {"evaluate", "accuracy on held-out configurations",
       {{"identified", "elastostatics report"}, {"validation", "validation measurement file"}}},
  };

  std::string project;
  bool serial_only = false;
  bool hessian = false;
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("-p,--project", project, "project file")->required();
    sub->add_option("-o,--out", out_dir, "output directory for data artifacts");
    for (const auto& [name, help] : v.files) sub->add_option(std::string("--") + name, files[name], help);
    if (std::string(v.name) == "identify-elastostatics") {
      sub->add_flag("--serial-only", serial_only, "constant joint-2 compliance, no compensator");
    }
    if (std::string(v.name) == "compensate" || std::string(v.name) == "evaluate") {
      sub->add_flag("--hessian", hessian, "include the load Hessian in predictions");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  inputs.project = project;
  inputs.out_dir = out_dir;
  inputs.serial_only = serial_only;
  inputs.hessian = hessian;
  for (const auto& [name, path] : files) {
    if (!path.empty()) inputs.files[name] = path;
  }
  return elastocal::run_command(verb, inputs, std::cout, std::cerr);
}
