#pragma once

// Run configuration: strict JSON covering model selection, energy, slices,
// descriptor and integrator settings, and the command-specific sections.
// Unknown keys are rejected with their location.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nhim/integrate.hpp"
#include "nhim/ld.hpp"
#include "nhim/models.hpp"
#include "nhim/po.hpp"
#include "nhim/psection.hpp"

namespace nhim {

struct ModelConfig {
  std::string kind = "barbanis2";
  Params2D p2;
  Params3D p3;
  std::string saddle;  ///< "bottom"/"top" or "+x"/"-x"; empty = model default
};

struct SliceConfig {
  std::string surface = "u_xpx";
  std::optional<double> k;  ///< fixed section coordinate (2-DoF slices)
  std::array<std::array<double, 2>, 2> window{{{-6.0, 6.0}, {-6.0, 6.0}}};
  std::array<std::size_t, 2> resolution{300, 300};
};

struct OutputConfig {
  std::string directory = "out";
  bool image = true;
};

struct PoSection {
  ContinuationConfig cc;
  std::vector<double> targets;
  bool targets_are_excess = true;
};

struct ManifoldSection {
  ManifoldConfig mc;
  bool both_stabilities = false;  ///< stability: "both"
  bool both_branches = false;     ///< branch: 0
};

struct PsectionSection {
  SectionConfig sc;
  std::array<std::size_t, 2> seeds{40, 40};
  int time_direction = +1;
};

struct ValidateSection {
  std::vector<double> ks;
  std::array<std::array<double, 2>, 2> window{{{4.0, 7.0}, {-0.8, 0.8}}};
  std::array<std::size_t, 2> resolution{300, 300};
};

struct RunConfig {
  std::string command;  ///< optional intent tag, checked against the CLI
  ModelConfig model;
  std::optional<EnergySpec> energy;
  unsigned workers = 0;  ///< 0 = all hardware threads
  OutputConfig output;
  IntegratorConfig integrator;
  LdConfig ld;
  bool ld_region_given = false;  ///< saddle_region present in the file
  std::vector<SliceConfig> slices;
  PoSection po;
  ManifoldSection manifold;
  PsectionSection psection;
  ValidateSection validate_nhim;
  std::string raw_text;  ///< original file contents, echoed into manifests
};

/// Parses configuration text; origin names the source in error messages.
RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin);

RunConfig load_run_config(const std::string& path);

/// Saddle selector parsing ("bottom"/"top", "+x"/"-x"; empty string picks
/// the default used throughout: bottom and +x respectively).
Barbanis2Dof::Saddle parse_saddle_2d(const std::string& s);
Contopoulos3Dof::Saddle parse_saddle_3d(const std::string& s);

}  // namespace nhim
