#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvalign/association.hpp"
#include "mvalign/datamodel.hpp"
#include "mvalign/eval.hpp"
#include "mvalign/objective.hpp"
#include "mvalign/pipeline.hpp"
#include "mvalign/solver.hpp"
#include "mvalign/synth.hpp"

namespace mvalign {

/// Everything a command needs besides its input and output paths. Fields
/// missing from a config file keep their defaults; unknown fields are
/// reported as warnings.
struct RunConfig {
  ObjectiveWeights weights;
  SolverConfig solver;
  TrackerParams tracker;
  ClusterParams cluster;
  double track_budget_fraction = 0.25;
  AccuracyThresholds thresholds;
  SweepGrids sweeps = SweepGrids::defaults();
  std::vector<double> iou_thresholds{0.25, 0.5, 0.7};
  /// Per-class symmetry used by evaluation. Classes not listed take the
  /// order stored with their CAD models when models are available.
  SymmetryTable symmetry;
  int jobs = 0;  // 0: all available cores

  void validate() const;
  IntegrationOptions integration_options() const;
};

RunConfig load_run_config(const std::filesystem::path& file, Warnings* warnings = nullptr);
RunConfig parse_run_config(const std::string& text, const std::string& source, Warnings* warnings = nullptr);
std::string run_config_json(const RunConfig& config);

SynthSpec load_synth_spec(const std::filesystem::path& file, Warnings* warnings = nullptr);
SynthSpec parse_synth_spec(const std::string& text, const std::string& source, Warnings* warnings = nullptr);
std::string synth_spec_json(const SynthSpec& spec);

ClassStatsTable load_class_stats(const std::filesystem::path& file, Warnings* warnings = nullptr);
void save_class_stats(const ClassStatsTable& stats, const std::filesystem::path& file);

/// Symmetry table from a JSON object of class -> order, where an order may
/// be the string "continuous".
SymmetryTable load_symmetry_table(const std::filesystem::path& file, Warnings* warnings = nullptr);

/// Orders taken from the CAD models, overridden by `table`.
SymmetryTable symmetry_for(const SymmetryTable& table, const std::vector<CadModel>& cad_db);

}  // namespace mvalign
