#include <iostream>

#include <CLI11.hpp>

#include "mvalign/commands.hpp"

namespace cli = mvalign::cli;

int main(int argc, char** argv) {
  CLI::App app{"Multi-view 9-DoF CAD alignment from per-frame detections"};
  app.require_subcommand(1);

  cli::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene directory from a spec file");
  synth_cmd->add_option("spec", synth.spec, "Scene spec (JSON)")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("out", synth.out_dir, "Output scene directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the spec's seed");
  synth_cmd->add_flag("--noiseless", synth.noiseless, "Zero every noise sigma (dropout is kept)");

  cli::SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Track, cluster and solve every object of a scene");
  solve_cmd->add_option("scene", solve.scene_dir, "Scene directory")->required();
  solve_cmd->add_option("out", solve.out_dir, "Output directory")->required();
  solve_cmd->add_option("--config", solve.config, "Run config (JSON)");
  solve_cmd->add_option("--jobs", solve.jobs, "Parallel object solves (0: all cores)");
  solve_cmd->add_option("--online-chunk", solve.online_chunk, "Process the video in chunks of N frames");

  cli::BaselineArgs baseline;
  auto* baseline_cmd = app.add_subcommand("baseline", "Single-frame alignments with duplicate removal");
  baseline_cmd->add_option("scene", baseline.scene_dir, "Scene directory")->required();
  baseline_cmd->add_option("out", baseline.out_dir, "Output directory")->required();
  baseline_cmd->add_option("--variant", baseline.variant, "class_avg or scale_pred")->required();
  baseline_cmd->add_option("--class-stats", baseline.class_stats, "Class statistics (JSON)");
  baseline_cmd->add_option("--config", baseline.config, "Run config (JSON)");

  cli::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score alignments against ground truth");
  eval_cmd->add_option("alignments", eval.alignments, "Alignments file")->required();
  eval_cmd->add_option("ground_truth", eval.ground_truth, "Ground-truth file")->required();
  eval_cmd->add_option("out", eval.out_dir, "Output directory")->required();
  eval_cmd->add_option("--config", eval.config, "Run config (JSON)");
  eval_cmd->add_option("--models", eval.models, "CAD models file (default: models.jsonl next to the ground truth)");

  cli::ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Write posed models as one OBJ mesh");
  export_cmd->add_option("alignments", exp.alignments, "Alignments file")->required();
  export_cmd->add_option("models", exp.models, "CAD models file")->required();
  export_cmd->add_option("mesh", exp.mesh, "Output OBJ file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInputError;
  }

  if (*synth_cmd) return cli::run_synth(synth, std::cerr);
  if (*solve_cmd) return cli::run_solve(solve, std::cerr);
  if (*baseline_cmd) return cli::run_baseline(baseline, std::cerr);
  if (*eval_cmd) return cli::run_eval(eval, std::cerr);
  if (*export_cmd) return cli::run_export(exp, std::cerr);
  return cli::kInputError;
}
