#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace mvalign::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kPartial = 1,     // some objects failed, the rest were written
  kInputError = 2,  // unreadable or invalid input, bad usage
};

/// Files written into command output directories.
namespace out_files {
inline constexpr const char* kAlignments = "alignments.jsonl";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kSweeps = "sweeps.csv";
inline constexpr const char* kPrf = "prf.csv";
inline constexpr const char* kClassStats = "class_stats.json";
inline constexpr const char* kSnapshots = "snapshots";
}  // namespace out_files

struct SynthArgs {
  std::filesystem::path spec;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;  // overrides the spec's seed
  bool noiseless = false;
};

struct SolveArgs {
  std::filesystem::path scene_dir;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  std::optional<int> jobs;
  std::optional<int> online_chunk;  // frames per chunk
};

struct BaselineArgs {
  std::filesystem::path scene_dir;
  std::filesystem::path out_dir;
  std::string variant;
  std::optional<std::filesystem::path> class_stats;
  std::optional<std::filesystem::path> config;
};

struct EvalArgs {
  std::filesystem::path alignments;
  std::filesystem::path ground_truth;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  /// Defaults to models.jsonl next to the ground truth when present.
  std::optional<std::filesystem::path> models;
};

struct ExportArgs {
  std::filesystem::path alignments;
  std::filesystem::path models;
  std::filesystem::path mesh;
};

// Each command writes its outputs, reports progress, warnings and timing on
// `log`, and returns an ExitCode. Output files never contain timings.
int run_synth(const SynthArgs& args, std::ostream& log);
int run_solve(const SolveArgs& args, std::ostream& log);
int run_baseline(const BaselineArgs& args, std::ostream& log);
int run_eval(const EvalArgs& args, std::ostream& log);
int run_export(const ExportArgs& args, std::ostream& log);

}  // namespace mvalign::cli
