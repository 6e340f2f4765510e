#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvalign/datamodel.hpp"

namespace mvalign {

/// Joint acceptance thresholds for one alignment.
struct AccuracyThresholds {
  double translation = 0.20;  // m
  double rotation = 20.0;     // degrees
  double scale = 0.20;        // relative, max over axes

  void validate() const;
};

/// Class id -> symmetry order about the up axis (kContinuousSymmetryOrder
/// for surfaces of revolution). Classes not listed have order 1.
using SymmetryTable = std::map<std::string, int>;

int symmetry_order(const SymmetryTable& table, const std::string& class_id);

struct PoseErrors {
  double translation = 0.0;  // m
  double rotation = 0.0;     // degrees, symmetry absorbed
  double scale = 0.0;        // max over axes of |s - s_gt| / s_gt
};

PoseErrors pose_errors(const Pose9DoF& result, const Pose9DoF& gt, int symmetry_order);

bool within(const PoseErrors& e, const AccuracyThresholds& t);

struct MatchRecord {
  int gt_index = 0;
  std::optional<int> result_index;  // index into the results list
  std::string class_id;
  PoseErrors errors;  // meaningful only when matched
  bool accurate = false;
};

struct ClassAccuracy {
  int n_gt = 0;
  int n_accurate = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::map<std::string, ClassAccuracy> per_class;  // classes present in the ground truth
  double class_avg = 0.0;
  double global_avg = 0.0;
  std::vector<MatchRecord> matches;  // one per ground-truth object, in order
};

/// One-to-one greedy matching: same-class (gt, result) pairs are taken in
/// ascending translation error (ties by gt index, then result index).
std::vector<MatchRecord> match_results(std::span<const AlignmentResult> results,
                                       std::span<const GroundTruthObject> gt, const SymmetryTable& symmetry);

EvalReport score_matches(std::vector<MatchRecord> matches, const AccuracyThresholds& thresholds);

EvalReport match_and_score(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                           const AccuracyThresholds& thresholds, const SymmetryTable& symmetry);

enum class Transformation { translation, rotation, scale };
const char* to_string(Transformation t);

struct SweepGrids {
  std::vector<double> translation;  // m
  std::vector<double> rotation;     // degrees
  std::vector<double> scale;        // relative
  /// Uniform grids that include the default thresholds.
  static SweepGrids defaults();
  void validate() const;
};

struct SweepCurve {
  Transformation kind = Transformation::translation;
  std::vector<double> thresholds;
  std::vector<double> class_avg;
  std::vector<double> global_avg;
};

/// Accuracy as one threshold is swept with the others held at `base`.
std::vector<SweepCurve> sweep_curves(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                                     const SweepGrids& grids, const SymmetryTable& symmetry,
                                     const AccuracyThresholds& base = {});

/// World-space oriented box of a posed model's canonical bounds.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();  // columns are the box axes
  Vec3 half_extent = Vec3::Zero();

  double volume() const { return 8.0 * half_extent.prod(); }
  bool contains(const Vec3& p) const;
};

OrientedBox posed_box(const CadModel& model, const Pose9DoF& pose);

inline constexpr int kIouSamples = 100000;
inline constexpr std::uint64_t kIouSeed = 20240607;

/// Monte Carlo IoU: half of the samples drawn uniformly in each box.
double oriented_box_iou(const OrientedBox& a, const OrientedBox& b, int samples = kIouSamples,
                        std::uint64_t seed = kIouSeed);

struct PrfRow {
  double iou_threshold = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 0.0;  // 0 when there are no results
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision / recall / F1 of 3D boxes. Results are matched in descending
/// score order to the unmatched same-class ground truth with the highest IoU
/// above the threshold.
std::vector<PrfRow> box_iou_prf(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                                const std::vector<CadModel>& cad_db,
                                const std::vector<double>& iou_thresholds = {0.25, 0.5, 0.7},
                                int samples = kIouSamples);

}  // namespace mvalign
