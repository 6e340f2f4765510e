#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvalign/datamodel.hpp"
#include "mvalign/objective.hpp"
#include "mvalign/solver.hpp"

namespace mvalign {

/// Detections of one physical object linked across frames.
struct Track {
  int track_id = 0;
  std::vector<const Observation*> observations;  // strictly increasing frame index
  std::string class_id;
  double max_score = 0.0;
};

struct TrackerParams {
  double iou_threshold = 0.3;
  int max_gap = 30;  // unmatched frames before a track is closed
  /// Group by Observation::track_id instead of running the tracker.
  bool use_observation_track_ids = false;

  void validate() const;
};

/// Greedy frame-by-frame IoU tracker. Detections are visited by frame, then
/// descending score; each joins the open same-class track with the shortest
/// gap whose last box overlaps it by at least the threshold, ties to the
/// larger IoU, then the lower id. Track ids are assigned in creation order,
/// so running it on a prefix of the video yields a prefix of the ids.
std::vector<Track> build_tracks(const SceneInput& scene, const TrackerParams& params = {});

struct ClusterParams {
  double translation_radius = 0.40;  // m
  double rotation_radius = 40.0;     // degrees, symmetry absorbed
  double scale_radius = 0.40;        // relative, see relative_scale_distance

  void validate() const;
};

/// max over axes of |a - b| / max(a, b).
double relative_scale_distance(const Vec3& a, const Vec3& b);

/// Greedy seeded clustering of per-track alignments (object_id = track id).
/// Seeds are taken by descending score, ties to the lowest id. Symmetry
/// orders come from `cad_db` by model id (1 when unknown). Each cluster
/// lists its seed first, then members by ascending id.
std::vector<std::vector<int>> cluster_alignments(std::span<const AlignmentResult> alignments,
                                                 const ClusterParams& params,
                                                 const std::vector<CadModel>& cad_db = {});

/// Called from worker threads after every solver iteration.
using SolveObserver = std::function<void(const std::string& object, const IterationInfo& info)>;

struct IntegrationOptions {
  TrackerParams tracker;
  ClusterParams cluster;
  double track_budget_fraction = 0.25;  // of max_iterations, for per-track solves
  int jobs = 1;
  SolveObserver observer;
};

struct TrackSolution {
  int track_id = 0;
  AlignmentResult alignment;
  ObjectVariables variables;
};

struct IntegrationResult {
  std::vector<AlignmentResult> alignments;  // one per cluster, object_id = cluster index
  std::vector<SolveReport> reports;         // parallel to alignments
  std::vector<Track> tracks;
  std::vector<TrackSolution> track_solutions;  // successful track solves only
  std::vector<std::vector<int>> clusters;      // track ids, parallel to alignments
  std::vector<ObjectVariables> variables;      // parallel to alignments
  std::vector<std::string> diagnostics;        // one line per dropped object
  int failed_objects = 0;
};

/// Warm starts keyed by track id: a previous solution for a track and for a
/// cluster seeded by it.
struct WarmStarts {
  std::map<int, ObjectVariables> tracks;
  std::map<int, ObjectVariables> clusters;
};

/// Tracks, per-track solves, clustering, then one solve per cluster over the
/// union of its tracks' observations. Failing objects are dropped with a
/// diagnostic.
IntegrationResult integrate_scene(const SceneInput& scene, const ObjectiveWeights& weights,
                                  const SolverConfig& config, const IntegrationOptions& options = {},
                                  const WarmStarts* warm = nullptr);

}  // namespace mvalign
