#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvalign/association.hpp"
#include "mvalign/datamodel.hpp"
#include "mvalign/objective.hpp"
#include "mvalign/solver.hpp"
#include "mvalign/synth.hpp"

namespace mvalign {

/// Online operation: the video is fed in chunks and every update re-solves
/// all objects over the frames seen so far, warm-starting tracks and
/// clusters from the previous update.
class SolveSession {
 public:
  SolveSession(std::vector<CadModel> cad_db, ObjectiveWeights weights, SolverConfig config,
               IntegrationOptions options = {});

  /// Appends frames and observations (observations may reference any frame
  /// seen so far) and re-solves.
  const IntegrationResult& update(std::span<const CameraFrame> frames, std::span<const Observation> observations);

  const IntegrationResult& result() const { return result_; }
  const SceneInput& scene() const { return scene_; }
  int updates() const { return updates_; }

 private:
  SceneInput scene_;
  ObjectiveWeights weights_;
  SolverConfig config_;
  IntegrationOptions options_;
  WarmStarts warm_;
  IntegrationResult result_;
  int updates_ = 0;
};

const IntegrationResult& solve_incremental(SolveSession& session, std::span<const CameraFrame> frames,
                                           std::span<const Observation> observations);

/// Splits the scene into consecutive chunks of `chunk_frames` frames and
/// feeds them to a session. Returns the result after every chunk.
std::vector<IntegrationResult> solve_online(const SceneInput& scene, int chunk_frames, const ObjectiveWeights& weights,
                                            const SolverConfig& config, const IntegrationOptions& options = {});

/// Average scale and camera depth of one class.
struct ClassStats {
  Vec3 scale = Vec3::Ones();
  double depth = 1.0;
  int objects = 0;
  int observations = 0;
};
using ClassStatsTable = std::map<std::string, ClassStats>;

/// Ground-truth statistics over a set of scenes: mean scale over objects,
/// mean center depth over the frames each object was observed in.
ClassStatsTable compute_class_stats(std::span<const SynthScene> scenes);

enum class BaselineVariant {
  /// Class-average scale and depth.
  class_avg,
  /// Predicted scale, depth fitted to the detected box.
  scale_pred,
};

const char* to_string(BaselineVariant v);
BaselineVariant parse_baseline_variant(const std::string& name);

struct BaselineResult {
  std::vector<AlignmentResult> alignments;
  std::vector<std::string> diagnostics;  // one line per dropped observation
  int per_frame_alignments = 0;
};

/// One alignment per observation from that frame alone (model from its
/// vote, rotation from its prediction), then duplicates removed by
/// clustering, keeping the top-scored member of each cluster.
BaselineResult run_baseline(const SceneInput& scene, BaselineVariant variant, const ClusterParams& cluster,
                            const ClassStatsTable* stats = nullptr);

}  // namespace mvalign
