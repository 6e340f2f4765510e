#include "mvalign/pipeline.hpp"

#include <algorithm>
#include <set>

#include "mvalign/errors.hpp"

namespace mvalign {

SolveSession::SolveSession(std::vector<CadModel> cad_db, ObjectiveWeights weights, SolverConfig config,
                           IntegrationOptions options)
    : weights_(weights), config_(std::move(config)), options_(std::move(options)) {
  scene_.cad_db = std::move(cad_db);
}

const IntegrationResult& SolveSession::update(std::span<const CameraFrame> frames,
                                              std::span<const Observation> observations) {
  scene_.frames.insert(scene_.frames.end(), frames.begin(), frames.end());
  scene_.observations.insert(scene_.observations.end(), observations.begin(), observations.end());
  scene_.validate();

  result_ = integrate_scene(scene_, weights_, config_, options_, updates_ > 0 ? &warm_ : nullptr);
  ++updates_;

  warm_.tracks.clear();
  warm_.clusters.clear();
  for (const auto& ts : result_.track_solutions) warm_.tracks.emplace(ts.track_id, ts.variables);
  for (std::size_t c = 0; c < result_.clusters.size(); ++c) {
    warm_.clusters.emplace(result_.clusters[c].front(), result_.variables[c]);
  }
  return result_;
}

const IntegrationResult& solve_incremental(SolveSession& session, std::span<const CameraFrame> frames,
                                           std::span<const Observation> observations) {
  return session.update(frames, observations);
}

std::vector<IntegrationResult> solve_online(const SceneInput& scene, int chunk_frames, const ObjectiveWeights& weights,
                                            const SolverConfig& config, const IntegrationOptions& options) {
  if (chunk_frames < 1) throw ValidationError("online_chunk", "must be >= 1");
  std::vector<CameraFrame> frames = scene.frames;
  std::stable_sort(frames.begin(), frames.end(),
                   [](const CameraFrame& a, const CameraFrame& b) { return a.frame_index < b.frame_index; });

  SolveSession session(scene.cad_db, weights, config, options);
  std::vector<IntegrationResult> snapshots;
  for (std::size_t begin = 0; begin < frames.size(); begin += chunk_frames) {
    const std::size_t end = std::min(frames.size(), begin + chunk_frames);
    std::set<int> indices;
    for (std::size_t i = begin; i < end; ++i) indices.insert(frames[i].frame_index);
    std::vector<Observation> chunk;
    for (const auto& o : scene.observations) {
      if (indices.count(o.frame_index)) chunk.push_back(o);
    }
    snapshots.push_back(session.update(std::span(frames).subspan(begin, end - begin), chunk));
  }
  return snapshots;
}

ClassStatsTable compute_class_stats(std::span<const SynthScene> scenes) {
  struct Sum {
    Vec3 scale = Vec3::Zero();
    double depth = 0.0;
    int objects = 0;
    int observations = 0;
  };
  std::map<std::string, Sum> sums;
  for (const auto& sc : scenes) {
    for (const auto& g : sc.ground_truth) {
      Sum& s = sums[g.class_id];
      s.scale += g.pose.s;
      ++s.objects;
    }
    // Observations carry no object identity, so each is attributed to the
    // nearest ground-truth object of its class along the image plane.
    for (const auto& o : sc.scene.observations) {
      const CameraFrame& frame = sc.scene.frame(o.frame_index);
      const GroundTruthObject* best = nullptr;
      double best_d = 0.0;
      for (const auto& g : sc.ground_truth) {
        if (g.class_id != o.class_id) continue;
        const Vec3 c = world_to_camera(frame, g.pose.t);
        if (!(c.z() > 0.0)) continue;
        const double d = (project(frame, c) - o.center2d).norm();
        if (!best || d < best_d) best = &g, best_d = d;
      }
      if (!best) continue;
      Sum& s = sums[o.class_id];
      s.depth += world_to_camera(frame, best->pose.t).z();
      ++s.observations;
    }
  }
  ClassStatsTable table;
  for (const auto& [cls, s] : sums) {
    if (s.objects == 0 || s.observations == 0) continue;
    table[cls] = {s.scale / s.objects, s.depth / s.observations, s.objects, s.observations};
  }
  return table;
}

const char* to_string(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::class_avg:
      return "class_avg";
    case BaselineVariant::scale_pred:
      return "scale_pred";
  }
  return "";
}

BaselineVariant parse_baseline_variant(const std::string& name) {
  if (name == "class_avg") return BaselineVariant::class_avg;
  if (name == "scale_pred") return BaselineVariant::scale_pred;
  throw ValidationError("variant", "expected class_avg or scale_pred, got '" + name + "'");
}

BaselineResult run_baseline(const SceneInput& scene, BaselineVariant variant, const ClusterParams& cluster,
                            const ClassStatsTable* stats) {
  if (variant == BaselineVariant::class_avg && !stats) {
    throw ValidationError("class_stats", "required by the class_avg baseline");
  }
  std::map<std::string, std::vector<Vec3>> vertices;
  for (const auto& m : scene.cad_db) vertices.emplace(m.id, box_term_vertices(m));

  BaselineResult out;
  std::vector<AlignmentResult> per_frame;
  for (std::size_t i = 0; i < scene.observations.size(); ++i) {
    const Observation& o = scene.observations[i];
    const std::string where = "observation " + std::to_string(i) + " (frame " + std::to_string(o.frame_index) + ")";
    if (!o.model_vote) {
      out.diagnostics.push_back(where + ": no model vote");
      continue;
    }
    const CameraFrame& frame = scene.frame(o.frame_index);
    AlignmentResult a;
    a.cad_model_id = o.model_vote->cad_model_id;
    a.class_id = o.class_id;
    a.score = o.score;
    a.n_supporting_frames = 1;
    a.pose.rotation = (UnitQuaternion::from_matrix(frame.E_R.transpose()) * o.rotation_pred).canonical_sign();
    try {
      double depth = 0.0;
      if (variant == BaselineVariant::class_avg) {
        auto it = stats->find(o.class_id);
        if (it == stats->end()) {
          throw ValidationError("class_stats", "no entry for class '" + o.class_id + "'");
        }
        a.pose.s = it->second.scale;
        depth = it->second.depth;
      } else {
        if (!o.scale_pred) throw MissingScalePrediction(where + ": no scale prediction");
        a.pose.s = *o.scale_pred;
        depth = derive_depth_single_frame(frame, o, a.pose.s, a.pose.rotation, vertices.at(a.cad_model_id));
      }
      a.pose.t = backproject(frame, o.center2d, depth);
      a.final_objective = scale_box_term(frame, o, a.pose, vertices.at(a.cad_model_id)).value;
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      out.diagnostics.push_back(std::string(e.what()));
      continue;
    }
    a.object_id = static_cast<int>(per_frame.size());
    per_frame.push_back(a);
  }
  out.per_frame_alignments = static_cast<int>(per_frame.size());

  for (const auto& members : cluster_alignments(per_frame, cluster, scene.cad_db)) {
    AlignmentResult kept = per_frame[members.front()];
    kept.object_id = static_cast<int>(out.alignments.size());
    out.alignments.push_back(kept);
  }
  return out;
}

}  // namespace mvalign
