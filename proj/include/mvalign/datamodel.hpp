#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvalign/geometry.hpp"
#include "mvalign/hull.hpp"

namespace mvalign {

/// Axis-aligned image box in pixels.
struct Box2D {
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double area() const { return width() * height(); }
  friend bool operator==(const Box2D&, const Box2D&) = default;
};

double box_iou(const Box2D& a, const Box2D& b);

/// Shape-code vote: the nearest database model plus the raw embedding.
struct ModelVote {
  std::string cad_model_id;
  std::vector<double> embedding;
  friend bool operator==(const ModelVote&, const ModelVote&) = default;
};

/// One detection of one object in one frame.
struct Observation {
  int frame_index = 0;
  std::string class_id;
  double score = 1.0;
  Box2D box;
  Vec2 center2d = Vec2::Zero();
  UnitQuaternion rotation_pred;  // CAD -> camera view
  std::optional<Vec3> scale_pred;
  std::optional<ModelVote> model_vote;
  std::optional<int> track_id;

  void validate(const std::string& field = "observation") const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Canonical-space CAD model: bounding box centered at the origin, largest
/// extent equal to kCanonicalExtent.
struct CadModel {
  static constexpr double kCanonicalExtent = 1.0;

  std::string id;
  std::string class_id;
  std::vector<Vec3> vertices;
  std::vector<Triangle> faces;  // optional closed surface
  bool is_vertically_symmetric = false;
  int symmetry_order = 1;
  std::vector<double> embedding;  // optional retrieval embedding

  void validate(const std::string& field = "model") const;
  /// Axis-aligned canonical bounds (min, max).
  std::pair<Vec3, Vec3> bounds() const;
  friend bool operator==(const CadModel&, const CadModel&) = default;
};

/// Rescales and recenters arbitrary vertices into canonical space.
std::vector<Vec3> canonicalize_vertices(std::vector<Vec3> vertices);

struct SceneInput {
  std::vector<CameraFrame> frames;
  std::vector<Observation> observations;
  std::vector<CadModel> cad_db;

  /// Throws DanglingReference when absent.
  const CameraFrame& frame(int frame_index) const;
  const CadModel& model(const std::string& id) const;
  const CadModel* find_model(const std::string& id) const;

  /// Checks every type invariant and cross-reference.
  void validate() const;
};

struct AlignmentResult {
  int object_id = 0;
  std::string cad_model_id;
  std::string class_id;
  Pose9DoF pose;
  double score = 0.0;
  int n_supporting_frames = 1;
  double final_objective = 0.0;

  void validate(const std::string& field = "alignment") const;
  friend bool operator==(const AlignmentResult&, const AlignmentResult&) = default;
};

struct GroundTruthObject {
  std::string class_id;
  std::string cad_model_id;
  Pose9DoF pose;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

/// Scene directory layout.
namespace scene_files {
inline constexpr const char* kFrames = "frames.jsonl";
inline constexpr const char* kObservations = "observations.jsonl";
inline constexpr const char* kModels = "models.jsonl";
inline constexpr const char* kGroundTruth = "ground_truth.jsonl";
}  // namespace scene_files

/// Collects non-fatal notices such as unknown fields.
using Warnings = std::vector<std::string>;

SceneInput load_scene(const std::filesystem::path& dir, Warnings* warnings = nullptr);
void save_scene(const SceneInput& scene, const std::filesystem::path& dir);

std::vector<CadModel> load_models(const std::filesystem::path& file, Warnings* warnings = nullptr);

void save_alignments(const std::vector<AlignmentResult>& results, const std::filesystem::path& file);
std::vector<AlignmentResult> load_alignments(const std::filesystem::path& file, Warnings* warnings = nullptr);

void save_ground_truth(const std::vector<GroundTruthObject>& gt, const std::filesystem::path& file);
std::vector<GroundTruthObject> load_ground_truth(const std::filesystem::path& file, Warnings* warnings = nullptr);

/// Single-line record text as written to observation files.
std::string observation_record(const Observation& obs);

/// Writes every posed model into one Wavefront OBJ file.
void export_scene_mesh(const std::vector<AlignmentResult>& results, const std::vector<CadModel>& cad_db,
                       const std::filesystem::path& file);

}  // namespace mvalign
