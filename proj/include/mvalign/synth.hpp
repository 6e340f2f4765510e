#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvalign/datamodel.hpp"

namespace mvalign {

enum class Primitive { box, cylinder, lshape };

/// Built-in CAD template. `dims` gives the aspect ratio before the model is
/// normalized to canonical space.
struct ObjectTemplate {
  std::string model_id;
  std::string class_id;
  Primitive primitive = Primitive::box;
  Vec3 dims = Vec3::Ones();
  int segments = 16;  // cylinder only
  int symmetry_order = 1;
};

/// Builds the canonical CAD model (vertices + closed surface) of a template.
CadModel build_model(const ObjectTemplate& tmpl);

struct IntRange {
  int min = 1;
  int max = 1;
};

enum class Layout {
  /// Centers uniform in [t_min, t_max], rejection-sampled for separation.
  box,
  /// One object per azimuth sector around `ring_center`.
  ring,
};

struct PoseRanges {
  Layout layout = Layout::box;
  Vec3 t_min = Vec3::Zero();
  Vec3 t_max = Vec3::Zero();
  Vec3 ring_center = Vec3::Zero();
  double ring_radius_min = 2.0;
  double ring_radius_max = 3.0;
  double ring_start_deg = 0.0;  // azimuth range split into one sector per object;
  double ring_end_deg = 360.0;  // a full turn is rotated by a random offset
  double ring_jitter = 0.25;    // fraction of a sector
  double z_min = 0.5;
  double z_max = 0.5;
  double yaw_min_deg = 0.0;  // rotation about world up (z)
  double yaw_max_deg = 0.0;
  Vec3 s_min = Vec3::Ones();
  Vec3 s_max = Vec3::Ones();
  double min_separation = 0.0;  // between object centers, m
};

enum class TrajectoryKind { orbit, line, waypoints };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::orbit;
  IntRange n_frames{8, 8};
  // orbit: camera on a horizontal circle
  Vec3 center = Vec3::Zero();
  double radius = 2.0;
  double height = 0.0;  // above center
  double start_deg = 0.0;
  double end_deg = 360.0;
  bool facing_outward = false;
  double pitch_deg = 0.0;  // downward tilt when facing outward
  // inward orbits and lines look at this point
  Vec3 look_at = Vec3::Zero();
  // line
  Vec3 from = Vec3::Zero();
  Vec3 to = Vec3::Zero();
  // waypoints: camera positions interpolated linearly, all looking at look_at
  std::vector<Vec3> waypoints;
};

struct CameraSpec {
  double fx = 500.0, fy = 500.0, cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
};

/// Frame interval during which one object is never emitted.
struct VisibilityGap {
  int object = 0;
  int first_frame = 0;
  int last_frame = 0;
};

struct VisibilitySpec {
  double margin_px = 0.0;  // detected center must lie this far inside the image
  std::vector<VisibilityGap> gaps;
  bool require_each_object_observed = true;
};

struct ScoreModel {
  double base = 1.0;
  double slope = 0.1;
  double floor = 0.05;
};

struct NoiseSpec {
  double center_sigma = 0.0;    // px
  double rotation_sigma = 0.0;  // degrees
  double box_sigma = 0.0;       // px per side
  double scale_sigma = 0.0;     // relative
  double embedding_sigma = 0.0;
  ScoreModel score;
  double dropout_rate = 0.0;
  double vote_error_rate = 0.0;

  void validate() const;
  /// Same spec with every sigma zeroed. Dropout and vote errors are kept:
  /// they remove or relabel observations without perturbing them.
  NoiseSpec noiseless() const;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  IntRange n_objects{1, 1};
  std::vector<ObjectTemplate> templates;
  PoseRanges pose;
  TrajectorySpec trajectory;
  CameraSpec camera;
  VisibilitySpec visibility;
  NoiseSpec noise;
  bool emit_scale_pred = true;
  bool emit_track_ids = false;  // object index as track id (oracle association)
  int embedding_dim = 8;

  void validate() const;
};

struct SynthScene {
  SceneInput scene;
  std::vector<GroundTruthObject> ground_truth;
};

/// Deterministic in `spec` (including its seed). Throws InfeasibleSpec.
SynthScene generate(const SynthSpec& spec);

/// Camera looking from `position` towards `target`; camera y points down
/// relative to `up`.
CameraFrame look_at_frame(int frame_index, const CameraSpec& camera, const Vec3& position, const Vec3& target,
                          const Vec3& up = Vec3::UnitZ());

/// Single-frame construction of the scale-depth ambiguity: object B is
/// object A scaled by `factor` about the camera center.
struct AmbiguitySpec {
  CameraSpec camera;
  ObjectTemplate object{"amb_cube", "cube", Primitive::box, Vec3::Ones(), 16, 1};
  Vec3 center_camera{0.1, -0.05, 2.0};  // object A's center in camera coordinates
  UnitQuaternion rotation;              // object A's rotation in camera coordinates
  Vec3 scale{0.6, 0.4, 0.5};
  double factor = 2.0;
};

struct AmbiguityPair {
  SynthScene a;
  SynthScene b;
};

/// Frame 0 of both scenes is the identity camera, so scene coordinates are
/// camera coordinates (y down). Observations carry no scale prediction.
AmbiguityPair ambiguity_pair(const AmbiguitySpec& spec);

/// Appends to both scenes one frame whose camera is rotated by `degrees`
/// about object A's center (around the camera's vertical axis), looking at it.
void add_offset_view(AmbiguityPair& pair, const AmbiguitySpec& spec, double degrees);

/// Noiseless observation of a posed model in one frame.
Observation render_observation(const CameraFrame& frame, const GroundTruthObject& object, const CadModel& model);

}  // namespace mvalign
