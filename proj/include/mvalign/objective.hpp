#pragma once

#include <map>
#include <span>
#include <vector>

#include "mvalign/datamodel.hpp"
#include "mvalign/geometry.hpp"

namespace mvalign {

/// Per-frame auxiliary variables: image position and camera depth of the
/// object center as seen from that frame.
struct AuxPerFrame {
  Vec2 center = Vec2::Zero();
  double depth = 1.0;
  friend bool operator==(const AuxPerFrame&, const AuxPerFrame&) = default;
};

struct ObjectiveWeights {
  double translation = 20.0;
  double center = 3.0;
  double rotation = 0.1;
  double scale_box = 3.0;
  double scale_rec = 30.0;  // not given by the method description; tuning knob

  /// The four weights of the multi-view objective, scale-from-recognition off.
  static ObjectiveWeights multi_view_only() { return {20.0, 3.0, 0.1, 3.0, 0.0}; }
  void validate() const;
};

struct ObjectVariables {
  Pose9DoF pose;
  std::map<int, AuxPerFrame> aux;  // keyed by frame index
};

/// Observation paired with the frame it was made in.
struct FrameObservation {
  const CameraFrame* frame = nullptr;
  const Observation* obs = nullptr;
};

/// Optional smoothing of the absolute values inside the terms: each |r|
/// becomes sqrt(r² + μ²) − μ, with μ in the residual's units. All zero
/// (the default) is the exact objective.
struct Smoothing {
  double pixel = 0.0;     // center and box terms
  double metric = 0.0;    // translation and scale terms
  double rotation = 0.0;  // Frobenius distance
  bool is_exact() const { return pixel == 0.0 && metric == 0.0 && rotation == 0.0; }
  Smoothing scaled(double factor) const { return {pixel * factor, metric * factor, rotation * factor}; }
};

// Gradients with respect to the quaternion are taken through normalization
// (f(q/|q|)), so they are tangent to the unit sphere at unit q.

struct CenterTerm {
  double value = 0.0;
  Vec2 d_center = Vec2::Zero();
};

struct TranslationTerm {
  double value = 0.0;
  Vec2 d_center = Vec2::Zero();
  double d_depth = 0.0;
  Vec3 d_t = Vec3::Zero();
};

struct RotationTerm {
  double value = 0.0;
  Vec4 d_q = Vec4::Zero();
};

struct BoxTerm {
  double value = 0.0;
  Vec3 d_t = Vec3::Zero();
  Vec4 d_q = Vec4::Zero();
  Vec3 d_s = Vec3::Zero();
};

struct ScaleRecTerm {
  double value = 0.0;
  Vec3 d_s = Vec3::Zero();
};

/// L1 distance between the auxiliary center and the detected 2D center.
CenterTerm center_term(const Observation& obs, const AuxPerFrame& aux, const Smoothing& smoothing = {});

/// L1 distance between the back-projected auxiliary center and t.
TranslationTerm translation_term(const CameraFrame& frame, const AuxPerFrame& aux, const Vec3& t,
                                 const Smoothing& smoothing = {});

/// Frobenius distance between the predicted camera-view rotation and
/// E_R · R, minimized over the symmetry orbit about the canonical up-axis.
RotationTerm rotation_term(const CameraFrame& frame, const Observation& obs, const UnitQuaternion& rotation,
                           int symmetry_order = 1, const Smoothing& smoothing = {});

/// Vertices below this camera depth are left out of the projected box.
inline constexpr double kBoxNearPlane = 0.1;

/// Sum of absolute side differences between the projected model box and the
/// detected amodal box. Throws AllVerticesBehindCamera when fewer than three
/// vertices lie in front of the near plane.
BoxTerm scale_box_term(const CameraFrame& frame, const Observation& obs, const Pose9DoF& pose,
                       std::span<const Vec3> vertices, const Smoothing& smoothing = {});

/// Projected amodal box of posed vertices (near-plane filtered, unclipped).
/// Throws AllVerticesBehindCamera like scale_box_term.
Box2D projected_box(const CameraFrame& frame, const Pose9DoF& pose, std::span<const Vec3> vertices);

/// L1 distance between s and the per-frame scale prediction.
/// Throws MissingScalePrediction when the observation carries none.
ScaleRecTerm scale_rec_term(const Observation& obs, const Vec3& s, const Smoothing& smoothing = {});

/// Vertices used by the box term: the model itself, or its convex hull when
/// the model has more than kHullVertexThreshold vertices.
inline constexpr std::size_t kHullVertexThreshold = 512;
std::vector<Vec3> box_term_vertices(const CadModel& model);

/// Unweighted per-term sums over frames.
struct TermBreakdown {
  double translation = 0.0;
  double center = 0.0;
  double rotation = 0.0;
  double scale_box = 0.0;
  double scale_rec = 0.0;
  int frames_without_box = 0;
};

struct ObjectiveGradient {
  Vec3 t = Vec3::Zero();
  Vec4 q = Vec4::Zero();
  Vec3 s = Vec3::Zero();
  std::map<int, AuxPerFrame> aux;  // center / depth partials
};

struct ObjectiveValue {
  double value = 0.0;
  ObjectiveGradient gradient;
  TermBreakdown terms;
};

/// Weighted sum of all per-frame terms. `vars.aux` must cover exactly the
/// frames of `observations`.
ObjectiveValue total_objective(std::span<const FrameObservation> observations, const ObjectVariables& vars,
                               const ObjectiveWeights& weights, std::span<const Vec3> vertices,
                               int symmetry_order = 1);

/// Flat-vector form used by the solver. Layout: t(3), q(4), s(3), then
/// (center_x, center_y, depth) per observation in order. `grad` may be null.
struct FlatObjective {
  std::span<const FrameObservation> observations;
  ObjectiveWeights weights;
  std::span<const Vec3> vertices;
  int symmetry_order = 1;
  Smoothing smoothing;

  static constexpr int kPoseSize = 10;
  int size() const { return kPoseSize + 3 * static_cast<int>(observations.size()); }
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, TermBreakdown* terms = nullptr) const;
};

}  // namespace mvalign
