#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mvalign/datamodel.hpp"
#include "mvalign/objective.hpp"

namespace mvalign {

/// Base step sizes per variable block, in each block's own units.
struct LearningRates {
  double translation = 1e-2;  // m
  double center = 1e-2;       // px
  double depth = 1e-2;        // m
  double quaternion = 1e-3;
  double log_scale = 1e-2;
};

enum class StepRule {
  /// Scaled gradient step, backtracking on the step length.
  gradient,
  /// Per-coordinate adaptive steps along the gradient sign (grow while the
  /// sign persists, shrink when it flips), backtracking on the whole step.
  sign_adaptive,
  /// Preconditioned nonlinear conjugate gradient (Polak-Ribiere+) with an
  /// Armijo backtracking line search.
  conjugate_gradient,
  /// Limited-memory BFGS directions (first-order information only), scaled
  /// by the block rates, with the same Armijo backtracking.
  lbfgs,
};

struct SolverConfig {
  int max_iterations = 2000;
  LearningRates learning_rate;
  StepRule step_rule = StepRule::lbfgs;
  double lr_growth = 1.2;   // step multiplier while a gradient sign persists
  double lr_shrink = 0.5;   // step multiplier when it flips
  double convergence_tol = 1e-7;
  int convergence_window = 10;
  double min_depth = 0.1;
  /// Start R from the best-scored observation instead of the identity.
  bool init_rotation_from_observations = true;
  /// Start t at the least-squares intersection of the detected-center rays
  /// (and the auxiliary centers at the detections) instead of the origin.
  bool init_translation_from_rays = true;
  /// When no observation carries a scale prediction, start s at the scale
  /// whose projected boxes best match the detected box extents.
  bool init_scale_from_boxes = true;
  /// Observations kept per object, uniformly spaced over the track.
  int max_observations = 40;
  /// Solves first minimize smoothed objectives (see Smoothing), dividing
  /// the smoothing by 10 per stage, before the exact objective.
  int smoothing_stages = 4;
  Smoothing initial_smoothing{50.0, 0.5, 0.5};
  /// Smoothed stages (the least smoothed ones) run on warm-started solves.
  int warm_smoothing_stages = 0;
  /// A warm-started solve also runs from the default initialization and
  /// keeps whichever ends lower.
  bool warm_also_cold = true;

  void validate() const;
};

struct SolveReport {
  int iterations_used = 0;
  double final_objective = 0.0;
  TermBreakdown per_term_residuals;
  bool converged = false;
  /// All camera centers within 1 cm of one line through the object center:
  /// scale and depth are not separable from the data.
  bool ill_conditioned = false;
  int observations_used = 0;
};

struct SolveResult {
  Pose9DoF pose;
  ObjectVariables variables;
  SolveReport report;
};

/// Snapshot handed to an IterationObserver after every accepted iteration.
struct IterationInfo {
  int iteration = 0;
  int stage = 0;  // smoothing stage; the objective is monotone within a stage
  double objective = 0.0;
  Vec4 quaternion = Vec4::Zero();
  std::span<const double> depths;
};
using IterationObserver = std::function<void(const IterationInfo&)>;

/// Keeps one observation per frame (highest score) and at most `max_count`
/// uniformly spaced over the frame range, ordered by frame index.
std::vector<FrameObservation> select_observations(std::span<const FrameObservation> observations, int max_count);

/// Minimizes the weighted objective for one object. `warm_start`, when given,
/// supplies the starting pose; auxiliary variables always start at the
/// detected centers.
SolveResult solve_object(std::span<const FrameObservation> observations, const ObjectiveWeights& weights,
                         const SolverConfig& config, std::span<const Vec3> vertices, int symmetry_order = 1,
                         const ObjectVariables* warm_start = nullptr, const IterationObserver& observer = {});

/// Convenience overload resolving frames from the scene.
SolveResult solve_object(const SceneInput& scene, std::span<const Observation> observations,
                         const ObjectiveWeights& weights, const SolverConfig& config, std::span<const Vec3> vertices,
                         int symmetry_order = 1);

/// Default starting point for a set of observations. Box-based scale
/// initialization needs the model's `vertices`.
ObjectVariables initial_variables(std::span<const FrameObservation> observations, const SolverConfig& config,
                                  std::span<const Vec3> vertices = {});

/// True when every camera center lies within `tolerance` of a single line
/// through `center`.
bool cameras_collinear_with(std::span<const FrameObservation> observations, const Vec3& center,
                            double tolerance = 0.01);

/// Depth along the ray through the detected center that best fits the
/// detected box, for a known scale and world rotation. Searches [0.1, 100] m.
/// Throws Divergent when no interior depth beats both ends of the range.
double derive_depth_single_frame(const CameraFrame& frame, const Observation& obs, const Vec3& scale,
                                 const UnitQuaternion& rotation, std::span<const Vec3> vertices);

}  // namespace mvalign
