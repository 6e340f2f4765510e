#include "mvalign/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mvalign/errors.hpp"

namespace mvalign {

void SolverConfig::validate() const {
  if (max_iterations < 0) throw ValidationError("solver.max_iterations", "must be >= 0");
  const auto& lr = learning_rate;
  for (double v : {lr.translation, lr.center, lr.depth, lr.quaternion, lr.log_scale}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("solver.learning_rate", "must be positive");
  }
  if (!(lr_growth >= 1.0)) throw ValidationError("solver.lr_growth", "must be >= 1");
  if (!(lr_shrink > 0.0 && lr_shrink < 1.0)) throw ValidationError("solver.lr_shrink", "must lie in (0, 1)");
  if (!(convergence_tol >= 0.0)) throw ValidationError("solver.convergence_tol", "must be >= 0");
  if (convergence_window < 1) throw ValidationError("solver.convergence_window", "must be >= 1");
  if (!(min_depth > 0.0)) throw ValidationError("solver.min_depth", "must be positive");
  if (max_observations < 1) throw ValidationError("solver.max_observations", "must be >= 1");
  if (smoothing_stages < 0) throw ValidationError("solver.smoothing_stages", "must be >= 0");
  if (warm_smoothing_stages < 0) throw ValidationError("solver.warm_smoothing_stages", "must be >= 0");
  const auto& mu = initial_smoothing;
  if (!(mu.pixel >= 0.0 && mu.metric >= 0.0 && mu.rotation >= 0.0)) {
    throw ValidationError("solver.initial_smoothing", "must be >= 0");
  }
}

std::vector<FrameObservation> select_observations(std::span<const FrameObservation> observations, int max_count) {
  std::map<int, FrameObservation> per_frame;
  for (const auto& fo : observations) {
    auto [it, inserted] = per_frame.emplace(fo.obs->frame_index, fo);
    if (!inserted && fo.obs->score > it->second.obs->score) it->second = fo;
  }
  std::vector<FrameObservation> ordered;
  ordered.reserve(per_frame.size());
  for (const auto& [_, fo] : per_frame) ordered.push_back(fo);
  const int n = static_cast<int>(ordered.size());
  if (n <= max_count) return ordered;

  std::vector<FrameObservation> out;
  out.reserve(max_count);
  for (int i = 0; i < max_count; ++i) {
    const long idx = max_count == 1 ? 0 : std::lround(static_cast<double>(i) * (n - 1) / (max_count - 1));
    out.push_back(ordered[idx]);
  }
  return out;
}

namespace {

Vec3 ray_direction(const FrameObservation& fo) {
  const CameraFrame& f = *fo.frame;
  const Vec3 ray_cam((fo.obs->center2d.x() - f.cx()) / f.fx(), (fo.obs->center2d.y() - f.cy()) / f.fy(), 1.0);
  return (f.E_R.transpose() * ray_cam).normalized();
}

// Point closest to every detected-center ray, or nullopt when the rays are
// nearly parallel or the point is not in front of every camera.
std::optional<Vec3> triangulate_centers(std::span<const FrameObservation> observations, double min_depth) {
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& fo : observations) {
    const Vec3 d = ray_direction(fo);
    const Mat3 P = Mat3::Identity() - d * d.transpose();
    A += P;
    b += P * fo.frame->center();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
  if (!(eig.eigenvalues()[0] > 1e-6 * static_cast<double>(observations.size()))) return std::nullopt;
  const Vec3 t = A.ldlt().solve(b);
  for (const auto& fo : observations) {
    if (!(world_to_camera(*fo.frame, t).z() > min_depth)) return std::nullopt;
  }
  return t;
}

// Point on the best observation's center ray at the default depth, or the
// nearest depth on that ray that is in front of every camera.
Vec3 fallback_translation(std::span<const FrameObservation> observations, const FrameObservation& best,
                          double default_depth, double min_depth) {
  const auto in_front = [&](const Vec3& p) {
    return std::all_of(observations.begin(), observations.end(),
                       [&](const FrameObservation& fo) { return world_to_camera(*fo.frame, p).z() > min_depth; });
  };
  const Vec3 preferred = backproject(*best.frame, best.obs->center2d, default_depth);
  if (in_front(preferred)) return preferred;
  for (int k = 1; k <= 40; ++k) {
    for (double depth : {default_depth * std::pow(1.1, k), default_depth / std::pow(1.1, k)}) {
      if (depth <= min_depth) continue;
      const Vec3 p = backproject(*best.frame, best.obs->center2d, depth);
      if (in_front(p)) return p;
    }
  }
  return preferred;
}

// Box-matched scale with the rotation and translation held fixed: a uniform
// scale from the median detected/projected area ratio, then a pattern
// search on log-scale over the L1 box-extent mismatch. Returns the
// pose's own scale when any observation predicts a scale.
Vec3 box_matched_scale(std::span<const FrameObservation> observations, Pose9DoF pose, std::span<const Vec3> vertices) {
  for (const auto& fo : observations) {
    if (fo.obs->scale_pred) return pose.s;
  }
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<double> ratios;
    for (const auto& fo : observations) {
      if (!(fo.obs->box.area() > 0.0)) continue;
      const double projected = projected_box(*fo.frame, pose, vertices).area();
      if (projected > 0.0 && std::isfinite(projected)) ratios.push_back(std::sqrt(fo.obs->box.area() / projected));
    }
    if (ratios.empty()) return pose.s;
    auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
    std::nth_element(ratios.begin(), mid, ratios.end());
    if (!(*mid > 0.0) || !std::isfinite(*mid)) return pose.s;
    pose.s *= *mid;
  }

  const auto mismatch = [&](const Vec3& s) {
    Pose9DoF p = pose;
    p.s = s;
    double e = 0.0;
    for (const auto& fo : observations) {
      const Box2D b = projected_box(*fo.frame, p, vertices);
      e += std::abs(b.width() - fo.obs->box.width()) + std::abs(b.height() - fo.obs->box.height());
    }
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
  };
  Vec3 best = pose.s;
  double best_e = mismatch(best);
  for (double step = 0.25; step > 1e-4; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int code = 0; code < 27; ++code) {
        const Vec3 dir(code % 3 - 1, code / 3 % 3 - 1, code / 9 - 1);
        if (code == 13) continue;
        const Vec3 trial = best.cwiseProduct((step * dir).array().exp().matrix());
        const double e = mismatch(trial);
        if (e < best_e) {
          best = trial;
          best_e = e;
          improved = true;
        }
      }
    }
  }
  return best;
}

}  // namespace

ObjectVariables initial_variables(std::span<const FrameObservation> observations, const SolverConfig& config,
                                  std::span<const Vec3> vertices) {
  ObjectVariables vars;
  if (observations.empty()) return vars;
  const FrameObservation* best = &observations.front();
  for (const auto& fo : observations) {
    if (fo.obs->score > best->obs->score) best = &fo;
  }
  if (config.init_rotation_from_observations) {
    vars.pose.rotation =
        UnitQuaternion::from_matrix(best->frame->E_R.transpose() * best->obs->rotation_pred.matrix());
  }
  const double default_depth = std::max(1.0, config.min_depth);
  if (config.init_translation_from_rays) {
    const auto t = triangulate_centers(observations, config.min_depth);
    vars.pose.t = t ? *t : fallback_translation(observations, *best, default_depth, config.min_depth);
    for (const auto& fo : observations) {
      const double depth = world_to_camera(*fo.frame, vars.pose.t).z();
      vars.aux[fo.obs->frame_index] = {fo.obs->center2d, depth > config.min_depth ? depth : default_depth};
    }
    if (config.init_scale_from_boxes && !vertices.empty()) vars.pose.s = box_matched_scale(observations, vars.pose, vertices);
    return vars;
  }
  for (const auto& fo : observations) {
    vars.aux[fo.obs->frame_index] = {fo.frame->image_center(), default_depth};
  }
  return vars;
}

namespace {

// The pose is reused; every auxiliary center starts at its detection, as in
// the default initialization.
ObjectVariables warm_variables(std::span<const FrameObservation> observations, const Pose9DoF& pose,
                               const SolverConfig& config) {
  ObjectVariables vars;
  vars.pose = pose;
  const double default_depth = std::max(1.0, config.min_depth);
  for (const auto& fo : observations) {
    const double depth = world_to_camera(*fo.frame, pose.t).z();
    vars.aux[fo.obs->frame_index] = {fo.obs->center2d, depth > config.min_depth ? depth : default_depth};
  }
  return vars;
}

// Solver state vector: t(3), q(4), log s(3), then per observation the
// offsets of the auxiliary center and depth from the
// projection of t. Moving t moves every auxiliary variable with it.
class Parameterization {
 public:
  Parameterization(const FlatObjective& objective, double min_depth) : objective_(objective), min_depth_(min_depth) {}

  Eigen::VectorXd pack(const ObjectVariables& v) const {
    const auto& obs = objective_.observations;
    Eigen::VectorXd y(objective_.size());
    y.segment<3>(0) = v.pose.t;
    y.segment<4>(3) = v.pose.rotation.coeffs();
    y.segment<3>(7) = v.pose.s.array().log().matrix();
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const AuxPerFrame& a = v.aux.at(obs[i].obs->frame_index);
      const Vec3 c = world_to_camera(*obs[i].frame, v.pose.t);
      const Vec2 anchor = c.z() > 0.0 ? mvalign::project(*obs[i].frame, c) : obs[i].frame->image_center();
      const int k = FlatObjective::kPoseSize + 3 * i;
      y.segment<2>(k) = a.center - anchor;
      y[k + 2] = a.depth - c.z();
    }
    return y;
  }

  /// Returns false when t lies behind a camera.
  bool to_objective_space(const Eigen::VectorXd& y, Eigen::VectorXd& x) const {
    const auto& obs = objective_.observations;
    x = y;
    x.segment<3>(7) = y.segment<3>(7).array().exp().matrix();
    const Vec3 t = y.segment<3>(0);
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const Vec3 c = world_to_camera(*obs[i].frame, t);
      if (!(c.z() > 0.0)) return false;
      const int k = FlatObjective::kPoseSize + 3 * i;
      x.segment<2>(k) += mvalign::project(*obs[i].frame, c);
      x[k + 2] += c.z();
    }
    return true;
  }

  ObjectVariables unpack(const Eigen::VectorXd& y) const {
    const auto& obs = objective_.observations;
    Eigen::VectorXd x;
    to_objective_space(y, x);
    ObjectVariables v;
    v.pose.t = x.segment<3>(0);
    v.pose.rotation = UnitQuaternion(Vec4(x.segment<4>(3))).canonical_sign();
    v.pose.s = x.segment<3>(7);
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const int k = FlatObjective::kPoseSize + 3 * i;
      v.aux[obs[i].obs->frame_index] = {{x[k], x[k + 1]}, x[k + 2]};
    }
    return v;
  }

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, TermBreakdown* terms = nullptr) {
    if (!to_objective_space(y, x_)) return std::numeric_limits<double>::infinity();
    const double f = objective_.evaluate(x_, grad, terms);
    if (!grad) return f;
    grad->segment<3>(7) = grad->segment<3>(7).cwiseProduct(x_.segment<3>(7));
    // Chain the auxiliary gradients into t through the anchor projection.
    const auto& obs = objective_.observations;
    const Vec3 t = y.segment<3>(0);
    Vec3 d_t = Vec3::Zero();
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const CameraFrame& frame = *obs[i].frame;
      const Vec3 c = world_to_camera(frame, t);
      const double iz = 1.0 / c.z();
      const int k = FlatObjective::kPoseSize + 3 * i;
      const double gx = (*grad)[k], gy = (*grad)[k + 1], gb = (*grad)[k + 2];
      const Vec3 d_cam(frame.fx() * iz * gx, frame.fy() * iz * gy,
                       gb - (frame.fx() * c.x() * gx + frame.fy() * c.y() * gy) * iz * iz);
      d_t += frame.E_R.transpose() * d_cam;
    }
    grad->segment<3>(0) += d_t;
    if (objective_.symmetry_order >= kContinuousSymmetryOrder) {
      // Spin about the model's up axis is a gauge direction: keep it fixed.
      const Vec4 q = y.segment<4>(3);
      const Vec4 spin(-q[3], q[2], -q[1], q[0]);  // q * (0, 0, 0, 1)
      grad->segment<4>(3) -= (grad->segment<4>(3).dot(spin) / spin.squaredNorm()) * spin;
    }
    return f;
  }

  /// Hard constraints: unit quaternion and depth >= min_depth.
  void project(Eigen::VectorXd& y) const {
    y.segment<4>(3) = UnitQuaternion(Vec4(y.segment<4>(3))).coeffs();
    const auto& obs = objective_.observations;
    const Vec3 t = y.segment<3>(0);
    for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
      const int k = FlatObjective::kPoseSize + 3 * i + 2;
      y[k] = std::max(y[k], min_depth_ - world_to_camera(*obs[i].frame, t).z());
    }
  }

  void depths(const Eigen::VectorXd& y, std::vector<double>& out) const {
    const auto& obs = objective_.observations;
    const Vec3 t = y.segment<3>(0);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      out[i] = y[FlatObjective::kPoseSize + 3 * i + 2] + world_to_camera(*obs[i].frame, t).z();
    }
  }

 private:
  const FlatObjective& objective_;
  double min_depth_;
  Eigen::VectorXd x_;
};

Eigen::VectorXd block_rates(int size, const LearningRates& lr) {
  Eigen::VectorXd r(size);
  r.segment<3>(0).setConstant(lr.translation);
  r.segment<4>(3).setConstant(lr.quaternion);
  r.segment<3>(7).setConstant(lr.log_scale);
  for (int k = FlatObjective::kPoseSize; k < size; k += 3) {
    r[k] = r[k + 1] = lr.center;
    r[k + 2] = lr.depth;
  }
  return r;
}

// Step-size bounds for the sign-adaptive rule.
Eigen::VectorXd block_step_caps(int size) {
  Eigen::VectorXd r(size);
  r.segment<3>(0).setConstant(1.0);
  r.segment<4>(3).setConstant(0.1);
  r.segment<3>(7).setConstant(0.2);
  for (int k = FlatObjective::kPoseSize; k < size; k += 3) {
    r[k] = r[k + 1] = 100.0;
    r[k + 2] = 1.0;
  }
  return r;
}

constexpr int kMaxBacktracks = 50;
constexpr double kMinStep = 1e-15;
// Smoothed stages only need to reach the basin of the next stage.
constexpr double kArmijo = 1e-4;
constexpr double kStageRelativeTol = 1e-3;

}  // namespace

bool cameras_collinear_with(std::span<const FrameObservation> observations, const Vec3& center, double tolerance) {
  Vec3 far = center;
  double far_dist = 0.0;
  for (const auto& fo : observations) {
    const double d = (fo.frame->center() - center).norm();
    if (d > far_dist) far_dist = d, far = fo.frame->center();
  }
  if (far_dist <= tolerance) return true;
  const Vec3 dir = (far - center) / far_dist;
  for (const auto& fo : observations) {
    const Vec3 r = fo.frame->center() - center;
    if ((r - r.dot(dir) * dir).norm() > tolerance) return false;
  }
  return true;
}

namespace {

constexpr std::size_t kLbfgsMemory = 10;

struct CurvaturePair {
  Eigen::VectorXd s;  // step
  Eigen::VectorXd y;  // gradient change
};

// Two-loop recursion. The initial inverse Hessian is the block-rate diagonal,
// rescaled by the most recent curvature pair.
Eigen::VectorXd lbfgs_direction(const std::deque<CurvaturePair>& memory, const Eigen::VectorXd& rates,
                                const Eigen::VectorXd& grad) {
  Eigen::VectorXd q = grad;
  std::vector<double> a(memory.size());
  for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
    const double rho = 1.0 / memory[i].y.dot(memory[i].s);
    a[i] = rho * memory[i].s.dot(q);
    q -= a[i] * memory[i].y;
  }
  Eigen::VectorXd r = rates.cwiseProduct(q);
  if (!memory.empty()) {
    const CurvaturePair& last = memory.back();
    r *= last.s.dot(last.y) / last.y.dot(rates.cwiseProduct(last.y));
  }
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const double rho = 1.0 / memory[i].y.dot(memory[i].s);
    const double b = rho * memory[i].y.dot(r);
    r += (a[i] - b) * memory[i].s;
  }
  return r;
}

struct DescentState {
  Eigen::VectorXd y;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
};

// Projected descent on the current objective until the convergence rule
// fires or `budget` iterations are spent. Returns true when converged.
bool descend(Parameterization& param, DescentState& st, const SolverConfig& config, int budget, int stage,
             double relative_tol, std::size_t n_observations, const IterationObserver& observer) {
  const int n = static_cast<int>(st.y.size());
  const Eigen::VectorXd rates = block_rates(n, config.learning_rate);
  const Eigen::VectorXd caps = block_step_caps(n).cwiseMax(rates);
  Eigen::VectorXd steps = rates;
  Eigen::VectorXd prev_grad = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd trial(n), trial_grad(n), direction(n);
  Eigen::VectorXd prev_direction = Eigen::VectorXd::Zero(n), prev_pg = Eigen::VectorXd::Zero(n);
  int restart_count = 0;
  std::deque<CurvaturePair> memory;
  double alpha = 1.0;  // step-length memory for the line-search rules
  std::deque<double> history{st.f};
  std::vector<double> depths(n_observations);

  for (int it = 0; it < budget; ++it) {
    if (st.f == 0.0) return true;
    double armijo = 0.0;  // required decrease per unit step, 0 for strict decrease only
    if (config.step_rule == StepRule::sign_adaptive) {
      for (int j = 0; j < n; ++j) {
        const double s = st.grad[j] * prev_grad[j];
        if (s > 0.0) {
          steps[j] = std::min(steps[j] * config.lr_growth, caps[j]);
        } else if (s < 0.0) {
          steps[j] = std::max(steps[j] * config.lr_shrink, kMinStep);
        }
        direction[j] = st.grad[j] > 0.0 ? -steps[j] : (st.grad[j] < 0.0 ? steps[j] : 0.0);
      }
      alpha = 1.0;
    } else if (config.step_rule == StepRule::lbfgs) {
      direction = -lbfgs_direction(memory, rates, st.grad);
      if (!(direction.dot(st.grad) < 0.0)) {
        memory.clear();
        direction = -rates.cwiseProduct(st.grad);
      }
      double largest = 0.0;
      for (int j = 0; j < n; ++j) largest = std::max(largest, std::abs(direction[j]) / caps[j]);
      alpha = largest > 1.0 ? 1.0 / largest : 1.0;
      armijo = kArmijo * direction.dot(st.grad);
    } else {
      // Preconditioned steepest descent, or Polak-Ribiere+ conjugate directions.
      const Eigen::VectorXd pg = rates.cwiseProduct(st.grad);
      direction = -pg;
      if (config.step_rule == StepRule::conjugate_gradient && restart_count > 0) {
        const double denom = prev_grad.dot(prev_pg);
        const double beta = denom > 0.0 ? std::max(0.0, st.grad.dot(pg - prev_pg) / denom) : 0.0;
        direction += beta * prev_direction;
        if (!(direction.dot(st.grad) < 0.0)) direction = -pg;
      }
      prev_pg = pg;
      // Bound the step by the per-coordinate caps.
      double largest = 0.0;
      for (int j = 0; j < n; ++j) largest = std::max(largest, std::abs(direction[j]) / caps[j]);
      alpha = std::min(2.0 * alpha, largest > 0.0 ? 1.0 / largest : 1.0);
      armijo = kArmijo * direction.dot(st.grad);
    }

    bool accepted = false;
    double f_trial = st.f;
    for (int b = 0; b < kMaxBacktracks; ++b) {
      trial = st.y + alpha * direction;
      param.project(trial);
      f_trial = param.evaluate(trial, &trial_grad);
      if (std::isfinite(f_trial) && f_trial < st.f && f_trial <= st.f + alpha * armijo && trial_grad.allFinite()) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // A stale conjugate or quasi-Newton direction gets one retry along the
      // plain gradient.
      if (config.step_rule == StepRule::lbfgs && !memory.empty()) {
        memory.clear();
        continue;
      }
      if (config.step_rule == StepRule::conjugate_gradient && restart_count > 0) {
        restart_count = 0;
        alpha = 1.0;
        continue;
      }
      // No decrease at any step length along the descent direction.
      return true;
    }
    ++restart_count;
    prev_direction = direction;
    if (config.step_rule == StepRule::sign_adaptive && alpha < 1.0) steps *= alpha;

    if (config.step_rule == StepRule::lbfgs) {
      CurvaturePair pair{trial - st.y, trial_grad - st.grad};
      if (pair.s.dot(pair.y) > 1e-12 * pair.s.norm() * pair.y.norm()) {
        if (memory.size() == kLbfgsMemory) memory.pop_front();
        memory.push_back(std::move(pair));
      }
    }
    prev_grad = st.grad;
    st.y = trial;
    st.f = f_trial;
    st.grad = trial_grad;
    ++st.iterations;

    if (observer) {
      param.depths(st.y, depths);
      observer({st.iterations, stage, st.f, Vec4(st.y.segment<4>(3)), depths});
    }

    history.push_back(st.f);
    if (static_cast<int>(history.size()) > config.convergence_window) {
      const double progress = history.front() - history.back();
      history.pop_front();
      if (progress < (relative_tol > 0.0 ? relative_tol * st.f : config.convergence_tol)) return true;
    }
  }
  return false;
}

}  // namespace

namespace {

SolveResult run_stages(std::span<const FrameObservation> selected, FlatObjective& objective, Parameterization& param,
                       const ObjectVariables& start, int first_stage, const SolverConfig& config,
                       const IterationObserver& observer) {
  DescentState st;
  for (const auto& fo : selected) {
    if (!(world_to_camera(*fo.frame, start.pose.t).z() > 0.0)) {
      throw NonFiniteObjective("initial translation lies behind the camera of frame " +
                               std::to_string(fo.obs->frame_index));
    }
  }
  st.y = param.pack(start);
  param.project(st.y);
  st.grad.resize(objective.size());

  // Smoothed stages first (largest smoothing first), then the exact objective.
  const int stages = config.smoothing_stages;
  SolveReport report;
  for (int stage = first_stage; stage <= stages; ++stage) {
    const bool exact = stage == stages;
    objective.smoothing = exact ? Smoothing{} : config.initial_smoothing.scaled(std::pow(0.1, stage));
    st.f = param.evaluate(st.y, &st.grad);
    if (!std::isfinite(st.f) || !st.grad.allFinite()) {
      std::ostringstream msg;
      msg << "objective is not finite at the starting point (value " << st.f << ", " << selected.size()
          << " observations)";
      throw NonFiniteObjective(msg.str());
    }
    const int budget = config.max_iterations - st.iterations;
    const bool converged =
        descend(param, st, config, budget, stage, exact ? 0.0 : kStageRelativeTol, selected.size(), observer);
    if (exact) report.converged = converged;
  }
  report.iterations_used = st.iterations;

  SolveResult result;
  result.variables = param.unpack(st.y);
  result.pose = result.variables.pose;
  report.final_objective = param.evaluate(st.y, nullptr, &report.per_term_residuals);
  report.observations_used = static_cast<int>(selected.size());
  report.ill_conditioned = cameras_collinear_with(selected, result.pose.t);
  result.report = report;
  return result;
}

}  // namespace

SolveResult solve_object(std::span<const FrameObservation> observations, const ObjectiveWeights& weights,
                         const SolverConfig& config, std::span<const Vec3> vertices, int symmetry_order,
                         const ObjectVariables* warm_start, const IterationObserver& observer) {
  config.validate();
  weights.validate();
  if (observations.empty()) throw NoObservations("no observations to solve for");

  const std::vector<FrameObservation> selected = select_observations(observations, config.max_observations);
  FlatObjective objective{selected, weights, vertices, symmetry_order, {}};
  Parameterization param(objective, config.min_depth);

  if (!warm_start) {
    return run_stages(selected, objective, param, initial_variables(selected, config, vertices), 0, config, observer);
  }

  const int first = std::max(0, config.smoothing_stages - config.warm_smoothing_stages);
  SolveResult warm =
      run_stages(selected, objective, param, warm_variables(selected, warm_start->pose, config), first, config, observer);
  if (!config.warm_also_cold) return warm;
  try {
    SolveResult cold =
        run_stages(selected, objective, param, initial_variables(selected, config, vertices), 0, config, observer);
    if (cold.report.final_objective < warm.report.final_objective) return cold;
  } catch (const NonFiniteObjective&) {
  }
  return warm;
}

SolveResult solve_object(const SceneInput& scene, std::span<const Observation> observations,
                         const ObjectiveWeights& weights, const SolverConfig& config, std::span<const Vec3> vertices,
                         int symmetry_order) {
  std::vector<FrameObservation> fos;
  fos.reserve(observations.size());
  for (const auto& o : observations) fos.push_back({&scene.frame(o.frame_index), &o});
  return solve_object(fos, weights, config, vertices, symmetry_order);
}

double derive_depth_single_frame(const CameraFrame& frame, const Observation& obs, const Vec3& scale,
                                 const UnitQuaternion& rotation, std::span<const Vec3> vertices) {
  constexpr double kMinDepth = 0.1;
  constexpr double kMaxDepth = 100.0;
  constexpr int kSamples = 241;

  const auto distance = [&](double depth) {
    Pose9DoF pose{backproject(frame, obs.center2d, depth), rotation, scale};
    try {
      return scale_box_term(frame, obs, pose, vertices).value;
    } catch (const AllVerticesBehindCamera&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  // Log-spaced scan, then golden-section refinement inside the best bracket.
  std::vector<double> depth(kSamples), value(kSamples);
  const double ratio = std::log(kMaxDepth / kMinDepth) / (kSamples - 1);
  int best = 0;
  for (int i = 0; i < kSamples; ++i) {
    depth[i] = i == kSamples - 1 ? kMaxDepth : kMinDepth * std::exp(ratio * i);
    value[i] = distance(depth[i]);
    if (value[i] < value[best]) best = i;
  }
  const double ends = std::min(value.front(), value.back());

  double lo = depth[std::max(best - 1, 0)];
  double hi = depth[std::min(best + 1, kSamples - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = distance(a), fb = distance(b);
  while (hi - lo > 1e-12 * hi) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = distance(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = distance(b);
    }
  }
  double best_depth = depth[best];
  double best_value = value[best];
  for (double d : {a, b, 0.5 * (lo + hi)}) {
    const double v = distance(d);
    if (v < best_value) best_value = v, best_depth = d;
  }
  if (!(best_value < ends)) {
    throw Divergent("no depth in [0.1, 100] m fits the detected box better than the range ends");
  }
  return std::max(best_depth, kMinDepth);
}

}  // namespace mvalign
