#include "mvalign/objective.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "mvalign/errors.hpp"

namespace mvalign {

namespace {

// Subgradient of |r|: zero at an exact zero residual.
double sgn(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }

// |r| or its smoothed form, with the derivative.
struct Shaped {
  double value;
  double slope;
};

Shaped shape(double r, double mu) {
  if (mu == 0.0) return {std::abs(r), sgn(r)};
  const double h = std::hypot(r, mu);
  return {h - mu, r / h};
}

template <int N>
Shaped shape(const Eigen::Matrix<double, N, 1>& r, double mu, Eigen::Matrix<double, N, 1>& slope) {
  double value = 0.0;
  for (int i = 0; i < N; ++i) {
    const Shaped s = shape(r[i], mu);
    value += s.value;
    slope[i] = s.slope;
  }
  return {value, 0.0};
}

// Gradient with respect to q of a function of R(q), given dF/dR.
Vec4 quaternion_gradient(const Vec4& q, const Mat3& dF_dR) {
  const auto partials = rotation_matrix_partials(q);
  Vec4 g;
  for (int j = 0; j < 4; ++j) g[j] = dF_dR.cwiseProduct(partials[j]).sum();
  return project_to_sphere_tangent(q, g);
}

}  // namespace

void ObjectiveWeights::validate() const {
  for (double a : {translation, center, rotation, scale_box, scale_rec}) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("weights", "weights must be finite and >= 0");
  }
  if (!(translation > 0.0 || center > 0.0)) throw ValidationError("weights", "translation or center must be positive");
}

CenterTerm center_term(const Observation& obs, const AuxPerFrame& aux, const Smoothing& smoothing) {
  CenterTerm out;
  out.value = shape<2>(aux.center - obs.center2d, smoothing.pixel, out.d_center).value;
  return out;
}

TranslationTerm translation_term(const CameraFrame& frame, const AuxPerFrame& aux, const Vec3& t,
                                 const Smoothing& smoothing) {
  // X = E_Rᵀ (β K⁻¹ (κ, 1) − e_t)
  const Vec3 ray((aux.center.x() - frame.cx()) / frame.fx(), (aux.center.y() - frame.cy()) / frame.fy(), 1.0);
  const Vec3 constructed = frame.E_R.transpose() * (aux.depth * ray - frame.e_t);
  const Vec3 r = constructed - t;
  TranslationTerm out;
  Vec3 g;
  out.value = shape<3>(r, smoothing.metric, g).value;
  const Vec3 g_cam = frame.E_R * g;  // dL/d(camera-space point)
  out.d_t = -g;
  out.d_depth = g_cam.dot(ray);
  out.d_center = {g_cam.x() * aux.depth / frame.fx(), g_cam.y() * aux.depth / frame.fy()};
  return out;
}

RotationTerm rotation_term(const CameraFrame& frame, const Observation& obs, const UnitQuaternion& rotation,
                           int symmetry_order, const Smoothing& smoothing) {
  const Mat3 predicted = obs.rotation_pred.matrix();
  const Mat3 posed = frame.E_R * rotation.matrix();

  Mat3 sym = Mat3::Identity();
  double best = std::numeric_limits<double>::infinity();
  if (symmetry_order >= kContinuousSymmetryOrder) {
    // Maximize tr(Aᵀ B Rz(θ)) in closed form; the distance is then minimal.
    const Mat3 c = predicted.transpose() * posed;
    const double theta = std::atan2(c(0, 1) - c(1, 0), c(0, 0) + c(1, 1));
    sym = rot_z(theta).matrix();
    best = (predicted - posed * sym).norm();
  } else {
    const int m = std::max(symmetry_order, 1);
    for (int k = 0; k < m; ++k) {
      const Mat3 candidate = m == 1 ? Mat3::Identity() : rot_z(2.0 * EIGEN_PI * k / m).matrix();
      const double d = (predicted - posed * candidate).norm();
      if (d < best) {
        best = d;
        sym = candidate;
      }
    }
  }

  RotationTerm out;
  const double mu = smoothing.rotation;
  out.value = mu == 0.0 ? best : std::hypot(best, mu) - mu;
  if (best > 0.0) {
    const Mat3 diff = posed * sym - predicted;
    const Mat3 dF_dR = frame.E_R.transpose() * diff * sym.transpose() / std::hypot(best, mu);
    out.d_q = quaternion_gradient(rotation.coeffs(), dF_dR);
  }
  return out;
}

namespace {

struct ProjectedVertex {
  Vec3 camera;
  Vec2 pixel;
  int index;
};

struct Extremes {
  // left, right, top, bottom
  std::array<int, 4> vertex{-1, -1, -1, -1};
  Box2D box;
};

Extremes projected_extremes(const CameraFrame& frame, const Pose9DoF& pose, std::span<const Vec3> vertices,
                            std::vector<ProjectedVertex>& projected) {
  const Mat3 to_camera = frame.E_R * pose.rotation.matrix();
  const Vec3 origin = frame.e_t + frame.E_R * pose.t;
  projected.clear();
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i) {
    const Vec3 c = origin + to_camera * pose.s.cwiseProduct(vertices[i]);
    if (!(c.z() > kBoxNearPlane)) continue;
    const double iz = 1.0 / c.z();
    projected.push_back({c, {frame.fx() * c.x() * iz + frame.cx(), frame.fy() * c.y() * iz + frame.cy()}, i});
  }
  if (projected.size() < 3) throw AllVerticesBehindCamera("fewer than three vertices in front of the near plane");

  Extremes e;
  int n = 0;
  for (const auto& p : projected) {
    if (n == 0 || p.pixel.x() < projected[e.vertex[0]].pixel.x()) e.vertex[0] = n;
    if (n == 0 || p.pixel.x() > projected[e.vertex[1]].pixel.x()) e.vertex[1] = n;
    if (n == 0 || p.pixel.y() < projected[e.vertex[2]].pixel.y()) e.vertex[2] = n;
    if (n == 0 || p.pixel.y() > projected[e.vertex[3]].pixel.y()) e.vertex[3] = n;
    ++n;
  }
  e.box = {projected[e.vertex[0]].pixel.x(), projected[e.vertex[2]].pixel.y(), projected[e.vertex[1]].pixel.x(),
           projected[e.vertex[3]].pixel.y()};
  return e;
}

}  // namespace

Box2D projected_box(const CameraFrame& frame, const Pose9DoF& pose, std::span<const Vec3> vertices) {
  std::vector<ProjectedVertex> projected;
  return projected_extremes(frame, pose, vertices, projected).box;
}

BoxTerm scale_box_term(const CameraFrame& frame, const Observation& obs, const Pose9DoF& pose,
                       std::span<const Vec3> vertices, const Smoothing& smoothing) {
  thread_local std::vector<ProjectedVertex> projected;
  const Extremes e = projected_extremes(frame, pose, vertices, projected);

  const std::array<double, 4> residual{e.box.left - obs.box.left, e.box.right - obs.box.right,
                                       e.box.top - obs.box.top, e.box.bottom - obs.box.bottom};
  BoxTerm out;
  std::array<double, 4> slope;
  for (int side = 0; side < 4; ++side) {
    const Shaped sh = shape(residual[side], smoothing.pixel);
    out.value += sh.value;
    slope[side] = sh.slope;
  }

  const Mat3 rot = pose.rotation.matrix();
  const Vec4 qv = pose.rotation.coeffs();
  const auto partials = rotation_matrix_partials(qv);
  Vec4 d_q_raw = Vec4::Zero();
  for (int side = 0; side < 4; ++side) {
    const double w = slope[side];
    if (w == 0.0) continue;
    const ProjectedVertex& p = projected[e.vertex[side]];
    const double iz = 1.0 / p.camera.z();
    Vec3 d_cam;
    if (side < 2) {
      d_cam = {frame.fx() * iz, 0.0, -frame.fx() * p.camera.x() * iz * iz};
    } else {
      d_cam = {0.0, frame.fy() * iz, -frame.fy() * p.camera.y() * iz * iz};
    }
    d_cam *= w;
    const Vec3 d_world = frame.E_R.transpose() * d_cam;  // gradient w.r.t. the world point
    const Vec3& v = vertices[p.index];
    const Vec3 scaled = pose.s.cwiseProduct(v);
    out.d_t += d_world;
    out.d_s += (rot.transpose() * d_world).cwiseProduct(v);
    for (int j = 0; j < 4; ++j) d_q_raw[j] += d_world.dot(partials[j] * scaled);
  }
  out.d_q = project_to_sphere_tangent(qv, d_q_raw);
  return out;
}

ScaleRecTerm scale_rec_term(const Observation& obs, const Vec3& s, const Smoothing& smoothing) {
  if (!obs.scale_pred) throw MissingScalePrediction("observation has no scale prediction");
  ScaleRecTerm out;
  out.value = shape<3>(s - *obs.scale_pred, smoothing.metric, out.d_s).value;
  return out;
}

std::vector<Vec3> box_term_vertices(const CadModel& model) {
  if (model.vertices.size() <= kHullVertexThreshold) return model.vertices;
  const ConvexHull hull = convex_hull(model.vertices);
  std::vector<Vec3> out;
  out.reserve(hull.vertex_indices.size());
  for (int i : hull.vertex_indices) out.push_back(model.vertices[i]);
  return out;
}

double FlatObjective::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, TermBreakdown* terms) const {
  const Vec4 qv = x.segment<4>(3);
  Pose9DoF pose;
  pose.t = x.segment<3>(0);
  pose.rotation = UnitQuaternion(qv);
  pose.s = x.segment<3>(7);
  const double q_norm = qv.norm();

  if (grad) grad->setZero(size());
  TermBreakdown local;
  double value = 0.0;
  Vec4 d_q = Vec4::Zero();

  for (int i = 0; i < static_cast<int>(observations.size()); ++i) {
    const CameraFrame& frame = *observations[i].frame;
    const Observation& obs = *observations[i].obs;
    const int k = kPoseSize + 3 * i;
    const AuxPerFrame aux{{x[k], x[k + 1]}, x[k + 2]};

    if (weights.center > 0.0) {
      const CenterTerm c = center_term(obs, aux, smoothing);
      value += weights.center * c.value;
      local.center += c.value;
      if (grad) grad->segment<2>(k) += weights.center * c.d_center;
    }
    if (weights.translation > 0.0) {
      const TranslationTerm tr = translation_term(frame, aux, pose.t, smoothing);
      value += weights.translation * tr.value;
      local.translation += tr.value;
      if (grad) {
        grad->segment<3>(0) += weights.translation * tr.d_t;
        grad->segment<2>(k) += weights.translation * tr.d_center;
        (*grad)[k + 2] += weights.translation * tr.d_depth;
      }
    }
    if (weights.rotation > 0.0) {
      const RotationTerm r = rotation_term(frame, obs, pose.rotation, symmetry_order, smoothing);
      value += weights.rotation * r.value;
      local.rotation += r.value;
      d_q += weights.rotation * r.d_q;
    }
    if (weights.scale_box > 0.0) {
      try {
        const BoxTerm b = scale_box_term(frame, obs, pose, vertices, smoothing);
        value += weights.scale_box * b.value;
        local.scale_box += b.value;
        if (grad) {
          grad->segment<3>(0) += weights.scale_box * b.d_t;
          grad->segment<3>(7) += weights.scale_box * b.d_s;
        }
        d_q += weights.scale_box * b.d_q;
      } catch (const AllVerticesBehindCamera&) {
        ++local.frames_without_box;
      }
    }
    if (weights.scale_rec > 0.0) {
      const ScaleRecTerm s = scale_rec_term(obs, pose.s, smoothing);
      value += weights.scale_rec * s.value;
      local.scale_rec += s.value;
      if (grad) grad->segment<3>(7) += weights.scale_rec * s.d_s;
    }
  }
  // Term gradients are tangent at the unit point; chain through q / |q|.
  if (grad) grad->segment<4>(3) = d_q / q_norm;
  if (terms) *terms = local;
  return value;
}

ObjectiveValue total_objective(std::span<const FrameObservation> observations, const ObjectVariables& vars,
                               const ObjectiveWeights& weights, std::span<const Vec3> vertices,
                               int symmetry_order) {
  std::set<int> frames;
  for (const auto& fo : observations) {
    if (!vars.aux.contains(fo.obs->frame_index)) {
      throw ValidationError("aux", "missing auxiliary variables for frame " + std::to_string(fo.obs->frame_index));
    }
    frames.insert(fo.obs->frame_index);
  }
  if (frames.size() != vars.aux.size() || frames.size() != observations.size()) {
    throw ValidationError("aux", "auxiliary variables must cover exactly one observation per frame");
  }

  const FlatObjective flat{observations, weights, vertices, symmetry_order, {}};
  Eigen::VectorXd x(flat.size());
  x.segment<3>(0) = vars.pose.t;
  x.segment<4>(3) = vars.pose.rotation.coeffs();
  x.segment<3>(7) = vars.pose.s;
  for (int i = 0; i < static_cast<int>(observations.size()); ++i) {
    const AuxPerFrame& a = vars.aux.at(observations[i].obs->frame_index);
    const int k = FlatObjective::kPoseSize + 3 * i;
    x[k] = a.center.x();
    x[k + 1] = a.center.y();
    x[k + 2] = a.depth;
  }
  Eigen::VectorXd g;
  ObjectiveValue out;
  out.value = flat.evaluate(x, &g, &out.terms);
  out.gradient.t = g.segment<3>(0);
  out.gradient.q = g.segment<4>(3);
  out.gradient.s = g.segment<3>(7);
  for (int i = 0; i < static_cast<int>(observations.size()); ++i) {
    const int k = FlatObjective::kPoseSize + 3 * i;
    out.gradient.aux[observations[i].obs->frame_index] = {{g[k], g[k + 1]}, g[k + 2]};
  }
  return out;
}

}  // namespace mvalign
