#include "mvalign/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "mvalign/errors.hpp"

namespace mvalign {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw ValidationError("rotation", "quaternion must be finite and non-zero");
  }
  // Already-unit inputs are kept bit-for-bit so renormalization is idempotent.
  const double scale = std::abs(n - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() ? 1.0 : n;
  w_ = w / scale;
  x_ = x / scale;
  y_ = y / scale;
  z_ = z / scale;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double radians) {
  const Vec3 a = axis.normalized();
  const double h = 0.5 * radians;
  const double s = std::sin(h);
  return {std::cos(h), a.x() * s, a.y() * s, a.z() * s};
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return UnitQuaternion(q.w(), q.x(), q.y(), q.z()).canonical_sign();
}

Mat3 UnitQuaternion::matrix() const {
  const double w = w_, x = x_, y = y_, z = z_;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

UnitQuaternion UnitQuaternion::conjugate() const {
  UnitQuaternion q = *this;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  return q;
}

UnitQuaternion UnitQuaternion::canonical_sign() const {
  if (w_ > 0.0 || (w_ == 0.0 && std::make_tuple(x_, y_, z_) > std::make_tuple(0.0, 0.0, 0.0))) {
    return *this;
  }
  UnitQuaternion q;
  q.w_ = -w_;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  return q;
}

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
          a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
          a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
          a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_};
}

UnitQuaternion rot_z(double radians) { return UnitQuaternion::from_axis_angle(Vec3::UnitZ(), radians); }

std::array<Mat3, 4> rotation_matrix_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y,  //
      2 * z, 0, -2 * x,      //
      -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,  //
      2 * y, -4 * x, -2 * w,  //
      2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,  //
      2 * x, 0, 2 * z,           //
      -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,  //
      2 * w, -4 * z, 2 * y,       //
      2 * x, 2 * y, 0;
  return d;
}

Vec4 project_to_sphere_tangent(const Vec4& q, const Vec4& grad_at_unit) {
  const double n = q.norm();
  const Vec4 u = q / n;
  return (grad_at_unit - u * u.dot(grad_at_unit)) / n;
}

namespace {

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace

void Pose9DoF::validate(const std::string& field) const {
  if (!finite(t)) throw ValidationError(field + ".t", "non-finite translation");
  if (!finite(s)) throw ValidationError(field + ".s", "non-finite scale");
  if ((s.array() <= 0.0).any()) throw ValidationError(field + ".s", "scale components must be positive");
  const double n = rotation.coeffs().norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
    throw ValidationError(field + ".rotation", "quaternion is not unit-norm");
  }
}

void CameraFrame::validate(const std::string& field) const {
  if (!finite(K) || !finite(E_R) || !finite(e_t)) throw ValidationError(field, "non-finite camera parameters");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw ValidationError(field + ".K", "intrinsics must be upper-triangular with K[2][2] = 1");
  }
  if (K(0, 1) != 0.0) throw ValidationError(field + ".K", "skewed intrinsics are not supported");
  if (K(0, 0) <= 0.0 || K(1, 1) <= 0.0) throw ValidationError(field + ".K", "focal lengths must be positive");
  if ((E_R.transpose() * E_R - Mat3::Identity()).norm() >= 1e-6 || E_R.determinant() <= 0.0) {
    throw ValidationError(field + ".E_R", "extrinsic rotation must be orthonormal");
  }
  if (image_width <= 0 || image_height <= 0) throw ValidationError(field + ".image_size", "must be positive");
}

Vec3 object_to_world(const Pose9DoF& pose, const Vec3& v) {
  return pose.t + pose.rotation.matrix() * pose.s.cwiseProduct(v);
}

Vec3 world_to_camera(const CameraFrame& frame, const Vec3& p_world) { return frame.e_t + frame.E_R * p_world; }

Vec2 project(const CameraFrame& frame, const Vec3& p_camera) {
  if (!(p_camera.z() > 0.0)) throw NonPositiveDepth("point at or behind the camera plane");
  const double iz = 1.0 / p_camera.z();
  return {frame.fx() * p_camera.x() * iz + frame.cx(), frame.fy() * p_camera.y() * iz + frame.cy()};
}

Vec3 backproject(const CameraFrame& frame, const Vec2& pixel, double depth) {
  if (!(depth > 0.0)) throw NonPositiveDepth("back-projection depth must be positive");
  const Vec3 p_camera(depth * (pixel.x() - frame.cx()) / frame.fx(), depth * (pixel.y() - frame.cy()) / frame.fy(),
                      depth);
  return frame.E_R.transpose() * (p_camera - frame.e_t);
}

double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion d = a.conjugate() * b;
  const double v = Vec3(d.x(), d.y(), d.z()).norm();
  return rad2deg(2.0 * std::atan2(v, std::abs(d.w())));
}

double symmetric_geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b, int symmetry_order) {
  if (symmetry_order <= 1) return geodesic_angle(a, b);
  if (symmetry_order >= kContinuousSymmetryOrder) {
    const Vec3 ua = a.matrix().col(2);
    const Vec3 ub = b.matrix().col(2);
    return rad2deg(std::atan2(ua.cross(ub).norm(), ua.dot(ub)));
  }
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < symmetry_order; ++k) {
    best = std::min(best, geodesic_angle(a, b * rot_z(2.0 * EIGEN_PI * k / symmetry_order)));
  }
  return best;
}

}  // namespace mvalign
