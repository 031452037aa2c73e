#include "instavo/geometry.h"

#include <cmath>

namespace instavo {

Mat3 Hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Rotation Rotation::FromMatrix(const Mat3& m) {
  if (!m.allFinite()) {
    throw GeometryError("rotation matrix has non-finite entries");
  }
  const double ortho_err = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-9 || std::abs(m.determinant() - 1.0) > 1e-9) {
    throw GeometryError("matrix is not a proper rotation");
  }
  return Rotation(m);
}

Rotation Rotation::FromQuaternion(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("degenerate quaternion");
  }
  return Rotation(Eigen::Quaterniond(q.coeffs() / n).toRotationMatrix());
}

Rotation Rotation::Exp(const Vec3& theta) {
  const double angle = theta.norm();
  const double half = 0.5 * angle;
  // sin(half) / angle, with its Taylor series near zero.
  const double k = angle < 1e-6 ? 0.5 - angle * angle / 48.0 : std::sin(half) / angle;
  Eigen::Quaterniond q(std::cos(half), k * theta.x(), k * theta.y(), k * theta.z());
  q.normalize();
  return Rotation(q.toRotationMatrix());
}

Rotation Rotation::AboutAxis(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw GeometryError("zero rotation axis");
  return Exp(axis / n * angle_rad);
}

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q(matrix_);
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

double Rotation::angle() const {
  const Eigen::Quaterniond q = quaternion();
  return 2.0 * std::atan2(q.vec().norm(), q.w());
}

double Rotation::AngleTo(const Rotation& other) const {
  return (inverse() * other).angle();
}

Vec3 Rotation::Log() const {
  const Eigen::Quaterniond q = quaternion();
  const double vn = q.vec().norm();
  const double a = 2.0 * std::atan2(vn, q.w());
  if (kPi - a < 1e-10) {
    throw GeometryError("log branch ambiguous");
  }
  if (vn < 1e-12) {
    return 2.0 * q.vec() / q.w();
  }
  return q.vec() * (a / vn);
}

Rotation Rotation::Retract(const Vec3& theta) const { return *this * Exp(theta); }

UnitDirection UnitDirection::FromVector(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("degenerate direction");
  }
  const Vec3 z = v / n;
  // Any vector not parallel to z seeds the first host column.
  const Vec3 seed = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 x = (seed - seed.dot(z) * z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  return UnitDirection(Rotation::FromMatrix(m));
}

UnitDirection UnitDirection::Retract(const Vec2& beta) const {
  return UnitDirection(host_.Retract(Vec3(beta.x(), beta.y(), 0.0)));
}

Eigen::Matrix<double, 3, 2> UnitDirection::TangentBasis() const {
  // d/dbeta_i [R_u exp(beta) e_z] = R_u [e_i]x e_z, i.e. (-R_u e_y, R_u e_x).
  Eigen::Matrix<double, 3, 2> basis;
  basis.col(0) = -host_.matrix().col(1);
  basis.col(1) = host_.matrix().col(0);
  return basis;
}

UnitDirection UnitDirection::Flipped() const {
  return UnitDirection(host_ * Rotation::Exp(Vec3(kPi, 0.0, 0.0)));
}

Bearing Bearing::FromVector(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("degenerate bearing");
  }
  return Bearing(v / n);
}

CameraModel CameraModel::Pinhole(double f, int width, int height) {
  CameraModel cam;
  cam.kind = Kind::kPinhole;
  cam.fx = cam.fy = f;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

CameraModel CameraModel::Spherical(double f, int width, int height) {
  CameraModel cam = Pinhole(f, width, height);
  cam.kind = Kind::kSpherical;
  return cam;
}

void CameraModel::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera image size must be positive");
  }
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
    throw std::invalid_argument("principal point outside image");
  }
}

bool CameraModel::InImage(const Vec2& px) const {
  return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
}

Vec2 Project(const CameraModel& cam, const Vec3& point) {
  if (point.squaredNorm() == 0.0) throw GeometryError("degenerate point");
  if (point.z() <= 0.0) throw GeometryError("behind camera");
  return {cam.fx * point.x() / point.z() + cam.cx, cam.fy * point.y() / point.z() + cam.cy};
}

Rotation TangentFrame(const Vec3& reference) {
  return Rotation::FromQuaternion(
      Eigen::Quaterniond::FromTwoVectors(reference.normalized(), Vec3::UnitZ()));
}

std::optional<Vec2> ProjectAround(const CameraModel& cam, const Vec3& point,
                                  const Vec3& reference) {
  const Vec3 q = TangentFrame(reference) * point;
  if (!(q.z() > 0.0) || !q.allFinite()) return std::nullopt;
  return Vec2(cam.fx * q.x() / q.z(), cam.fy * q.y() / q.z());
}

std::optional<Vec2> ReprojectionError(const CameraModel& cam, const Vec3& point,
                                      const Bearing& observed) {
  if (cam.kind == CameraModel::Kind::kSpherical) {
    return ProjectAround(cam, point, observed.vector());
  }
  if (!(point.z() > 0.0) || observed.vector().z() <= 0.0 || !point.allFinite()) {
    return std::nullopt;
  }
  const Vec3& o = observed.vector();
  return Vec2(cam.fx * (point.x() / point.z() - o.x() / o.z()),
              cam.fy * (point.y() / point.z() - o.y() / o.z()));
}

double SampsonDistance(const Rotation& rotation, const UnitDirection& direction,
                       const Bearing& f, const Bearing& f_prime) {
  const Mat3 essential = Hat(direction.vector()) * rotation.matrix();
  constexpr double kMinZ = 1e-9;
  Vec3 x = f.vector();
  Vec3 xp = f_prime.vector();
  const bool planar = std::abs(x.z()) > kMinZ && std::abs(xp.z()) > kMinZ;
  if (planar) {
    x /= x.z();
    xp /= xp.z();
  }
  const double algebraic = xp.dot(essential * x);
  const Vec3 ex = essential * x;
  const Vec3 etxp = essential.transpose() * xp;
  const double denom = planar
      ? ex.head<2>().squaredNorm() + etxp.head<2>().squaredNorm()
      : ex.squaredNorm() + etxp.squaredNorm();
  if (!(denom > 1e-300)) return std::abs(algebraic);
  return std::abs(algebraic) / std::sqrt(denom);
}

double ParallaxAngleDeg(const Rotation& rotation, const Bearing& f,
                        const Bearing& f_prime) {
  const Vec3 a = rotation * f.vector();
  const Vec3& b = f_prime.vector();
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

double TriangulateTwoView(const Rotation& rotation, const Vec3& translation,
                          const Bearing& f, const Bearing& f_prime) {
  // Both rays expressed in the first camera: origin 0 along f, and the
  // second camera center c along R^T f'.
  const Vec3 c = -(rotation.inverse() * translation);
  const Vec3 a = f.vector();
  const Vec3 b = rotation.inverse() * f_prime.vector();
  const double parallax = std::atan2(a.cross(b).norm(), a.dot(b));
  if (parallax < 1e-4 || c.norm() < 1e-12) {
    throw GeometryError("insufficient parallax");
  }
  // Minimize |l1 a - (c + l2 b)|^2 over (l1, l2).
  const double ab = a.dot(b);
  const double denom = 1.0 - ab * ab;
  const double ac = a.dot(c);
  const double bc = b.dot(c);
  const double l1 = (ac - ab * bc) / denom;
  const double l2 = (ab * ac - bc) / denom;
  const Vec3 midpoint = 0.5 * (l1 * a + c + l2 * b);
  const double depth = midpoint.dot(a);
  if (!(depth > 0.0)) throw GeometryError("point behind camera");
  return depth;
}

}  // namespace instavo
