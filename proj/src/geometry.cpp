#include "fovstream/geometry.hpp"

#include <numbers>

#include "fovstream/errors.hpp"

namespace fovstream {

void validate_camera(const Camera& cam, double tol) {
  if (!is_finite(cam.position) || !is_finite(cam.forward) || !is_finite(cam.up))
    throw DomainError("camera pose is not finite");
  if (std::abs(length(cam.forward) - 1.0) > tol || std::abs(length(cam.up) - 1.0) > tol)
    throw DomainError("camera forward/up must be unit length");
  if (std::abs(dot(cam.forward, cam.up)) > tol)
    throw DomainError("camera forward/up must be orthogonal");
}

Mat4 look_at(const Camera& cam) {
  const Vec3 f = normalized(cam.forward);
  const Vec3 s = normalized(cross(f, cam.up));
  const Vec3 u = cross(s, f);
  Mat4 r = Mat4::identity();
  r(0, 0) = s.x;
  r(0, 1) = s.y;
  r(0, 2) = s.z;
  r(1, 0) = u.x;
  r(1, 1) = u.y;
  r(1, 2) = u.z;
  r(2, 0) = -f.x;
  r(2, 1) = -f.y;
  r(2, 2) = -f.z;
  r(0, 3) = -dot(s, cam.position);
  r(1, 3) = -dot(u, cam.position);
  r(2, 3) = dot(f, cam.position);
  return r;
}

// OpenGL-style clip space with depth mapped to [0,1] after the divide.
Mat4 perspective(double vertical_fov_deg, double aspect, double near_plane, double far_plane) {
  const double t = std::tan(vertical_fov_deg * std::numbers::pi / 360.0);
  Mat4 r;
  r(0, 0) = 1.0 / (aspect * t);
  r(1, 1) = 1.0 / t;
  r(2, 2) = far_plane / (near_plane - far_plane);
  r(2, 3) = near_plane * far_plane / (near_plane - far_plane);
  r(3, 2) = -1.0;
  return r;
}

}  // namespace fovstream
