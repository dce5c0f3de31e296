#include "feat3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace f3d::geom {

namespace {

std::string fmt(double x) { return std::to_string(x); }

}  // namespace

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw ValidationError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw ValidationError("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
        throw ValidationError("intrinsics: principal point outside image");
}

void CameraPose::validate() const {
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw ValidationError("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw ValidationError("pose: rotation determinant is not +1");
}

void Aabb::validate() const {
    if ((min.array() > max.array()).any())
        throw ValidationError("aabb: min exceeds max");
}

void Ray::validate() const {
    if (std::abs(direction.norm() - 1.0) > 1e-9)
        throw ValidationError("ray: direction is not unit length");
}

Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& intr,
                 const CameraPose& pose) {
    if (!(depth > 0.0))
        throw ValidationError("backproject: invalid depth " + fmt(depth));
    if (u < 0.0 || u > intr.width - 1 || v < 0.0 || v > intr.height - 1)
        throw ValidationError("backproject: pixel (" + fmt(u) + ", " + fmt(v) +
                              ") out of bounds");
    const Vec3 p_cam((u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth);
    return pose.to_world(p_cam);
}

PixelDepth project(const Vec3& point, const CameraIntrinsics& intr, const CameraPose& pose) {
    const Vec3 p_cam = pose.to_camera(point);
    if (!(p_cam.z() > 0.0))
        throw ValidationError("project: point behind camera (z = " + fmt(p_cam.z()) + ")");
    PixelDepth out;
    out.u = intr.fx * p_cam.x() / p_cam.z() + intr.cx;
    out.v = intr.fy * p_cam.y() / p_cam.z() + intr.cy;
    out.depth = p_cam.z();
    return out;
}

double aabb_iou(const Aabb& a, const Aabb& b) {
    a.validate();
    b.validate();
    const Vec3 lo = a.min.cwiseMax(b.min);
    const Vec3 hi = a.max.cwiseMin(b.max);
    const Vec3 overlap = (hi - lo).cwiseMax(0.0);
    const double inter = overlap.x() * overlap.y() * overlap.z();
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) return 0.0;  // both degenerate
    return inter / uni;
}

double aabb_center_distance(const Aabb& a, const Aabb& b) {
    a.validate();
    b.validate();
    return (a.center() - b.center()).norm();
}

}  // namespace f3d::geom
