#pragma once

#include <Eigen/Dense>

#include "feat3d/errors.hpp"

namespace f3d::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Pinhole intrinsics. (u, v) address pixel centers, u along width,
// v along height; depth is the camera-frame z coordinate.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;
};

// Rigid camera-to-world transform.
struct CameraPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;

    Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
    Vec3 to_camera(const Vec3& p_world) const {
        return rotation.transpose() * (p_world - translation);
    }
};

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    void validate() const;

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    double volume() const {
        const Vec3 e = extent();
        return e.x() * e.y() * e.z();
    }
    bool contains(const Vec3& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    bool contains(const Aabb& other) const {
        return contains(other.min) && contains(other.max);
    }
    bool intersects(const Aabb& other) const {
        return (min.array() <= other.max.array()).all() &&
               (max.array() >= other.min.array()).all();
    }
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();  // unit length

    void validate() const;

    Vec3 at(double t) const { return origin + t * direction; }
};

struct PixelDepth {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

// Lift a pixel plus camera-frame depth into a world point.
Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& intr,
                 const CameraPose& pose);

// Inverse of backproject. Throws ValidationError for points behind the camera.
PixelDepth project(const Vec3& point, const CameraIntrinsics& intr, const CameraPose& pose);

// Volume IoU of two boxes. Degenerate (zero-volume) inputs score 0.
double aabb_iou(const Aabb& a, const Aabb& b);

double aabb_center_distance(const Aabb& a, const Aabb& b);

}  // namespace f3d::geom
