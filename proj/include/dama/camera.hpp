// Pinhole camera: intrinsics in pixels, world-to-camera rigid extrinsics.
#pragma once

#include "dama/core.hpp"
#include "dama/geometry.hpp"

namespace dama {

struct Camera {
    double fx = 256, fy = 256, cx = 128, cy = 128;
    Rigid world_to_cam;  // x_cam = R x_world + t
    int width = 256, height = 256;

    void check() const {
        if (fx <= 0 || fy <= 0) throw Error("Camera: focal lengths must be positive");
        if (width < 1 || height < 1) throw Error("Camera: resolution must be >= 1x1");
    }

    Vec3 position() const { return -(world_to_cam.R.transpose() * world_to_cam.t); }

    // Ray through the pixel center. The direction is the world image of the
    // unnormalized camera vector ((x-cx)/fx, (y-cy)/fy, 1), so the ray
    // parameter t equals camera-space depth.
    void pixel_ray(double px, double py, Vec3& origin, Vec3& dir) const {
        Vec3 d_cam((px - cx) / fx, (py - cy) / fy, 1.0);
        dir = world_to_cam.R.transpose() * d_cam;
        origin = position();
    }

    double depth_of(const Vec3& p_world) const { return (world_to_cam.apply(p_world)).z(); }

    // Camera-space direction for backprojection at a pixel.
    Vec3 backproject_dir(double px, double py) const {
        return Vec3((px - cx) / fx, (py - cy) / fy, 1.0);
    }
};

// Camera on a circle of the given radius at height `elevation`, looking at
// `target`, with +z world as the up hint.
inline Camera look_at_camera(const Vec3& eye, const Vec3& target, int width, int height,
                             double focal_px, const Vec3& up_hint = Vec3(0, 0, 1)) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up_hint).normalized();
    if (!right.allFinite() || right.norm() < 1e-9) right = fwd.cross(Vec3(0, 1, 0)).normalized();
    Vec3 down = fwd.cross(right);  // camera y points down in image space
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal_px;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = fwd.transpose();
    cam.world_to_cam = Rigid{R, -(R * eye)};
    return cam;
}

}  // namespace dama
