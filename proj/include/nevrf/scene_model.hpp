// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nevrf/memory_ledger.hpp"
#include "nevrf/tensor.hpp"

namespace nevrf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole camera. Pixel centers sit at integer + 0.5; the camera looks down +z.
class Camera {
public:
    /// Throws InvalidArgument unless focal entries are positive, the rotation
    /// block is orthonormal within 1e-6 and both image dimensions are >= 1.
    Camera(const Mat3& intrinsics, const Mat4& world_to_camera, int width, int height);

    /// Builds an inward-looking camera at `eye` aimed at `target`.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height);

    const Mat3& intrinsics() const noexcept { return intrinsics_; }
    const Mat4& extrinsics() const noexcept { return world_to_camera_; }
    Mat3 rotation() const { return world_to_camera_.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera_.topRightCorner<3, 1>(); }
    const Vec3& center() const noexcept { return center_; }
    /// World-space optical axis.
    Vec3 forward() const { return rotation().row(2).transpose(); }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    bool contains(const Vec2& pixel) const {
        return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width_ && pixel.y() < height_;
    }

private:
    Mat3 intrinsics_;
    Mat4 world_to_camera_;
    Vec3 center_;
    int width_;
    int height_;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;
    double near = 0.0;
    double far = std::numeric_limits<double>::infinity();

    Vec3 at(double t) const { return origin + t * direction; }
};

/// Validates ray invariants (unit direction, 0 <= near < far).
Ray make_ray(const Vec3& origin, const Vec3& direction, double near, double far);

struct Projection {
    Vec2 pixel;
    double depth;
};

/// Points closer than this to the camera plane are treated as behind the camera.
inline constexpr double kMinProjectionDepth = 1e-9;

/// Perspective projection. Returns nullopt when the point is at or behind the
/// camera plane; the caller must treat the view as invisible. The pixel may
/// lie outside the image.
std::optional<Projection> project_point(const Camera& camera, const Vec3& x);

/// Ray through `pixel` (continuous pixel coordinates) from the camera center.
Ray generate_ray(const Camera& camera, const Vec2& pixel, double near = 0.0,
                 double far = std::numeric_limits<double>::infinity());

/// Angle in [0, pi] between the ray direction and the direction from the
/// camera center to `point`. Throws DegenerateView when the two coincide.
double angular_difference(const Ray& ray, const Vec3& point, const Camera& camera);

struct Aabb {
    Vec3 min;
    Vec3 max;

    Vec3 extent() const { return max - min; }
    Vec3 center() const { return 0.5 * (min + max); }
    bool contains(const Vec3& x) const {
        return (x.array() >= min.array()).all() && (x.array() <= max.array()).all();
    }
    /// Parametric entry/exit of the ray clipped to [ray.near, ray.far].
    std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
};

/// All views of one time instance.
class MultiViewFrame {
public:
    MultiViewFrame(int time_index, std::vector<Camera> cameras, std::vector<Image> images);

    int time_index() const noexcept { return time_index_; }
    std::size_t view_count() const noexcept { return cameras_.size(); }
    const Camera& camera(std::size_t view) const { return cameras_.at(view); }
    const Image& image(std::size_t view) const { return images_.at(view); }
    const std::vector<Camera>& cameras() const noexcept { return cameras_; }
    const std::vector<Image>& images() const noexcept { return images_; }
    std::int64_t image_bytes() const noexcept { return token_.bytes(); }

private:
    int time_index_;
    std::vector<Camera> cameras_;
    std::vector<Image> images_;
    LedgerToken token_;
};

/// Consecutive frames processed as one sequential unit (default 20 frames).
struct SequenceGroup {
    std::vector<MultiViewFrame> frames;
    int group_start = 0;
    int group_end = 0; ///< inclusive
};

inline constexpr int kDefaultGroupSize = 20;

void validate_group(const SequenceGroup& group);

/// Dataset manifest: scene box, cameras and per-frame image paths.
struct DatasetManifest {
    Aabb bbox;
    std::vector<Camera> cameras;
    std::vector<std::vector<std::string>> frames;
    std::filesystem::path base_dir;
    std::optional<Vec3> background; ///< color of empty space, when the capture knows it

    std::size_t frame_count() const { return frames.size(); }
    std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Loads one frame's images from disk.
MultiViewFrame load_frame(const DatasetManifest& manifest, int time_index);

/// Loads frames [start, start + count) clipped to the dataset length.
SequenceGroup load_group(const DatasetManifest& manifest, int start, int count);

} // namespace nevrf
