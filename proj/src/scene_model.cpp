// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include "json.hpp"

#include "nevrf/error.hpp"
#include "nevrf/image_io.hpp"

namespace nevrf {

Camera::Camera(const Mat3& intrinsics, const Mat4& world_to_camera, int width, int height)
    : intrinsics_(intrinsics), world_to_camera_(world_to_camera), width_(width), height_(height) {
    if (!(intrinsics_(0, 0) > 0.0) || !(intrinsics_(1, 1) > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "camera focal lengths must be positive");
    }
    if (width_ < 1 || height_ < 1) throw Error(ErrorKind::InvalidArgument, "camera image size must be >= 1");
    const Mat3 r = rotation();
    if (!((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6)) {
        throw Error(ErrorKind::InvalidArgument, "camera rotation is not orthonormal");
    }
    const Eigen::RowVector4d last_row = world_to_camera_.row(3);
    if ((last_row - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, "camera extrinsics must be a rigid transform");
    }
    center_ = -r.transpose() * translation();
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(up).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    Mat4 t = Mat4::Identity();
    t.topLeftCorner<3, 3>() = r;
    t.topRightCorner<3, 1>() = -r * eye;
    Mat3 k = Mat3::Identity();
    k(0, 0) = focal;
    k(1, 1) = focal;
    k(0, 2) = 0.5 * width;
    k(1, 2) = 0.5 * height;
    return Camera(k, t, width, height);
}

Ray make_ray(const Vec3& origin, const Vec3& direction, double near, double far) {
    if (std::abs(direction.norm() - 1.0) > 1e-6) throw Error(ErrorKind::InvalidArgument, "ray direction not unit");
    if (!(near >= 0.0 && near < far)) throw Error(ErrorKind::InvalidArgument, "ray requires 0 <= near < far");
    return Ray{origin, direction, near, far};
}

std::optional<Projection> project_point(const Camera& camera, const Vec3& x) {
    const Mat4& t = camera.extrinsics();
    const Vec3 xc = t.topLeftCorner<3, 3>() * x + t.topRightCorner<3, 1>();
    if (!(xc.z() > kMinProjectionDepth)) return std::nullopt;
    const Mat3& k = camera.intrinsics();
    const double u = (k(0, 0) * xc.x() + k(0, 1) * xc.y()) / xc.z() + k(0, 2);
    const double v = k(1, 1) * xc.y() / xc.z() + k(1, 2);
    return Projection{Vec2(u, v), xc.z()};
}

Ray generate_ray(const Camera& camera, const Vec2& pixel, double near, double far) {
    const Vec3 camera_dir = camera.intrinsics().triangularView<Eigen::Upper>().solve(Vec3(pixel.x(), pixel.y(), 1.0));
    const Vec3 world_dir = (camera.rotation().transpose() * camera_dir).normalized();
    return Ray{camera.center(), world_dir, near, far};
}

double angular_difference(const Ray& ray, const Vec3& point, const Camera& camera) {
    const Vec3 to_point = point - camera.center();
    const double length = to_point.norm();
    if (!(length > 1e-12)) throw Error(ErrorKind::DegenerateView, "camera center coincides with point");
    const double c = std::clamp(ray.direction.dot(to_point) / length, -1.0, 1.0);
    return std::acos(c);
}

std::optional<std::pair<double, double>> Aabb::intersect(const Ray& ray) const {
    double t0 = ray.near;
    double t1 = ray.far;
    for (int axis = 0; axis < 3; ++axis) {
        const double d = ray.direction[axis];
        const double o = ray.origin[axis];
        if (std::abs(d) < 1e-15) {
            if (o < min[axis] || o > max[axis]) return std::nullopt;
            continue;
        }
        double a = (min[axis] - o) / d;
        double b = (max[axis] - o) / d;
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
        if (t0 >= t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

namespace {

std::int64_t total_image_bytes(const std::vector<Image>& images) {
    std::int64_t bytes = 0;
    for (const auto& image : images) bytes += static_cast<std::int64_t>(image.size() * sizeof(float));
    return bytes;
}

} // namespace

MultiViewFrame::MultiViewFrame(int time_index, std::vector<Camera> cameras, std::vector<Image> images)
    : time_index_(time_index), cameras_(std::move(cameras)), images_(std::move(images)),
      token_(MemoryCategory::FrameImages, total_image_bytes(images_)) {
    if (cameras_.size() < 2) throw Error(ErrorKind::InvalidArgument, "a frame needs at least 2 views");
    if (cameras_.size() != images_.size()) throw Error(ErrorKind::ShapeError, "camera/image count mismatch");
    for (std::size_t i = 0; i < cameras_.size(); ++i) {
        const Image& image = images_[i];
        if (image.rank() != 3 || image.channels() != 3 ||
            image.height() != static_cast<std::size_t>(cameras_[i].height()) ||
            image.width() != static_cast<std::size_t>(cameras_[i].width())) {
            throw Error(ErrorKind::ShapeError, "image " + std::to_string(i) + " does not match its camera");
        }
    }
}

void validate_group(const SequenceGroup& group) {
    if (group.frames.empty()) throw Error(ErrorKind::InvalidArgument, "empty sequence group");
    for (std::size_t i = 0; i < group.frames.size(); ++i) {
        if (group.frames[i].time_index() != group.group_start + static_cast<int>(i)) {
            throw Error(ErrorKind::InvalidArgument, "group frames are not consecutive");
        }
    }
    if (group.group_end != group.group_start + static_cast<int>(group.frames.size()) - 1) {
        throw Error(ErrorKind::InvalidArgument, "group_end does not match frame count");
    }
}

namespace {

template <int R, int C>
Eigen::Matrix<double, R, C> read_row_major(const nlohmann::json& values, const char* what) {
    if (!values.is_array() || values.size() != R * C) {
        throw Error(ErrorKind::FormatError, std::string("manifest ") + what + " must have " + std::to_string(R * C) +
                                                " entries");
    }
    Eigen::Matrix<double, R, C> m;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) m(r, c) = values[r * C + c].get<double>();
    return m;
}

} // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatError, "manifest " + path.string() + ": " + e.what());
    }

    DatasetManifest manifest;
    manifest.base_dir = path.parent_path();
    try {
        const auto& bbox = doc.at("bbox");
        if (bbox.size() != 6) throw Error(ErrorKind::FormatError, "manifest bbox must have 6 entries");
        manifest.bbox.min = Vec3(bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>());
        manifest.bbox.max = Vec3(bbox[3].get<double>(), bbox[4].get<double>(), bbox[5].get<double>());
        if (!(manifest.bbox.min.array() < manifest.bbox.max.array()).all()) {
            throw Error(ErrorKind::FormatError, "manifest bbox min must be below max");
        }
        for (const auto& cam : doc.at("cameras")) {
            manifest.cameras.emplace_back(read_row_major<3, 3>(cam.at("K"), "K"), read_row_major<4, 4>(cam.at("T"), "T"),
                                          cam.at("width").get<int>(), cam.at("height").get<int>());
        }
        for (const auto& frame : doc.at("frames")) {
            auto paths = frame.get<std::vector<std::string>>();
            if (paths.size() != manifest.cameras.size()) {
                throw Error(ErrorKind::FormatError, "manifest frame view count differs from camera count");
            }
            manifest.frames.push_back(std::move(paths));
        }
        if (doc.contains("background")) {
            const auto& bg = doc.at("background");
            if (bg.size() != 3) throw Error(ErrorKind::FormatError, "manifest background must have 3 entries");
            manifest.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatError, "manifest " + path.string() + ": " + e.what());
    }
    return manifest;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    nlohmann::json doc;
    doc["bbox"] = {manifest.bbox.min.x(), manifest.bbox.min.y(), manifest.bbox.min.z(),
                   manifest.bbox.max.x(), manifest.bbox.max.y(), manifest.bbox.max.z()};
    doc["cameras"] = nlohmann::json::array();
    for (const auto& camera : manifest.cameras) {
        nlohmann::json k = nlohmann::json::array();
        nlohmann::json t = nlohmann::json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) k.push_back(camera.intrinsics()(r, c));
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) t.push_back(camera.extrinsics()(r, c));
        doc["cameras"].push_back({{"K", k}, {"T", t}, {"width", camera.width()}, {"height", camera.height()}});
    }
    doc["frames"] = manifest.frames;
    if (manifest.background) {
        doc["background"] = {manifest.background->x(), manifest.background->y(), manifest.background->z()};
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw Error(ErrorKind::Io, "failed writing manifest " + path.string());
}

MultiViewFrame load_frame(const DatasetManifest& manifest, int time_index) {
    if (time_index < 0 || static_cast<std::size_t>(time_index) >= manifest.frame_count()) {
        throw Error(ErrorKind::OutOfBounds, "frame " + std::to_string(time_index) + " outside dataset");
    }
    std::vector<Image> images;
    images.reserve(manifest.cameras.size());
    for (const auto& relative : manifest.frames[static_cast<std::size_t>(time_index)]) {
        images.push_back(read_image(manifest.resolve(relative)));
    }
    return MultiViewFrame(time_index, manifest.cameras, std::move(images));
}

SequenceGroup load_group(const DatasetManifest& manifest, int start, int count) {
    SequenceGroup group;
    const int end = std::min<int>(start + count, static_cast<int>(manifest.frame_count()));
    if (start < 0 || start >= end) throw Error(ErrorKind::OutOfBounds, "group start outside dataset");
    group.group_start = start;
    group.group_end = end - 1;
    group.frames.reserve(static_cast<std::size_t>(end - start));
    for (int t = start; t < end; ++t) group.frames.push_back(load_frame(manifest, t));
    return group;
}

} // namespace nevrf
