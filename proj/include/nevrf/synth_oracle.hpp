// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nevrf/scene_model.hpp"
#include "nevrf/tensor.hpp"

namespace nevrf {

enum class PrimitiveKind { Sphere, Box };
enum class TextureKind { Solid, Checker, Gradient };

/// Albedo pattern evaluated in the primitive's local frame, so it moves with it.
struct Texture {
    TextureKind kind = TextureKind::Solid;
    Vec3 color_a{0.8, 0.3, 0.2};
    Vec3 color_b{0.2, 0.4, 0.8};
    double scale = 4.0; ///< checker cells per unit length
};

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    Vec3 center = Vec3::Zero();
    double radius = 0.5;             ///< spheres
    Vec3 half_extent{0.3, 0.3, 0.3}; ///< boxes, axis-aligned
    Vec3 amplitude = Vec3::Zero();   ///< sinusoidal translation
    double period = 20.0;            ///< frames
    double phase = 0.0;              ///< radians
    int appear_frame = 0;
    int vanish_frame = -1;           ///< -1: never
    Texture texture;

    Vec3 center_at(double time) const;
    bool present_at(double time) const;
};

struct RigSpec {
    int cameras = 12;
    double radius = 3.0;
    double elevation_deg = 15.0;
    double focal = 72.0;
    Vec3 target = Vec3::Zero();
};

struct SceneSpec {
    Aabb bbox{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    std::vector<Primitive> primitives;
    RigSpec rig;
    int frames = 20;
    int width = 64;
    int height = 64;
    Vec3 background{0.0, 0.0, 0.0};
    int supersample = 1; ///< s x s subpixel rays per pixel
    bool lambert = false;
    std::uint64_t seed = 0;
};

/// Parses a scene description. Unknown keys and malformed JSON raise
/// InvalidArgument; parse errors carry "line L, column C".
SceneSpec parse_scene_spec(const std::string& json_text);
std::string scene_spec_to_json(const SceneSpec& spec);

/// Inward-looking ring of cameras around the rig target, z up.
std::vector<Camera> make_rig(const SceneSpec& spec);

/// Textured sphere plus box with sinusoidal motion; a second sphere appears halfway.
SceneSpec default_scene(int frames = 20);

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int primitive = -1;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
};

/// Nearest ray-primitive intersection with t > 0.
std::optional<Hit> intersect_scene(const SceneSpec& spec, double time, const Vec3& origin, const Vec3& direction);

/// Albedo of primitive `index` at world point `x` and time.
Vec3 shade_texture(const SceneSpec& spec, int index, double time, const Vec3& x);

struct AnalyticView {
    Image image;
    std::vector<double> depth; ///< per pixel, distance along the ray; +inf on background
};

/// Exact ray casting through every pixel (supersampled by SceneSpec::supersample).
AnalyticView analytic_render(const SceneSpec& spec, double time, const Camera& camera);

/// Strict point-in-primitive test; points outside the scene box are never occupied.
bool true_occupancy(const SceneSpec& spec, double time, const Vec3& x);

struct DatasetInfo {
    std::filesystem::path manifest;
    std::size_t images = 0;
};

/// Renders every frame and view to PNG and writes manifest.json in `out_dir`.
DatasetInfo make_dataset(const SceneSpec& spec, const std::filesystem::path& out_dir, int threads = 0);

} // namespace nevrf
