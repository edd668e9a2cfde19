// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/synth_oracle.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "json.hpp"
#include "nevrf/image_io.hpp"

namespace nevrf {

using nlohmann::json;

Vec3 Primitive::center_at(double time) const {
    return center + amplitude * std::sin(2.0 * std::numbers::pi * time / period + phase);
}

bool Primitive::present_at(double time) const {
    return time >= appear_frame && (vanish_frame < 0 || time < vanish_frame);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorKind::InvalidArgument, where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
        if (!ok.count(key)) throw Error(ErrorKind::InvalidArgument, "unknown key '" + key + "' in " + where);
    }
}

Vec3 vec3_of(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::InvalidArgument, where + " must have 3 numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json json_of(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

const char* kind_name(PrimitiveKind k) { return k == PrimitiveKind::Sphere ? "sphere" : "box"; }

const char* texture_name(TextureKind k) {
    switch (k) {
    case TextureKind::Solid: return "solid";
    case TextureKind::Checker: return "checker";
    case TextureKind::Gradient: return "gradient";
    }
    return "solid";
}

Texture parse_texture(const json& j) {
    reject_unknown(j, {"kind", "color_a", "color_b", "scale"}, "texture");
    Texture t;
    const std::string kind = j.value("kind", std::string("solid"));
    if (kind == "solid") {
        t.kind = TextureKind::Solid;
    } else if (kind == "checker") {
        t.kind = TextureKind::Checker;
    } else if (kind == "gradient") {
        t.kind = TextureKind::Gradient;
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown texture kind '" + kind + "'");
    }
    if (j.contains("color_a")) t.color_a = vec3_of(j["color_a"], "texture.color_a");
    if (j.contains("color_b")) t.color_b = vec3_of(j["color_b"], "texture.color_b");
    t.scale = j.value("scale", t.scale);
    return t;
}

Primitive parse_primitive(const json& j) {
    reject_unknown(j,
                   {"type", "center", "radius", "half_extent", "amplitude", "period", "phase", "appear_frame",
                    "vanish_frame", "texture"},
                   "primitive");
    Primitive p;
    const std::string type = j.at("type").get<std::string>();
    if (type == "sphere") {
        p.kind = PrimitiveKind::Sphere;
    } else if (type == "box") {
        p.kind = PrimitiveKind::Box;
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown primitive type '" + type + "'");
    }
    p.center = vec3_of(j.at("center"), "primitive.center");
    p.radius = j.value("radius", p.radius);
    if (j.contains("half_extent")) p.half_extent = vec3_of(j["half_extent"], "primitive.half_extent");
    if (j.contains("amplitude")) p.amplitude = vec3_of(j["amplitude"], "primitive.amplitude");
    p.period = j.value("period", p.period);
    p.phase = j.value("phase", p.phase);
    p.appear_frame = j.value("appear_frame", p.appear_frame);
    p.vanish_frame = j.value("vanish_frame", p.vanish_frame);
    if (j.contains("texture")) p.texture = parse_texture(j["texture"]);
    if (p.radius <= 0.0 || (p.half_extent.array() <= 0.0).any() || p.period == 0.0) {
        throw Error(ErrorKind::InvalidArgument, "primitive sizes and period must be positive");
    }
    return p;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

// Primitive extent bound over its motion.
Aabb swept_bounds(const Primitive& p) {
    const Vec3 half = p.kind == PrimitiveKind::Sphere ? Vec3::Constant(p.radius) : p.half_extent;
    const Vec3 reach = half + p.amplitude.cwiseAbs();
    return Aabb{p.center - reach, p.center + reach};
}

} // namespace

SceneSpec parse_scene_spec(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        throw Error(ErrorKind::InvalidArgument,
                    "scene JSON line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
    }
    SceneSpec s;
    try {
        reject_unknown(j,
                       {"bbox", "primitives", "rig", "frames", "width", "height", "background", "supersample",
                        "lambert", "seed"},
                       "scene");
        if (j.contains("bbox")) {
            const auto& b = j["bbox"];
            if (!b.is_array() || b.size() != 6) throw Error(ErrorKind::InvalidArgument, "bbox must have 6 numbers");
            s.bbox = Aabb{Vec3(b[0].get<double>(), b[1].get<double>(), b[2].get<double>()),
                          Vec3(b[3].get<double>(), b[4].get<double>(), b[5].get<double>())};
        }
        if (j.contains("primitives")) {
            for (const auto& p : j["primitives"]) s.primitives.push_back(parse_primitive(p));
        }
        if (j.contains("rig")) {
            const auto& r = j["rig"];
            reject_unknown(r, {"cameras", "radius", "elevation_deg", "focal", "target"}, "rig");
            s.rig.cameras = r.value("cameras", s.rig.cameras);
            s.rig.radius = r.value("radius", s.rig.radius);
            s.rig.elevation_deg = r.value("elevation_deg", s.rig.elevation_deg);
            s.rig.focal = r.value("focal", s.rig.focal);
            if (r.contains("target")) s.rig.target = vec3_of(r["target"], "rig.target");
        }
        s.frames = j.value("frames", s.frames);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        if (j.contains("background")) s.background = vec3_of(j["background"], "background");
        s.supersample = j.value("supersample", s.supersample);
        s.lambert = j.value("lambert", s.lambert);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("scene JSON: ") + e.what());
    }
    if (!(s.bbox.min.array() < s.bbox.max.array()).all()) throw Error(ErrorKind::InvalidArgument, "bbox is empty");
    if (s.rig.cameras < 4) throw Error(ErrorKind::InvalidArgument, "the rig needs at least 4 cameras");
    if (s.frames < 1 || s.width < 3 || s.height < 3 || s.supersample < 1) {
        throw Error(ErrorKind::InvalidArgument, "frames >= 1, image size >= 3 and supersample >= 1 required");
    }
    for (const auto& p : s.primitives) {
        const Aabb b = swept_bounds(p);
        if (!s.bbox.contains(b.min) || !s.bbox.contains(b.max)) {
            throw Error(ErrorKind::InvalidArgument, "a primitive leaves the scene bbox during its motion");
        }
    }
    return s;
}

std::string scene_spec_to_json(const SceneSpec& s) {
    json j;
    j["bbox"] = {s.bbox.min.x(), s.bbox.min.y(), s.bbox.min.z(), s.bbox.max.x(), s.bbox.max.y(), s.bbox.max.z()};
    j["primitives"] = json::array();
    for (const auto& p : s.primitives) {
        json q;
        q["type"] = kind_name(p.kind);
        q["center"] = json_of(p.center);
        if (p.kind == PrimitiveKind::Sphere) {
            q["radius"] = p.radius;
        } else {
            q["half_extent"] = json_of(p.half_extent);
        }
        q["amplitude"] = json_of(p.amplitude);
        q["period"] = p.period;
        q["phase"] = p.phase;
        q["appear_frame"] = p.appear_frame;
        q["vanish_frame"] = p.vanish_frame;
        q["texture"] = {{"kind", texture_name(p.texture.kind)},
                        {"color_a", json_of(p.texture.color_a)},
                        {"color_b", json_of(p.texture.color_b)},
                        {"scale", p.texture.scale}};
        j["primitives"].push_back(q);
    }
    j["rig"] = {{"cameras", s.rig.cameras},
                {"radius", s.rig.radius},
                {"elevation_deg", s.rig.elevation_deg},
                {"focal", s.rig.focal},
                {"target", json_of(s.rig.target)}};
    j["frames"] = s.frames;
    j["width"] = s.width;
    j["height"] = s.height;
    j["background"] = json_of(s.background);
    j["supersample"] = s.supersample;
    j["lambert"] = s.lambert;
    j["seed"] = s.seed;
    return j.dump(2);
}

std::vector<Camera> make_rig(const SceneSpec& spec) {
    std::vector<Camera> cams;
    const double elev = spec.rig.elevation_deg * std::numbers::pi / 180.0;
    for (int i = 0; i < spec.rig.cameras; ++i) {
        const double az = 2.0 * std::numbers::pi * i / spec.rig.cameras;
        const Vec3 eye = spec.rig.target + spec.rig.radius * Vec3(std::cos(elev) * std::cos(az),
                                                                  std::cos(elev) * std::sin(az), std::sin(elev));
        cams.push_back(Camera::look_at(eye, spec.rig.target, Vec3(0, 0, 1), spec.rig.focal, spec.width, spec.height));
    }
    return cams;
}

SceneSpec default_scene(int frames) {
    SceneSpec s;
    s.frames = frames;
    s.background = Vec3(0.35, 0.35, 0.35);
    s.supersample = 3; // antialiased silhouettes
    Primitive sphere;
    sphere.kind = PrimitiveKind::Sphere;
    sphere.center = Vec3(-0.2, 0.0, 0.0);
    sphere.radius = 0.45;
    sphere.amplitude = Vec3(0.2, 0.1, 0.0);
    sphere.period = 20.0;
    sphere.texture = {TextureKind::Checker, Vec3(0.85, 0.55, 0.25), Vec3(0.25, 0.45, 0.75), 2.0};
    Primitive box;
    box.kind = PrimitiveKind::Box;
    box.center = Vec3(0.45, 0.1, -0.2);
    box.half_extent = Vec3(0.25, 0.3, 0.3);
    box.amplitude = Vec3(0.0, 0.15, 0.1);
    box.period = 20.0;
    box.phase = 1.0;
    box.texture = {TextureKind::Gradient, Vec3(0.2, 0.7, 0.3), Vec3(0.8, 0.8, 0.3), 4.0};
    Primitive late;
    late.kind = PrimitiveKind::Sphere;
    late.center = Vec3(0.1, -0.5, 0.45);
    late.radius = 0.2;
    late.appear_frame = frames / 2;
    late.texture = {TextureKind::Solid, Vec3(0.75, 0.25, 0.6), Vec3(0.75, 0.25, 0.6), 4.0};
    s.primitives = {sphere, box, late};
    return s;
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

namespace {

std::optional<std::pair<double, Vec3>> hit_sphere(const Vec3& c, double r, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - c;
    const double b = oc.dot(d);
    const double cc = oc.squaredNorm() - r * r;
    const double disc = b * b - cc;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 0.0) t = -b + sq;
    if (t <= 0.0) return std::nullopt;
    return std::make_pair(t, ((o + t * d) - c).normalized());
}

std::optional<std::pair<double, Vec3>> hit_box(const Vec3& c, const Vec3& h, const Vec3& o, const Vec3& d) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int axis0 = 0;
    int axis1 = 0;
    for (int a = 0; a < 3; ++a) {
        const double lo = c[a] - h[a];
        const double hi = c[a] + h[a];
        if (d[a] == 0.0) {
            if (o[a] <= lo || o[a] >= hi) return std::nullopt;
            continue;
        }
        double ta = (lo - o[a]) / d[a];
        double tb = (hi - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
            t0 = ta;
            axis0 = a;
        }
        if (tb < t1) {
            t1 = tb;
            axis1 = a;
        }
    }
    if (t0 > t1) return std::nullopt;
    double t = t0;
    int axis = axis0;
    if (t <= 0.0) {
        t = t1;
        axis = axis1;
    }
    if (t <= 0.0) return std::nullopt;
    Vec3 n = Vec3::Zero();
    n[axis] = (o[axis] + t * d[axis]) > c[axis] ? 1.0 : -1.0;
    return std::make_pair(t, n);
}

} // namespace

std::optional<Hit> intersect_scene(const SceneSpec& spec, double time, const Vec3& origin, const Vec3& direction) {
    Hit best;
    for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        const Primitive& p = spec.primitives[i];
        if (!p.present_at(time)) continue;
        const Vec3 c = p.center_at(time);
        const auto h = p.kind == PrimitiveKind::Sphere ? hit_sphere(c, p.radius, origin, direction)
                                                       : hit_box(c, p.half_extent, origin, direction);
        if (h && h->first < best.t) {
            best.t = h->first;
            best.primitive = static_cast<int>(i);
            best.point = origin + h->first * direction;
            best.normal = h->second;
        }
    }
    if (best.primitive < 0) return std::nullopt;
    return best;
}

Vec3 shade_texture(const SceneSpec& spec, int index, double time, const Vec3& x) {
    const Primitive& p = spec.primitives.at(static_cast<std::size_t>(index));
    const Vec3 local = x - p.center_at(time);
    const Texture& t = p.texture;
    switch (t.kind) {
    case TextureKind::Solid: return t.color_a;
    case TextureKind::Checker: {
        const long s = static_cast<long>(std::floor(t.scale * local.x())) +
                       static_cast<long>(std::floor(t.scale * local.y())) +
                       static_cast<long>(std::floor(t.scale * local.z()));
        return (s % 2 == 0) ? t.color_a : t.color_b;
    }
    case TextureKind::Gradient: {
        const double extent = p.kind == PrimitiveKind::Sphere ? p.radius : p.half_extent.z();
        const double a = std::clamp(0.5 * (local.z() / extent + 1.0), 0.0, 1.0);
        return t.color_a + a * (t.color_b - t.color_a);
    }
    }
    return t.color_a;
}

AnalyticView analytic_render(const SceneSpec& spec, double time, const Camera& camera) {
    const int w = camera.width();
    const int h = camera.height();
    const int ss = spec.supersample;
    AnalyticView view;
    view.image = Image::image(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3);
    view.depth.assign(static_cast<std::size_t>(h) * w, std::numeric_limits<double>::infinity());
    const Vec3 light = Vec3(0.3, 0.5, 0.8).normalized();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Vec3 sum = Vec3::Zero();
            double depth = std::numeric_limits<double>::infinity();
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const Vec2 px(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss);
                    const Ray ray = generate_ray(camera, px);
                    const auto hit = intersect_scene(spec, time, ray.origin, ray.direction);
                    if (!hit) {
                        sum += spec.background;
                        continue;
                    }
                    Vec3 c = shade_texture(spec, hit->primitive, time, hit->point);
                    if (spec.lambert) c *= 0.3 + 0.7 * std::max(0.0, hit->normal.dot(light));
                    sum += c;
                    depth = std::min(depth, hit->t);
                }
            }
            sum /= double(ss * ss);
            for (int c = 0; c < 3; ++c) view.image.at(y, x, c) = static_cast<float>(sum[c]);
            view.depth[static_cast<std::size_t>(y) * w + x] = depth;
        }
    }
    return view;
}

bool true_occupancy(const SceneSpec& spec, double time, const Vec3& x) {
    if (!spec.bbox.contains(x)) return false;
    for (const auto& p : spec.primitives) {
        if (!p.present_at(time)) continue;
        const Vec3 d = x - p.center_at(time);
        if (p.kind == PrimitiveKind::Sphere) {
            if (d.norm() < p.radius) return true;
        } else if ((d.cwiseAbs().array() < p.half_extent.array()).all()) {
            return true;
        }
    }
    return false;
}

DatasetInfo make_dataset(const SceneSpec& spec, const std::filesystem::path& out_dir, int threads) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + (out_dir / "images").string() + ": " + ec.message());
    const auto cameras = make_rig(spec);
    DatasetManifest manifest;
    manifest.bbox = spec.bbox;
    manifest.cameras = cameras;
    manifest.base_dir = out_dir;
    manifest.background = spec.background;
    manifest.frames.resize(static_cast<std::size_t>(spec.frames));
    for (int t = 0; t < spec.frames; ++t) {
        for (std::size_t v = 0; v < cameras.size(); ++v) {
            char name[64];
            std::snprintf(name, sizeof(name), "images/f%04d_v%02zu.png", t, v);
            manifest.frames[static_cast<std::size_t>(t)].push_back(name);
        }
    }

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int t = next++; t < spec.frames; t = next++) {
            try {
                for (std::size_t v = 0; v < cameras.size(); ++v) {
                    const auto view = analytic_render(spec, t, cameras[v]);
                    write_image(manifest.resolve(manifest.frames[static_cast<std::size_t>(t)][v]), view.image);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = spec.frames;
            }
        }
    };
    int n = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n = std::min(n, spec.frames);
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    DatasetInfo info;
    info.manifest = out_dir / "manifest.json";
    save_manifest(info.manifest, manifest);
    {
        std::ofstream spec_out(out_dir / "scene.json");
        if (!spec_out) throw Error(ErrorKind::Io, "cannot write " + (out_dir / "scene.json").string());
        spec_out << scene_spec_to_json(spec) << "\n";
    }
    info.images = cameras.size() * static_cast<std::size_t>(spec.frames);
    return info;
}

} // namespace nevrf
