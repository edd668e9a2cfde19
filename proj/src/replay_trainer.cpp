// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/replay_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nevrf/binary_io.hpp"

namespace nevrf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

RayMarchConfig TrainConfig::march(bool training) const {
    RayMarchConfig m;
    m.n_s = n_s;
    m.background = background;
    m.jitter = training && jitter;
    m.min_weight = min_weight;
    return m;
}

BlendSettings TrainConfig::blend(int views) const {
    BlendSettings b;
    b.k = views;
    b.mode = blend_net ? BlendMode::Network : BlendMode::Uniform;
    return b;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
    if (batch_rays < 1) fail("batch_rays must be >= 1");
    if (!(replay_fraction >= 0.0 && replay_fraction <= 1.0)) fail("replay_fraction must be in [0, 1]");
    if (cl_iterations < 1 || density_iterations < 1 || init_max_iterations < 1) fail("iterations must be >= 1");
    if (init_window < 1 || init_min_iterations < 0) fail("init window must be >= 1");
    if (!(tau > 0.0)) fail("tau must be positive");
    if (k < 1 || init_views < 1) fail("view counts must be >= 1");
    if (feature_dim < 2) fail("feature_dim must be >= 2");
    if (n_s < 2) fail("n_s must be >= 2");
    if (group_size < 1) fail("group_size must be >= 1");
    if (grid_dims.nx < 2 || grid_dims.ny < 2 || grid_dims.nz < 2) fail("grid dims must be >= 2");
    if (lr_grid <= 0.0 || lr_network <= 0.0) fail("learning rates must be positive");
    if (!(raw_floor < occupied_raw_threshold())) fail("raw_floor must lie below the occupancy threshold");
}

std::string train_config_to_json(const TrainConfig& c) {
    json j;
    j["batch_rays"] = c.batch_rays;
    j["replay_fraction"] = c.replay_fraction;
    j["random_admissions"] = c.random_admissions;
    j["cl_iterations"] = c.cl_iterations;
    j["density_iterations"] = c.density_iterations;
    j["init_max_iterations"] = c.init_max_iterations;
    j["init_min_iterations"] = c.init_min_iterations;
    j["init_window"] = c.init_window;
    j["init_plateau_tol"] = c.init_plateau_tol;
    j["init_views"] = c.init_views;
    j["init_raw"] = c.init_raw;
    j["fill_interior"] = c.fill_interior;
    j["interior_raw"] = c.interior_raw;
    j["tau"] = c.tau;
    j["capacity_e"] = c.capacity_e;
    j["capacity_m"] = c.capacity_m;
    j["capacity_r"] = c.capacity_r;
    j["lr_network"] = c.lr_network;
    j["lr_grid"] = c.lr_grid;
    j["raw_floor"] = c.raw_floor;
    j["seed"] = c.seed;
    j["grid_dims"] = {c.grid_dims.nx, c.grid_dims.ny, c.grid_dims.nz};
    j["feature_dim"] = c.feature_dim;
    j["k"] = c.k;
    j["blend_net"] = c.blend_net;
    j["train_encoder_after_first_group"] = c.train_encoder_after_first_group;
    j["n_s"] = c.n_s;
    j["background"] = {c.background.x(), c.background.y(), c.background.z()};
    j["min_weight"] = c.min_weight;
    j["jitter"] = c.jitter;
    j["group_size"] = c.group_size;
    j["test_views"] = c.test_views;
    j["log_every"] = c.log_every;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("config JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    TrainConfig c;
    static const std::set<std::string> known = {
        "batch_rays", "replay_fraction", "random_admissions", "cl_iterations", "density_iterations",
        "init_max_iterations", "init_min_iterations", "init_window", "init_plateau_tol", "init_views", "init_raw",
        "fill_interior", "interior_raw", "tau", "capacity_e", "capacity_m", "capacity_r", "lr_network", "lr_grid", "raw_floor",
        "seed", "grid_dims", "feature_dim", "k", "blend_net", "train_encoder_after_first_group", "n_s", "background",
        "min_weight", "jitter", "group_size", "test_views", "log_every"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
    }
    try {
        c.batch_rays = j.value("batch_rays", c.batch_rays);
        c.replay_fraction = j.value("replay_fraction", c.replay_fraction);
        c.random_admissions = j.value("random_admissions", c.random_admissions);
        c.cl_iterations = j.value("cl_iterations", c.cl_iterations);
        c.density_iterations = j.value("density_iterations", c.density_iterations);
        c.init_max_iterations = j.value("init_max_iterations", c.init_max_iterations);
        c.init_min_iterations = j.value("init_min_iterations", c.init_min_iterations);
        c.init_window = j.value("init_window", c.init_window);
        c.init_plateau_tol = j.value("init_plateau_tol", c.init_plateau_tol);
        c.init_views = j.value("init_views", c.init_views);
        c.init_raw = j.value("init_raw", c.init_raw);
        c.fill_interior = j.value("fill_interior", c.fill_interior);
        c.interior_raw = j.value("interior_raw", c.interior_raw);
        c.tau = j.value("tau", c.tau);
        c.capacity_e = j.value("capacity_e", c.capacity_e);
        c.capacity_m = j.value("capacity_m", c.capacity_m);
        c.capacity_r = j.value("capacity_r", c.capacity_r);
        c.lr_network = j.value("lr_network", c.lr_network);
        c.lr_grid = j.value("lr_grid", c.lr_grid);
        c.raw_floor = j.value("raw_floor", c.raw_floor);
        c.seed = j.value("seed", c.seed);
        if (j.contains("grid_dims")) {
            const auto d = j["grid_dims"].get<std::vector<int>>();
            if (d.size() != 3) throw Error(ErrorKind::InvalidArgument, "grid_dims must have 3 entries");
            c.grid_dims = GridDims{d[0], d[1], d[2]};
        }
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.k = j.value("k", c.k);
        c.blend_net = j.value("blend_net", c.blend_net);
        c.train_encoder_after_first_group = j.value("train_encoder_after_first_group", c.train_encoder_after_first_group);
        c.n_s = j.value("n_s", c.n_s);
        if (j.contains("background")) {
            const auto b = j["background"].get<std::vector<double>>();
            if (b.size() != 3) throw Error(ErrorKind::InvalidArgument, "background must have 3 entries");
            c.background = Vec3(b[0], b[1], b[2]);
        }
        c.min_weight = j.value("min_weight", c.min_weight);
        c.jitter = j.value("jitter", c.jitter);
        c.group_size = j.value("group_size", c.group_size);
        if (j.contains("test_views")) c.test_views = j["test_views"].get<std::vector<int>>();
        c.log_every = j.value("log_every", c.log_every);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("config value: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Records and buffer
// ---------------------------------------------------------------------------

std::size_t RaySampleRecord::payload_bytes() const {
    return rows.size() * sizeof(float) + valid.size() + colors.size() * sizeof(float) +
           weights.size() * sizeof(float) + sizeof(RaySampleRecord);
}

void RaySampleRecord::account() { token = LedgerToken(MemoryCategory::ReplayRecords, std::int64_t(payload_bytes())); }

ExperienceBuffer::ExperienceBuffer(std::size_t cap_e, std::size_t cap_m, std::size_t cap_r, double tau,
                                   std::uint64_t seed)
    : cap_e_(cap_e), cap_m_(cap_m), cap_r_(cap_r), tau_(tau), rng_(seed) {}

const std::vector<RaySampleRecord>& ExperienceBuffer::queue(SubBuffer b) const {
    return b == SubBuffer::Error ? q_e_ : (b == SubBuffer::Motion ? q_m_ : q_r_);
}

std::vector<RaySampleRecord>& ExperienceBuffer::queue(SubBuffer b) {
    return b == SubBuffer::Error ? q_e_ : (b == SubBuffer::Motion ? q_m_ : q_r_);
}

std::size_t ExperienceBuffer::capacity(SubBuffer b) const {
    return b == SubBuffer::Error ? cap_e_ : (b == SubBuffer::Motion ? cap_m_ : cap_r_);
}

bool ExperienceBuffer::admit_error(RaySampleRecord r) {
    if (cap_e_ == 0) return false;
    if (q_e_.size() >= cap_e_ && !(r.error > q_e_.back().error)) return false;
    if (q_e_.size() >= cap_e_) q_e_.pop_back();
    auto pos = std::upper_bound(q_e_.begin(), q_e_.end(), r.error,
                                [](float e, const RaySampleRecord& x) { return e > x.error; });
    q_e_.insert(pos, std::move(r));
    return true;
}

std::optional<std::uint64_t> ExperienceBuffer::admit_evicting(std::vector<RaySampleRecord>& q, std::size_t cap,
                                                              RaySampleRecord r) {
    if (cap == 0) return std::nullopt;
    if (q.size() < cap) {
        q.push_back(std::move(r));
        return std::nullopt;
    }
    std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
    const std::size_t victim = pick(rng_);
    const std::uint64_t evicted = q[victim].id;
    q[victim] = std::move(r);
    return evicted;
}

std::optional<std::uint64_t> ExperienceBuffer::admit_motion(RaySampleRecord r) {
    return admit_evicting(q_m_, cap_m_, std::move(r));
}

std::optional<std::uint64_t> ExperienceBuffer::admit_random(RaySampleRecord r) {
    return admit_evicting(q_r_, cap_r_, std::move(r));
}

void ExperienceBuffer::resort_errors() {
    std::stable_sort(q_e_.begin(), q_e_.end(),
                     [](const RaySampleRecord& a, const RaySampleRecord& b) { return a.error > b.error; });
}

bool ExperienceBuffer::contains(std::uint64_t id) const {
    for (const auto* q : {&q_e_, &q_m_, &q_r_})
        for (const auto& r : *q)
            if (r.id == id) return true;
    return false;
}

std::vector<std::pair<SubBuffer, std::size_t>> ExperienceBuffer::draw(std::size_t n, std::mt19937_64& rng) const {
    std::vector<std::pair<SubBuffer, std::size_t>> out;
    if (empty()) return out;
    const std::size_t total = size();
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // a uniform index over the concatenation selects each sub-buffer with probability size / total
        std::size_t idx = pick(rng);
        if (idx < q_e_.size()) {
            out.emplace_back(SubBuffer::Error, idx);
            continue;
        }
        idx -= q_e_.size();
        if (idx < q_m_.size()) {
            out.emplace_back(SubBuffer::Motion, idx);
            continue;
        }
        out.emplace_back(SubBuffer::Random, idx - q_m_.size());
    }
    return out;
}

std::int64_t ExperienceBuffer::bytes() const {
    std::int64_t b = 0;
    for (const auto* q : {&q_e_, &q_m_, &q_r_})
        for (const auto& r : *q) b += std::int64_t(r.payload_bytes());
    return b;
}

namespace {

void put_record(ByteWriter& w, const RaySampleRecord& r) {
    w.put<std::uint64_t>(r.id);
    w.put<std::int32_t>(r.frame);
    w.put<std::int32_t>(r.view);
    w.put<float>(r.px);
    w.put<float>(r.py);
    for (float v : r.target) w.put<float>(v);
    for (float v : r.base) w.put<float>(v);
    w.put<std::int32_t>(r.k);
    w.put<std::int32_t>(r.feature_dim);
    w.put<float>(r.error);
    w.put<std::uint64_t>(r.weights.size());
    w.put_span<float>(r.weights);
    w.put_span<std::uint8_t>(r.valid);
    w.put_span<float>(r.colors);
    w.put_span<float>(r.rows);
}

RaySampleRecord get_record(ByteReader& rd) {
    RaySampleRecord r;
    r.id = rd.get<std::uint64_t>();
    r.frame = rd.get<std::int32_t>();
    r.view = rd.get<std::int32_t>();
    r.px = rd.get<float>();
    r.py = rd.get<float>();
    for (float& v : r.target) v = rd.get<float>();
    for (float& v : r.base) v = rd.get<float>();
    r.k = rd.get<std::int32_t>();
    r.feature_dim = rd.get<std::int32_t>();
    r.error = rd.get<float>();
    if (r.k < 1 || r.k > 64 || r.feature_dim < 0 || r.feature_dim > 256) {
        throw Error(ErrorKind::FormatError, "replay record shape out of range");
    }
    const auto active = rd.get<std::uint64_t>();
    r.weights = rd.get_vector<float>(active);
    const std::uint64_t kk = std::uint64_t(r.k);
    r.valid = rd.get_vector<std::uint8_t>(active * kk);
    r.colors = rd.get_vector<float>(active * kk * 3);
    r.rows = rd.get_vector<float>(active * kk * std::uint64_t(blend_input_width(r.feature_dim)));
    r.account();
    return r;
}

void clamp_below(DensityGrid& grid, double floor) {
    const float f = float(floor);
    for (auto& v : grid.values()) v = std::max(v, f);
}

} // namespace

std::vector<std::uint8_t> ExperienceBuffer::serialize() const {
    ByteWriter w;
    w.put_bytes("NVRB");
    w.put<std::uint32_t>(1);
    w.put<std::uint64_t>(cap_e_);
    w.put<std::uint64_t>(cap_m_);
    w.put<std::uint64_t>(cap_r_);
    w.put<double>(tau_);
    w.put<std::uint64_t>(next_id_);
    std::ostringstream rng_text;
    rng_text << rng_;
    const std::string state = rng_text.str();
    w.put<std::uint64_t>(state.size());
    w.put_bytes(state);
    for (const auto* q : {&q_e_, &q_m_, &q_r_}) {
        w.put<std::uint64_t>(q->size());
        for (const auto& r : *q) put_record(w, r);
    }
    return w.take();
}

ExperienceBuffer ExperienceBuffer::deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader rd(bytes);
    if (rd.get_string(4) != "NVRB") throw Error(ErrorKind::FormatError, "bad replay buffer magic");
    if (rd.get<std::uint32_t>() != 1) throw Error(ErrorKind::FormatError, "unsupported replay buffer version");
    ExperienceBuffer b;
    b.cap_e_ = rd.get<std::uint64_t>();
    b.cap_m_ = rd.get<std::uint64_t>();
    b.cap_r_ = rd.get<std::uint64_t>();
    b.tau_ = rd.get<double>();
    b.next_id_ = rd.get<std::uint64_t>();
    const auto len = rd.get<std::uint64_t>();
    if (len > rd.remaining()) throw Error(ErrorKind::FormatError, "truncated replay buffer");
    std::istringstream rng_text(rd.get_string(static_cast<std::size_t>(len)));
    rng_text >> b.rng_;
    if (!rng_text) throw Error(ErrorKind::FormatError, "bad replay buffer RNG state");
    for (auto* q : {&b.q_e_, &b.q_m_, &b.q_r_}) {
        const auto n = rd.get<std::uint64_t>();
        if (n > rd.remaining()) throw Error(ErrorKind::FormatError, "replay record count exceeds stream");
        for (std::uint64_t i = 0; i < n; ++i) q->push_back(get_record(rd));
    }
    if (rd.remaining() != 0) throw Error(ErrorKind::FormatError, "trailing bytes in replay buffer");
    return b;
}

BufferStats buffer_stats(const ExperienceBuffer& buffer, int bins) {
    BufferStats s;
    s.count_e = buffer.queue(SubBuffer::Error).size();
    s.count_m = buffer.queue(SubBuffer::Motion).size();
    s.count_r = buffer.queue(SubBuffer::Random).size();
    s.bytes = buffer.bytes();
    float hi = 0.0f;
    for (auto b : {SubBuffer::Error, SubBuffer::Motion, SubBuffer::Random})
        for (const auto& r : buffer.queue(b)) hi = std::max(hi, r.error);
    if (hi <= 0.0f) hi = 1.0f;
    s.histogram.assign(static_cast<std::size_t>(bins), 0);
    for (int i = 0; i <= bins; ++i) s.histogram_edges.push_back(double(hi) * i / bins);
    for (auto b : {SubBuffer::Error, SubBuffer::Motion, SubBuffer::Random}) {
        for (const auto& r : buffer.queue(b)) {
            const int bin = std::min(bins - 1, static_cast<int>(double(r.error) / double(hi) * bins));
            ++s.histogram[static_cast<std::size_t>(std::max(0, bin))];
        }
    }
    return s;
}

std::string buffer_stats_json(const BufferStats& s) {
    json j;
    j["count_e"] = s.count_e;
    j["count_m"] = s.count_m;
    j["count_r"] = s.count_r;
    j["bytes"] = s.bytes;
    j["histogram_edges"] = s.histogram_edges;
    j["histogram"] = s.histogram;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Batches, steps and buffer updates
// ---------------------------------------------------------------------------

std::vector<int> training_views(std::size_t view_count, const TrainConfig& cfg) {
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(view_count); ++v) {
        if (std::find(cfg.test_views.begin(), cfg.test_views.end(), v) == cfg.test_views.end()) out.push_back(v);
    }
    return out;
}

TrainingBatch make_batch(const MultiViewFrame& frame, std::span<const int> train_views, const ExperienceBuffer& buffer,
                         const TrainConfig& cfg, std::mt19937_64& rng) {
    if (train_views.empty()) throw Error(ErrorKind::InsufficientViews, "no training views");
    TrainingBatch b;
    const std::size_t total = static_cast<std::size_t>(cfg.batch_rays);
    const std::size_t replay =
        buffer.empty() ? 0 : static_cast<std::size_t>(std::llround(cfg.replay_fraction * double(total)));
    const std::size_t current = total - std::min(replay, total);
    std::uniform_int_distribution<std::size_t> pick_view(0, train_views.size() - 1);
    b.pixels.reserve(current);
    b.rays.reserve(current);
    b.targets.reserve(current);
    for (std::size_t i = 0; i < current; ++i) {
        const int v = train_views[pick_view(rng)];
        const Camera& cam = frame.camera(static_cast<std::size_t>(v));
        std::uniform_int_distribution<int> px(0, cam.width() - 1);
        std::uniform_int_distribution<int> py(0, cam.height() - 1);
        const int x = px(rng);
        const int y = py(rng);
        b.pixels.push_back({v, x, y});
        b.rays.push_back({generate_ray(cam, Vec2(x + 0.5, y + 0.5)), v});
        const float* t = frame.image(static_cast<std::size_t>(v)).texel(static_cast<std::size_t>(y),
                                                                       static_cast<std::size_t>(x));
        b.targets.push_back({t[0], t[1], t[2]});
    }
    b.replay = buffer.draw(std::min(replay, total), rng);
    return b;
}

std::vector<float> replay_loss(const MlpParams<float>& mlp, std::span<const RaySampleRecord* const> records,
                               float scale, std::span<float> grads) {
    std::vector<float> errors(records.size(), 0.0f);
    std::size_t rows = 0;
    for (const auto* r : records) rows += r->active() * static_cast<std::size_t>(r->k);
    const int width = mlp.input_size();
    RowMatrix<float> x(static_cast<Eigen::Index>(rows), width);
    std::size_t at = 0;
    for (const auto* r : records) {
        if (r->feature_dim > 0 && blend_input_width(r->feature_dim) != width) {
            throw Error(ErrorKind::ShapeError, "replay record width does not match the MLP");
        }
        std::copy(r->rows.begin(), r->rows.end(), x.data() + at * width);
        at += r->active() * static_cast<std::size_t>(r->k);
    }
    MlpTape<float> tape;
    RowMatrix<float> logits;
    if (rows > 0) logits = mlp_forward(mlp, x, grads.empty() ? nullptr : &tape);
    RowMatrix<float> dlogits = RowMatrix<float>::Zero(static_cast<Eigen::Index>(rows), 1);
    at = 0;
    std::vector<float> w;
    std::vector<std::array<float, 3>> blended;
    for (std::size_t ri = 0; ri < records.size(); ++ri) {
        const RaySampleRecord& r = *records[ri];
        const int k = r.k;
        w.assign(r.active() * k, 0.0f);
        blended.assign(r.active(), {0.0f, 0.0f, 0.0f});
        std::array<float, 3> pixel = r.base;
        for (std::size_t a = 0; a < r.active(); ++a) {
            masked_softmax(logits.data() + at + a * k, r.valid.data() + a * k, static_cast<std::size_t>(k),
                           w.data() + a * k);
            for (int j = 0; j < k; ++j)
                for (int c = 0; c < 3; ++c) blended[a][c] += w[a * k + j] * r.colors[(a * k + j) * 3 + c];
            for (int c = 0; c < 3; ++c) pixel[c] += r.weights[a] * blended[a][c];
        }
        float err = 0.0f;
        std::array<float, 3> dpixel{};
        for (int c = 0; c < 3; ++c) {
            const float d = pixel[c] - r.target[c];
            err += d * d / 3.0f;
            dpixel[c] = scale * 2.0f * d / 3.0f;
        }
        errors[ri] = err;
        if (!grads.empty()) {
            for (std::size_t a = 0; a < r.active(); ++a) {
                float dw[64];
                float s = 0.0f;
                for (int j = 0; j < k; ++j) {
                    dw[j] = 0.0f;
                    for (int c = 0; c < 3; ++c) dw[j] += dpixel[c] * r.weights[a] * r.colors[(a * k + j) * 3 + c];
                    s += w[a * k + j] * dw[j];
                }
                for (int j = 0; j < k; ++j) {
                    if (r.valid[a * k + j]) dlogits(static_cast<Eigen::Index>(at + a * k + j), 0) = w[a * k + j] * (dw[j] - s);
                }
            }
        }
        at += r.active() * k;
    }
    if (!grads.empty() && rows > 0) mlp_backward(mlp, tape, dlogits, grads);
    return errors;
}

RaySampleRecord capture_record(const RenderTape<float>& tape, std::size_t ray, const std::array<float, 3>& target,
                               int frame, const PixelRef& pixel) {
    RaySampleRecord r;
    r.frame = frame;
    r.view = pixel.view;
    r.px = float(pixel.x) + 0.5f;
    r.py = float(pixel.y) + 0.5f;
    r.target = target;
    r.k = tape.k;
    r.feature_dim = tape.feature_dim;
    const int width = blend_input_width(tape.feature_dim);
    std::array<float, 3> blended_sum{0.0f, 0.0f, 0.0f};
    for (std::size_t i = tape.ray_begin[ray]; i < tape.ray_begin[ray + 1]; ++i) {
        const int a = tape.active[i];
        if (a < 0) continue;
        const std::size_t base = static_cast<std::size_t>(a) * tape.k;
        bool any = false;
        for (int j = 0; j < tape.k; ++j) any = any || tape.valid[base + j];
        if (!any) continue;
        const float wgt = tape.trans[i] * tape.alpha[i];
        r.weights.push_back(wgt);
        for (int c = 0; c < 3; ++c) blended_sum[c] += wgt * tape.color[i][c];
        r.valid.insert(r.valid.end(), tape.valid.begin() + base, tape.valid.begin() + base + tape.k);
        r.colors.insert(r.colors.end(), tape.source_color.begin() + base * 3,
                        tape.source_color.begin() + (base + tape.k) * 3);
        const float* row = tape.rows.data() + base * width;
        r.rows.insert(r.rows.end(), row, row + std::size_t(tape.k) * width);
    }
    for (int c = 0; c < 3; ++c) r.base[c] = tape.pixel[ray][c] - blended_sum[c];
    r.account();
    return r;
}

StepResult train_step(const TrainingBatch& batch, FrameSources<float>& sources, DensityGrid& grid,
                      BlendNetwork<float>& net, ExperienceBuffer* buffer, const TrainConfig& cfg,
                      const StepTargets& targets, Optimizers& opt, std::mt19937_64& rng,
                      RenderTape<float>* tape_out) {
    const bool network = cfg.blend_net;
    const RenderInputs<float> in =
        make_inputs<float>(sources, grid, network ? &net.mlp : nullptr, cfg.blend(cfg.k), net.feature_dim);
    const RayMarchConfig march = cfg.march(true);
    RenderTape<float> local_tape;
    RenderTape<float>& tape = tape_out ? *tape_out : local_tape;
    const auto pixels = render_rays<float>(in, batch.rays, march, tape, &rng);

    StepResult res;
    const std::size_t n = pixels.size();
    res.ray_errors.resize(n);
    std::vector<std::array<float, 3>> dpixel(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        float e = 0.0f;
        for (int c = 0; c < 3; ++c) {
            const float d = pixels[i][c] - batch.targets[i][c];
            e += d * d / 3.0f;
            dpixel[i][c] = 2.0f * d / (3.0f * float(n));
        }
        res.ray_errors[i] = e;
        sum += e;
    }
    res.loss_current = n ? sum / double(n) : 0.0;

    RenderGrads<float> grads;
    const bool train_mlp = network && targets.mlp;
    const bool train_encoder = network && targets.encoder;
    if (targets.grid) grads.grid.assign(grid.size(), 0.0f);
    if (train_mlp) grads.mlp.assign(net.mlp.parameter_count(), 0.0f);
    if (train_encoder) {
        if (sources.encoder_tapes.size() != sources.features.size()) {
            throw Error(ErrorKind::TapeError, "encoder training needs encoder tapes for every view");
        }
        for (const auto& fmap : sources.features) grads.features.push_back(TensorBuffer<float>(fmap.shape(), 0.0f));
    }
    if (n > 0) render_rays_backward<float>(in, tape, dpixel, march, grads);

    if (buffer && network && !batch.replay.empty()) {
        std::vector<const RaySampleRecord*> recs;
        recs.reserve(batch.replay.size());
        for (const auto& [b, idx] : batch.replay) recs.push_back(&buffer->queue(b)[idx]);
        const auto errs = replay_loss(net.mlp, recs, 1.0f / float(recs.size()),
                                      train_mlp ? std::span<float>(grads.mlp) : std::span<float>{});
        double rs = 0.0;
        for (float e : errs) rs += e;
        res.loss_replay = rs / double(errs.size());
        bool rescored = false;
        for (std::size_t i = 0; i < batch.replay.size(); ++i) {
            auto& rec = buffer->queue(batch.replay[i].first)[batch.replay[i].second];
            rec.error = errs[i];
            rescored = rescored || batch.replay[i].first == SubBuffer::Error;
        }
        if (rescored) buffer->resort_errors();
    }
    if (!std::isfinite(res.loss())) throw Error(ErrorKind::Diverged, "loss is not finite");

    if (targets.grid) {
        if (opt.grid.size() != grid.size()) opt.grid = Adam<float>(grid.size(), {cfg.lr_grid});
        opt.grid.step(grid.values(), grads.grid);
        clamp_below(grid, cfg.raw_floor);
    }
    if (train_mlp) {
        if (opt.mlp.size() != net.mlp.parameter_count()) opt.mlp = Adam<float>(net.mlp.parameter_count(), {cfg.lr_network});
        opt.mlp.step(net.mlp.mutable_values(), grads.mlp);
    }
    if (train_encoder) {
        std::vector<float> enc(net.encoder.parameter_count(), 0.0f);
        for (std::size_t v = 0; v < grads.features.size(); ++v) {
            const auto vals = grads.features[v].values();
            if (std::all_of(vals.begin(), vals.end(), [](float g) { return g == 0.0f; })) continue;
            encoder_backward(net.encoder, sources.encoder_tapes[v], grads.features[v], std::span<float>(enc));
        }
        if (opt.encoder.size() != enc.size()) opt.encoder = Adam<float>(enc.size(), {cfg.lr_network});
        opt.encoder.step(net.encoder.mutable_values(), enc);
    }
    return res;
}

void update_buffer(const TrainingBatch& batch, const RenderTape<float>& tape, const StepResult& result,
                   const MultiViewFrame& frame, const MultiViewFrame* next_frame, ExperienceBuffer& buffer,
                   const TrainConfig& cfg) {
    const std::size_t n = batch.pixels.size();
    std::vector<std::uint8_t> taken(n, 0);
    auto has_samples = [&](std::size_t i) {
        for (std::size_t s = tape.ray_begin[i]; s < tape.ray_begin[i + 1]; ++s)
            if (tape.active[s] >= 0) return true;
        return false;
    };
    auto make = [&](std::size_t i) {
        RaySampleRecord r = capture_record(tape, i, batch.targets[i], frame.time_index(), batch.pixels[i]);
        r.id = buffer.next_id();
        r.error = result.ray_errors[i];
        return r;
    };

    // error-ranked: offer rays from the highest error down until one is rejected
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return result.ray_errors[a] > result.ray_errors[b]; });
    const auto& qe = buffer.queue(SubBuffer::Error);
    for (std::size_t i : order) {
        if (!has_samples(i)) continue;
        if (qe.size() >= buffer.capacity(SubBuffer::Error) && !(result.ray_errors[i] > qe.back().error)) break;
        if (buffer.admit_error(make(i))) taken[i] = 1;
    }

    // motion: the same pixel changes by more than tau in the next frame
    if (next_frame) {
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i] || !has_samples(i)) continue;
            const auto& p = batch.pixels[i];
            const float* a = frame.image(p.view).texel(p.y, p.x);
            const float* b = next_frame->image(p.view).texel(p.y, p.x);
            float diff = 0.0f;
            for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(a[c] - b[c]));
            if (diff > float(buffer.tau())) {
                buffer.admit_motion(make(i));
                taken[i] = 1;
            }
        }
    }

    // stochastic: a uniform subset of the remaining rays
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && has_samples(i)) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), buffer.rng());
    const std::size_t m = std::min(rest.size(), static_cast<std::size_t>(std::max(0, cfg.random_admissions)));
    for (std::size_t i = 0; i < m; ++i) buffer.admit_random(make(rest[i]));
}

// ---------------------------------------------------------------------------
// Density fitting
// ---------------------------------------------------------------------------

double occupied_raw_threshold(double shift) {
    // softplus(x) > ln 2 exactly when x > 0
    return -shift;
}

std::size_t fill_enclosed(DensityGrid& grid, double occupied_raw, double interior_raw) {
    const GridDims d = grid.dims();
    auto values = grid.values();
    std::vector<std::uint8_t> reached(values.size(), 0);
    std::deque<std::array<int, 3>> queue;
    auto free_node = [&](int i, int j, int k) { return values[grid.index(i, j, k)] <= occupied_raw; };
    auto push = [&](int i, int j, int k) {
        const std::size_t id = grid.index(i, j, k);
        if (reached[id] || !free_node(i, j, k)) return;
        reached[id] = 1;
        queue.push_back({i, j, k});
    };
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i)
                if (i == 0 || j == 0 || k == 0 || i == d.nx - 1 || j == d.ny - 1 || k == d.nz - 1) push(i, j, k);
    while (!queue.empty()) {
        const auto [i, j, k] = queue.front();
        queue.pop_front();
        if (i > 0) push(i - 1, j, k);
        if (i + 1 < d.nx) push(i + 1, j, k);
        if (j > 0) push(i, j - 1, k);
        if (j + 1 < d.ny) push(i, j + 1, k);
        if (k > 0) push(i, j, k - 1);
        if (k + 1 < d.nz) push(i, j, k + 1);
    }
    std::size_t filled = 0;
    for (std::size_t id = 0; id < values.size(); ++id) {
        if (!reached[id] && values[id] <= occupied_raw) {
            values[id] = float(interior_raw);
            ++filled;
        }
    }
    return filled;
}

int fit_density_fixed_colors(const MultiViewFrame& frame, std::span<const int> train_views, DensityGrid& grid,
                             const TrainConfig& cfg, std::uint64_t seed, double* final_loss) {
    FrameSources<float> src =
        prepare_sources<float>(frame, nullptr, std::vector<int>(train_views.begin(), train_views.end()));
    BlendSettings blend;
    blend.k = cfg.init_views;
    blend.mode = BlendMode::Uniform;
    const RenderInputs<float> in = make_inputs<float>(src, grid, nullptr, blend, 0);
    RayMarchConfig march = cfg.march(true);
    march.min_weight = 0.0; // every sample needs a color while the grid is still transparent
    Adam<float> adam(grid.size(), {cfg.lr_grid});
    std::mt19937_64 rng(seed);
    ExperienceBuffer none;
    TrainConfig batch_cfg = cfg;
    batch_cfg.replay_fraction = 0.0;
    RenderTape<float> tape;
    RenderGrads<float> grads;
    std::vector<std::array<float, 3>> dpixel;
    double ema = 0.0;
    double window_start = -1.0;
    int it = 0;
    for (; it < cfg.init_max_iterations; ++it) {
        const TrainingBatch batch = make_batch(frame, train_views, none, batch_cfg, rng);
        const auto px = render_rays<float>(in, batch.rays, march, tape, &rng);
        const std::size_t n = px.size();
        dpixel.resize(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) {
                const float d = px[i][c] - batch.targets[i][c];
                sum += double(d) * d / 3.0;
                dpixel[i][c] = 2.0f * d / (3.0f * float(n));
            }
        }
        const double loss = sum / double(n);
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::InitDiverged, "density fit diverged at frame " + std::to_string(frame.time_index()));
        }
        ema = it == 0 ? loss : 0.9 * ema + 0.1 * loss;
        grads.grid.assign(grid.size(), 0.0f);
        render_rays_backward<float>(in, tape, dpixel, march, grads);
        adam.step(grid.values(), grads.grid);
        clamp_below(grid, cfg.raw_floor);
        if ((it + 1) % cfg.init_window == 0) {
            if (window_start >= 0.0 && it + 1 >= cfg.init_min_iterations &&
                window_start - ema < cfg.init_plateau_tol * window_start) {
                ++it;
                break;
            }
            window_start = ema;
        }
    }
    if (final_loss) *final_loss = ema;
    return it;
}

AlignedGroupGrids coarse_density_init(const SequenceGroup& group, const std::optional<DensityGrid>& prev_grid,
                                      const Aabb& bbox, const TrainConfig& cfg, std::uint64_t seed,
                                      InitReport* report) {
    validate_group(group);
    if (group.frames.empty()) throw Error(ErrorKind::InvalidArgument, "empty group");
    const auto views = training_views(group.frames.front().view_count(), cfg);
    DensityGrid start(cfg.grid_dims, bbox, float(cfg.init_raw));
    if (prev_grid) {
        if (prev_grid->dims() == start.dims() && prev_grid->bbox().min == bbox.min && prev_grid->bbox().max == bbox.max) {
            start = *prev_grid;
        } else {
            for (int k = 0; k < start.dims().nz; ++k)
                for (int j = 0; j < start.dims().ny; ++j)
                    for (int i = 0; i < start.dims().nx; ++i)
                        start.at(i, j, k) = interp_density(*prev_grid, start.node_position(i, j, k), float(cfg.init_raw));
        }
    }
    std::vector<DensityGrid> grids;
    grids.reserve(group.frames.size());
    std::seed_seq seq{seed, std::uint64_t(group.group_start)};
    std::mt19937_64 seeder(seq);
    for (std::size_t f = 0; f < group.frames.size(); ++f) {
        DensityGrid g = f == 0 ? start : grids.back();
        double loss = 0.0;
        const int iters = fit_density_fixed_colors(group.frames[f], views, g, cfg, seeder(), &loss);
        if (cfg.fill_interior) fill_enclosed(g, occupied_raw_threshold(), cfg.interior_raw);
        if (report) {
            report->iterations.push_back(iters);
            report->final_loss.push_back(loss);
        }
        grids.push_back(std::move(g));
    }
    return align_group(grids, float(kEmptyRawDensity));
}

// ---------------------------------------------------------------------------
// Group training
// ---------------------------------------------------------------------------

TrainerState make_trainer_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainerState s;
    s.net = BlendNetwork<float>(cfg.feature_dim, cfg.k);
    s.net.init(cfg.seed);
    s.buffer = ExperienceBuffer(cfg.capacity_e, cfg.capacity_m, cfg.capacity_r, cfg.tau, cfg.seed ^ 0x5bd1e995ULL);
    return s;
}

void TrainLog::step(int step, int frame, int group, double loss_current, double loss_replay,
                    std::optional<double> psnr_val) {
    if (!out_) return;
    json j;
    j["step"] = step;
    j["frame"] = frame;
    j["group"] = group;
    j["loss_current"] = loss_current;
    j["loss_replay"] = loss_replay;
    if (psnr_val) j["psnr_val"] = *psnr_val;
    *out_ << j.dump() << "\n";
    out_->flush();
}

void TrainLog::event(const std::string& json_line) {
    if (!out_) return;
    *out_ << json_line << "\n";
    out_->flush();
}

AlignedGroupGrids train_group(const SequenceGroup& group, const Aabb& bbox, TrainerState& state,
                              const TrainConfig& cfg, TrainLog* log, GroupReport* report) {
    cfg.validate();
    validate_group(group);
    const int group_index = state.groups_done;
    std::seed_seq seq{cfg.seed, std::uint64_t(group.group_start), std::uint64_t(0x6e657672)};
    std::mt19937_64 rng(seq);

    InitReport init;
    AlignedGroupGrids grids = coarse_density_init(group, state.last_grid, bbox, cfg, rng(), &init);
    const auto views = training_views(group.frames.front().view_count(), cfg);
    const bool network = cfg.blend_net;
    const bool replay = network && cfg.replay_fraction > 0.0;
    const bool encoder_trains = network && (group_index == 0 || cfg.train_encoder_after_first_group);
    GroupReport rep;
    rep.init = init;
    int step = 0;

    for (std::size_t f = 0; f < group.frames.size(); ++f) {
        const MultiViewFrame& frame = group.frames[f];
        DensityGrid& grid = grids.grids[f];
        const bool first = f == 0;
        StepTargets targets;
        targets.grid = true;
        targets.mlp = first && network;
        targets.encoder = first && encoder_trains;
        const int iterations = first ? cfg.cl_iterations : cfg.density_iterations;
        Optimizers opt;
        FrameSources<float> sources =
            prepare_sources<float>(frame, network ? &state.net.encoder : nullptr, views, targets.encoder);
        const MultiViewFrame* next = f + 1 < group.frames.size() ? &group.frames[f + 1] : nullptr;
        RenderTape<float> tape;
        StepResult res;
        for (int it = 0; it < iterations; ++it) {
            if (targets.encoder && it > 0) sources = prepare_sources<float>(frame, &state.net.encoder, views, true);
            const ExperienceBuffer& source_buffer = state.buffer;
            TrainConfig step_cfg = cfg;
            if (!(first && replay)) step_cfg.replay_fraction = 0.0;
            const TrainingBatch batch = make_batch(frame, views, source_buffer, step_cfg, rng);
            res = train_step(batch, sources, grid, state.net, (first && replay) ? &state.buffer : nullptr, cfg, targets,
                             opt, rng, &tape);
            if (first && replay) update_buffer(batch, tape, res, frame, next, state.buffer, cfg);
            if (first && it == 0) rep.cl_first_loss = res.loss();
            if (log && (it % std::max(1, cfg.log_every) == 0 || it + 1 == iterations)) {
                log->step(step, frame.time_index(), group_index, res.loss_current, res.loss_replay);
            }
            ++step;
        }
        if (first) rep.cl_last_loss = res.loss();
        rep.frame_loss.push_back(res.loss());
    }
    state.last_grid = grids.grids.back();
    ++state.groups_done;
    if (report) *report = rep;
    return grids;
}

Image render_view(const MultiViewFrame& frame, const DensityGrid& grid, const BlendNetwork<float>& net,
                  const TrainConfig& cfg, const Camera& camera, int threads) {
    const auto views = training_views(frame.view_count(), cfg);
    FrameSources<float> src = prepare_sources<float>(frame, cfg.blend_net ? &net.encoder : nullptr, views);
    const RenderInputs<float> in =
        make_inputs<float>(src, grid, cfg.blend_net ? &net.mlp : nullptr, cfg.blend(cfg.k), net.feature_dim);
    return render_image(in, camera, cfg.march(false), threads);
}

} // namespace nevrf
