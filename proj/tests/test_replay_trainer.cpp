// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "nevrf/replay_trainer.hpp"
#include "nevrf/synth_oracle.hpp"
#include "support/oracles.hpp"

using namespace nevrf;

namespace {

SceneSpec tiny_spec(int frames = 3) {
    SceneSpec s = default_scene(frames);
    s.rig.cameras = 6;
    s.rig.focal = 18.0;
    s.width = 16;
    s.height = 16;
    s.supersample = 1;
    return s;
}

MultiViewFrame synth_frame(const SceneSpec& spec, int t) {
    const auto cams = make_rig(spec);
    std::vector<Image> imgs;
    for (const auto& c : cams) imgs.push_back(analytic_render(spec, t, c).image);
    return MultiViewFrame(t, cams, imgs);
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.batch_rays = 128;
    c.grid_dims = {12, 12, 12};
    c.n_s = 24;
    c.feature_dim = 4;
    c.k = 3;
    c.cl_iterations = 30;
    c.density_iterations = 10;
    c.init_max_iterations = 40;
    c.init_min_iterations = 20;
    c.capacity_e = 64;
    c.capacity_m = 64;
    c.capacity_r = 64;
    c.random_admissions = 16;
    c.seed = 3;
    return c;
}

RaySampleRecord dummy_record(float error) {
    RaySampleRecord r;
    r.k = 2;
    r.feature_dim = 2;
    r.error = error;
    r.weights = {0.5f};
    r.valid = {1, 0};
    r.colors = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
    r.rows.assign(2 * blend_input_width(2), 0.25f);
    r.account();
    return r;
}

} // namespace

TEST(TrainConfig, JsonRoundTrip) {
    TrainConfig c = tiny_config();
    c.test_views = {1, 4};
    c.background = Vec3(0.1, 0.2, 0.3);
    const TrainConfig d = train_config_from_json(train_config_to_json(c));
    EXPECT_EQ(train_config_to_json(c), train_config_to_json(d));
    EXPECT_EQ(d.test_views, c.test_views);
    EXPECT_EQ(d.grid_dims, c.grid_dims);
}

TEST(TrainConfig, RejectsUnknownAndInvalid) {
    EXPECT_THROW(train_config_from_json(R"({"batch_rayz": 3})"), Error);
    EXPECT_THROW(train_config_from_json(R"({"replay_fraction": 1.5})"), Error);
    EXPECT_THROW(train_config_from_json(R"({"n_s": 1})"), Error);
    EXPECT_THROW(train_config_from_json(R"({"grid_dims": [4, 4]})"), Error);
    EXPECT_THROW(train_config_from_json("[1, 2]"), Error);
    EXPECT_THROW(train_config_from_json("{"), Error);
}

TEST(TrainingViews, ExcludesTestViews) {
    TrainConfig c;
    c.test_views = {0, 3};
    EXPECT_EQ(training_views(5, c), (std::vector<int>{1, 2, 4}));
}

TEST(Buffer, ErrorQueueKeepsTopErrors) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ExperienceBuffer b(16, 4, 4, 0.05, 1);
    std::vector<float> all;
    for (int i = 0; i < 200; ++i) {
        const float e = u(rng);
        all.push_back(e);
        RaySampleRecord r = dummy_record(e);
        r.id = b.next_id();
        b.admit_error(std::move(r));
    }
    std::sort(all.begin(), all.end(), std::greater<>());
    const auto& q = b.queue(SubBuffer::Error);
    ASSERT_EQ(q.size(), 16u);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(q[i].error, all[i]);
    EXPECT_FALSE(b.admit_error(dummy_record(all[15])));
}

TEST(Buffer, EvictingQueuesStayBounded) {
    ExperienceBuffer b(4, 8, 8, 0.05, 9);
    std::set<std::uint64_t> alive;
    for (int i = 0; i < 100; ++i) {
        RaySampleRecord r = dummy_record(0.1f);
        r.id = b.next_id();
        alive.insert(r.id);
        const auto evicted = b.admit_motion(std::move(r));
        if (i < 8) {
            EXPECT_FALSE(evicted.has_value());
        } else {
            ASSERT_TRUE(evicted.has_value());
            EXPECT_EQ(alive.erase(*evicted), 1u);
            EXPECT_FALSE(b.contains(*evicted));
        }
        EXPECT_LE(b.queue(SubBuffer::Motion).size(), 8u);
    }
    for (auto id : alive) EXPECT_TRUE(b.contains(id));
}

TEST(Buffer, DrawIsProportionalToSize) {
    ExperienceBuffer b(10, 30, 60, 0.05, 2);
    for (int i = 0; i < 10; ++i) b.admit_error(dummy_record(float(i)));
    for (int i = 0; i < 30; ++i) b.admit_motion(dummy_record(0));
    for (int i = 0; i < 60; ++i) b.admit_random(dummy_record(0));
    std::mt19937_64 rng(5);
    const auto d = b.draw(100000, rng);
    std::map<SubBuffer, int> counts;
    std::map<std::size_t, int> idx_e;
    for (const auto& [q, i] : d) {
        ++counts[q];
        ASSERT_LT(i, b.queue(q).size());
        if (q == SubBuffer::Error) ++idx_e[i];
    }
    EXPECT_NEAR(counts[SubBuffer::Error] / 1e5, 0.1, 0.01);
    EXPECT_NEAR(counts[SubBuffer::Motion] / 1e5, 0.3, 0.01);
    EXPECT_NEAR(counts[SubBuffer::Random] / 1e5, 0.6, 0.01);
    for (const auto& [i, c] : idx_e) EXPECT_NEAR(c / double(counts[SubBuffer::Error]), 0.1, 0.02);
    ExperienceBuffer empty;
    EXPECT_TRUE(empty.draw(10, rng).empty());
}

TEST(Buffer, SerializeRoundTrip) {
    ExperienceBuffer b(4, 4, 4, 0.07, 11);
    for (int i = 0; i < 9; ++i) {
        RaySampleRecord r = dummy_record(float(i) * 0.1f);
        r.id = b.next_id();
        if (i % 3 == 0) b.admit_error(std::move(r));
        else if (i % 3 == 1) b.admit_motion(std::move(r));
        else b.admit_random(std::move(r));
    }
    const auto bytes = b.serialize();
    ExperienceBuffer c = ExperienceBuffer::deserialize(bytes);
    EXPECT_EQ(c.serialize(), bytes);
    EXPECT_EQ(c.size(), b.size());
    EXPECT_EQ(c.bytes(), b.bytes());
    // the restored RNG continues the same stream
    EXPECT_EQ(b.admit_motion(dummy_record(0)), c.admit_motion(dummy_record(0)));

    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(ExperienceBuffer::deserialize(bad), Error);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    EXPECT_THROW(ExperienceBuffer::deserialize(cut), Error);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(ExperienceBuffer::deserialize(extra), Error);
}

TEST(Buffer, StatsHistogramCountsEveryRecord) {
    ExperienceBuffer b(8, 8, 8, 0.05, 1);
    for (int i = 0; i < 8; ++i) b.admit_error(dummy_record(float(i)));
    for (int i = 0; i < 3; ++i) b.admit_random(dummy_record(0.5f));
    const auto s = buffer_stats(b, 4);
    EXPECT_EQ(s.count_e, 8u);
    EXPECT_EQ(s.count_r, 3u);
    std::size_t total = 0;
    for (auto h : s.histogram) total += h;
    EXPECT_EQ(total, 11u);
    EXPECT_EQ(s.histogram_edges.size(), 5u);
    EXPECT_DOUBLE_EQ(s.histogram_edges.back(), 7.0);
    EXPECT_NE(buffer_stats_json(s).find("\"count_e\": 8"), std::string::npos);
}

TEST(Batch, SplitsCurrentAndReplay) {
    const SceneSpec spec = tiny_spec();
    const MultiViewFrame frame = synth_frame(spec, 0);
    TrainConfig cfg = tiny_config();
    cfg.batch_rays = 100;
    cfg.replay_fraction = 0.2;
    const std::vector<int> views{0, 2, 3};
    std::mt19937_64 rng(1);
    ExperienceBuffer empty;
    const auto a = make_batch(frame, views, empty, cfg, rng);
    EXPECT_EQ(a.rays.size(), 100u);
    EXPECT_TRUE(a.replay.empty());
    ExperienceBuffer full(4, 4, 4, 0.05, 1);
    full.admit_random(dummy_record(0));
    const auto b = make_batch(frame, views, full, cfg, rng);
    EXPECT_EQ(b.rays.size(), 80u);
    EXPECT_EQ(b.replay.size(), 20u);
    for (std::size_t i = 0; i < b.pixels.size(); ++i) {
        const auto& p = b.pixels[i];
        EXPECT_NE(std::find(views.begin(), views.end(), p.view), views.end());
        const float* t = frame.image(p.view).texel(p.y, p.x);
        EXPECT_EQ(b.targets[i][0], t[0]);
        EXPECT_EQ(b.targets[i][2], t[2]);
        const Ray expect = generate_ray(frame.camera(p.view), Vec2(p.x + 0.5, p.y + 0.5));
        EXPECT_LT((b.rays[i].ray.direction - expect.direction).norm(), 1e-12);
        EXPECT_EQ(b.rays[i].exclude_view, p.view);
    }
}

// A record replayed through the unchanged MLP reproduces the rendered pixel,
// and its MLP gradient equals the renderer's gradient with the grid held fixed.
TEST(Replay, RecordReproducesRendererAndItsGradient) {
    const SceneSpec spec = tiny_spec();
    const MultiViewFrame frame = synth_frame(spec, 0);
    TrainConfig cfg = tiny_config();
    cfg.batch_rays = 48;
    cfg.jitter = false;
    BlendNetwork<float> net(cfg.feature_dim, cfg.k);
    net.init(4);
    DensityGrid grid(cfg.grid_dims, spec.bbox, 0.0f);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(-3.0f, 4.0f);
    for (auto& v : grid.values()) v = u(rng);
    const auto views = training_views(frame.view_count(), cfg);
    const FrameSources<float> src = prepare_sources<float>(frame, &net.encoder, views);
    const auto in = make_inputs<float>(src, grid, &net.mlp, cfg.blend(cfg.k), cfg.feature_dim);
    ExperienceBuffer none;
    const auto batch = make_batch(frame, views, none, cfg, rng);
    RenderTape<float> tape;
    const auto px = render_rays<float>(in, batch.rays, cfg.march(false), tape);

    std::vector<RaySampleRecord> recs;
    for (std::size_t i = 0; i < batch.rays.size(); ++i) recs.push_back(capture_record(tape, i, batch.targets[i], 0, batch.pixels[i]));
    std::vector<const RaySampleRecord*> ptrs;
    for (const auto& r : recs) ptrs.push_back(&r);
    std::vector<float> g_replay(net.mlp.parameter_count(), 0.0f);
    const auto errs = replay_loss(net.mlp, ptrs, 1.0f / float(ptrs.size()), g_replay);

    std::vector<std::array<float, 3>> dpixel(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        float e = 0.0f;
        for (int c = 0; c < 3; ++c) {
            const float d = px[i][c] - batch.targets[i][c];
            e += d * d / 3.0f;
            dpixel[i][c] = 2.0f * d / (3.0f * float(px.size()));
        }
        EXPECT_NEAR(errs[i], e, 1e-5f) << "ray " << i;
    }
    RenderGrads<float> g_render;
    g_render.mlp.assign(net.mlp.parameter_count(), 0.0f);
    render_rays_backward<float>(in, tape, dpixel, cfg.march(false), g_render);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t p = 0; p < g_replay.size(); ++p) {
        num += double(g_replay[p] - g_render.mlp[p]) * (g_replay[p] - g_render.mlp[p]);
        den += double(g_render.mlp[p]) * g_render.mlp[p];
    }
    ASSERT_GT(den, 0.0);
    EXPECT_LT(std::sqrt(num / den), 1e-4);
}

TEST(Replay, RecordHoldsNoPerViewImages) {
    const RaySampleRecord r = dummy_record(0.0f);
    EXPECT_EQ(r.payload_bytes(), r.rows.size() * 4 + r.valid.size() + r.colors.size() * 4 + r.weights.size() * 4 +
                                     sizeof(RaySampleRecord));
    std::vector<float> g;
    const RaySampleRecord* p = &r;
    MlpParams<float> wrong(blend_mlp_sizes(5));
    EXPECT_THROW(replay_loss(wrong, std::span<const RaySampleRecord* const>(&p, 1), 1.0f, g), Error);
}

TEST(UpdateBuffer, SubBuffersAreDisjointAndMotionIsTriggered) {
    const SceneSpec spec = tiny_spec(12);
    const MultiViewFrame f0 = synth_frame(spec, 0);
    const MultiViewFrame f1 = synth_frame(spec, 6);
    TrainConfig cfg = tiny_config();
    cfg.batch_rays = 256;
    cfg.capacity_e = 16;
    BlendNetwork<float> net(cfg.feature_dim, cfg.k);
    net.init(1);
    DensityGrid grid(cfg.grid_dims, spec.bbox, 1.0f);
    const auto views = training_views(f0.view_count(), cfg);
    FrameSources<float> src = prepare_sources<float>(f0, &net.encoder, views);
    ExperienceBuffer buf(cfg.capacity_e, cfg.capacity_m, cfg.capacity_r, cfg.tau, 1);
    std::mt19937_64 rng(8);
    Optimizers opt;
    for (int step = 0; step < 3; ++step) {
        const auto batch = make_batch(f0, views, buf, cfg, rng);
        RenderTape<float> tape;
        const auto res = train_step(batch, src, grid, net, &buf, cfg, StepTargets{}, opt, rng, &tape);
        update_buffer(batch, tape, res, f0, &f1, buf, cfg);
    }
    std::set<std::uint64_t> ids;
    for (auto q : {SubBuffer::Error, SubBuffer::Motion, SubBuffer::Random})
        for (const auto& r : buf.queue(q)) EXPECT_TRUE(ids.insert(r.id).second) << "duplicate id " << r.id;
    EXPECT_EQ(buf.queue(SubBuffer::Error).size(), 16u);
    ASSERT_FALSE(buf.queue(SubBuffer::Motion).empty());
    for (const auto& r : buf.queue(SubBuffer::Motion)) {
        const int x = int(r.px);
        const int y = int(r.py);
        const float* a = f0.image(r.view).texel(y, x);
        const float* b = f1.image(r.view).texel(y, x);
        float diff = 0.0f;
        for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(a[c] - b[c]));
        EXPECT_GT(diff, float(cfg.tau));
    }
    for (std::size_t i = 1; i < buf.queue(SubBuffer::Error).size(); ++i)
        EXPECT_GE(buf.queue(SubBuffer::Error)[i - 1].error, buf.queue(SubBuffer::Error)[i].error);
}

TEST(Density, OccupiedThresholdIsHalfOpacity) {
    EXPECT_NEAR(raw_to_alpha(occupied_raw_threshold(), 1.0), 0.5, 1e-12);
}

TEST(Density, FillEnclosedFillsOnlyClosedCavities) {
    DensityGrid g({8, 8, 8}, Aabb{Vec3::Constant(-1), Vec3::Constant(1)}, -6.0f);
    for (int k = 1; k <= 6; ++k)
        for (int j = 1; j <= 6; ++j)
            for (int i = 1; i <= 6; ++i)
                if (i == 1 || i == 6 || j == 1 || j == 6 || k == 1 || k == 6) g.at(i, j, k) = 10.0f;
    DensityGrid open = g;
    EXPECT_EQ(fill_enclosed(g, 2.0, 8.0), 64u);
    EXPECT_EQ(g.at(3, 3, 3), 8.0f);
    EXPECT_EQ(g.at(0, 0, 0), -6.0f);
    open.at(1, 3, 3) = -6.0f; // a hole in the shell
    EXPECT_EQ(fill_enclosed(open, 2.0, 8.0), 0u);
}

TEST(Density, FixedColorFitReducesLoss) {
    const SceneSpec spec = tiny_spec();
    const MultiViewFrame frame = synth_frame(spec, 0);
    TrainConfig cfg = tiny_config();
    cfg.init_max_iterations = 1;
    cfg.init_min_iterations = 0;
    const auto views = training_views(frame.view_count(), cfg);
    DensityGrid g0(cfg.grid_dims, spec.bbox, float(cfg.init_raw));
    double first = 0.0;
    fit_density_fixed_colors(frame, views, g0, cfg, 1, &first);
    cfg.init_max_iterations = 80;
    cfg.init_min_iterations = 80;
    DensityGrid g1(cfg.grid_dims, spec.bbox, float(cfg.init_raw));
    double last = 0.0;
    EXPECT_EQ(fit_density_fixed_colors(frame, views, g1, cfg, 1, &last), 80);
    EXPECT_LT(last, 0.5 * first);
}

TEST(TrainGroup, RunsAndIsDeterministic) {
    const SceneSpec spec = tiny_spec(3);
    SequenceGroup group;
    for (int t = 0; t < 3; ++t) group.frames.push_back(synth_frame(spec, t));
    group.group_start = 0;
    group.group_end = 2;
    const TrainConfig cfg = tiny_config();
    auto run = [&] {
        TrainerState st = make_trainer_state(cfg);
        std::ostringstream log_text;
        TrainLog log(&log_text);
        GroupReport rep;
        AlignedGroupGrids g = train_group(group, spec.bbox, st, cfg, &log, &rep);
        return std::make_tuple(std::move(g), std::move(st), log_text.str(), rep);
    };
    auto [ga, sa, la, ra] = run();
    auto [gb, sb, lb, rb] = run();
    ASSERT_EQ(ga.grids.size(), 3u);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_TRUE(std::equal(ga.grids[f].values().begin(), ga.grids[f].values().end(), gb.grids[f].values().begin()));
    EXPECT_EQ(la, lb);
    EXPECT_EQ(sa.buffer.serialize(), sb.buffer.serialize());
    EXPECT_EQ(sa.groups_done, 1);
    EXPECT_TRUE(sa.last_grid.has_value());
    EXPECT_FALSE(sa.buffer.empty());
    EXPECT_TRUE(std::isfinite(ra.cl_last_loss));

    // without replay the logged loss is the photometric term alone and must fall
    TrainConfig plain = cfg;
    plain.replay_fraction = 0.0;
    TrainerState st = make_trainer_state(plain);
    GroupReport rep;
    train_group(group, spec.bbox, st, plain, nullptr, &rep);
    EXPECT_LT(rep.cl_last_loss, rep.cl_first_loss);
    EXPECT_TRUE(st.buffer.empty());
    EXPECT_EQ(ra.frame_loss.size(), 3u);
    EXPECT_NE(la.find("\"loss_replay\""), std::string::npos);
}
