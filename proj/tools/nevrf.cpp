// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
//
// nevrf synth|train|render|eval|density|buffer-stats
//
// Exit codes: 0 ok, 1 other failure, 2 bad config or arguments, 3 I/O or
// malformed file, 4 missing artifact, 5 eval filename mismatch.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nevrf/binary_io.hpp"
#include "nevrf/checkpoint.hpp"
#include "nevrf/density_codec.hpp"
#include "nevrf/density_grid.hpp"
#include "nevrf/image_io.hpp"
#include "nevrf/memory_ledger.hpp"
#include "nevrf/replay_trainer.hpp"
#include "nevrf/scene_model.hpp"
#include "nevrf/synth_oracle.hpp"
#include "nevrf/volume_renderer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nevrf;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kMissing = 4, kMismatch = 5 };

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError{code, message}; }

int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::InvalidArgument:
        return kConfig;
    case ErrorKind::Io:
    case ErrorKind::FormatError:
        return kIo;
    default:
        return kOther;
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(kIo, "cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(kIo, "cannot write " + path.string());
    out << text;
    if (!out) fail(kIo, "failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail(kIo, "cannot create directory " + dir.string());
    // create_directories succeeds on existing read-only directories; probe writability
    const fs::path probe = dir / ".nevrf_write_probe";
    {
        std::ofstream out(probe);
        if (!out) fail(kIo, "directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) fail(kMissing, std::string(what) + " not found: " + path.string());
}

std::string group_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "group_%04d", index);
    return buf;
}

std::string frame_view_name(int frame, int view) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "f%04d_v%02d.png", frame, view);
    return buf;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) fail(kMissing, "directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// shared training options

struct TrainFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool no_replay = false;
    bool no_blend_net = false;
    std::optional<double> eta;
    std::optional<int> block_size;
    std::optional<int> group_size;
    std::optional<int> ns;
};

TrainConfig resolve_config(const TrainFlags& f, const DatasetManifest& manifest) {
    TrainConfig cfg;
    bool background_set = false;
    if (!f.config.empty()) {
        if (!fs::is_regular_file(f.config)) fail(kConfig, "config file not found: " + f.config);
        const std::string text = read_text(f.config);
        cfg = train_config_from_json(text);
        background_set = json::parse(text).contains("background");
    }
    if (!background_set && manifest.background) cfg.background = *manifest.background;
    if (f.seed) cfg.seed = *f.seed;
    if (f.no_replay) cfg.replay_fraction = 0.0;
    if (f.no_blend_net) cfg.blend_net = false;
    if (f.group_size) cfg.group_size = *f.group_size;
    if (f.ns) cfg.n_s = *f.ns;
    cfg.validate();
    return cfg;
}

CompressOptions codec_options(const TrainFlags& f) {
    CompressOptions o;
    if (f.eta) o.eta = *f.eta;
    if (f.block_size) o.block_size = *f.block_size;
    if (!(o.eta > 0.0 && o.eta <= 1.0)) fail(kConfig, "--eta must be in (0, 1]");
    if (o.block_size < 1 || o.block_size > 64) fail(kConfig, "--block-size must be in [1, 64]");
    return o;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const std::string& spec_path, const std::string& out, int frames, std::optional<std::uint64_t> seed,
              int threads) {
    SceneSpec spec = default_scene(frames > 0 ? frames : 20);
    if (!spec_path.empty()) {
        if (!fs::is_regular_file(spec_path)) fail(kConfig, "scene spec not found: " + spec_path);
        spec = parse_scene_spec(read_text(spec_path));
        if (frames > 0) spec.frames = frames;
    }
    if (seed) spec.seed = *seed;
    ensure_dir(out);
    const DatasetInfo info = make_dataset(spec, out, threads);
    std::cout << "manifest " << info.manifest.string() << "\n"
              << "frames " << spec.frames << " views " << spec.rig.cameras << " images " << info.images << " size "
              << spec.width << "x" << spec.height << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train

struct RunIndex {
    std::string dataset;
    int next_frame = 0;
    json groups = json::array();
};

RunIndex read_index(const fs::path& run) {
    const fs::path p = run / "index.json";
    require_file(p, "run index");
    RunIndex idx;
    try {
        const json j = json::parse(read_text(p));
        idx.dataset = j.at("dataset").get<std::string>();
        idx.next_frame = j.at("next_frame").get<int>();
        idx.groups = j.at("groups");
    } catch (const json::exception& e) {
        fail(kIo, "malformed run index " + p.string() + ": " + e.what());
    }
    return idx;
}

void write_index(const fs::path& run, const RunIndex& idx) {
    json j;
    j["dataset"] = idx.dataset;
    j["next_frame"] = idx.next_frame;
    j["groups"] = idx.groups;
    j["peak_image_bytes"] = MemoryLedger::instance().peak(MemoryCategory::FrameImages);
    j["peak_record_bytes"] = MemoryLedger::instance().peak(MemoryCategory::ReplayRecords);
    j["peak_total_bytes"] = MemoryLedger::instance().peak_total();
    write_text(run / "index.json", j.dump(2) + "\n");
}

std::optional<double> heldout_psnr(const MultiViewFrame& frame, const DensityGrid& grid, const BlendNetwork<float>& net,
                                   const TrainConfig& cfg, int threads) {
    if (cfg.test_views.empty()) return std::nullopt;
    double sum = 0.0;
    for (int v : cfg.test_views) {
        const Image img = render_view(frame, grid, net, cfg, frame.camera(static_cast<std::size_t>(v)), threads);
        sum += psnr(img, frame.image(static_cast<std::size_t>(v)));
    }
    return sum / double(cfg.test_views.size());
}

void save_state(const fs::path& run, const TrainerState& state) {
    ensure_dir(run / "state");
    const auto buf = state.buffer.serialize();
    write_file_bytes((run / "state" / "buffer.nvrb").string(), buf);
    if (state.last_grid) write_grid_dump(run / "state" / "last_grid.nvgd", *state.last_grid);
}

int cmd_train(const std::string& data, const std::string& out, const TrainFlags& flags, bool resume, int max_groups,
              bool dump_grids, int threads) {
    require_file(data, "dataset manifest");
    const DatasetManifest manifest = load_manifest(data);
    const fs::path run(out);
    ensure_dir(run);
    const CompressOptions codec = codec_options(flags);

    TrainConfig cfg;
    TrainerState state;
    RunIndex index;
    if (resume && fs::exists(run / "index.json")) {
        index = read_index(run);
        if (index.groups.empty()) fail(kMissing, "run has no completed group to resume from");
        const int last = index.groups.back().at("index").get<int>();
        const fs::path ck_path = run / group_dir_name(last) / "checkpoint.nvck";
        require_file(ck_path, "checkpoint");
        Checkpoint ck = read_checkpoint(ck_path);
        cfg = ck.config;
        state.net = std::move(ck.net);
        state.groups_done = ck.groups_done;
        const fs::path buf_path = run / "state" / "buffer.nvrb";
        require_file(buf_path, "replay buffer state");
        state.buffer = ExperienceBuffer::deserialize(read_file_bytes(buf_path.string()));
        const fs::path grid_path = run / "state" / "last_grid.nvgd";
        require_file(grid_path, "last grid state");
        state.last_grid = read_grid_dump(grid_path);
    } else {
        cfg = resolve_config(flags, manifest);
        state = make_trainer_state(cfg);
        index.dataset = fs::absolute(data).lexically_normal().string();
        std::ofstream(run / "log.jsonl", std::ios::trunc);
    }
    write_text(run / "config.json", train_config_to_json(cfg) + "\n");

    std::ofstream log_stream(run / "log.jsonl", std::ios::app);
    if (!log_stream) fail(kIo, "cannot open training log");
    TrainLog log(&log_stream);
    const int frames = static_cast<int>(manifest.frame_count());
    int trained = 0;
    for (int start = index.next_frame; start < frames; start += cfg.group_size) {
        if (max_groups > 0 && trained >= max_groups) break;
        const int gi = state.groups_done;
        SequenceGroup group = load_group(manifest, start, cfg.group_size);
        GroupReport report;
        AlignedGroupGrids grids;
        try {
            grids = train_group(group, manifest.bbox, state, cfg, &log, &report);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Diverged || e.kind() == ErrorKind::InitDiverged) {
                log.event(json{{"event", "diverged"}, {"group", gi}, {"message", e.what()}}.dump());
                save_state(run, state);
                write_index(run, index);
            }
            throw;
        }
        const fs::path gdir = run / group_dir_name(gi);
        ensure_dir(gdir);
        const CompressedDensityGroup packed = compress(grids, codec);
        write_container(gdir / "density.nvdc", packed);
        Checkpoint ck;
        ck.config = cfg;
        ck.net = state.net;
        ck.groups_done = state.groups_done;
        ck.group_start = group.group_start;
        ck.group_frames = static_cast<int>(group.frames.size());
        write_checkpoint(gdir / "checkpoint.nvck", ck);
        if (dump_grids) {
            ensure_dir(gdir / "grids");
            for (std::size_t f = 0; f < grids.grids.size(); ++f) {
                char name[32];
                std::snprintf(name, sizeof(name), "frame_%04d.nvgd", group.group_start + static_cast<int>(f));
                write_grid_dump(gdir / "grids" / name, grids.grids[f]);
            }
        }

        json ev{{"event", "group_done"},
                {"group", gi},
                {"group_start", group.group_start},
                {"frames", group.frames.size()},
                {"init_iterations", report.init.iterations},
                {"cl_first_loss", report.cl_first_loss},
                {"cl_last_loss", report.cl_last_loss},
                {"k", packed.k},
                {"kept_rows", packed.kept_rows.size()},
                {"container_bytes", container_bytes(packed.kept_rows.size(), packed.k, packed.layout().row_width())}};
        if (!cfg.test_views.empty()) {
            const AlignedGroupGrids stored = decompress(packed);
            json val = json::array();
            for (std::size_t f : {std::size_t(0), group.frames.size() - 1}) {
                const auto p = heldout_psnr(group.frames[f], stored.grids[f], state.net, cfg, threads);
                val.push_back({{"frame", group.frames[f].time_index()}, {"psnr_val", *p}});
                if (group.frames.size() == 1) break;
            }
            ev["heldout"] = val;
        }
        log.event(ev.dump());
        index.groups.push_back({{"index", gi},
                                {"dir", group_dir_name(gi)},
                                {"group_start", group.group_start},
                                {"frames", group.frames.size()}});
        index.next_frame = group.group_end + 1;
        save_state(run, state);
        write_index(run, index);
        std::cout << "group " << gi << " frames " << group.group_start << "-" << group.group_end << " loss "
                  << report.cl_last_loss << " k " << packed.k << " kept " << packed.kept_rows.size() << "\n";
        ++trained;
    }
    std::cout << "peak accounted bytes: images " << MemoryLedger::instance().peak(MemoryCategory::FrameImages)
              << " records " << MemoryLedger::instance().peak(MemoryCategory::ReplayRecords) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// render

std::vector<Camera> orbit_cameras(const DatasetManifest& m, int count) {
    if (m.cameras.empty()) fail(kConfig, "dataset has no cameras");
    const Vec3 target = m.bbox.center();
    double radius = 0.0;
    double height = 0.0;
    for (const auto& c : m.cameras) {
        const Vec3 d = c.center() - target;
        radius += d.norm();
        height += d.z();
    }
    radius /= double(m.cameras.size());
    height /= double(m.cameras.size());
    const double elev = std::asin(std::clamp(height / radius, -1.0, 1.0));
    const Camera& ref = m.cameras.front();
    std::vector<Camera> out;
    for (int i = 0; i < count; ++i) {
        const double az = 2.0 * std::numbers::pi * (i + 0.5) / count;
        const Vec3 eye = target + radius * Vec3(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev));
        out.push_back(Camera::look_at(eye, target, Vec3(0, 0, 1), ref.intrinsics()(0, 0), ref.width(), ref.height()));
    }
    return out;
}

struct RenderArgs {
    std::string run;
    std::string checkpoint;
    std::string density;
    std::optional<int> group_start;
    std::string data;
    int frame = 0;
    std::vector<int> cameras;
    int orbit = 0;
    std::string out;
    std::optional<int> ns;
    int threads = 0;
};

int cmd_render(const RenderArgs& a) {
    fs::path ck_path(a.checkpoint);
    fs::path dc_path(a.density);
    std::string data = a.data;
    std::optional<int> group_start = a.group_start;
    if (!a.run.empty()) {
        const RunIndex idx = read_index(a.run);
        if (data.empty()) data = idx.dataset;
        bool found = false;
        for (const auto& g : idx.groups) {
            const int s = g.at("group_start").get<int>();
            const int n = g.at("frames").get<int>();
            if (a.frame >= s && a.frame < s + n) {
                const fs::path gdir = fs::path(a.run) / g.at("dir").get<std::string>();
                ck_path = gdir / "checkpoint.nvck";
                dc_path = gdir / "density.nvdc";
                group_start = s;
                found = true;
                break;
            }
        }
        if (!found) fail(kMissing, "frame " + std::to_string(a.frame) + " is outside the trained range");
    }
    if (ck_path.empty() || dc_path.empty()) fail(kConfig, "need --run or both --checkpoint and --density");
    require_file(ck_path, "checkpoint");
    require_file(dc_path, "density container");
    if (data.empty()) fail(kConfig, "need --data");
    require_file(data, "dataset manifest");
    const Checkpoint ck = read_checkpoint(ck_path);
    if (!group_start) group_start = ck.group_start;
    const CompressedDensityGroup packed = read_container(dc_path);
    const int offset = a.frame - *group_start;
    if (offset < 0 || offset >= static_cast<int>(packed.frames)) {
        fail(kMissing, "frame " + std::to_string(a.frame) + " is outside the stored range [" +
                           std::to_string(*group_start) + ", " + std::to_string(*group_start + int(packed.frames)) + ")");
    }
    const DatasetManifest manifest = load_manifest(data);
    if (a.frame >= static_cast<int>(manifest.frame_count())) fail(kMissing, "frame not in dataset");
    const AlignedGroupGrids grids = decompress(packed);
    const DensityGrid& grid = grids.grids[static_cast<std::size_t>(offset)];
    const MultiViewFrame frame = load_frame(manifest, a.frame);
    TrainConfig cfg = ck.config;
    if (a.ns) cfg.n_s = *a.ns;

    ensure_dir(a.out);
    std::size_t written = 0;
    if (a.orbit > 0) {
        const auto poses = orbit_cameras(manifest, a.orbit);
        for (int i = 0; i < a.orbit; ++i) {
            char name[48];
            std::snprintf(name, sizeof(name), "orbit_f%04d_p%03d.png", a.frame, i);
            write_image(fs::path(a.out) / name, render_view(frame, grid, ck.net, cfg, poses[i], a.threads));
            ++written;
        }
    } else {
        std::vector<int> views = a.cameras;
        if (views.empty()) views = cfg.test_views;
        if (views.empty()) fail(kConfig, "need --camera or --orbit");
        for (int v : views) {
            if (v < 0 || v >= static_cast<int>(frame.view_count())) fail(kConfig, "camera id out of range");
            write_image(fs::path(a.out) / frame_view_name(a.frame, v),
                        render_view(frame, grid, ck.net, cfg, frame.camera(static_cast<std::size_t>(v)), a.threads));
            ++written;
        }
    }
    std::cout << "rendered " << written << " images to " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& rendered, const std::string& truth, const std::string& out) {
    if (!fs::is_directory(rendered)) fail(kMissing, "rendered directory not found: " + rendered);
    if (!fs::is_directory(truth)) fail(kMissing, "ground-truth directory not found: " + truth);
    const auto files = sorted_files(rendered, ".png");
    std::vector<std::string> unmatched;
    json images = json::array();
    double sum = 0.0;
    for (const auto& f : files) {
        const fs::path ref = fs::path(truth) / f.filename();
        if (!fs::is_regular_file(ref)) {
            unmatched.push_back(f.filename().string());
            continue;
        }
        const double p = psnr(read_image(f), read_image(ref));
        images.push_back({{"name", f.filename().string()}, {"psnr", p}});
        sum += p;
    }
    if (!unmatched.empty()) {
        std::cerr << "no ground truth for:\n";
        for (const auto& n : unmatched) std::cerr << "  " << n << "\n";
        return kMismatch;
    }
    if (images.empty()) fail(kMissing, "no images to evaluate in " + rendered);
    json j;
    j["images"] = images;
    j["mean_psnr"] = sum / double(images.size());
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else write_text(out, text);
    return kOk;
}

// ---------------------------------------------------------------------------
// density

AlignedGroupGrids read_grid_dir(const fs::path& dir) {
    const auto files = sorted_files(dir, ".nvgd");
    if (files.empty()) fail(kMissing, "no .nvgd grids in " + dir.string());
    std::vector<DensityGrid> grids;
    for (const auto& f : files) grids.push_back(read_grid_dump(f));
    AlignedGroupGrids g;
    for (const auto& x : grids) {
        if (!(x.dims() == grids.front().dims()) || x.bbox().min != grids.front().bbox().min ||
            x.bbox().max != grids.front().bbox().max) {
            return align_group(grids);
        }
    }
    g.grids = std::move(grids);
    return g;
}

int cmd_density_compress(const std::string& in, const std::string& out, const TrainFlags& flags) {
    const CompressOptions o = codec_options(flags);
    const AlignedGroupGrids grids = read_grid_dir(in);
    const CompressedDensityGroup c = compress(grids, o);
    const fs::path parent = fs::path(out).parent_path();
    if (!parent.empty()) ensure_dir(parent);
    write_container(out, c);
    std::cout << "k " << c.k << " kept " << c.kept_rows.size() << " of " << c.n_v << " bytes "
              << fs::file_size(out) << "\n";
    return kOk;
}

int cmd_density_decompress(const std::string& in, const std::string& out) {
    require_file(in, "density container");
    const AlignedGroupGrids grids = decompress(read_container(in));
    ensure_dir(out);
    for (std::size_t f = 0; f < grids.grids.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.nvgd", f);
        write_grid_dump(fs::path(out) / name, grids.grids[f]);
    }
    std::cout << "wrote " << grids.grids.size() << " grids to " << out << "\n";
    return kOk;
}

int cmd_density_stats(const std::string& in, const std::string& ref) {
    require_file(in, "density container");
    const CompressedDensityGroup c = read_container(in);
    const BlockLayout layout = c.layout();
    const std::size_t kept = c.kept_rows.size();
    json j;
    j["k"] = c.k;
    j["eta"] = c.eta;
    j["block_size"] = c.block_size;
    j["frames"] = c.frames;
    j["dims"] = {c.dims.nx, c.dims.ny, c.dims.nz};
    j["rows"] = c.n_v;
    j["kept_rows"] = kept;
    j["empty_rows"] = c.n_v - kept;
    j["container_bytes"] = fs::file_size(in);
    j["dense_bytes"] = std::uint64_t(c.n_v) * layout.row_width() * sizeof(float);
    j["dense_nonempty_bytes"] = std::uint64_t(kept) * layout.row_width() * sizeof(float);
    if (!ref.empty()) {
        const AlignedGroupGrids truth = read_grid_dir(ref);
        const AlignedGroupGrids rec = decompress(c);
        if (truth.grids.size() != rec.grids.size() || !(truth.dims() == rec.dims())) {
            fail(kConfig, "reference grids do not match the container layout");
        }
        double err = 0.0;
        double norm = 0.0;
        for (std::size_t f = 0; f < rec.grids.size(); ++f) {
            const auto a = rec.grids[f].values();
            const auto b = truth.grids[f].values();
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = double(a[i]) - double(b[i]);
                err += d * d;
                norm += double(b[i]) * double(b[i]);
            }
        }
        j["frobenius_error"] = std::sqrt(err);
        j["relative_error"] = norm > 0.0 ? std::sqrt(err / norm) : 0.0;
    }
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_buffer_stats(const std::string& run, int bins) {
    const fs::path p = fs::path(run) / "state" / "buffer.nvrb";
    require_file(p, "replay buffer state");
    const ExperienceBuffer b = ExperienceBuffer::deserialize(read_file_bytes(p.string()));
    std::cout << buffer_stats_json(buffer_stats(b, bins)) << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nevrf: streaming radiance fields with replay and compressed density"};
    app.require_subcommand(1);
    bool deterministic = false;
    int threads = 0;
    app.add_flag("--deterministic", deterministic, "single-threaded, byte-reproducible outputs");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    TrainFlags tf;
    auto add_train_flags = [&](CLI::App* c) {
        c->add_option("--config", tf.config, "training config JSON");
        c->add_option("--seed", tf.seed, "RNG seed");
        c->add_flag("--no-replay", tf.no_replay, "disable experience replay");
        c->add_flag("--no-blend-net", tf.no_blend_net, "uniform blend weights instead of the MLP");
        c->add_option("--group-size", tf.group_size, "frames per group");
        c->add_option("--ns", tf.ns, "samples per ray");
    };
    auto add_codec_flags = [&](CLI::App* c) {
        c->add_option("--eta", tf.eta, "kept fraction of the spectrum");
        c->add_option("--block-size", tf.block_size, "block edge length");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string spec_path, synth_out;
    int synth_frames = 0;
    synth->add_option("--spec", spec_path, "scene JSON (default scene when omitted)");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--frames", synth_frames, "override frame count");
    synth->add_option("--seed", tf.seed, "RNG seed");

    auto* train = app.add_subcommand("train", "train groups sequentially");
    std::string data, train_out;
    bool resume = false, dump_grids = false;
    int max_groups = 0;
    train->add_option("--data", data, "dataset manifest.json")->required();
    train->add_option("--out", train_out, "run directory")->required();
    train->add_flag("--resume", resume, "continue after the last completed group");
    train->add_option("--max-groups", max_groups, "stop after this many groups");
    train->add_flag("--dump-grids", dump_grids, "also write raw per-frame grids");
    add_train_flags(train);
    add_codec_flags(train);

    auto* render = app.add_subcommand("render", "render views from a trained run");
    RenderArgs ra;
    render->add_option("--run", ra.run, "run directory (selects group by frame)");
    render->add_option("--checkpoint", ra.checkpoint, "checkpoint file");
    render->add_option("--density", ra.density, "density container");
    render->add_option("--group-start", ra.group_start, "first frame of the container");
    render->add_option("--data", ra.data, "dataset manifest (default from run index)");
    render->add_option("--frame", ra.frame, "frame index")->required();
    render->add_option("--camera", ra.cameras, "camera ids");
    render->add_option("--orbit", ra.orbit, "render N orbit poses");
    render->add_option("--out", ra.out, "output directory")->required();
    render->add_option("--ns", ra.ns, "samples per ray");

    auto* eval = app.add_subcommand("eval", "PSNR of rendered images against ground truth");
    std::string rendered, truth, metrics_out;
    eval->add_option("--rendered", rendered, "rendered image directory")->required();
    eval->add_option("--truth", truth, "ground-truth image directory")->required();
    eval->add_option("--out", metrics_out, "metrics JSON path (stdout when omitted)");

    auto* density = app.add_subcommand("density", "density codec");
    density->require_subcommand(1);
    std::string d_in, d_out, d_ref;
    auto* d_compress = density->add_subcommand("compress", "grid directory to container");
    d_compress->add_option("--in", d_in, "directory of .nvgd grids")->required();
    d_compress->add_option("--out", d_out, "container path")->required();
    add_codec_flags(d_compress);
    auto* d_decompress = density->add_subcommand("decompress", "container to grid directory");
    d_decompress->add_option("--in", d_in, "container path")->required();
    d_decompress->add_option("--out", d_out, "output directory")->required();
    auto* d_stats = density->add_subcommand("stats", "container report");
    d_stats->add_option("--in", d_in, "container path")->required();
    d_stats->add_option("--ref", d_ref, "reference grid directory for reconstruction error");

    auto* bstats = app.add_subcommand("buffer-stats", "replay buffer occupancy and error histogram");
    std::string b_run;
    int bins = 10;
    bstats->add_option("--run", b_run, "run directory")->required();
    bstats->add_option("--bins", bins, "histogram bins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }
    if (deterministic) threads = 1;

    try {
        if (*synth) return cmd_synth(spec_path, synth_out, synth_frames, tf.seed, threads);
        if (*train) return cmd_train(data, train_out, tf, resume, max_groups, dump_grids, threads);
        if (*render) {
            ra.threads = threads;
            return cmd_render(ra);
        }
        if (*eval) return cmd_eval(rendered, truth, metrics_out);
        if (*d_compress) return cmd_density_compress(d_in, d_out, tf);
        if (*d_decompress) return cmd_density_decompress(d_in, d_out);
        if (*d_stats) return cmd_density_stats(d_in, d_ref);
        if (*bstats) return cmd_buffer_stats(b_run, bins);
    } catch (const CliError& e) {
        std::cerr << "nevrf: " << e.message << "\n";
        return e.code;
    } catch (const Error& e) {
        std::cerr << "nevrf: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "nevrf: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "nevrf: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
