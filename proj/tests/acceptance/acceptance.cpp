// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
//
// nevrf_acceptance <A1..A9|all>
// Prints one "Ax PASS|FAIL ..." line per criterion; exit status 0 only if all pass.
// A1-A4 run in process. A5-A9 drive the nevrf binary on synthetic data under
// ./acceptance_work/<criterion>.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "acceptance/audits.hpp"
#include "json.hpp"
#include "nevrf/binary_io.hpp"
#include "nevrf/image_io.hpp"
#include "nevrf/replay_trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

fs::path source_path(const std::string& rel) { return fs::path(NEVRF_SOURCE_DIR) / rel; }

fs::path fresh_workdir(const std::string& crit) {
    const fs::path dir = fs::current_path() / "acceptance_work" / crit;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs the CLI; stdout and stderr are appended to <work>/cli.log.
int cli(const fs::path& work, const std::string& args) {
    const std::string cmd =
        std::string(NEVRF_CLI_PATH) + " " + args + " >> '" + (work / "cli.log").string() + "' 2>&1";
    {
        std::ofstream(work / "cli.log", std::ios::app) << "$ nevrf " << args << "\n";
    }
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

struct CliFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void must(const fs::path& work, const std::string& args) {
    const int code = cli(work, args);
    if (code != 0) throw CliFailure("nevrf " + args + " exited " + std::to_string(code) + " (see " +
                                    (work / "cli.log").string() + ")");
}

/// Mean PSNR of `views` over `frames`, rendered from an explicit checkpoint and container.
double heldout_psnr(const fs::path& work, const fs::path& data, const fs::path& ckpt, const fs::path& density,
                    int group_start, const std::vector<int>& frames, const std::vector<int>& views,
                    const std::string& tag) {
    const fs::path out = work / ("render_" + tag);
    fs::remove_all(out);
    std::string cams;
    for (int v : views) cams += " --camera " + std::to_string(v);
    for (int f : frames)
        must(work, "render --checkpoint " + q(ckpt) + " --density " + q(density) + " --group-start " +
                       std::to_string(group_start) + " --data " + q(data / "manifest.json") + " --frame " +
                       std::to_string(f) + cams + " --out " + q(out));
    const fs::path metrics = work / ("metrics_" + tag + ".json");
    must(work, "eval --rendered " + q(out) + " --truth " + q(data / "images") + " --out " + q(metrics));
    return read_json(metrics)["mean_psnr"].get<double>();
}

std::vector<int> frame_range(int start, int count, int stride = 1) {
    std::vector<int> f;
    for (int i = start; i < start + count; i += stride) f.push_back(i);
    return f;
}

std::vector<int> config_test_views(const fs::path& config) {
    return read_json(config).at("test_views").get<std::vector<int>>();
}

// ---------------------------------------------------------------------------

Verdict a1() {
    Stopwatch clock;
    const std::vector<audit::Tally> t = {audit::oracle_trilinear(1000), audit::oracle_bilinear(1000),
                                         audit::oracle_softmax(1000), audit::oracle_convolution(1000),
                                         audit::oracle_projection(1000)};
    const double secs = clock.seconds();
    bool ok = secs < 10.0;
    std::string detail;
    for (const auto& x : t) {
        ok = ok && x.ok(1e-5, 1000);
        detail += x.summary() + "; ";
    }
    return {ok, detail + "tol 1e-5 rel, " + fmt(secs) + " s (limit 10)"};
}

Verdict a2() {
    Stopwatch clock;
    const double h = 1e-4;
    const std::vector<audit::Tally> t = {audit::gradient_mlp(20, h), audit::gradient_encoder(20, h),
                                         audit::gradient_blend_chain(20, h), audit::gradient_grid_interp(20, h),
                                         audit::gradient_render_pixel(20, h)};
    const double secs = clock.seconds();
    bool ok = secs < 60.0;
    std::string detail;
    for (const auto& x : t) {
        ok = ok && x.ok(1e-4, 20);
        detail += x.summary() + "; ";
    }
    return {ok, detail + "h 1e-4, tol 1e-4 rel, " + fmt(secs) + " s (limit 60)"};
}

Verdict a3() {
    const double slab = audit::slab_worst(200, 256);
    long rays = 0;
    const double partition = audit::partition_worst(rays);
    return {slab <= 1e-4 && partition <= 1e-6,
            "slab worst " + fmt(slab) + " (tol 1e-4, n_s 256, 200 rays); weights+residual worst " + fmt(partition) +
                " over " + std::to_string(rays) + " rays (tol 1e-6)"};
}

Verdict a4() {
    Stopwatch clock;
    const double full = audit::full_rank_worst();
    const auto ey = audit::eckart_young();
    int mask_cases = 0;
    const long mask_bad = audit::mask_mismatches(mask_cases);
    int ser_cases = 0;
    const int ser_bad = audit::serialization_mismatches(ser_cases);
    const auto toy = audit::toy_scene_ratio(0.2);
    const double secs = clock.seconds();
    const bool a = full <= 1e-4;
    const bool b = ey.ok(1e-4, 12);
    const bool c = mask_bad == 0;
    const bool d = ser_bad == 0;
    const bool e = toy.ratio() <= 0.25;
    auto mark = [](bool x) { return x ? "ok" : "FAIL"; };
    std::ostringstream s;
    s << "(a) " << mark(a) << " eta=1 max abs " << fmt(full) << "; (b) " << mark(b) << " " << ey.summary()
      << "; (c) " << mark(c) << " " << mask_bad << " mask mismatches over " << mask_cases << " groups; (d) "
      << mark(d) << " " << ser_bad << "/" << ser_cases << " serialization mismatches; (e) " << mark(e)
      << " toy scene container " << toy.container << " B vs dense non-empty " << toy.dense_nonempty
      << " B = " << fmt(toy.ratio()) << " (limit 0.25, k " << toy.k << ", kept rows " << toy.kept << "); "
      << fmt(secs) << " s (limit 30)";
    return {a && b && c && d && e && secs < 30.0, s.str()};
}

/// Paired 60-frame runs with and without replay; group-1 held-out PSNR.
Verdict a5() {
    Stopwatch clock;
    const fs::path work = fresh_workdir("A5");
    const fs::path config = source_path("configs/replay.json");
    const fs::path data = work / "data";
    must(work, "--deterministic synth --spec " + q(source_path("configs/scenes/replay.json")) + " --out " + q(data));
    const std::string train = "train --data " + q(data / "manifest.json") + " --config " + q(config);
    must(work, train + " --out " + q(work / "replay"));
    must(work, train + " --no-replay --out " + q(work / "no_replay"));
    for (const char* run : {"replay", "no_replay"})
        if (read_json(work / run / "index.json")["groups"].size() != 3)
            return {false, std::string(run) + " run did not produce 3 groups"};

    const auto views = config_test_views(config);
    const auto frames = frame_range(0, 20, 2);
    const fs::path g0 = "group_0000";
    const fs::path g2 = "group_0002";
    const double post_group1 = heldout_psnr(work, data, work / "replay" / g0 / "checkpoint.nvck",
                                            work / "replay" / g0 / "density.nvdc", 0, frames, views, "post_group1");
    const double replay_final = heldout_psnr(work, data, work / "replay" / g2 / "checkpoint.nvck",
                                             work / "replay" / g0 / "density.nvdc", 0, frames, views, "replay");
    const double plain_final = heldout_psnr(work, data, work / "no_replay" / g2 / "checkpoint.nvck",
                                            work / "no_replay" / g0 / "density.nvdc", 0, frames, views, "no_replay");
    const double secs = clock.seconds();
    const double gain = replay_final - plain_final;
    const double drop = post_group1 - replay_final;
    return {gain >= 1.0 && drop <= 1.0 && secs <= 900.0,
            "group-1 held-out PSNR: replay " + fmt(replay_final, 4) + " dB, no-replay " + fmt(plain_final, 4) +
                " dB (gain " + fmt(gain) + ", need >= 1); post-group-1 " + fmt(post_group1, 4) + " dB (drop " +
                fmt(drop) + ", need <= 1); " + fmt(secs, 4) + " s (limit 900)"};
}

/// Occluder scene, full model against uniform blend weights.
Verdict a6() {
    Stopwatch clock;
    const fs::path work = fresh_workdir("A6");
    const fs::path config = source_path("configs/occluder.json");
    const fs::path data = work / "data";
    must(work, "--deterministic synth --spec " + q(source_path("configs/scenes/occluder.json")) + " --out " + q(data));
    const std::string train = "train --data " + q(data / "manifest.json") + " --config " + q(config);
    must(work, train + " --out " + q(work / "full"));
    must(work, train + " --no-blend-net --out " + q(work / "uniform"));
    const auto views = config_test_views(config);
    const int frames = read_json(data / "manifest.json")["frames"].size();
    const auto eval_frames = frame_range(0, frames);
    const fs::path g0 = "group_0000";
    const double full = heldout_psnr(work, data, work / "full" / g0 / "checkpoint.nvck",
                                     work / "full" / g0 / "density.nvdc", 0, eval_frames, views, "full");
    const double uniform = heldout_psnr(work, data, work / "uniform" / g0 / "checkpoint.nvck",
                                        work / "uniform" / g0 / "density.nvdc", 0, eval_frames, views, "uniform");
    const double gain = full - uniform;
    return {gain >= 1.0, "held-out PSNR: blend net " + fmt(full, 4) + " dB, uniform " + fmt(uniform, 4) +
                             " dB (gain " + fmt(gain) + ", need >= 1); " + fmt(clock.seconds(), 4) + " s"};
}

/// Default 20-frame sphere+box scene, 12 views, 64^3 grids.
Verdict a7() {
    Stopwatch clock;
    const fs::path work = fresh_workdir("A7");
    const fs::path config = source_path("configs/a7.json");
    const fs::path data = work / "data";
    const json cfg = read_json(config);
    const auto dims = cfg.at("grid_dims").get<std::vector<int>>();
    must(work, "synth --out " + q(data) + " --frames 20");
    const json manifest = read_json(data / "manifest.json");
    if (manifest["cameras"].size() != 12 || manifest["frames"].size() != 20 || dims != std::vector<int>{64, 64, 64})
        return {false, "setup is not 20 frames x 12 views at 64^3"};
    must(work, "train --data " + q(data / "manifest.json") + " --config " + q(config) + " --out " + q(work / "run"));
    const fs::path g0 = work / "run" / "group_0000";
    const double psnr = heldout_psnr(work, data, g0 / "checkpoint.nvck", g0 / "density.nvdc", 0, frame_range(0, 20),
                                     config_test_views(config), "heldout");
    const double secs = clock.seconds();
    return {psnr >= 28.0 && secs <= 600.0, "held-out mean PSNR " + fmt(psnr, 4) + " dB (need >= 28, seed " +
                                               std::to_string(cfg.value("seed", 0)) + "); " + fmt(secs, 4) +
                                               " s (limit 600)"};
}

struct PeakReport {
    std::int64_t images = 0;
    std::int64_t records = 0;
    std::int64_t total = 0;
};

/// A8: image and record peaks against their structural bounds, 60 vs 120 frames.
Verdict a8() {
    Stopwatch clock;
    const fs::path work = fresh_workdir("A8");
    const fs::path config = source_path("configs/memory.json");
    const nevrf::TrainConfig cfg = nevrf::train_config_from_json(read_text(config));
    std::map<int, PeakReport> peaks;
    std::int64_t image_bound = 0;
    std::int64_t record_bound = 0;
    for (int frames : {60, 120}) {
        const fs::path data = work / ("data_" + std::to_string(frames));
        must(work, "synth --out " + q(data) + " --frames " + std::to_string(frames));
        const fs::path run = work / ("run_" + std::to_string(frames));
        must(work, "train --data " + q(data / "manifest.json") + " --config " + q(config) + " --out " + q(run));
        const json idx = read_json(run / "index.json");
        if (int(idx["groups"].size()) != frames / cfg.group_size)
            return {false, "run over " + std::to_string(frames) + " frames has " +
                               std::to_string(idx["groups"].size()) + " groups"};
        peaks[frames] = {idx["peak_image_bytes"], idx["peak_record_bytes"], idx["peak_total_bytes"]};

        const json manifest = read_json(data / "manifest.json");
        const nevrf::Image first = nevrf::read_image(data / manifest["frames"][0][0].get<std::string>());
        const std::int64_t views = std::int64_t(manifest["cameras"].size());
        image_bound = std::int64_t(cfg.group_size) * views * std::int64_t(first.size() * sizeof(float));
        // a record holds at most n_s samples of k views; one extra may exist while it is admitted
        const std::int64_t per_sample = std::int64_t(cfg.k) * ((3 * cfg.feature_dim + 1) * 4 + 1 + 3 * 4) + 4;
        const std::int64_t per_record = std::int64_t(cfg.n_s) * per_sample + std::int64_t(sizeof(nevrf::RaySampleRecord));
        record_bound = std::int64_t(cfg.capacity_e + cfg.capacity_m + cfg.capacity_r + 1) * per_record;
    }
    const auto& p60 = peaks[60];
    const auto& p120 = peaks[120];
    const double change = std::abs(double(p120.total - p60.total)) / double(p60.total);
    const bool bounded = p60.images <= image_bound && p120.images <= image_bound && p60.records <= record_bound &&
                         p120.records <= record_bound && p60.total <= image_bound + record_bound &&
                         p120.total <= image_bound + record_bound;
    std::ostringstream s;
    s << "peak images " << p60.images << "/" << p120.images << " B (bound " << image_bound << "), records "
      << p60.records << "/" << p120.records << " B (bound " << record_bound << "), total " << p60.total << "/"
      << p120.total << " B for 60/120 frames, change " << fmt(100.0 * change) << "% (need < 5%); "
      << fmt(clock.seconds(), 4) << " s";
    return {bounded && change < 0.05, s.str()};
}

/// Every file under `a` has a byte-identical twin under `b` and vice versa.
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
    std::vector<std::string> diff;
    std::vector<fs::path> rel_a;
    std::vector<fs::path> rel_b;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
    std::sort(rel_a.begin(), rel_a.end());
    std::sort(rel_b.begin(), rel_b.end());
    if (rel_a != rel_b) diff.push_back("file sets differ under " + a.filename().string());
    for (const auto& r : rel_a) {
        if (!fs::exists(b / r)) continue;
        if (nevrf::read_file_bytes((a / r).string()) != nevrf::read_file_bytes((b / r).string()))
            diff.push_back(r.string());
    }
    return diff;
}

Verdict a9() {
    Stopwatch clock;
    const fs::path work = fresh_workdir("A9");
    const fs::path config = source_path("configs/determinism.json");
    std::vector<std::string> diffs;
    for (const char* rep : {"a", "b"}) {
        const fs::path r = work / rep;
        must(work, "--deterministic synth --out " + q(r / "data") + " --frames 6 --seed 11");
    }
    auto note = [&](const std::string& what, const std::vector<std::string>& d) {
        for (const auto& x : d) diffs.push_back(what + ":" + x);
    };
    note("synth", tree_differences(work / "a" / "data", work / "b" / "data"));
    // both trainings read the same dataset so the recorded path matches
    for (const char* rep : {"a", "b"})
        must(work, "--deterministic train --data " + q(work / "a" / "data" / "manifest.json") + " --config " +
                       q(config) + " --dump-grids --out " + q(work / rep / "run"));
    note("train", tree_differences(work / "a" / "run", work / "b" / "run"));
    const fs::path grids = work / "a" / "run" / "group_0000" / "grids";
    for (const char* rep : {"a", "b"}) {
        must(work, "--deterministic density compress --in " + q(grids) + " --out " + q(work / rep / "c.nvdc"));
        must(work, "--deterministic density decompress --in " + q(work / rep / "c.nvdc") + " --out " +
                       q(work / rep / "decoded"));
    }
    if (nevrf::read_file_bytes((work / "a" / "c.nvdc").string()) != nevrf::read_file_bytes((work / "b" / "c.nvdc").string()))
        diffs.push_back("density:c.nvdc");
    note("density", tree_differences(work / "a" / "decoded", work / "b" / "decoded"));
    std::string detail = diffs.empty() ? "synth, train and density artifacts byte-identical"
                                       : std::to_string(diffs.size()) + " differing artifacts, first " + diffs.front();
    return {diffs.empty(), detail + "; " + fmt(clock.seconds(), 4) + " s"};
}

const std::map<std::string, std::pair<std::string, std::function<Verdict()>>>& criteria() {
    static const std::map<std::string, std::pair<std::string, std::function<Verdict()>>> table = {
        {"A1", {"oracle equivalence", a1}},   {"A2", {"gradient audit", a2}},
        {"A3", {"volume rendering", a3}},     {"A4", {"density codec", a4}},
        {"A5", {"replay efficacy", a5}},      {"A6", {"blending ablation", a6}},
        {"A7", {"desk-scale quality", a7}},   {"A8", {"memory bound", a8}},
        {"A9", {"determinism", a9}},
    };
    return table;
}

bool run_one(const std::string& id) {
    const auto& [title, fn] = criteria().at(id);
    Verdict v;
    try {
        v = fn();
    } catch (const std::exception& e) {
        v = {false, std::string("error: ") + e.what()};
    }
    std::cout << id << " " << (v.pass ? "PASS" : "FAIL") << " " << title << ": " << v.detail << std::endl;
    return v.pass;
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2 || (std::string(argv[1]) != "all" && !criteria().count(argv[1]))) {
        std::cerr << "usage: nevrf_acceptance <A1..A9|all>\n";
        return 2;
    }
    const std::string which = argv[1];
    bool ok = true;
    if (which == "all")
        for (const auto& [id, unused] : criteria()) ok = run_one(id) && ok;
    else
        ok = run_one(which);
    return ok ? 0 : 1;
}
