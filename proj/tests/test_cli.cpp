// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nevrf/binary_io.hpp"
#include "nevrf/density_codec.hpp"
#include "nevrf/density_grid.hpp"
#include "nevrf/image_io.hpp"
#include "nevrf/scene_model.hpp"
#include "nevrf/volume_renderer.hpp"
#include "support/oracles.hpp"

using namespace nevrf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
    int code = -1;
    std::string out; ///< stdout and stderr
};

CliResult nevrf_cli(const std::string& args) {
    const std::string cmd = std::string(NEVRF_CLI_PATH) + " " + args + " 2>&1";
    CliResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kTinyScene = R"({
  "frames": 4, "width": 12, "height": 12, "supersample": 1,
  "rig": {"cameras": 5, "focal": 14},
  "background": [0.3, 0.3, 0.3],
  "primitives": [
    {"type": "sphere", "center": [0, 0, 0], "radius": 0.4, "amplitude": [0.1, 0, 0], "period": 4,
     "texture": {"kind": "checker", "scale": 2}}
  ]
})";

const char* kTinyConfig = R"({
  "grid_dims": [10, 10, 10], "n_s": 16, "batch_rays": 64, "feature_dim": 4, "k": 3,
  "cl_iterations": 8, "density_iterations": 3, "init_max_iterations": 6, "init_min_iterations": 2,
  "init_window": 2, "capacity_e": 32, "capacity_m": 32, "capacity_r": 32, "random_admissions": 8,
  "test_views": [1], "log_every": 1
})";

/// A synthesized 4-frame dataset trained in groups of two, shared by the render/train tests.
class CliRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(oracle::scratch_dir("cli_run"));
        write_text(*dir_ / "scene.json", kTinyScene);
        write_text(*dir_ / "config.json", kTinyConfig);
        const CliResult s = nevrf_cli("synth --spec " + q(*dir_ / "scene.json") + " --out " + q(*dir_ / "data"));
        ASSERT_EQ(s.code, 0) << s.out;
        const CliResult t = nevrf_cli("--deterministic train --data " + q(*dir_ / "data" / "manifest.json") + " --out " +
                                q(*dir_ / "run") + " --config " + q(*dir_ / "config.json") + " --group-size 2");
        ASSERT_EQ(t.code, 0) << t.out;
    }
    static void TearDownTestSuite() {
        fs::remove_all(*dir_);
        delete dir_;
    }
    static fs::path* dir_;
};
fs::path* CliRun::dir_ = nullptr;

} // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(nevrf_cli("").code, 2);
    EXPECT_EQ(nevrf_cli("frobnicate").code, 2);
    EXPECT_EQ(nevrf_cli("synth").code, 2);
    EXPECT_EQ(nevrf_cli("synth --out /tmp/x --bogus").code, 2);
    EXPECT_EQ(nevrf_cli("--help").code, 0);
}

TEST(Cli, SynthWritesDatasetAndIsReproducible) {
    const auto dir = oracle::scratch_dir("cli_synth");
    write_text(dir / "scene.json", kTinyScene);
    const CliResult a = nevrf_cli("--deterministic synth --spec " + q(dir / "scene.json") + " --out " + q(dir / "a") + " --seed 4");
    ASSERT_EQ(a.code, 0) << a.out;
    EXPECT_NE(a.out.find("manifest"), std::string::npos);
    const CliResult b = nevrf_cli("--deterministic synth --spec " + q(dir / "scene.json") + " --out " + q(dir / "b") + " --seed 4");
    ASSERT_EQ(b.code, 0) << b.out;
    std::size_t images = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "images")) {
        ++images;
        EXPECT_EQ(read_file_bytes(e.path().string()), read_file_bytes((dir / "b" / "images" / e.path().filename()).string()));
    }
    EXPECT_EQ(images, 20u);
    EXPECT_EQ(read_text(dir / "a" / "manifest.json"), read_text(dir / "b" / "manifest.json"));
    fs::remove_all(dir);
}

TEST(Cli, SynthErrors) {
    const auto dir = oracle::scratch_dir("cli_synth_err");
    write_text(dir / "bad.json", "{\n  \"frames\": 2,\n  oops\n}");
    const CliResult bad = nevrf_cli("synth --spec " + q(dir / "bad.json") + " --out " + q(dir / "o"));
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.out.find("line 3"), std::string::npos) << bad.out;
    EXPECT_EQ(nevrf_cli("synth --spec " + q(dir / "absent.json") + " --out " + q(dir / "o")).code, 2);
    write_text(dir / "blocker", "x");
    write_text(dir / "scene.json", kTinyScene);
    EXPECT_EQ(nevrf_cli("synth --spec " + q(dir / "scene.json") + " --out " + q(dir / "blocker" / "o")).code, 3);
    // a missing output directory is created
    EXPECT_EQ(nevrf_cli("synth --spec " + q(dir / "scene.json") + " --out " + q(dir / "new" / "nested")).code, 0);
    EXPECT_TRUE(fs::exists(dir / "new" / "nested" / "manifest.json"));
    fs::remove_all(dir);
}

TEST_F(CliRun, TrainWritesOneContainerPerGroup) {
    const fs::path run = *dir_ / "run";
    EXPECT_TRUE(fs::exists(run / "group_0000" / "density.nvdc"));
    EXPECT_TRUE(fs::exists(run / "group_0000" / "checkpoint.nvck"));
    EXPECT_TRUE(fs::exists(run / "group_0001" / "density.nvdc"));
    EXPECT_FALSE(fs::exists(run / "group_0002"));
    const json idx = json::parse(read_text(run / "index.json"));
    EXPECT_EQ(idx["next_frame"], 4);
    EXPECT_EQ(idx["groups"].size(), 2u);
    int group_events = 0;
    std::istringstream log(read_text(run / "log.jsonl"));
    for (std::string line; std::getline(log, line);) {
        const json j = json::parse(line);
        if (j.value("event", "") == "group_done") {
            ++group_events;
            EXPECT_TRUE(j.contains("heldout"));
        }
    }
    EXPECT_EQ(group_events, 2);
}

TEST_F(CliRun, ResumeContinuesAtNextGroup) {
    const fs::path run = *dir_ / "resume";
    const std::string base = "--deterministic train --data " + q(*dir_ / "data" / "manifest.json") + " --out " + q(run) +
                             " --config " + q(*dir_ / "config.json") + " --group-size 2";
    ASSERT_EQ(nevrf_cli(base + " --max-groups 1").code, 0);
    EXPECT_FALSE(fs::exists(run / "group_0001"));
    const CliResult r = nevrf_cli(base + " --resume");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(run / "group_0001" / "density.nvdc"));
    int last = -1;
    std::istringstream log(read_text(run / "log.jsonl"));
    for (std::string line; std::getline(log, line);) {
        const json j = json::parse(line);
        if (!j.contains("step")) continue;
        EXPECT_GE(j["frame"].get<int>(), last);
        last = j["frame"].get<int>();
    }
    EXPECT_EQ(last, 3);
    // resuming after a two-stage run matches the uninterrupted run bit for bit
    EXPECT_EQ(read_file_bytes((run / "group_0001" / "density.nvdc").string()),
              read_file_bytes((*dir_ / "run" / "group_0001" / "density.nvdc").string()));
}

TEST_F(CliRun, RenderViewsOrbitAndErrors) {
    const fs::path run = *dir_ / "run";
    const fs::path out = *dir_ / "render";
    const CliResult r = nevrf_cli("render --run " + q(run) + " --frame 3 --camera 1 --camera 2 --out " + q(out));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "f0003_v01.png"));
    EXPECT_TRUE(fs::exists(out / "f0003_v02.png"));
    const CliResult o = nevrf_cli("render --run " + q(run) + " --frame 0 --orbit 8 --out " + q(*dir_ / "orbit"));
    ASSERT_EQ(o.code, 0) << o.out;
    for (int i = 0; i < 8; ++i) {
        char name[48];
        std::snprintf(name, sizeof(name), "orbit_f0000_p%03d.png", i);
        EXPECT_TRUE(fs::exists(*dir_ / "orbit" / name)) << name;
    }
    EXPECT_EQ(nevrf_cli("render --run " + q(run) + " --frame 9 --camera 1 --out " + q(out)).code, 4);
    const fs::path missing = *dir_ / "nowhere.nvdc";
    const CliResult m = nevrf_cli("render --checkpoint " + q(run / "group_0000" / "checkpoint.nvck") + " --density " +
                            q(missing) + " --data " + q(*dir_ / "data" / "manifest.json") + " --frame 0 --camera 1 --out " +
                            q(out));
    EXPECT_EQ(m.code, 4);
    EXPECT_NE(m.out.find(missing.string()), std::string::npos) << m.out;
    // explicit container for the second group rejects a frame of the first
    EXPECT_EQ(nevrf_cli("render --checkpoint " + q(run / "group_0001" / "checkpoint.nvck") + " --density " +
                        q(run / "group_0001" / "density.nvdc") + " --data " + q(*dir_ / "data" / "manifest.json") +
                        " --frame 0 --camera 1 --out " + q(out))
                  .code,
              4);
}

TEST_F(CliRun, BufferStatsReportsCounts) {
    const CliResult r = nevrf_cli("buffer-stats --run " + q(*dir_ / "run"));
    ASSERT_EQ(r.code, 0) << r.out;
    const json j = json::parse(r.out);
    EXPECT_GT(j["count_e"].get<int>() + j["count_m"].get<int>() + j["count_r"].get<int>(), 0);
    EXPECT_EQ(j["histogram"].size(), 10u);
}

TEST(Cli, EvalMetricsAndMismatch) {
    const auto dir = oracle::scratch_dir("cli_eval");
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    // 3 of 3000 entries off by a full step: MSE exactly 1e-3
    Image x = Image::image(10, 100, 3, 0.0f);
    Image y = x;
    y[0] = y[1] = y[2] = 1.0f;
    write_image(dir / "a" / "one.png", x);
    write_image(dir / "b" / "one.png", y);
    write_image(dir / "a" / "two.png", x);
    write_image(dir / "b" / "two.png", x);
    const CliResult r = nevrf_cli("eval --rendered " + q(dir / "a") + " --truth " + q(dir / "b") + " --out " + q(dir / "m.json"));
    ASSERT_EQ(r.code, 0) << r.out;
    const json j = json::parse(read_text(dir / "m.json"));
    ASSERT_TRUE(j.contains("images") && j.contains("mean_psnr"));
    ASSERT_EQ(j["images"].size(), 2u);
    for (const auto& e : j["images"]) {
        ASSERT_TRUE(e.contains("name") && e.contains("psnr"));
        ASSERT_TRUE(e["name"].is_string() && e["psnr"].is_number());
    }
    EXPECT_EQ(j["images"][0]["name"], "one.png");
    EXPECT_NEAR(j["images"][0]["psnr"].get<double>(), 30.0, 1e-9);
    EXPECT_EQ(j["images"][1]["psnr"].get<double>(), 99.0);

    const CliResult same = nevrf_cli("eval --rendered " + q(dir / "a") + " --truth " + q(dir / "a"));
    ASSERT_EQ(same.code, 0);
    EXPECT_EQ(json::parse(same.out)["mean_psnr"].get<double>(), 99.0);

    write_image(dir / "a" / "three.png", x);
    const CliResult mis = nevrf_cli("eval --rendered " + q(dir / "a") + " --truth " + q(dir / "b"));
    EXPECT_EQ(mis.code, 5);
    EXPECT_NE(mis.out.find("three.png"), std::string::npos);
    EXPECT_EQ(nevrf_cli("eval --rendered " + q(dir / "nope") + " --truth " + q(dir / "b")).code, 4);
    fs::remove_all(dir);
}

TEST(Cli, DensityCompressDecompressStats) {
    const auto dir = oracle::scratch_dir("cli_density");
    fs::create_directories(dir / "grids");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 4.0f);
    std::vector<DensityGrid> truth;
    for (int f = 0; f < 5; ++f) {
        DensityGrid g({64, 32, 32}, Aabb{Vec3::Constant(-1), Vec3::Constant(1)}, 0.0f);
        for (auto& v : g.values()) v = u(rng);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.nvgd", f);
        write_grid_dump(dir / "grids" / name, g);
        truth.push_back(std::move(g));
    }
    ASSERT_EQ(nevrf_cli("density compress --in " + q(dir / "grids") + " --out " + q(dir / "full.nvdc") + " --eta 1.0").code, 0);
    ASSERT_EQ(nevrf_cli("density decompress --in " + q(dir / "full.nvdc") + " --out " + q(dir / "back")).code, 0);
    double worst = 0.0;
    for (int f = 0; f < 5; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.nvgd", f);
        const DensityGrid g = read_grid_dump(dir / "back" / name);
        for (std::size_t i = 0; i < g.size(); ++i)
            worst = std::max(worst, double(std::abs(g.values()[i] - truth[f].values()[i])));
    }
    EXPECT_LE(worst, 1e-4);

    ASSERT_EQ(nevrf_cli("density compress --in " + q(dir / "grids") + " --out " + q(dir / "low.nvdc") + " --eta 0.2").code, 0);
    const CliResult st = nevrf_cli("density stats --in " + q(dir / "low.nvdc") + " --ref " + q(dir / "grids"));
    ASSERT_EQ(st.code, 0) << st.out;
    const json j = json::parse(st.out);
    EXPECT_EQ(j["rows"], 640);
    EXPECT_EQ(j["k"], 103);
    EXPECT_EQ(j["kept_rows"].get<int>() + j["empty_rows"].get<int>(), 640);
    EXPECT_EQ(j["container_bytes"].get<std::size_t>(), fs::file_size(dir / "low.nvdc"));
    EXPECT_EQ(j["container_bytes"].get<std::size_t>(), container_bytes(j["kept_rows"], 103, 512));
    EXPECT_GT(j["frobenius_error"].get<double>(), 0.0);

    auto bytes = read_file_bytes((dir / "low.nvdc").string());
    bytes.resize(bytes.size() / 2);
    write_file_bytes((dir / "cut.nvdc").string(), bytes);
    EXPECT_EQ(nevrf_cli("density stats --in " + q(dir / "cut.nvdc")).code, 3);
    EXPECT_EQ(nevrf_cli("density stats --in " + q(dir / "absent.nvdc")).code, 4);
    EXPECT_EQ(nevrf_cli("density compress --in " + q(dir / "grids") + " --out " + q(dir / "x.nvdc") + " --eta 1.5").code, 2);
    fs::remove_all(dir);
}
