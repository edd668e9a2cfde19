// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nevrf/density_grid.hpp"
#include "nevrf/memory_ledger.hpp"
#include "nevrf/radiance_blending.hpp"
#include "nevrf/volume_renderer.hpp"

namespace nevrf {

struct TrainConfig {
    // batches
    int batch_rays = 1024;
    double replay_fraction = 0.2;
    int random_admissions = 64; ///< batch records offered to the stochastic sub-buffer per step
    // schedule
    int cl_iterations = 2000;
    int density_iterations = 300;
    int init_max_iterations = 600;
    int init_min_iterations = 60;
    int init_window = 20;          ///< plateau check interval
    double init_plateau_tol = 0.01; ///< stop when a window improves the smoothed loss by less than this fraction
    int init_views = 3;
    double init_raw = -2.0; ///< cold start: below the occupancy threshold but off the flat softplus tail
    bool fill_interior = true;
    double interior_raw = 8.0;
    // buffer
    double tau = 0.05;
    std::size_t capacity_e = 4096;
    std::size_t capacity_m = 4096;
    std::size_t capacity_r = 4096;
    // optimisation
    double lr_network = 1e-3;
    double lr_grid = 0.3;
    /// Grid values are clamped from below after every step. Keeping empty space at the
    /// decode fill value stops unbounded negative drift that would make the codec's
    /// sum-below-zero test prune partly occupied blocks.
    double raw_floor = kEmptyRawDensity;
    std::uint64_t seed = 0;
    // model
    GridDims grid_dims{64, 64, 64};
    int feature_dim = kDefaultFeatureDim;
    int k = kDefaultSourceViews;
    bool blend_net = true;
    bool train_encoder_after_first_group = false;
    // rendering
    int n_s = 128;
    Vec3 background = Vec3::Zero();
    double min_weight = 1e-3;
    bool jitter = true;
    // data
    int group_size = kDefaultGroupSize;
    std::vector<int> test_views;
    int log_every = 50;

    RayMarchConfig march(bool training) const;
    BlendSettings blend(int views) const;
    void validate() const;
};

/// JSON round trip; unknown keys raise InvalidArgument.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// A ray captured for replay: per active sample, the aggregated per-view inputs,
/// visibility flags, source colors and the frozen compositing weight. Holds no
/// reference to images or grids.
struct RaySampleRecord {
    std::uint64_t id = 0;
    int frame = 0;
    int view = 0;
    float px = 0.0f;
    float py = 0.0f;
    std::array<float, 3> target{};
    std::array<float, 3> base{};   ///< pixel part not produced by the blended samples
    int k = 0;
    int feature_dim = 0;
    std::vector<float> rows;        ///< active x k x (3F+1)
    std::vector<std::uint8_t> valid; ///< active x k
    std::vector<float> colors;      ///< active x k x 3
    std::vector<float> weights;     ///< active, frozen T * alpha
    float error = 0.0f;
    LedgerToken token;

    std::size_t active() const { return weights.size(); }
    std::size_t payload_bytes() const;
    /// Registers the payload with the memory ledger.
    void account();
};

enum class SubBuffer { Error = 0, Motion = 1, Random = 2 };

/// Three bounded sub-buffers: top-error, motion-triggered and random.
/// A record id lives in at most one of them.
class ExperienceBuffer {
public:
    ExperienceBuffer() = default;
    ExperienceBuffer(std::size_t cap_e, std::size_t cap_m, std::size_t cap_r, double tau, std::uint64_t seed);

    std::size_t size() const { return q_e_.size() + q_m_.size() + q_r_.size(); }
    bool empty() const { return size() == 0; }
    const std::vector<RaySampleRecord>& queue(SubBuffer b) const;
    std::vector<RaySampleRecord>& queue(SubBuffer b);
    std::size_t capacity(SubBuffer b) const;
    double tau() const { return tau_; }

    /// Keeps the top-capacity records by error; returns true when `r` was kept.
    bool admit_error(RaySampleRecord r);
    /// Appends, evicting a uniformly chosen resident when full. Returns the evicted id.
    std::optional<std::uint64_t> admit_motion(RaySampleRecord r);
    std::optional<std::uint64_t> admit_random(RaySampleRecord r);
    /// Restores the descending order of Q_e after errors were rescored.
    void resort_errors();
    bool contains(std::uint64_t id) const;
    std::uint64_t next_id() { return next_id_++; }

    /// Draws `n` records with replacement: sub-buffer chosen proportionally to its size,
    /// then a uniform resident.
    std::vector<std::pair<SubBuffer, std::size_t>> draw(std::size_t n, std::mt19937_64& rng) const;

    std::int64_t bytes() const;
    std::mt19937_64& rng() { return rng_; }

    std::vector<std::uint8_t> serialize() const;
    static ExperienceBuffer deserialize(std::span<const std::uint8_t> bytes);

private:
    std::optional<std::uint64_t> admit_evicting(std::vector<RaySampleRecord>& q, std::size_t cap, RaySampleRecord r);

    std::size_t cap_e_ = 4096;
    std::size_t cap_m_ = 4096;
    std::size_t cap_r_ = 4096;
    double tau_ = 0.05;
    std::mt19937_64 rng_;
    std::uint64_t next_id_ = 1;
    std::vector<RaySampleRecord> q_e_;
    std::vector<RaySampleRecord> q_m_;
    std::vector<RaySampleRecord> q_r_;
};

/// Counts and an error histogram for diagnostics.
struct BufferStats {
    std::size_t count_e = 0;
    std::size_t count_m = 0;
    std::size_t count_r = 0;
    std::int64_t bytes = 0;
    std::vector<double> histogram_edges;
    std::vector<std::size_t> histogram;
};
BufferStats buffer_stats(const ExperienceBuffer& buffer, int bins = 10);
std::string buffer_stats_json(const BufferStats& stats);

/// Pixel identified in a frame.
struct PixelRef {
    int view = 0;
    int x = 0;
    int y = 0;
};

struct TrainingBatch {
    std::vector<PixelRef> pixels;    ///< current-frame rays
    std::vector<RayRequest> rays;
    std::vector<std::array<float, 3>> targets;
    std::vector<std::pair<SubBuffer, std::size_t>> replay; ///< references into the buffer
};

/// Splits the batch into current-frame rays (uniform over training views and
/// pixels) and replayed records (replay_fraction of the batch when the buffer is non-empty).
TrainingBatch make_batch(const MultiViewFrame& frame, std::span<const int> train_views, const ExperienceBuffer& buffer,
                         const TrainConfig& cfg, std::mt19937_64& rng);

/// Replay term through the current blending MLP. Returns per-record squared errors
/// (mean over channels); accumulates MLP gradients of `scale` * sum of errors when `grads` is non-empty.
std::vector<float> replay_loss(const MlpParams<float>& mlp, std::span<const RaySampleRecord* const> records,
                               float scale, std::span<float> grads);

/// What a train step optimises.
struct StepTargets {
    bool grid = true;
    bool mlp = true;
    bool encoder = false;
};

struct StepResult {
    double loss_current = 0.0;
    double loss_replay = 0.0;
    double loss() const { return loss_current + loss_replay; }
    std::vector<float> ray_errors; ///< per current ray, mean over channels
};

/// Optimiser state for one frame's stage.
struct Optimizers {
    Adam<float> grid;
    Adam<float> mlp;
    Adam<float> encoder;
};

/// One optimisation step: forward, loss, backward and Adam updates.
/// `sources` must hold feature maps (and encoder tapes when the encoder trains).
StepResult train_step(const TrainingBatch& batch, FrameSources<float>& sources, DensityGrid& grid,
                      BlendNetwork<float>& net, ExperienceBuffer* buffer, const TrainConfig& cfg,
                      const StepTargets& targets, Optimizers& opt, std::mt19937_64& rng,
                      RenderTape<float>* tape_out = nullptr);

/// Admits the current-frame rays of a step into the buffer.
void update_buffer(const TrainingBatch& batch, const RenderTape<float>& tape, const StepResult& result,
                   const MultiViewFrame& frame, const MultiViewFrame* next_frame, ExperienceBuffer& buffer,
                   const TrainConfig& cfg);

/// Captures one ray of a recorded batch as a replay record.
RaySampleRecord capture_record(const RenderTape<float>& tape, std::size_t ray, const std::array<float, 3>& target,
                               int frame, const PixelRef& pixel);

struct InitReport {
    std::vector<int> iterations; ///< per frame
    std::vector<double> final_loss;
};

/// Per-frame density fit with a fixed color model (uniform blend of the nearest
/// views), warm-started from the previous frame, then aligned.
AlignedGroupGrids coarse_density_init(const SequenceGroup& group, const std::optional<DensityGrid>& prev_grid,
                                      const Aabb& bbox, const TrainConfig& cfg, std::uint64_t seed,
                                      InitReport* report = nullptr);

/// Fits one frame's grid with the fixed color model. Returns iterations used.
int fit_density_fixed_colors(const MultiViewFrame& frame, std::span<const int> train_views, DensityGrid& grid,
                             const TrainConfig& cfg, std::uint64_t seed, double* final_loss = nullptr);

/// Raises enclosed cavities (free nodes not connected to the grid boundary) to `interior_raw`.
std::size_t fill_enclosed(DensityGrid& grid, double occupied_raw, double interior_raw);

/// Raw value above which a node is opaque at unit step (alpha > 0.5).
double occupied_raw_threshold(double shift = kDefaultDensityShift);

struct TrainerState {
    BlendNetwork<float> net;
    ExperienceBuffer buffer;
    std::optional<DensityGrid> last_grid;
    int groups_done = 0;
};

TrainerState make_trainer_state(const TrainConfig& cfg);

/// Append-only JSON-lines training log.
class TrainLog {
public:
    explicit TrainLog(std::ostream* out = nullptr) : out_(out) {}
    void step(int step, int frame, int group, double loss_current, double loss_replay,
              std::optional<double> psnr_val = std::nullopt);
    void event(const std::string& json_line);

private:
    std::ostream* out_;
};

struct GroupReport {
    InitReport init;
    double cl_first_loss = 0.0;
    double cl_last_loss = 0.0;
    std::vector<double> frame_loss; ///< final loss per frame
};

/// Coarse init, joint training on the first frame with replay, grid-only
/// refinement on later frames. Updates `state` for the next group.
AlignedGroupGrids train_group(const SequenceGroup& group, const Aabb& bbox, TrainerState& state,
                              const TrainConfig& cfg, TrainLog* log = nullptr, GroupReport* report = nullptr);

/// Training views: all views not listed in cfg.test_views.
std::vector<int> training_views(std::size_t view_count, const TrainConfig& cfg);

/// Renders `camera` for a frame with the trained model.
Image render_view(const MultiViewFrame& frame, const DensityGrid& grid, const BlendNetwork<float>& net,
                  const TrainConfig& cfg, const Camera& camera, int threads = 0);

} // namespace nevrf
