#pragma once

#include "scdd/checkpoint.hpp"
#include "scdd/denoiser.hpp"
#include "scdd/objective.hpp"
#include "scdd/rng.hpp"
#include "scdd/schedule.hpp"

#include <functional>
#include <span>
#include <vector>

namespace scdd {

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-9;
    double weight_decay = 0.0;
    double ema_decay = 0.9999;
};

// Decoupled-weight-decay Adam with bias correction, followed by the EMA update.
// Throws Error (before touching anything) if a gradient entry is not finite.
void optimizer_step(DenoiserParams& params, OptimizerState& state, const DenoiserParams& grads, double lr,
                    const OptimizerConfig& cfg = {});

struct LossAndGrad {
    LossBreakdown loss; // mean over the batch of the per-sequence training loss
    DenoiserParams grads;
};

std::vector<Corruption> draw_batch_corruption(const TimeGrid& grid, std::span<const std::vector<Token>> batch,
                                              const Vocab& vocab, Rng& rng);

// Training-form loss and exact gradient at fixed corruptions.
LossAndGrad loss_and_grad_fixed(const DenoiserParams& params, const TimeGrid& grid,
                                std::span<const std::vector<Token>> batch, std::span<const Corruption> corruptions);

// One time draw per sequence from `rng`, then loss_and_grad_fixed.
LossAndGrad loss_and_grad(const DenoiserParams& params, const TimeGrid& grid,
                          std::span<const std::vector<Token>> batch, Rng& rng);

struct TrainConfig {
    ModelDims dims;
    long steps = 20000;
    int batch = 64;
    double lr = 3e-3;
    long warmup = 200;
    double warmup_start_lr = 1e-6;
    double final_lr_ratio = 0.1;
    double init_scale = 0.05;
    long log_every = 100;
    OptimizerConfig optimizer;

    void validate() const;
};

// Linear warmup from warmup_start_lr to lr, then cosine decay to final_lr_ratio * lr
// at the last step. `step` counts completed updates.
double learning_rate_at(const TrainConfig& cfg, long step);

struct TrainLogRow {
    long step = 0;
    LossBreakdown per_token; // bound form on the current batch
    double ppl = 0.0;
};

using TrainLogFn = std::function<void(const TrainLogRow&)>;

// Initializes parameters from `rng`, then runs cfg.steps updates on batches drawn
// with replacement from `dataset`.
Checkpoint train(const TrainConfig& cfg, const NoiseSchedule& schedule, int T,
                 std::span<const std::vector<Token>> dataset, Rng& rng, const TrainLogFn& log = {});

} // namespace scdd
