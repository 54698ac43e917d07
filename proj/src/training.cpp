#include "scdd/training.hpp"

#include "scdd/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace scdd {

void optimizer_step(DenoiserParams& params, OptimizerState& state, const DenoiserParams& grads, double lr,
                    const OptimizerConfig& cfg) {
    if (!(params.dims == grads.dims) || !(params.dims == state.m1.dims)) {
        throw InvalidArgument("optimizer_step: shape mismatch");
    }
    const auto gs = grads.tensors();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (double g : gs[i]->data) {
            if (!std::isfinite(g)) {
                throw Error(std::string("optimizer_step: non-finite gradient in '") + DenoiserParams::kNames[i] +
                            "' at step " + std::to_string(state.step_count + 1));
            }
        }
    }
    state.step_count += 1;
    const double n = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, n);
    const double c2 = 1.0 - std::pow(cfg.beta2, n);
    const auto ps = params.tensors();
    const auto m1 = state.m1.tensors();
    const auto m2 = state.m2.tensors();
    const auto ema = state.ema.tensors();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = ps[i]->data;
        const auto& g = gs[i]->data;
        auto& a = m1[i]->data;
        auto& b = m2[i]->data;
        auto& e = ema[i]->data;
        for (std::size_t j = 0; j < p.size(); ++j) {
            a[j] = cfg.beta1 * a[j] + (1.0 - cfg.beta1) * g[j];
            b[j] = cfg.beta2 * b[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = a[j] / c1;
            const double vhat = b[j] / c2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[j]);
            e[j] = cfg.ema_decay * e[j] + (1.0 - cfg.ema_decay) * p[j];
        }
    }
}

std::vector<Corruption> draw_batch_corruption(const TimeGrid& grid, std::span<const std::vector<Token>> batch,
                                              const Vocab& vocab, Rng& rng) {
    std::vector<Corruption> out;
    out.reserve(batch.size());
    for (const auto& seq : batch) {
        out.push_back(draw_corruption(grid, seq, vocab, rng));
    }
    return out;
}

LossAndGrad loss_and_grad_fixed(const DenoiserParams& params, const TimeGrid& grid,
                                std::span<const std::vector<Token>> batch, std::span<const Corruption> corruptions) {
    if (batch.empty()) {
        throw InvalidArgument("loss_and_grad: empty batch");
    }
    if (corruptions.size() != batch.size()) {
        throw InvalidArgument("loss_and_grad: one corruption per sequence required");
    }
    const Vocab vocab(params.dims.K);
    const double scale = 1.0 / static_cast<double>(batch.size());
    LossAndGrad out{{}, DenoiserParams::zeros(params.dims)};
    std::vector<double> dpred(vocab.size());

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& x = batch[b];
        const auto& c = corruptions[b];
        const auto& ps = grid.at(c.step - 1);
        const auto& pt = grid.at(c.step);

        const ForwardCache cache = denoise_forward(params, c.z_t, pt.t);
        std::vector<std::vector<double>> dprobs(x.size(), std::vector<double>(vocab.size(), 0.0));
        for (std::size_t l = 0; l < x.size(); ++l) {
            const double v = diffusion_term_discrete(ps, pt, c.z_t[l], x[l], cache.probs[l], grid.T, vocab, dpred);
            out.loss.diffusion += scale * v;
            for (std::size_t k = 0; k < dpred.size(); ++k) {
                dprobs[l][k] = scale * dpred[k];
            }
        }
        denoise_backward(params, cache, dprobs, out.grads);

        if (!c.z_0.empty()) {
            const auto& p0 = grid.at(0);
            const ForwardCache cache0 = denoise_forward(params, c.z_0, p0.t);
            for (std::size_t l = 0; l < x.size(); ++l) {
                const double v = reconstruction_term(p0, c.z_0[l], x[l], cache0.probs[l], vocab, dpred);
                out.loss.reconstruction += scale * v;
                for (std::size_t k = 0; k < dpred.size(); ++k) {
                    dprobs[l][k] = scale * dpred[k];
                }
            }
            denoise_backward(params, cache0, dprobs, out.grads);
        }
    }
    out.loss.total = out.loss.reconstruction + out.loss.prior + out.loss.diffusion;
    return out;
}

LossAndGrad loss_and_grad(const DenoiserParams& params, const TimeGrid& grid,
                          std::span<const std::vector<Token>> batch, Rng& rng) {
    if (batch.empty()) {
        throw InvalidArgument("loss_and_grad: empty batch");
    }
    const auto corruptions = draw_batch_corruption(grid, batch, Vocab(params.dims.K), rng);
    return loss_and_grad_fixed(params, grid, batch, corruptions);
}

void TrainConfig::validate() const {
    if (dims.K < 1 || dims.d < 1 || dims.h < 1) {
        throw InvalidArgument("model dimensions must be positive");
    }
    if (steps < 0) {
        throw InvalidArgument("steps must be non-negative");
    }
    if (batch < 1) {
        throw InvalidArgument("batch must be positive");
    }
    if (!(lr > 0.0) || !(warmup_start_lr > 0.0) || !(final_lr_ratio >= 0.0 && final_lr_ratio <= 1.0)) {
        throw InvalidArgument("invalid learning-rate settings");
    }
    if (warmup < 0) {
        throw InvalidArgument("warmup must be non-negative");
    }
    if (!(init_scale >= 0.0)) {
        throw InvalidArgument("init_scale must be non-negative");
    }
    if (log_every < 1) {
        throw InvalidArgument("log_every must be positive");
    }
    const auto& o = optimizer;
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0) || !(o.eps > 0.0) ||
        !(o.weight_decay >= 0.0) || !(o.ema_decay >= 0.0 && o.ema_decay <= 1.0)) {
        throw InvalidArgument("invalid optimizer settings");
    }
}

double learning_rate_at(const TrainConfig& cfg, long step) {
    if (step < cfg.warmup) {
        const double f = static_cast<double>(step) / static_cast<double>(cfg.warmup);
        return cfg.warmup_start_lr + (cfg.lr - cfg.warmup_start_lr) * f;
    }
    const double span = static_cast<double>(std::max(1L, cfg.steps - cfg.warmup));
    const double f = std::min(1.0, static_cast<double>(step - cfg.warmup) / span);
    const double floor = cfg.final_lr_ratio * cfg.lr;
    return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

Checkpoint train(const TrainConfig& cfg, const NoiseSchedule& schedule, int T,
                 std::span<const std::vector<Token>> dataset, Rng& rng, const TrainLogFn& log) {
    cfg.validate();
    schedule.validate();
    if (dataset.empty()) {
        throw InvalidArgument("training dataset is empty");
    }
    const Vocab vocab(cfg.dims.K);
    for (const auto& seq : dataset) {
        if (seq.empty()) {
            throw InvalidArgument("training dataset contains an empty sequence");
        }
        for (Token x : seq) {
            vocab.check_clean(x);
        }
    }
    const TimeGrid grid = discretize(schedule, T);

    Checkpoint ckpt;
    ckpt.schedule = schedule;
    ckpt.T = T;
    ckpt.params = DenoiserParams::init(cfg.dims, rng, cfg.init_scale);
    ckpt.optimizer = OptimizerState::init(ckpt.params);

    std::vector<std::vector<Token>> batch(static_cast<std::size_t>(cfg.batch));
    for (long step = 0; step < cfg.steps; ++step) {
        for (auto& seq : batch) {
            seq = dataset[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(dataset.size())))];
        }
        const auto corruptions = draw_batch_corruption(grid, batch, vocab, rng);
        const bool log_now = log && (step % cfg.log_every == 0 || step + 1 == cfg.steps);
        if (log_now) {
            const MlpDenoiser model(ckpt.params);
            LossBreakdown acc;
            double tokens = 0.0;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                acc += evaluate_corruption(model, grid, batch[b], corruptions[b], NelboForm::Bound);
                tokens += static_cast<double>(batch[b].size());
            }
            const LossBreakdown per_token = acc.scaled(1.0 / tokens);
            log(TrainLogRow{step, per_token, std::exp(per_token.total)});
        }
        const LossAndGrad lg = loss_and_grad_fixed(ckpt.params, grid, batch, corruptions);
        optimizer_step(ckpt.params, ckpt.optimizer, lg.grads, learning_rate_at(cfg, step), cfg.optimizer);
        ckpt.step = step + 1;
    }
    return ckpt;
}

} // namespace scdd
