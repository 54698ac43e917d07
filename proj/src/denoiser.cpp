#include "scdd/denoiser.hpp"

#include "scdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scdd {

namespace {

void fill_uniform(Matrix& m, Rng& rng, double scale) {
    for (double& v : m.data) {
        v = (2.0 * uniform01(rng) - 1.0) * scale;
    }
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows != rows || m.cols != cols || m.data.size() != rows * cols) {
        std::ostringstream msg;
        msg << "parameter " << name << " has shape " << m.rows << "x" << m.cols << ", expected " << rows << "x"
            << cols;
        throw InvalidArgument(msg.str());
    }
}

} // namespace

DenoiserParams DenoiserParams::zeros(const ModelDims& dims) {
    if (dims.K < 1 || dims.d < 1 || dims.h < 1) {
        throw InvalidArgument("model dimensions must be positive");
    }
    const auto V = static_cast<std::size_t>(dims.K + 1);
    const auto d = static_cast<std::size_t>(dims.d);
    const auto h = static_cast<std::size_t>(dims.h);
    DenoiserParams p;
    p.dims = dims;
    p.embed = Matrix(V, d);
    p.w1 = Matrix(h, static_cast<std::size_t>(dims.feature_dim()));
    p.b1 = Matrix(h, 1);
    p.w2 = Matrix(V, h);
    p.b2 = Matrix(V, 1);
    return p;
}

DenoiserParams DenoiserParams::init(const ModelDims& dims, Rng& rng, double scale) {
    DenoiserParams p = zeros(dims);
    fill_uniform(p.embed, rng, scale);
    fill_uniform(p.w1, rng, scale);
    fill_uniform(p.w2, rng, scale);
    return p;
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    for (const Matrix* m : tensors()) {
        n += m->data.size();
    }
    return n;
}

void DenoiserParams::validate() const {
    const auto V = static_cast<std::size_t>(dims.K + 1);
    const auto d = static_cast<std::size_t>(dims.d);
    const auto h = static_cast<std::size_t>(dims.h);
    check_shape(embed, V, d, "embed");
    check_shape(w1, h, static_cast<std::size_t>(dims.feature_dim()), "w1");
    check_shape(b1, h, 1, "b1");
    check_shape(w2, V, h, "w2");
    check_shape(b2, V, 1, "b2");
    for (const Matrix* m : tensors()) {
        for (double v : m->data) {
            if (!std::isfinite(v)) {
                throw InvalidArgument("non-finite parameter value");
            }
        }
    }
}

MlpDenoiser::MlpDenoiser(DenoiserParams params) : params_(std::move(params)), vocab_(params_.dims.K) {
    params_.validate();
}

std::vector<TokenDist> MlpDenoiser::denoise(std::span<const Token> z_seq, double t) const {
    return denoise_forward(params_, z_seq, t).probs;
}

ForwardCache denoise_forward(const DenoiserParams& params, std::span<const Token> z_seq, double t) {
    if (z_seq.empty()) {
        throw InvalidArgument("denoiser input sequence is empty");
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("denoiser time outside [0,1]");
    }
    const int K = params.dims.K;
    const auto d = static_cast<std::size_t>(params.dims.d);
    const auto h = static_cast<std::size_t>(params.dims.h);
    const std::size_t L = z_seq.size();
    for (Token z : z_seq) {
        if (z < 0 || z > K) {
            throw InvalidArgument("denoiser input token out of range");
        }
    }

    ForwardCache cache;
    cache.z.assign(z_seq.begin(), z_seq.end());
    cache.t = t;
    cache.mean_embed.assign(d, 0.0);
    for (Token z : z_seq) {
        const double* e = params.embed.row(static_cast<std::size_t>(z));
        for (std::size_t j = 0; j < d; ++j) {
            cache.mean_embed[j] += e[j];
        }
    }
    for (double& v : cache.mean_embed) {
        v /= static_cast<double>(L);
    }

    // Shared part of the pre-activation: mean embedding, time features, and bias.
    std::vector<double> shared(h);
    for (std::size_t i = 0; i < h; ++i) {
        const double* w = params.w1.row(i);
        double acc = params.b1.data[i] + w[2 * d] * t + w[2 * d + 1] * (1.0 - t);
        for (std::size_t j = 0; j < d; ++j) {
            acc += w[d + j] * cache.mean_embed[j];
        }
        shared[i] = acc;
    }

    cache.hidden.assign(L, std::vector<double>(h));
    cache.probs.reserve(L);
    std::vector<double> logits(static_cast<std::size_t>(K));
    for (std::size_t l = 0; l < L; ++l) {
        const double* e = params.embed.row(static_cast<std::size_t>(z_seq[l]));
        auto& hid = cache.hidden[l];
        for (std::size_t i = 0; i < h; ++i) {
            const double* w = params.w1.row(i);
            double acc = shared[i];
            for (std::size_t j = 0; j < d; ++j) {
                acc += w[j] * e[j];
            }
            hid[i] = std::tanh(acc);
        }
        double top = -INFINITY;
        for (int v = 0; v < K; ++v) {
            const double* w = params.w2.row(static_cast<std::size_t>(v));
            double acc = params.b2.data[static_cast<std::size_t>(v)];
            for (std::size_t i = 0; i < h; ++i) {
                acc += w[i] * hid[i];
            }
            logits[static_cast<std::size_t>(v)] = acc;
            top = std::max(top, acc);
        }
        TokenDist p(std::vector<double>(static_cast<std::size_t>(K + 1), 0.0));
        double total = 0.0;
        for (int v = 0; v < K; ++v) {
            p[v] = std::exp(logits[static_cast<std::size_t>(v)] - top);
            total += p[v];
        }
        for (int v = 0; v < K; ++v) {
            p[v] /= total;
        }
        cache.probs.push_back(std::move(p));
    }
    return cache;
}

void denoise_backward(const DenoiserParams& params, const ForwardCache& cache,
                      std::span<const std::vector<double>> dloss_dprobs, DenoiserParams& grads) {
    const int K = params.dims.K;
    const auto d = static_cast<std::size_t>(params.dims.d);
    const auto h = static_cast<std::size_t>(params.dims.h);
    const std::size_t L = cache.z.size();
    if (dloss_dprobs.size() != L) {
        throw InvalidArgument("gradient list length does not match the sequence");
    }

    std::vector<double> dlogit(static_cast<std::size_t>(K));
    std::vector<double> dpre(h);
    std::vector<double> dmean(d, 0.0);
    const double t = cache.t;

    for (std::size_t l = 0; l < L; ++l) {
        const TokenDist& p = cache.probs[l];
        const auto& g = dloss_dprobs[l];
        double dot = 0.0;
        for (int v = 0; v < K; ++v) {
            dot += p[v] * g[static_cast<std::size_t>(v)];
        }
        for (int v = 0; v < K; ++v) {
            dlogit[static_cast<std::size_t>(v)] = p[v] * (g[static_cast<std::size_t>(v)] - dot);
        }

        const auto& hid = cache.hidden[l];
        std::fill(dpre.begin(), dpre.end(), 0.0);
        for (int v = 0; v < K; ++v) {
            const double dl = dlogit[static_cast<std::size_t>(v)];
            if (dl == 0.0) {
                continue;
            }
            grads.b2.data[static_cast<std::size_t>(v)] += dl;
            double* gw = grads.w2.row(static_cast<std::size_t>(v));
            const double* w = params.w2.row(static_cast<std::size_t>(v));
            for (std::size_t i = 0; i < h; ++i) {
                gw[i] += dl * hid[i];
                dpre[i] += dl * w[i];
            }
        }
        for (std::size_t i = 0; i < h; ++i) {
            dpre[i] *= 1.0 - hid[i] * hid[i];
        }

        const auto z = static_cast<std::size_t>(cache.z[l]);
        const double* e = params.embed.row(z);
        double* ge = grads.embed.row(z);
        for (std::size_t i = 0; i < h; ++i) {
            const double da = dpre[i];
            if (da == 0.0) {
                continue;
            }
            grads.b1.data[i] += da;
            double* gw = grads.w1.row(i);
            const double* w = params.w1.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                gw[j] += da * e[j];
                gw[d + j] += da * cache.mean_embed[j];
                ge[j] += da * w[j];
                dmean[j] += da * w[d + j];
            }
            gw[2 * d] += da * t;
            gw[2 * d + 1] += da * (1.0 - t);
        }
    }

    const double inv_l = 1.0 / static_cast<double>(L);
    for (std::size_t l = 0; l < L; ++l) {
        double* ge = grads.embed.row(static_cast<std::size_t>(cache.z[l]));
        for (std::size_t j = 0; j < d; ++j) {
            ge[j] += dmean[j] * inv_l;
        }
    }
}

} // namespace scdd
