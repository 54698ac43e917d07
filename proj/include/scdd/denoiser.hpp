#pragma once

#include "scdd/rng.hpp"
#include "scdd/vocab.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace scdd {

// x_theta(z^{1:L}, t): one clean-token distribution per position, zero on the mask.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual const Vocab& vocab() const = 0;
    virtual std::vector<TokenDist> denoise(std::span<const Token> z_seq, double t) const = 0;
};

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }

    bool operator==(const Matrix&) const = default;
};

struct ModelDims {
    int K = 16;
    int d = 32;
    int h = 64;

    int feature_dim() const { return 2 * d + 2; }
    bool operator==(const ModelDims&) const = default;
};

// Weights of the single-hidden-layer predictor. Biases are stored as one-column matrices.
struct DenoiserParams {
    static constexpr std::array<const char*, 5> kNames = {"embed", "w1", "b1", "w2", "b2"};

    ModelDims dims;
    Matrix embed; // (K+1) x d
    Matrix w1;    // h x (2d+2)
    Matrix b1;    // h x 1
    Matrix w2;    // (K+1) x h
    Matrix b2;    // (K+1) x 1

    // All-zero parameters of the given shape.
    static DenoiserParams zeros(const ModelDims& dims);
    // Embeddings and weights uniform(-scale, scale) from a seeded stream; biases zero.
    static DenoiserParams init(const ModelDims& dims, Rng& rng, double scale = 0.05);

    std::array<Matrix*, 5> tensors() { return {&embed, &w1, &b1, &w2, &b2}; }
    std::array<const Matrix*, 5> tensors() const { return {&embed, &w1, &b1, &w2, &b2}; }
    std::size_t parameter_count() const;

    // Throws InvalidArgument on inconsistent shapes or non-finite entries.
    void validate() const;

    bool operator==(const DenoiserParams&) const = default;
};

// Per-position activations kept for the backward pass.
struct ForwardCache {
    std::vector<Token> z;
    double t = 0.0;
    std::vector<double> mean_embed;         // d
    std::vector<std::vector<double>> hidden; // L x h, post-tanh
    std::vector<TokenDist> probs;           // L x (K+1)
};

// features = [embed[z_l], mean_k embed[z_k], t, 1 - t];
// logits = w2 tanh(w1 features + b1) + b2; softmax over the K non-mask logits only.
class MlpDenoiser final : public Denoiser {
public:
    explicit MlpDenoiser(DenoiserParams params);

    const Vocab& vocab() const override { return vocab_; }
    std::vector<TokenDist> denoise(std::span<const Token> z_seq, double t) const override;

    const DenoiserParams& params() const { return params_; }

private:
    DenoiserParams params_;
    Vocab vocab_;
};

ForwardCache denoise_forward(const DenoiserParams& params, std::span<const Token> z_seq, double t);

// Accumulates into `grads` the gradient of sum_l <dloss_dprobs[l], probs[l]>-linearized loss,
// i.e. backpropagates dL/dx_theta through softmax, hidden layer, and embeddings.
void denoise_backward(const DenoiserParams& params, const ForwardCache& cache,
                      std::span<const std::vector<double>> dloss_dprobs, DenoiserParams& grads);

} // namespace scdd
