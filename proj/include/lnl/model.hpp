#pragma once

#include <string>
#include <vector>

#include "lnl/matrix.hpp"
#include "lnl/rng.hpp"

namespace lnl::nn {

// Two-layer classifier: rectifier feature extractor (w1, b1) followed by a
// linear head (w2, b2). The post-rectifier hidden vector is the penultimate
// representation handed to the confidence estimator.
struct ModelParams {
    int d = 0, h = 0, c = 0;
    Matrix w1;               // h x d
    std::vector<double> b1;  // h
    Matrix w2;               // c x h
    std::vector<double> b2;  // c
};

struct ForwardResult {
    std::vector<double> z;       // h, post-rectifier
    std::vector<double> logits;  // c
    std::vector<double> probs;   // c, softmax with max-subtraction
};

struct Grads {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
};

struct OptState {
    double learning_rate = 0.05;
    double momentum = 0.9;
    Grads velocity;  // lazily shaped on first step
    bool initialized = false;
};

// One weighted training example; target is a distribution over c classes.
struct TrainSample {
    const double* x = nullptr;
    const double* target = nullptr;
    double weight = 1.0;
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
ModelParams init(int d, int h, int c, Rng& rng);

ForwardResult forward(const ModelParams& p, const double* x);

// H(target, probs) = -sum_c target_c * ln(probs_c + 1e-12).
double soft_cross_entropy(const std::vector<double>& probs, const std::vector<double>& target);

// Gradients of (1/sum_i weight_i) * sum_i weight_i * H(target_i, probs_i).
// Accumulates in sample index order so results are bit-reproducible.
// Throws std::invalid_argument when the effective batch is empty.
Grads backward(const ModelParams& p, const std::vector<TrainSample>& batch);

// velocity <- momentum * velocity + grads; params <- params - lr * velocity.
void sgd_step(ModelParams& p, const Grads& g, OptState& opt);

// JSON checkpoint with a shape header; round-trips bit-exactly.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace lnl::nn
