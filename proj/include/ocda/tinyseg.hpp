#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocda/image.hpp"

namespace ocda {

/// Named dense tensor of 64-bit reals.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;

    std::size_t size() const { return data.size(); }
    bool operator==(const Tensor&) const = default;
};

/// Fully-convolutional stack: in_channels -> hidden... -> num_classes, all
/// same-padded stride-1 convolutions with ReLU between layers and a pixelwise
/// softmax head. No downsampling, so predictions align with inputs.
struct Architecture {
    int in_channels = 3;
    std::vector<int> hidden = {16, 16};
    int num_classes = 0;
    int kernel = 3;

    int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
    int receptive_field() const { return 1 + layer_count() * (kernel - 1); }
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

struct NetworkParams {
    Architecture arch;
    std::vector<Tensor> tensors;  // conv0.weight, conv0.bias, conv1.weight, ...

    std::size_t parameter_count() const;
    bool operator==(const NetworkParams&) const = default;
};

/// H x W x C softmax output, pixel-major (h, w, c).
struct PredictionMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    PredictionMap() = default;
    PredictionMap(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, 0.0) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct OptimizerState {
    double lr0 = 2.5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_exponent = 0.9;
    std::int64_t max_iter = 1;
    std::int64_t iter = 0;
    std::vector<Tensor> velocity;  // lazily shaped to match the params

    bool operator==(const OptimizerState&) const = default;
};

enum class KlDirection {
    TargetToStudent,  // KL(target || student); target constant (default)
    StudentToTarget,  // KL(student || target)
};

struct LossGrads {
    double loss = 0.0;
    std::vector<Tensor> grads;  // NetworkParams-shaped
};

NetworkParams init_network(const Architecture& arch, std::uint64_t seed);

std::vector<Tensor> zero_grads_like(const NetworkParams& params);
void accumulate_grads(std::vector<Tensor>& dst, const std::vector<Tensor>& src, double scale);

PredictionMap forward(const NetworkParams& params, const Image& img);

double cross_entropy_loss(const PredictionMap& pred, const LabelMap& label);
LossGrads cross_entropy(const NetworkParams& params, const Image& img, const LabelMap& label);

double kl_loss(const PredictionMap& student, const PredictionMap& target, KlDirection dir);
LossGrads kl_divergence(const NetworkParams& params, const Image& img,
                        const PredictionMap& target, KlDirection dir);

double l1_loss(const PredictionMap& a, const PredictionMap& b);
/// Mean absolute difference between the predictions on `img_a` and `img_b`,
/// both produced by `params`; gradients flow through the selected sides.
LossGrads l1_consistency(const NetworkParams& params, const Image& img_a, const Image& img_b,
                         bool grad_through_a = true, bool grad_through_b = true);

double poly_lr(std::int64_t iter, const OptimizerState& state);

/// Momentum SGD with decoupled L2 weight decay; increments state.iter.
void sgd_step(NetworkParams& params, const std::vector<Tensor>& grads, OptimizerState& state);

/// theta' <- lambda * theta' + (1 - lambda) * theta, elementwise.
void ema_update(NetworkParams& momentum_params, const NetworkParams& student_params,
                double lambda);

/// Per-pixel argmax of the forward pass; ties break toward the lower class.
LabelMap pseudo_label(const NetworkParams& params, const Image& img);
LabelMap argmax_label(const PredictionMap& pred);

/// Sum over (h, w, c) of p*log(p), natural log, 0 at p = 0. Non-positive.
double prediction_confidence(const PredictionMap& pred);

struct Checkpoint {
    NetworkParams params;
    OptimizerState opt;
    std::string rng_state;

    bool operator==(const Checkpoint&) const = default;
};

// Binary checkpoint container, little-endian:
//   magic "OCDACKP1"
//   arch: i32 in_channels, i32 kernel, i32 num_classes, i32 n_hidden, i32 hidden...
//   u32 tensor count, then per tensor: u32 name length, name bytes,
//     u32 ndim, i32 dims..., f64 data
//   optimizer: f64 lr0, momentum, weight_decay, poly_exponent;
//     i64 max_iter, iter; u32 velocity count, tensors as above
//   u32 rng state length, bytes
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ocda
