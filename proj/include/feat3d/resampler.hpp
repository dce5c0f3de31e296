#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feat3d/errors.hpp"

namespace f3d::resample {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Single-head cross-attention block with a GELU MLP, pre-layer-norm on both
// sublayers, no projection biases and no learnable norm parameters.
struct LayerParams {
    MatrixXd w_query;   // D x D
    MatrixXd w_key;     // D x D
    MatrixXd w_value;   // D x D
    MatrixXd w_output;  // D x D
    MatrixXd w_mlp_in;  // 4D x D
    VectorXd b_mlp_in;  // 4D
    MatrixXd w_mlp_out;  // D x 4D
    VectorXd b_mlp_out;  // D
};

// A fixed set of learned latents repeatedly cross-attends over the inputs,
// distilling an arbitrary-size point set into K rows.
struct ResamplerParams {
    int n_latents = 32;
    int d_model = 0;
    int n_layers = 2;
    int d_input = 0;     // equals d_model unless an input projection is used
    MatrixXd latents;    // K x D
    MatrixXd w_input;    // D x d_input; empty when d_input == d_model
    std::vector<LayerParams> layers;

    static ResamplerParams init(int n_latents, int d_model, int n_layers, int d_input,
                                std::uint64_t seed);
    bool has_input_projection() const { return d_input != d_model; }
    void validate() const;
};

struct ResamplerOutput {
    MatrixXd values;                  // K x D, shape independent of N
    std::vector<MatrixXd> attention;  // per layer, K x N rows summing to 1
};

// Mirrors ResamplerParams plus the gradient w.r.t. the raw inputs.
struct ResamplerGradients {
    MatrixXd latents;
    MatrixXd w_input;
    std::vector<LayerParams> layers;
    MatrixXd inputs;  // N x d_input
};

ResamplerOutput forward(const ResamplerParams& params, const MatrixXd& inputs);

// Exact reverse-mode gradients of forward under an upstream K x D gradient.
ResamplerGradients backward(const ResamplerParams& params, const MatrixXd& inputs,
                            const MatrixXd& upstream);

struct ProbeItem {
    MatrixXd inputs;  // N x d_input
    MatrixXd target;  // K x D
};

struct ProbeResult {
    std::vector<double> loss_trace;  // per-step MSE on the sampled item
};

// Plain gradient descent on per-item mean squared error; items sampled
// uniformly by seed. Throws ValidationError naming the step on divergence.
ProbeResult train_probe(ResamplerParams& params, const std::vector<ProbeItem>& dataset, int steps,
                        double learning_rate, std::uint64_t seed);

void save_params(const ResamplerParams& params, const std::string& prefix);
ResamplerParams load_params(const std::string& prefix);

}  // namespace f3d::resample
