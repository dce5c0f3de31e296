#include "feat3d/resampler.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "feat3d/rng.hpp"
#include "feat3d/tensorfile.hpp"

namespace f3d::resample {

using json = nlohmann::ordered_json;

namespace {

constexpr double kLayerNormEps = 1e-5;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
    return cdf + x * pdf;
}

struct NormStats {
    VectorXd mean;     // per row
    VectorXd inv_std;  // per row
};

MatrixXd layer_norm_rows(const MatrixXd& x, NormStats& stats) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    stats.mean.resize(rows);
    stats.inv_std.resize(rows);
    MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        stats.mean(r) = mu;
        stats.inv_std(r) = inv;
        out.row(r) = (x.row(r).array() - mu) * inv;
    }
    return out;
}

// Backward of non-affine layer norm given the normalized rows y.
MatrixXd layer_norm_backward(const MatrixXd& g_y, const MatrixXd& y, const NormStats& stats) {
    MatrixXd out(g_y.rows(), g_y.cols());
    for (Eigen::Index r = 0; r < g_y.rows(); ++r) {
        const double mean_g = g_y.row(r).mean();
        const double mean_gy = (g_y.row(r).array() * y.row(r).array()).mean();
        out.row(r) =
            stats.inv_std(r) * (g_y.row(r).array() - mean_g - y.row(r).array() * mean_gy);
    }
    return out;
}

MatrixXd softmax_rows(const MatrixXd& logits) {
    MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double peak = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - peak).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

struct LayerCache {
    MatrixXd x_in;  // latents entering the layer
    NormStats x_norm_stats;
    MatrixXd x_normed;
    MatrixXd query, key, value;
    MatrixXd attention;  // K x N
    MatrixXd context;    // attention * value
    MatrixXd x_mid;      // after attention residual
    NormStats mid_norm_stats;
    MatrixXd mid_normed;
    MatrixXd mlp_pre;   // K x 4D, pre-activation
    MatrixXd mlp_act;   // K x 4D, post-GELU
};

struct ForwardCache {
    MatrixXd projected;  // N x D inputs after optional projection
    NormStats input_norm_stats;
    MatrixXd input_normed;
    std::vector<LayerCache> layers;
    MatrixXd output;
};

MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * normal_double(rng);
    return m;
}

ForwardCache run_forward(const ResamplerParams& params, const MatrixXd& inputs) {
    params.validate();
    if (inputs.rows() < 1) throw ValidationError("resampler: empty input (N = 0)");
    if (inputs.cols() != params.d_input)
        throw ValidationError("resampler: input dimension mismatch");
    if (!inputs.allFinite()) throw ValidationError("resampler: non-finite input");

    ForwardCache cache;
    cache.projected = params.has_input_projection()
                          ? MatrixXd(inputs * params.w_input.transpose())
                          : inputs;
    // Inputs never change across layers, so their norm is shared.
    cache.input_normed = layer_norm_rows(cache.projected, cache.input_norm_stats);

    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_model));
    MatrixXd x = params.latents;
    cache.layers.resize(params.n_layers);
    for (int l = 0; l < params.n_layers; ++l) {
        const LayerParams& lp = params.layers[l];
        LayerCache& lc = cache.layers[l];
        lc.x_in = x;
        lc.x_normed = layer_norm_rows(x, lc.x_norm_stats);
        lc.query = lc.x_normed * lp.w_query.transpose();
        lc.key = cache.input_normed * lp.w_key.transpose();
        lc.value = cache.input_normed * lp.w_value.transpose();
        lc.attention = softmax_rows(scale * lc.query * lc.key.transpose());
        lc.context = lc.attention * lc.value;
        lc.x_mid = x + lc.context * lp.w_output.transpose();

        lc.mid_normed = layer_norm_rows(lc.x_mid, lc.mid_norm_stats);
        lc.mlp_pre = lc.mid_normed * lp.w_mlp_in.transpose();
        lc.mlp_pre.rowwise() += lp.b_mlp_in.transpose();
        lc.mlp_act = lc.mlp_pre.unaryExpr([](double v) { return gelu(v); });
        x = lc.x_mid + lc.mlp_act * lp.w_mlp_out.transpose();
        x.rowwise() += lp.b_mlp_out.transpose();
    }
    cache.output = x;
    return cache;
}

}  // namespace

ResamplerParams ResamplerParams::init(int n_latents, int d_model, int n_layers, int d_input,
                                      std::uint64_t seed) {
    if (n_latents < 1 || d_model < 1 || n_layers < 1 || d_input < 1)
        throw ValidationError("resampler: all dimensions must be positive");
    ResamplerParams p;
    p.n_latents = n_latents;
    p.d_model = d_model;
    p.n_layers = n_layers;
    p.d_input = d_input;

    constexpr double kInitStd = 0.02;
    Rng rng(seed);
    p.latents = gaussian_matrix(rng, n_latents, d_model, kInitStd);
    if (d_input != d_model) p.w_input = gaussian_matrix(rng, d_model, d_input, kInitStd);
    p.layers.resize(n_layers);
    for (auto& layer : p.layers) {
        layer.w_query = gaussian_matrix(rng, d_model, d_model, kInitStd);
        layer.w_key = gaussian_matrix(rng, d_model, d_model, kInitStd);
        layer.w_value = gaussian_matrix(rng, d_model, d_model, kInitStd);
        layer.w_output = gaussian_matrix(rng, d_model, d_model, kInitStd);
        layer.w_mlp_in = gaussian_matrix(rng, 4 * d_model, d_model, kInitStd);
        layer.b_mlp_in = VectorXd::Zero(4 * d_model);
        layer.w_mlp_out = gaussian_matrix(rng, d_model, 4 * d_model, kInitStd);
        layer.b_mlp_out = VectorXd::Zero(d_model);
    }
    return p;
}

void ResamplerParams::validate() const {
    if (latents.rows() != n_latents || latents.cols() != d_model)
        throw ValidationError("resampler: latent array shape mismatch");
    if (static_cast<int>(layers.size()) != n_layers)
        throw ValidationError("resampler: layer count mismatch");
    if (has_input_projection() &&
        (w_input.rows() != d_model || w_input.cols() != d_input))
        throw ValidationError("resampler: input projection shape mismatch");
    if (!latents.allFinite()) throw ValidationError("resampler: non-finite latents");
    for (const auto& layer : layers) {
        if (layer.w_query.rows() != d_model || layer.w_mlp_in.rows() != 4 * d_model ||
            layer.w_mlp_out.cols() != 4 * d_model)
            throw ValidationError("resampler: layer shape mismatch");
        if (!layer.w_query.allFinite() || !layer.w_key.allFinite() ||
            !layer.w_value.allFinite() || !layer.w_output.allFinite() ||
            !layer.w_mlp_in.allFinite() || !layer.w_mlp_out.allFinite() ||
            !layer.b_mlp_in.allFinite() || !layer.b_mlp_out.allFinite())
            throw ValidationError("resampler: non-finite layer parameters");
    }
}

ResamplerOutput forward(const ResamplerParams& params, const MatrixXd& inputs) {
    ForwardCache cache = run_forward(params, inputs);
    ResamplerOutput out;
    out.values = std::move(cache.output);
    out.attention.reserve(cache.layers.size());
    for (auto& lc : cache.layers) out.attention.push_back(std::move(lc.attention));
    return out;
}

ResamplerGradients backward(const ResamplerParams& params, const MatrixXd& inputs,
                            const MatrixXd& upstream) {
    const ForwardCache cache = run_forward(params, inputs);
    if (upstream.rows() != params.n_latents || upstream.cols() != params.d_model)
        throw ValidationError("resampler: upstream gradient shape mismatch");

    ResamplerGradients grads;
    grads.latents = MatrixXd::Zero(params.n_latents, params.d_model);
    if (params.has_input_projection())
        grads.w_input = MatrixXd::Zero(params.d_model, params.d_input);
    grads.layers.resize(params.n_layers);
    for (int l = 0; l < params.n_layers; ++l) {
        const LayerParams& lp = params.layers[l];
        auto& gl = grads.layers[l];
        gl.w_query = MatrixXd::Zero(lp.w_query.rows(), lp.w_query.cols());
        gl.w_key = MatrixXd::Zero(lp.w_key.rows(), lp.w_key.cols());
        gl.w_value = MatrixXd::Zero(lp.w_value.rows(), lp.w_value.cols());
        gl.w_output = MatrixXd::Zero(lp.w_output.rows(), lp.w_output.cols());
        gl.w_mlp_in = MatrixXd::Zero(lp.w_mlp_in.rows(), lp.w_mlp_in.cols());
        gl.b_mlp_in = VectorXd::Zero(lp.b_mlp_in.size());
        gl.w_mlp_out = MatrixXd::Zero(lp.w_mlp_out.rows(), lp.w_mlp_out.cols());
        gl.b_mlp_out = VectorXd::Zero(lp.b_mlp_out.size());
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_model));
    MatrixXd g_normed_input = MatrixXd::Zero(inputs.rows(), params.d_model);
    MatrixXd g_x = upstream;

    for (int l = params.n_layers - 1; l >= 0; --l) {
        const LayerParams& lp = params.layers[l];
        const LayerCache& lc = cache.layers[l];
        auto& gl = grads.layers[l];

        // MLP sublayer: x_out = x_mid + gelu(mid_normed W1^T + b1) W2^T + b2
        const MatrixXd& g_mlp_out_rows = g_x;
        gl.b_mlp_out = g_mlp_out_rows.colwise().sum();
        gl.w_mlp_out = g_mlp_out_rows.transpose() * lc.mlp_act;
        MatrixXd g_act = g_mlp_out_rows * lp.w_mlp_out;
        MatrixXd g_pre =
            g_act.array() * lc.mlp_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        gl.b_mlp_in = g_pre.colwise().sum();
        gl.w_mlp_in = g_pre.transpose() * lc.mid_normed;
        MatrixXd g_mid_normed = g_pre * lp.w_mlp_in;
        MatrixXd g_x_mid =
            g_x + layer_norm_backward(g_mid_normed, lc.mid_normed, lc.mid_norm_stats);

        // Attention sublayer: x_mid = x_in + (A v) W_o^T
        const MatrixXd& g_attn_out = g_x_mid;
        gl.w_output = g_attn_out.transpose() * lc.context;
        MatrixXd g_context = g_attn_out * lp.w_output;
        MatrixXd g_attention = g_context * lc.value.transpose();
        MatrixXd g_value = lc.attention.transpose() * g_context;

        // Softmax rows: g_logits = A .* (g_A - rowsum(g_A .* A))
        MatrixXd g_logits(lc.attention.rows(), lc.attention.cols());
        for (Eigen::Index r = 0; r < g_logits.rows(); ++r) {
            const double dot = (g_attention.row(r).array() * lc.attention.row(r).array()).sum();
            g_logits.row(r) =
                lc.attention.row(r).array() * (g_attention.row(r).array() - dot);
        }
        MatrixXd g_query = scale * g_logits * lc.key;
        MatrixXd g_key = scale * g_logits.transpose() * lc.query;

        gl.w_query = g_query.transpose() * lc.x_normed;
        gl.w_key = g_key.transpose() * cache.input_normed;
        gl.w_value = g_value.transpose() * cache.input_normed;

        g_normed_input += g_key * lp.w_key + g_value * lp.w_value;
        MatrixXd g_x_normed = g_query * lp.w_query;
        g_x = g_x_mid + layer_norm_backward(g_x_normed, lc.x_normed, lc.x_norm_stats);
    }

    grads.latents = g_x;
    MatrixXd g_projected =
        layer_norm_backward(g_normed_input, cache.input_normed, cache.input_norm_stats);
    if (params.has_input_projection()) {
        grads.w_input = g_projected.transpose() * inputs;
        grads.inputs = g_projected * params.w_input;
    } else {
        grads.inputs = std::move(g_projected);
    }
    return grads;
}

ProbeResult train_probe(ResamplerParams& params, const std::vector<ProbeItem>& dataset, int steps,
                        double learning_rate, std::uint64_t seed) {
    if (dataset.empty()) throw ValidationError("train_probe: empty dataset");
    ProbeResult result;
    Rng rng(seed);
    for (int step = 0; step < steps; ++step) {
        const ProbeItem& item = dataset[uniform_index(rng, dataset.size())];
        const ResamplerOutput out = forward(params, item.inputs);
        const MatrixXd diff = out.values - item.target;
        const double denom = static_cast<double>(diff.size());
        const double mse = diff.squaredNorm() / denom;
        if (!std::isfinite(mse))
            throw ValidationError("train_probe: non-finite loss at step " + std::to_string(step));
        result.loss_trace.push_back(mse);

        const ResamplerGradients grads = backward(params, item.inputs, (2.0 / denom) * diff);
        params.latents -= learning_rate * grads.latents;
        if (params.has_input_projection()) params.w_input -= learning_rate * grads.w_input;
        for (int l = 0; l < params.n_layers; ++l) {
            LayerParams& lp = params.layers[l];
            const LayerParams& gl = grads.layers[l];
            lp.w_query -= learning_rate * gl.w_query;
            lp.w_key -= learning_rate * gl.w_key;
            lp.w_value -= learning_rate * gl.w_value;
            lp.w_output -= learning_rate * gl.w_output;
            lp.w_mlp_in -= learning_rate * gl.w_mlp_in;
            lp.b_mlp_in -= learning_rate * gl.b_mlp_in;
            lp.w_mlp_out -= learning_rate * gl.w_mlp_out;
            lp.b_mlp_out -= learning_rate * gl.b_mlp_out;
        }
    }
    return result;
}

namespace {

void write_matrix(std::vector<double>& flat, const MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
}

MatrixXd read_matrix(const std::vector<double>& flat, std::size_t& at, Eigen::Index rows,
                     Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat.at(at++);
    return m;
}

}  // namespace

void save_params(const ResamplerParams& params, const std::string& prefix) {
    params.validate();
    std::vector<double> flat;
    write_matrix(flat, params.latents);
    if (params.has_input_projection()) write_matrix(flat, params.w_input);
    for (const auto& layer : params.layers) {
        write_matrix(flat, layer.w_query);
        write_matrix(flat, layer.w_key);
        write_matrix(flat, layer.w_value);
        write_matrix(flat, layer.w_output);
        write_matrix(flat, layer.w_mlp_in);
        write_matrix(flat, layer.b_mlp_in);
        write_matrix(flat, layer.w_mlp_out);
        write_matrix(flat, layer.b_mlp_out);
    }
    io::write_tensor(prefix + ".params.f3dt",
                     io::Tensor::from_doubles({static_cast<std::uint64_t>(flat.size())}, flat));
    json manifest;
    manifest["K"] = params.n_latents;
    manifest["D"] = params.d_model;
    manifest["L"] = params.n_layers;
    manifest["d_input"] = params.d_input;
    std::ofstream out(prefix + ".json", std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + prefix + ".json");
    out << manifest.dump(2) << "\n";
}

ResamplerParams load_params(const std::string& prefix) {
    std::ifstream in(prefix + ".json", std::ios::binary);
    if (!in) throw IoError("cannot open: " + prefix + ".json");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError(std::string("resampler manifest: ") + e.what());
    }
    ResamplerParams p;
    p.n_latents = manifest.at("K").get<int>();
    p.d_model = manifest.at("D").get<int>();
    p.n_layers = manifest.at("L").get<int>();
    p.d_input = manifest.at("d_input").get<int>();

    const std::vector<double> flat = io::read_tensor(prefix + ".params.f3dt").to_doubles();
    std::size_t at = 0;
    const int d = p.d_model;
    try {
        p.latents = read_matrix(flat, at, p.n_latents, d);
        if (p.has_input_projection()) p.w_input = read_matrix(flat, at, d, p.d_input);
        p.layers.resize(p.n_layers);
        for (auto& layer : p.layers) {
            layer.w_query = read_matrix(flat, at, d, d);
            layer.w_key = read_matrix(flat, at, d, d);
            layer.w_value = read_matrix(flat, at, d, d);
            layer.w_output = read_matrix(flat, at, d, d);
            layer.w_mlp_in = read_matrix(flat, at, 4 * d, d);
            layer.b_mlp_in = read_matrix(flat, at, 4 * d, 1);
            layer.w_mlp_out = read_matrix(flat, at, d, 4 * d);
            layer.b_mlp_out = read_matrix(flat, at, d, 1);
        }
    } catch (const std::out_of_range&) {
        throw IoError("resampler checkpoint truncated: " + prefix);
    }
    if (at != flat.size()) throw IoError("resampler checkpoint has trailing data: " + prefix);
    p.validate();
    return p;
}

}  // namespace f3d::resample
