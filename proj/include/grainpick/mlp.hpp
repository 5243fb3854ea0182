#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "grainpick/binio.hpp"
#include "grainpick/config.hpp"
#include "grainpick/errors.hpp"
#include "grainpick/rng.hpp"

namespace grainpick {

enum class Act : std::uint8_t { identity = 0, relu = 1, softplus = 2 };

inline double activate(Act a, double z) {
    switch (a) {
        case Act::relu: return z > 0.0 ? z : 0.0;
        case Act::softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
        case Act::identity: break;
    }
    return z;
}

inline double activate_grad(Act a, double z) {
    switch (a) {
        case Act::relu: return z > 0.0 ? 1.0 : 0.0;
        case Act::softplus: return 1.0 / (1.0 + std::exp(-z));
        case Act::identity: break;
    }
    return 1.0;
}

/// Dense feed-forward network, 64-bit parameters. Layer l maps widths[l] ->
/// widths[l+1] with row-major weights.
struct Mlp {
    std::vector<int> widths;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    std::vector<Act> activations;

    static Mlp create(std::vector<int> widths, std::vector<Act> activations, Rng& rng) {
        if (widths.size() < 2) throw model_error("network needs at least one layer");
        if (activations.size() != widths.size() - 1)
            throw model_error("one activation tag per layer required");
        Mlp net;
        net.widths = std::move(widths);
        net.activations = std::move(activations);
        const std::size_t layers = net.widths.size() - 1;
        net.weights.resize(layers);
        net.biases.resize(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            const int fan_in = net.widths[l];
            const int fan_out = net.widths[l + 1];
            const double scale = std::sqrt(2.0 / fan_in);
            net.weights[l].resize(static_cast<std::size_t>(fan_out) * fan_in);
            for (auto& w : net.weights[l]) w = scale * rng.normal();
            net.biases[l].assign(fan_out, 0.0);
        }
        return net;
    }

    std::size_t layer_count() const { return weights.size(); }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layer_count(); ++l)
            n += weights[l].size() + biases[l].size();
        return n;
    }

    /// Pure function of (net, input); safe to call from many threads.
    std::vector<double> forward(std::span<const double> input) const {
        if (static_cast<int>(input.size()) != input_dim())
            throw model_error("forward: input size " + std::to_string(input.size()) +
                              " != " + std::to_string(input_dim()));
        std::vector<double> cur(input.begin(), input.end());
        std::vector<double> next;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            const int in_n = widths[l];
            const int out_n = widths[l + 1];
            next.assign(out_n, 0.0);
            const double* w = weights[l].data();
            for (int o = 0; o < out_n; ++o) {
                const double* row = w + static_cast<std::size_t>(o) * in_n;
                double z = biases[l][o];
                for (int i = 0; i < in_n; ++i) z += row[i] * cur[i];
                next[o] = activate(activations[l], z);
            }
            cur.swap(next);
        }
        return cur;
    }

    bool operator==(const Mlp& o) const {
        return widths == o.widths && weights == o.weights && biases == o.biases &&
               activations == o.activations;
    }
};

/// Per-layer pre-activations and activations kept from a forward pass so the
/// backward pass can reuse them.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;   // one per layer
    std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = layer output
};

inline const std::vector<double>& forward_trace(const Mlp& net, std::span<const double> input,
                                                ForwardTrace& trace) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw model_error("forward: input size mismatch");
    const std::size_t layers = net.layer_count();
    trace.pre.resize(layers);
    trace.post.resize(layers + 1);
    trace.post[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const int in_n = net.widths[l];
        const int out_n = net.widths[l + 1];
        trace.pre[l].assign(out_n, 0.0);
        trace.post[l + 1].assign(out_n, 0.0);
        const double* w = net.weights[l].data();
        const double* x = trace.post[l].data();
        for (int o = 0; o < out_n; ++o) {
            const double* row = w + static_cast<std::size_t>(o) * in_n;
            double z = net.biases[l][o];
            for (int i = 0; i < in_n; ++i) z += row[i] * x[i];
            trace.pre[l][o] = z;
            trace.post[l + 1][o] = activate(net.activations[l], z);
        }
    }
    return trace.post.back();
}

/// Gradients with the same shape as the network parameters.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    explicit Gradients(const Mlp& net) {
        weights.resize(net.layer_count());
        biases.resize(net.layer_count());
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            weights[l].assign(net.weights[l].size(), 0.0);
            biases[l].assign(net.biases[l].size(), 0.0);
        }
    }

    void zero() {
        for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
        for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
    }

    void scale(double s) {
        for (auto& w : weights)
            for (auto& v : w) v *= s;
        for (auto& b : biases)
            for (auto& v : b) v *= s;
    }
};

/// Mean squared error and its gradient w.r.t. the prediction.
struct MseResult {
    double loss = 0.0;
    std::vector<double> grad;
};

inline MseResult mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size())
        throw model_error("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                          std::to_string(target.size()));
    MseResult r;
    r.grad.resize(pred.size());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        r.loss += d * d * inv_n;
        r.grad[i] = 2.0 * d * inv_n;
    }
    return r;
}

/// Exact reverse-mode gradients, accumulated into grads (callers zero them).
inline void backward(const Mlp& net, const ForwardTrace& trace,
                     std::span<const double> loss_grad, Gradients& grads) {
    if (static_cast<int>(loss_grad.size()) != net.output_dim())
        throw model_error("backward: loss gradient size mismatch");
    const std::size_t layers = net.layer_count();
    std::vector<double> delta(loss_grad.begin(), loss_grad.end());
    std::vector<double> delta_prev;
    for (std::size_t li = layers; li-- > 0;) {
        const int in_n = net.widths[li];
        const int out_n = net.widths[li + 1];
        for (int o = 0; o < out_n; ++o)
            delta[o] *= activate_grad(net.activations[li], trace.pre[li][o]);

        const double* x = trace.post[li].data();
        double* gw = grads.weights[li].data();
        for (int o = 0; o < out_n; ++o) {
            const double d = delta[o];
            double* grow = gw + static_cast<std::size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) grow[i] += d * x[i];
            grads.biases[li][o] += d;
        }

        if (li > 0) {
            delta_prev.assign(in_n, 0.0);
            const double* w = net.weights[li].data();
            for (int o = 0; o < out_n; ++o) {
                const double d = delta[o];
                const double* row = w + static_cast<std::size_t>(o) * in_n;
                for (int i = 0; i < in_n; ++i) delta_prev[i] += row[i] * d;
            }
            delta.swap(delta_prev);
        }
    }
}

namespace detail {

struct AdamState {
    std::vector<std::vector<double>> mw, vw, mb, vb;
    long t = 0;

    explicit AdamState(const Mlp& net) {
        mw.resize(net.layer_count());
        vw.resize(net.layer_count());
        mb.resize(net.layer_count());
        vb.resize(net.layer_count());
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            mw[l].assign(net.weights[l].size(), 0.0);
            vw[l].assign(net.weights[l].size(), 0.0);
            mb[l].assign(net.biases[l].size(), 0.0);
            vb[l].assign(net.biases[l].size(), 0.0);
        }
    }
};

// Proximal step for the first-layer L1 penalty: soft-threshold toward zero.
inline void prox_l1_input(Mlp& net, double threshold) {
    if (threshold <= 0.0) return;
    for (double& w : net.weights[0]) {
        if (w > threshold) w -= threshold;
        else if (w < -threshold) w += threshold;
        else w = 0.0;
    }
}

inline void adam_step(Mlp& net, const Gradients& g, AdamState& st, double lr, double wd) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++st.t;
    const double c1 = 1.0 - std::pow(b1, st.t);
    const double c2 = 1.0 - std::pow(b2, st.t);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        auto step = [&](std::vector<double>& p, const std::vector<double>& gr,
                        std::vector<double>& m, std::vector<double>& v, double decay) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
                v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
                p[i] -= lr * ((m[i] / c1) / (std::sqrt(v[i] / c2) + eps) + decay * p[i]);
            }
        };
        step(net.weights[l], g.weights[l], st.mw[l], st.vw[l], wd);
        step(net.biases[l], g.biases[l], st.mb[l], st.vb[l], 0.0);  // biases are not decayed
    }
}

inline void sgd_step(Mlp& net, const Gradients& g, double lr, double wd) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i)
            net.weights[l][i] -= lr * (g.weights[l][i] + wd * net.weights[l][i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            net.biases[l][i] -= lr * g.biases[l][i];
    }
}

}  // namespace detail

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample MSE per epoch
    double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

/// Produces the (input, target) pair for a sample index. Called once per
/// sample per epoch, so online augmentation happens here.
using SampleFn =
    std::function<void(std::size_t index, Rng& rng, std::vector<double>& x, std::vector<double>& y)>;

/// Mini-batch training with seeded shuffling. Deterministic given cfg.seed.
inline TrainResult train(Mlp& net, std::size_t n_samples, const SampleFn& sample,
                         const TrainConfig& cfg) {
    if (n_samples == 0) throw model_error("train: empty data");
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "train"));
    detail::AdamState adam(net);
    Gradients grads(net);
    ForwardTrace trace;
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> x, y;

    TrainResult result;
    result.epoch_loss.reserve(cfg.epochs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n_samples; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);

        double loss_sum = 0.0;
        std::size_t pos = 0;
        while (pos < n_samples) {
            const std::size_t batch_end = std::min(pos + cfg.batch_size, n_samples);
            const std::size_t batch_n = batch_end - pos;
            grads.zero();
            for (std::size_t k = pos; k < batch_end; ++k) {
                sample(order[k], rng, x, y);
                const auto& out = forward_trace(net, x, trace);
                MseResult mse = mse_loss(out, y);
                loss_sum += mse.loss;
                backward(net, trace, mse.grad, grads);
            }
            grads.scale(1.0 / static_cast<double>(batch_n));
            if (cfg.optimizer == OptimizerTag::adam)
                detail::adam_step(net, grads, adam, cfg.learning_rate, cfg.weight_decay);
            else
                detail::sgd_step(net, grads, cfg.learning_rate, cfg.weight_decay);
            detail::prox_l1_input(net, cfg.learning_rate * cfg.l1_input);
            pos = batch_end;
        }
        const double epoch_loss = loss_sum / static_cast<double>(n_samples);
        if (!std::isfinite(epoch_loss))
            throw train_diverged_error("training diverged at epoch " + std::to_string(epoch));
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

/// Convenience overload over materialized (input, target) pairs.
inline TrainResult train(Mlp& net, const std::vector<std::vector<double>>& inputs,
                         const std::vector<std::vector<double>>& targets,
                         const TrainConfig& cfg) {
    if (inputs.size() != targets.size()) throw model_error("train: input/target count mismatch");
    SampleFn sample = [&](std::size_t i, Rng&, std::vector<double>& x, std::vector<double>& y) {
        x = inputs[i];
        y = targets[i];
    };
    return train(net, inputs.size(), sample, cfg);
}

namespace detail {

constexpr char kMlpMagic[4] = {'G', 'P', 'N', 'N'};
constexpr std::uint32_t kMlpVersion = 1;

}  // namespace detail

inline void save_mlp(std::ostream& os, const Mlp& net) {
    os.write(detail::kMlpMagic, 4);
    detail::write_pod(os, detail::kMlpVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(net.widths.size()));
    for (int w : net.widths) detail::write_pod(os, static_cast<std::int32_t>(w));
    for (Act a : net.activations) detail::write_pod(os, static_cast<std::uint8_t>(a));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        os.write(reinterpret_cast<const char*>(net.weights[l].data()),
                 static_cast<std::streamsize>(net.weights[l].size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(net.biases[l].data()),
                 static_cast<std::streamsize>(net.biases[l].size() * sizeof(double)));
    }
}

inline Mlp load_mlp(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kMlpMagic, 4) != 0)
        throw data_error(data_error::kind::corrupt_header, "not a network blob");
    std::uint32_t version = 0, n_widths = 0;
    detail::read_pod(is, version, "network version");
    if (version != detail::kMlpVersion)
        throw data_error(data_error::kind::corrupt_header, "unsupported network version");
    detail::read_pod(is, n_widths, "layer count");
    if (n_widths < 2 || n_widths > 64)
        throw data_error(data_error::kind::corrupt_header, "implausible layer count");
    Mlp net;
    net.widths.resize(n_widths);
    for (auto& w : net.widths) {
        std::int32_t v = 0;
        detail::read_pod(is, v, "layer width");
        w = v;
    }
    net.activations.resize(n_widths - 1);
    for (auto& a : net.activations) {
        std::uint8_t v = 0;
        detail::read_pod(is, v, "activation tag");
        if (v > 2) throw data_error(data_error::kind::corrupt_header, "unknown activation tag");
        a = static_cast<Act>(v);
    }
    net.weights.resize(n_widths - 1);
    net.biases.resize(n_widths - 1);
    for (std::size_t l = 0; l + 1 < n_widths; ++l) {
        net.weights[l].resize(static_cast<std::size_t>(net.widths[l + 1]) * net.widths[l]);
        net.biases[l].resize(net.widths[l + 1]);
        is.read(reinterpret_cast<char*>(net.weights[l].data()),
                static_cast<std::streamsize>(net.weights[l].size() * sizeof(double)));
        is.read(reinterpret_cast<char*>(net.biases[l].data()),
                static_cast<std::streamsize>(net.biases[l].size() * sizeof(double)));
        if (!is)
            throw data_error(data_error::kind::truncated_payload, "truncated network parameters");
    }
    return net;
}

}  // namespace grainpick
