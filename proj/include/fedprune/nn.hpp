#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedprune/data.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"
#include "fedprune/tensor.hpp"

namespace fedprune {

enum class LayerKind { Conv1D, Dense, ReLU, Flatten };

/// One layer of the feed-forward stack. Conv layers run with stride 1 and no
/// padding; Dense layers may leave n_in at 0 to have it inferred from the
/// previous layer during validation.
struct LayerSpec {
    LayerKind kind;
    int kernel = 0;        // Conv1D
    int in_channels = 0;   // Conv1D
    int out_channels = 0;  // Conv1D
    int n_in = 0;          // Dense
    int n_out = 0;         // Dense

    static LayerSpec conv1d(int in_ch, int out_ch, int kernel) {
        LayerSpec s{LayerKind::Conv1D};
        s.in_channels = in_ch;
        s.out_channels = out_ch;
        s.kernel = kernel;
        return s;
    }
    static LayerSpec dense(int n_in, int n_out) {
        LayerSpec s{LayerKind::Dense};
        s.n_in = n_in;
        s.n_out = n_out;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{LayerKind::ReLU}; }
    static LayerSpec flatten() { return LayerSpec{LayerKind::Flatten}; }
};

/// Layer stack plus input geometry. The sample enters as one channel of
/// `input_length` values; exactly one Flatten switches from (channels, length)
/// to flat width, and the final width must equal `classes`.
struct Architecture {
    int input_length = 0;
    int classes = 0;
    std::vector<LayerSpec> layers;

    /// Validates shape compatibility and fills inferred Dense n_in values.
    /// Throws ConfigError with the offending layer index on any mismatch.
    Architecture resolved() const {
        if (input_length < 1) throw ConfigError("architecture: input_length must be >= 1");
        if (classes < 2) throw ConfigError("architecture: classes must be >= 2");
        Architecture out = *this;
        bool flat = false;
        int channels = 1;
        int length = input_length;
        int width = 0;
        for (std::size_t i = 0; i < out.layers.size(); ++i) {
            LayerSpec& l = out.layers[i];
            const std::string where = "layer " + std::to_string(i);
            switch (l.kind) {
                case LayerKind::Conv1D: {
                    if (flat) throw ConfigError(where + ": Conv1D after Flatten");
                    if (l.kernel < 1 || l.in_channels < 1 || l.out_channels < 1)
                        throw ConfigError(where + ": Conv1D dimensions must be >= 1");
                    if (l.in_channels != channels)
                        throw ConfigError(where + ": Conv1D expects " + std::to_string(l.in_channels) +
                                          " input channels but gets " + std::to_string(channels));
                    if (length < l.kernel)
                        throw ConfigError(where + ": input length " + std::to_string(length) +
                                          " shorter than kernel " + std::to_string(l.kernel));
                    channels = l.out_channels;
                    length = length - l.kernel + 1;
                    break;
                }
                case LayerKind::ReLU:
                    break;
                case LayerKind::Flatten:
                    if (flat) throw ConfigError(where + ": duplicate Flatten");
                    flat = true;
                    width = channels * length;
                    break;
                case LayerKind::Dense: {
                    if (!flat) throw ConfigError(where + ": Dense before Flatten");
                    if (l.n_out < 1) throw ConfigError(where + ": Dense n_out must be >= 1");
                    if (l.n_in == 0) l.n_in = width;
                    if (l.n_in != width)
                        throw ConfigError(where + ": Dense expects n_in " + std::to_string(l.n_in) +
                                          " but previous layer yields " + std::to_string(width));
                    width = l.n_out;
                    break;
                }
            }
        }
        if (!flat) throw ConfigError("architecture: missing Flatten layer");
        if (width != classes)
            throw ConfigError("architecture: final width " + std::to_string(width) +
                              " does not match class count " + std::to_string(classes));
        return out;
    }
};

/// Parameters of a built model. Weight tensors map into a single global index
/// space [0, weight_count): tensor p covers [weight_offsets[p],
/// weight_offsets[p] + weights[p].size()), in row-major order. Biases live
/// outside that index space and are never pruned.
struct ModelParams {
    Architecture arch;
    std::vector<Tensor> weights;              // Conv1D: [out_ch, in_ch, K]; Dense: [n_out, n_in]
    std::vector<Tensor> biases;               // [out_ch] / [n_out]
    std::vector<std::size_t> layer_of_param;  // param index -> arch layer index
    std::vector<std::size_t> weight_offsets;
    std::size_t total_weights = 0;

    std::size_t param_count() const { return weights.size(); }
    std::size_t weight_count() const { return total_weights; }

    std::string param_name(std::size_t p) const {
        const LayerSpec& l = arch.layers[layer_of_param[p]];
        const char* kind = l.kind == LayerKind::Conv1D ? "conv" : "dense";
        return std::string(kind) + "@" + std::to_string(layer_of_param[p]);
    }

    /// Locates the (tensor, local offset) pair of a global weight index.
    std::pair<std::size_t, std::size_t> locate(std::size_t global) const {
        std::size_t p = 0;
        while (p + 1 < weight_offsets.size() && weight_offsets[p + 1] <= global) ++p;
        return {p, global - weight_offsets[p]};
    }

    double get_weight(std::size_t global) const {
        auto [p, off] = locate(global);
        return weights[p][off];
    }
    void set_weight(std::size_t global, double v) {
        auto [p, off] = locate(global);
        weights[p][off] = v;
    }

    bool congruent_with(const ModelParams& o) const {
        if (weights.size() != o.weights.size()) return false;
        for (std::size_t p = 0; p < weights.size(); ++p)
            if (!weights[p].same_shape(o.weights[p]) || !biases[p].same_shape(o.biases[p]))
                return false;
        return true;
    }
};

/// Gradient (or any parameter-shaped) bundle congruent with a model.
struct ModelGrads {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

inline ModelGrads grads_like(const ModelParams& model) {
    ModelGrads g;
    for (const Tensor& w : model.weights) g.weights.emplace_back(w.shape);
    for (const Tensor& b : model.biases) g.biases.emplace_back(b.shape);
    return g;
}

/// Builds and initializes a model: Conv1D weights from Kaiming-He normal
/// (std = sqrt(2 / fan_in), fan_in = in_channels * kernel), Dense weights from
/// Normal(0, 0.01), biases zero. Deterministic for a fixed seed.
inline ModelParams build_model(const Architecture& arch, std::uint64_t seed) {
    ModelParams m;
    m.arch = arch.resolved();
    Rng rng(derive_seed(seed, 0x696e6974ULL));
    for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
        const LayerSpec& l = m.arch.layers[i];
        if (l.kind == LayerKind::Conv1D) {
            Tensor w({static_cast<std::size_t>(l.out_channels),
                      static_cast<std::size_t>(l.in_channels),
                      static_cast<std::size_t>(l.kernel)});
            const double std_dev = std::sqrt(2.0 / (l.in_channels * l.kernel));
            for (double& v : w.values) v = rng.normal(0.0, std_dev);
            m.weights.push_back(std::move(w));
            m.biases.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(l.out_channels)});
            m.layer_of_param.push_back(i);
        } else if (l.kind == LayerKind::Dense) {
            Tensor w({static_cast<std::size_t>(l.n_out), static_cast<std::size_t>(l.n_in)});
            for (double& v : w.values) v = rng.normal(0.0, 0.01);
            m.weights.push_back(std::move(w));
            m.biases.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(l.n_out)});
            m.layer_of_param.push_back(i);
        }
    }
    m.weight_offsets.resize(m.weights.size());
    std::size_t off = 0;
    for (std::size_t p = 0; p < m.weights.size(); ++p) {
        m.weight_offsets[p] = off;
        off += m.weights[p].size();
    }
    m.total_weights = off;
    return m;
}

namespace detail {

/// Activations recorded during a forward pass: the input tensor of every
/// layer, plus the final logits. Conv-mode tensors are [B, C, L], flat ones
/// [B, W]; the rank tells the two apart.
struct ForwardTrace {
    std::vector<Tensor> inputs;
    Tensor logits;
};

inline Tensor conv1d_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
    const std::size_t B = in.shape[0], Cin = in.shape[1], L = in.shape[2];
    const std::size_t Cout = w.shape[0], K = w.shape[2];
    const std::size_t Lout = L - K + 1;
    Tensor out({B, Cout, Lout});
    for (std::size_t bi = 0; bi < B; ++bi) {
        const double* in_b = in.values.data() + bi * Cin * L;
        double* out_b = out.values.data() + bi * Cout * Lout;
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            const double* w_oc = w.values.data() + oc * Cin * K;
            double* out_row = out_b + oc * Lout;
            const double bias = b[oc];
            for (std::size_t ol = 0; ol < Lout; ++ol) out_row[ol] = bias;
            for (std::size_t ic = 0; ic < Cin; ++ic) {
                const double* in_row = in_b + ic * L;
                const double* w_row = w_oc + ic * K;
                for (std::size_t k = 0; k < K; ++k) {
                    const double wk = w_row[k];
                    for (std::size_t ol = 0; ol < Lout; ++ol) out_row[ol] += wk * in_row[ol + k];
                }
            }
        }
    }
    return out;
}

inline Tensor dense_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
    const std::size_t B = in.shape[0], N = in.shape[1];
    const std::size_t M = w.shape[0];
    Tensor out({B, M});
    for (std::size_t bi = 0; bi < B; ++bi) {
        const double* x = in.values.data() + bi * N;
        double* y = out.values.data() + bi * M;
        for (std::size_t o = 0; o < M; ++o) {
            const double* w_o = w.values.data() + o * N;
            double acc = b[o];
            for (std::size_t i = 0; i < N; ++i) acc += w_o[i] * x[i];
            y[o] = acc;
        }
    }
    return out;
}

inline void run_forward(const ModelParams& model, const Tensor& batch, ForwardTrace& trace) {
    if (batch.shape.size() != 2)
        throw InputError("forward: batch must be [samples, features]");
    if (batch.shape[1] != static_cast<std::size_t>(model.arch.input_length))
        throw InputError("forward: batch has " + std::to_string(batch.shape[1]) +
                         " features, architecture expects " +
                         std::to_string(model.arch.input_length));
    if (batch.shape[0] < 1) throw InputError("forward: empty batch");

    const std::size_t B = batch.shape[0];
    Tensor cur = batch;
    cur.shape = {B, 1, batch.shape[1]};  // single input channel

    trace.inputs.clear();
    trace.inputs.reserve(model.arch.layers.size());
    std::size_t p = 0;
    for (const LayerSpec& l : model.arch.layers) {
        trace.inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::Conv1D:
                cur = conv1d_forward(cur, model.weights[p], model.biases[p]);
                ++p;
                break;
            case LayerKind::ReLU:
                for (double& v : cur.values) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::Flatten:
                cur.shape = {B, cur.size() / B};
                break;
            case LayerKind::Dense:
                cur = dense_forward(cur, model.weights[p], model.biases[p]);
                ++p;
                break;
        }
    }
    trace.logits = std::move(cur);
}

}  // namespace detail

/// Pre-softmax logits [batch, classes] for a feature batch [batch, features].
inline Tensor forward(const ModelParams& model, const Tensor& batch) {
    detail::ForwardTrace trace;
    detail::run_forward(model, batch, trace);
    return std::move(trace.logits);
}

/// Optional FedProx term: adds (mu/2) * ||params - anchor||^2 to the loss,
/// covering weights and biases.
struct ProxTerm {
    double mu = 0.0;
    const ModelParams* anchor = nullptr;
};

struct LossGrads {
    double loss = 0.0;
    ModelGrads grads;
};

/// Mean softmax cross-entropy over the batch plus the optional proximal term,
/// with exact gradients for every weight and bias.
inline LossGrads loss_and_grads(const ModelParams& model, const Tensor& batch,
                                const std::vector<int>& labels, const ProxTerm* prox = nullptr) {
    if (labels.size() != batch.shape[0])
        throw InputError("loss_and_grads: label count does not match batch size");
    const int classes = model.arch.classes;
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw InputError("loss_and_grads: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(classes) + ")");

    detail::ForwardTrace trace;
    detail::run_forward(model, batch, trace);
    const std::size_t B = batch.shape[0];
    const std::size_t C = static_cast<std::size_t>(classes);

    LossGrads out;
    out.grads = grads_like(model);

    // Softmax cross-entropy, numerically stabilized; gradient is
    // (softmax - onehot) / B at the logits.
    Tensor dlogits({B, C});
    double loss = 0.0;
    for (std::size_t bi = 0; bi < B; ++bi) {
        const double* z = trace.logits.values.data() + bi * C;
        double zmax = z[0];
        for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
        const double log_sum = std::log(sum);
        const std::size_t y = static_cast<std::size_t>(labels[bi]);
        loss += log_sum - (z[y] - zmax);
        double* d = dlogits.values.data() + bi * C;
        for (std::size_t c = 0; c < C; ++c) d[c] = std::exp(z[c] - zmax) / sum / static_cast<double>(B);
        d[y] -= 1.0 / static_cast<double>(B);
    }
    loss /= static_cast<double>(B);

    // Backward walk over the layer stack.
    Tensor grad = std::move(dlogits);
    std::size_t p = model.param_count();
    for (std::size_t li = model.arch.layers.size(); li-- > 0;) {
        const LayerSpec& l = model.arch.layers[li];
        const Tensor& in = trace.inputs[li];
        switch (l.kind) {
            case LayerKind::Dense: {
                --p;
                const Tensor& w = model.weights[p];
                Tensor& gw = out.grads.weights[p];
                Tensor& gb = out.grads.biases[p];
                const std::size_t N = in.shape[1], M = w.shape[0];
                Tensor gin({B, N});
                for (std::size_t bi = 0; bi < B; ++bi) {
                    const double* x = in.values.data() + bi * N;
                    const double* go = grad.values.data() + bi * M;
                    double* gi = gin.values.data() + bi * N;
                    for (std::size_t o = 0; o < M; ++o) {
                        const double g = go[o];
                        if (g == 0.0) continue;
                        gb[o] += g;
                        double* gw_o = gw.values.data() + o * N;
                        const double* w_o = w.values.data() + o * N;
                        for (std::size_t i = 0; i < N; ++i) {
                            gw_o[i] += g * x[i];
                            gi[i] += g * w_o[i];
                        }
                    }
                }
                grad = std::move(gin);
                break;
            }
            case LayerKind::Flatten:
                grad.shape = in.shape;
                break;
            case LayerKind::ReLU: {
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (in.values[i] <= 0.0) grad.values[i] = 0.0;
                break;
            }
            case LayerKind::Conv1D: {
                --p;
                const Tensor& w = model.weights[p];
                Tensor& gw = out.grads.weights[p];
                Tensor& gb = out.grads.biases[p];
                const std::size_t Cin = in.shape[1], L = in.shape[2];
                const std::size_t Cout = w.shape[0], K = w.shape[2];
                const std::size_t Lout = L - K + 1;
                Tensor gin({B, Cin, L});
                for (std::size_t bi = 0; bi < B; ++bi) {
                    const double* in_b = in.values.data() + bi * Cin * L;
                    const double* go_b = grad.values.data() + bi * Cout * Lout;
                    double* gi_b = gin.values.data() + bi * Cin * L;
                    for (std::size_t oc = 0; oc < Cout; ++oc) {
                        const double* go = go_b + oc * Lout;
                        const double* w_oc = w.values.data() + oc * Cin * K;
                        double* gw_oc = gw.values.data() + oc * Cin * K;
                        double gsum = 0.0;
                        for (std::size_t ol = 0; ol < Lout; ++ol) gsum += go[ol];
                        gb[oc] += gsum;
                        for (std::size_t ic = 0; ic < Cin; ++ic) {
                            const double* in_row = in_b + ic * L;
                            double* gi_row = gi_b + ic * L;
                            const double* w_row = w_oc + ic * K;
                            double* gw_row = gw_oc + ic * K;
                            for (std::size_t k = 0; k < K; ++k) {
                                double acc = 0.0;
                                const double wk = w_row[k];
                                for (std::size_t ol = 0; ol < Lout; ++ol) {
                                    const double g = go[ol];
                                    acc += g * in_row[ol + k];
                                    gi_row[ol + k] += g * wk;
                                }
                                gw_row[k] += acc;
                            }
                        }
                    }
                }
                grad = std::move(gin);
                break;
            }
        }
    }

    if (prox && prox->anchor) {
        if (prox->mu < 0.0) throw ConfigError("proximal mu must be >= 0");
        const ModelParams& a = *prox->anchor;
        if (!model.congruent_with(a)) throw InputError("proximal anchor not congruent with model");
        double penalty = 0.0;
        for (std::size_t t = 0; t < model.weights.size(); ++t) {
            for (std::size_t i = 0; i < model.weights[t].size(); ++i) {
                const double diff = model.weights[t][i] - a.weights[t][i];
                penalty += diff * diff;
                out.grads.weights[t][i] += prox->mu * diff;
            }
            for (std::size_t i = 0; i < model.biases[t].size(); ++i) {
                const double diff = model.biases[t][i] - a.biases[t][i];
                penalty += diff * diff;
                out.grads.biases[t][i] += prox->mu * diff;
            }
        }
        loss += 0.5 * prox->mu * penalty;
    }

    out.loss = loss;
    return out;
}

/// Adam optimizer state, congruent with the model it was initialized from.
struct AdamState {
    std::vector<Tensor> m_w, v_w, m_b, v_b;
    std::int64_t t = 0;
    double eta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const ModelParams& model, double eta) {
        AdamState s;
        s.eta = eta;
        for (const Tensor& w : model.weights) {
            s.m_w.emplace_back(w.shape);
            s.v_w.emplace_back(w.shape);
        }
        for (const Tensor& b : model.biases) {
            s.m_b.emplace_back(b.shape);
            s.v_b.emplace_back(b.shape);
        }
        return s;
    }
};

namespace detail {
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        const AdamState& st, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] -= st.eta * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
}
}  // namespace detail

/// One Adam step with bias-corrected moments, applied to weights and biases.
inline void adam_step(ModelParams& model, const ModelGrads& grads, AdamState& state) {
    for (std::size_t p = 0; p < model.weights.size(); ++p) {
        if (!grads.weights[p].all_finite() || !grads.biases[p].all_finite())
            throw NumericError("non-finite gradient in " + model.param_name(p));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < model.weights.size(); ++p) {
        detail::adam_update(model.weights[p], grads.weights[p], state.m_w[p], state.v_w[p],
                            state, bc1, bc2);
        detail::adam_update(model.biases[p], grads.biases[p], state.m_b[p], state.v_b[p],
                            state, bc1, bc2);
    }
}

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

/// Accuracy, mean cross-entropy, and the confusion matrix over a dataset.
/// Argmax ties break toward the lowest class index.
inline EvalResult evaluate(const ModelParams& model, const Dataset& ds,
                           std::size_t eval_batch = 256) {
    if (ds.size() == 0) throw InputError("evaluate: empty dataset");
    const std::size_t C = static_cast<std::size_t>(model.arch.classes);
    EvalResult res;
    res.confusion.assign(C, std::vector<std::int64_t>(C, 0));

    std::int64_t correct = 0;
    double loss_sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += eval_batch) {
        const std::size_t stop = std::min(ds.size(), start + eval_batch);
        idx.resize(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        auto [x, y] = gather_batch(ds, idx);
        Tensor logits = forward(model, x);
        for (std::size_t bi = 0; bi < idx.size(); ++bi) {
            const double* z = logits.values.data() + bi * C;
            std::size_t pred = 0;
            double best = z[0];
            for (std::size_t c = 1; c < C; ++c)
                if (z[c] > best) {  // strict: ties keep the lower index
                    best = z[c];
                    pred = c;
                }
            const std::size_t truth = static_cast<std::size_t>(y[bi]);
            res.confusion[truth][pred] += 1;
            if (pred == truth) ++correct;

            double zmax = z[0];
            for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
            loss_sum += std::log(sum) - (z[truth] - zmax);
        }
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    res.loss = loss_sum / static_cast<double>(ds.size());
    return res;
}

}  // namespace fedprune
