#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "signspeak/tensor.hpp"

namespace signspeak {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RnnCell { Lstm, Gru };

inline std::size_t gates_of(RnnCell c) { return c == RnnCell::Lstm ? 4 : 3; }

struct StackedRnnConfig {
    RnnCell cell = RnnCell::Lstm;
    std::size_t num_layers = 2;
    std::size_t input_channels = 5;
    std::size_t hidden = 64;
    std::size_t head_hidden = 128;
    std::size_t num_classes = 36;
    std::size_t max_len = 79;
    double dropout_p = 0.2;
};

struct DenseRnnConfig {
    RnnCell cell = RnnCell::Lstm;
    bool stacked = false;  // true: compose the RNN with itself on the projected input
    std::size_t input_channels = 5;
    std::size_t dense_out = 128;
    std::size_t hidden = 64;
    std::size_t head_hidden = 128;
    std::size_t num_classes = 36;
    std::size_t max_len = 79;
    double dropout_p = 0.2;
};

struct EncoderConfig {
    std::size_t embed_dim = 32;
    std::size_t num_layers = 5;
    std::size_t num_heads = 4;
    std::size_t mlp_hidden = 128;
    std::size_t max_len = 79;
    std::size_t input_channels = 5;
    std::size_t num_classes = 36;
    double dropout_p = 0.2;
};

using ModelConfig = std::variant<StackedRnnConfig, DenseRnnConfig, EncoderConfig>;

// the seven benchmark families by name
inline const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names = {
        "dense_lstm",         "dense_gru",        "stacked_lstm", "stacked_gru",
        "dense_stacked_lstm", "dense_stacked_gru", "encoder"};
    return names;
}

inline ModelConfig config_for_name(const std::string& name) {
    if (name == "stacked_lstm") return StackedRnnConfig{RnnCell::Lstm};
    if (name == "stacked_gru") return StackedRnnConfig{RnnCell::Gru};
    if (name == "dense_lstm") return DenseRnnConfig{RnnCell::Lstm, false};
    if (name == "dense_gru") return DenseRnnConfig{RnnCell::Gru, false};
    if (name == "dense_stacked_lstm") return DenseRnnConfig{RnnCell::Lstm, true};
    if (name == "dense_stacked_gru") return DenseRnnConfig{RnnCell::Gru, true};
    if (name == "encoder") return EncoderConfig{};
    std::string all;
    for (const auto& n : model_names()) all += (all.empty() ? "" : ", ") + n;
    throw ModelError("unknown model '" + name + "' (valid: " + all + ")");
}

inline std::string name_for_config(const ModelConfig& cfg) {
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg))
        return s->cell == RnnCell::Lstm ? "stacked_lstm" : "stacked_gru";
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) {
        std::string base = d->stacked ? "dense_stacked_" : "dense_";
        return base + (d->cell == RnnCell::Lstm ? "lstm" : "gru");
    }
    return "encoder";
}

inline std::size_t count_parameters(const ModelConfig& cfg) {
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg)) {
        const std::size_t g = gates_of(s->cell), c = s->input_channels, h = s->hidden;
        std::size_t total = g * (c * h + h * h + h);
        for (std::size_t l = 1; l < s->num_layers; ++l) total += g * (h * h + h * h + h);
        total += h * s->head_hidden + s->head_hidden;
        total += s->head_hidden * s->num_classes + s->num_classes;
        return total;
    }
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) {
        const std::size_t g = gates_of(d->cell), h = d->hidden, p = d->dense_out;
        std::size_t total = d->input_channels * p + p;
        total += g * (p * h + h * h + h);
        if (d->stacked) total += g * (h * h + h * h + h);
        total += h * d->head_hidden + d->head_hidden;
        total += d->head_hidden * d->num_classes + d->num_classes;
        return total;
    }
    const auto& e = std::get<EncoderConfig>(cfg);
    const std::size_t dd = e.embed_dim, f = e.mlp_hidden;
    std::size_t total = e.input_channels * dd;     // embedding projection, bias-free
    total += dd;                                   // CLS token
    total += (e.max_len + 1) * dd;                 // positional table
    const std::size_t per_layer = 4 * (dd * dd + dd)  // q,k,v,out with bias
                                  + 4 * dd            // two layer norms, gain+bias
                                  + (dd * f + f) + (f * dd + dd);
    total += e.num_layers * per_layer;
    total += 2 * dd;                               // final layer norm
    total += dd * e.num_classes + e.num_classes;   // classification head
    return total;
}

// Named parameter set. Order is the build order and is part of the contract
// (checkpoints serialize arrays in this order).
template <typename T>
struct ModelParams {
    std::vector<std::pair<std::string, Tensor<T>>> entries;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        for (const auto& [n, _] : entries)
            if (n == name) throw ModelError("duplicate parameter path: " + name);
        t.set_requires_grad(true);
        entries.emplace_back(name, std::move(t));
        return entries.back().second;
    }

    Tensor<T>& at(const std::string& name) {
        for (auto& [n, t] : entries)
            if (n == name) return t;
        throw ModelError("unknown parameter path: " + name);
    }
    const Tensor<T>& at(const std::string& name) const {
        return const_cast<ModelParams*>(this)->at(name);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : entries) t.zero_grad();
    }

    std::vector<std::vector<T>> snapshot() const {
        std::vector<std::vector<T>> out;
        out.reserve(entries.size());
        for (const auto& [_, t] : entries) out.push_back(t.values());
        return out;
    }
    void restore(const std::vector<std::vector<T>>& snap) {
        for (std::size_t i = 0; i < entries.size(); ++i) entries[i].second.values() = snap[i];
    }
};

namespace detail {

template <typename T>
Tensor<T> glorot(std::size_t rows, std::size_t cols, std::uint64_t seed,
                 const std::string& name) {
    Rng rng(seed, name);
    return Tensor<T>::glorot_uniform({rows, cols}, rows, cols, rng);
}

template <typename T>
void add_rnn_layer(ModelParams<T>& p, const std::string& prefix, RnnCell cell, std::size_t in,
                   std::size_t h, std::uint64_t seed) {
    static const char* lstm_gates[] = {"i", "f", "g", "o"};
    static const char* gru_gates[] = {"z", "r", "c"};
    const std::size_t g = gates_of(cell);
    for (std::size_t k = 0; k < g; ++k) {
        const std::string gate = cell == RnnCell::Lstm ? lstm_gates[k] : gru_gates[k];
        p.add(prefix + "." + gate + ".wx", glorot<T>(in, h, seed, prefix + "." + gate + ".wx"));
        p.add(prefix + "." + gate + ".wh", glorot<T>(h, h, seed, prefix + "." + gate + ".wh"));
        p.add(prefix + "." + gate + ".b", Tensor<T>::zeros({h}));
    }
}

template <typename T>
void add_linear(ModelParams<T>& p, const std::string& prefix, std::size_t in, std::size_t out,
                std::uint64_t seed, bool bias = true) {
    p.add(prefix + ".w", glorot<T>(in, out, seed, prefix + ".w"));
    if (bias) p.add(prefix + ".b", Tensor<T>::zeros({out}));
}

}  // namespace detail

// Glorot-uniform weights, zero biases; deterministic for a fixed seed.
template <typename T>
ModelParams<T> build(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<T> p;
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg)) {
        for (std::size_t l = 0; l < s->num_layers; ++l) {
            const std::size_t in = l == 0 ? s->input_channels : s->hidden;
            detail::add_rnn_layer(p, "rnn." + std::to_string(l), s->cell, in, s->hidden, seed);
        }
        detail::add_linear(p, "head.0", s->hidden, s->head_hidden, seed);
        detail::add_linear(p, "head.1", s->head_hidden, s->num_classes, seed);
    } else if (const auto* d = std::get_if<DenseRnnConfig>(&cfg)) {
        detail::add_linear(p, "dense", d->input_channels, d->dense_out, seed);
        detail::add_rnn_layer(p, "rnn.0", d->cell, d->dense_out, d->hidden, seed);
        if (d->stacked)
            detail::add_rnn_layer(p, "rnn.1", d->cell, d->hidden, d->hidden, seed);
        detail::add_linear(p, "head.0", d->hidden, d->head_hidden, seed);
        detail::add_linear(p, "head.1", d->head_hidden, d->num_classes, seed);
    } else {
        const auto& e = std::get<EncoderConfig>(cfg);
        if (e.embed_dim % e.num_heads != 0)
            throw ModelError("embed_dim must be divisible by num_heads");
        detail::add_linear(p, "embed", e.input_channels, e.embed_dim, seed, /*bias=*/false);
        p.add("cls", detail::glorot<T>(1, e.embed_dim, seed, "cls"));
        p.add("pos", detail::glorot<T>(e.max_len + 1, e.embed_dim, seed, "pos"));
        for (std::size_t l = 0; l < e.num_layers; ++l) {
            const std::string lp = "enc." + std::to_string(l);
            p.add(lp + ".ln1.g", Tensor<T>::full({e.embed_dim}, T(1)));
            p.add(lp + ".ln1.b", Tensor<T>::zeros({e.embed_dim}));
            for (const char* n : {"q", "k", "v", "out"})
                detail::add_linear(p, lp + ".attn." + std::string(n), e.embed_dim, e.embed_dim,
                                   seed);
            p.add(lp + ".ln2.g", Tensor<T>::full({e.embed_dim}, T(1)));
            p.add(lp + ".ln2.b", Tensor<T>::zeros({e.embed_dim}));
            detail::add_linear(p, lp + ".mlp.0", e.embed_dim, e.mlp_hidden, seed);
            detail::add_linear(p, lp + ".mlp.1", e.mlp_hidden, e.embed_dim, seed);
        }
        p.add("ln_f.g", Tensor<T>::full({e.embed_dim}, T(1)));
        p.add("ln_f.b", Tensor<T>::zeros({e.embed_dim}));
        detail::add_linear(p, "head", e.embed_dim, e.num_classes, seed);
    }
    if (p.scalar_count() != count_parameters(cfg))
        throw ModelError("parameter count mismatch between build and count_parameters");
    return p;
}

// standard LSTM step; one bias vector per gate
template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell_step(ModelParams<T>& p, const std::string& prefix,
                                               const Tensor<T>& x_t, const Tensor<T>& h_prev,
                                               const Tensor<T>& c_prev) {
    auto gate = [&](const char* g) {
        return add_bias(add(matmul(x_t, p.at(prefix + "." + g + ".wx")),
                            matmul(h_prev, p.at(prefix + "." + g + ".wh"))),
                        p.at(prefix + "." + g + ".b"));
    };
    auto i = sigmoid(gate("i"));
    auto f = sigmoid(gate("f"));
    auto g = tanh_op(gate("g"));
    auto o = sigmoid(gate("o"));
    auto c = add(mul(f, c_prev), mul(i, g));
    auto h = mul(o, tanh_op(c));
    return {h, c};
}

// standard GRU step: h = (1-z) .* h_prev + z .* candidate
template <typename T>
Tensor<T> gru_cell_step(ModelParams<T>& p, const std::string& prefix, const Tensor<T>& x_t,
                        const Tensor<T>& h_prev) {
    auto gate = [&](const char* g, const Tensor<T>& h_in) {
        return add_bias(add(matmul(x_t, p.at(prefix + "." + g + ".wx")),
                            matmul(h_in, p.at(prefix + "." + g + ".wh"))),
                        p.at(prefix + "." + g + ".b"));
    };
    auto z = sigmoid(gate("z", h_prev));
    auto r = sigmoid(gate("r", h_prev));
    auto cand = tanh_op(gate("c", mul(r, h_prev)));
    auto one_minus_z = affine(z, T(-1), T(1));
    return add(mul(one_minus_z, h_prev), mul(z, cand));
}

namespace detail {

inline void check_lengths(const std::vector<std::size_t>& lengths, std::size_t batch,
                          std::size_t t_max) {
    if (lengths.size() != batch) throw ModelError("length vector does not match batch size");
    for (std::size_t l : lengths) {
        if (l == 0) throw ModelError("sequence with zero valid steps");
        if (l > t_max)
            throw ModelError("sequence length " + std::to_string(l) + " exceeds padded extent " +
                             std::to_string(t_max));
    }
}

// run one recurrent layer over all timesteps of (B,T,in); returns per-step
// hidden states. When `inputs` is non-null it is used instead of slicing x.
template <typename T>
std::vector<Tensor<T>> run_rnn_layer(ModelParams<T>& p, const std::string& prefix, RnnCell cell,
                                     const Tensor<T>* x, const std::vector<Tensor<T>>* inputs,
                                     std::size_t batch, std::size_t t_steps, std::size_t hidden) {
    std::vector<Tensor<T>> hs;
    hs.reserve(t_steps);
    Tensor<T> h = Tensor<T>::zeros({batch, hidden});
    Tensor<T> c = Tensor<T>::zeros({batch, hidden});
    for (std::size_t t = 0; t < t_steps; ++t) {
        Tensor<T> x_t = inputs ? (*inputs)[t] : slice_time(*x, t);
        if (cell == RnnCell::Lstm) {
            auto [h2, c2] = lstm_cell_step(p, prefix, x_t, h, c);
            h = h2;
            c = c2;
        } else {
            h = gru_cell_step(p, prefix, x_t, h);
        }
        hs.push_back(h);
    }
    return hs;
}

// hidden state at each sequence's last valid step
template <typename T>
Tensor<T> last_valid_readout(const std::vector<Tensor<T>>& hs,
                             const std::vector<std::size_t>& lengths, std::size_t batch,
                             std::size_t hidden) {
    Tensor<T> readout = Tensor<T>::zeros({batch, hidden});
    for (std::size_t t = 0; t < hs.size(); ++t) {
        std::vector<T> pick(batch, T(0));
        bool any = false;
        for (std::size_t b = 0; b < batch; ++b)
            if (lengths[b] == t + 1) {
                pick[b] = T(1);
                any = true;
            }
        if (any) readout = add(readout, scale_rows(hs[t], pick));
    }
    return readout;
}

template <typename T>
Tensor<T> mlp_head(ModelParams<T>& p, const Tensor<T>& x) {
    auto h = tanh_op(add_bias(matmul(x, p.at("head.0.w")), p.at("head.0.b")));
    return add_bias(matmul(h, p.at("head.1.w")), p.at("head.1.b"));
}

}  // namespace detail

template <typename T>
Tensor<T> forward_stacked_rnn(const StackedRnnConfig& cfg, ModelParams<T>& p,
                              const Tensor<T>& batch, const std::vector<std::size_t>& lengths,
                              Mode mode, Rng& rng) {
    const std::size_t b = batch.shape()[0], t_steps = batch.shape()[1];
    detail::check_lengths(lengths, b, t_steps);
    std::vector<Tensor<T>> hs;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string prefix = "rnn." + std::to_string(l);
        hs = detail::run_rnn_layer(p, prefix, cfg.cell, l == 0 ? &batch : nullptr,
                                   l == 0 ? nullptr : &hs, b, t_steps, cfg.hidden);
    }
    auto readout = detail::last_valid_readout(hs, lengths, b, cfg.hidden);
    readout = dropout(readout, cfg.dropout_p, mode, rng);
    return detail::mlp_head(p, readout);
}

template <typename T>
Tensor<T> forward_dense_rnn(const DenseRnnConfig& cfg, ModelParams<T>& p, const Tensor<T>& batch,
                            const std::vector<std::size_t>& lengths, Mode mode, Rng& rng) {
    const std::size_t b = batch.shape()[0], t_steps = batch.shape()[1],
                      c = batch.shape()[2];
    detail::check_lengths(lengths, b, t_steps);
    // shared per-timestep projection: one weight matrix applied at every t
    auto flat = reshape(batch, {b * t_steps, c});
    auto proj = tanh_op(add_bias(matmul(flat, p.at("dense.w")), p.at("dense.b")));
    auto y0 = reshape(proj, {b, t_steps, cfg.dense_out});
    auto hs = detail::run_rnn_layer(p, "rnn.0", cfg.cell, &y0, (std::vector<Tensor<T>>*)nullptr,
                                    b, t_steps, cfg.hidden);
    if (cfg.stacked)
        hs = detail::run_rnn_layer(p, "rnn.1", cfg.cell, (const Tensor<T>*)nullptr, &hs, b,
                                   t_steps, cfg.hidden);
    auto readout = detail::last_valid_readout(hs, lengths, b, cfg.hidden);
    readout = dropout(readout, cfg.dropout_p, mode, rng);
    return detail::mlp_head(p, readout);
}

template <typename T>
Tensor<T> forward_encoder(const EncoderConfig& cfg, ModelParams<T>& p, const Tensor<T>& batch,
                          const std::vector<std::size_t>& lengths, Mode mode, Rng& rng) {
    const std::size_t b = batch.shape()[0], t_steps = batch.shape()[1], c = batch.shape()[2];
    if (t_steps != cfg.max_len)
        throw ModelError("encoder input must be padded to " + std::to_string(cfg.max_len) +
                         " steps, got " + std::to_string(t_steps));
    detail::check_lengths(lengths, b, t_steps);
    const std::size_t d = cfg.embed_dim, s = t_steps + 1;  // CLS prepended
    const std::size_t nh = cfg.num_heads, hd = d / nh;

    // key mask: CLS always valid, then the length prefix
    std::vector<std::uint8_t> key_mask(b * s, 0);
    for (std::size_t i = 0; i < b; ++i) {
        key_mask[i * s] = 1;
        for (std::size_t t = 0; t < lengths[i]; ++t) key_mask[i * s + 1 + t] = 1;
    }

    auto emb = reshape(matmul(reshape(batch, {b * t_steps, c}), p.at("embed.w")),
                       {b, t_steps, d});
    auto y = add_bias(prepend_token(emb, p.at("cls")), p.at("pos"));
    y = dropout(y, cfg.dropout_p, mode, rng);

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
    auto heads = [&](const Tensor<T>& m) {  // (B*S,D) -> (B*nh,S,hd)
        return reshape(transpose(reshape(m, {b, s, nh, hd}), {0, 2, 1, 3}), {b * nh, s, hd});
    };
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string lp = "enc." + std::to_string(l);
        auto a = layer_norm(reshape(y, {b * s, d}), p.at(lp + ".ln1.g"), p.at(lp + ".ln1.b"),
                            static_cast<T>(1e-5));
        auto lin = [&](const char* n) {
            return add_bias(matmul(a, p.at(lp + ".attn." + std::string(n) + ".w")),
                            p.at(lp + ".attn." + std::string(n) + ".b"));
        };
        auto q = heads(affine(lin("q"), scale, T(0)));
        auto k = heads(lin("k"));
        auto v = heads(lin("v"));
        auto scores = reshape(bmm(q, transpose(k, {0, 2, 1})), {b, nh, s, s});
        auto attn = reshape(masked_softmax(scores, key_mask), {b * nh, s, s});
        auto ctx = reshape(transpose(reshape(bmm(attn, v), {b, nh, s, hd}), {0, 2, 1, 3}),
                           {b * s, d});
        auto attn_out = add_bias(matmul(ctx, p.at(lp + ".attn.out.w")), p.at(lp + ".attn.out.b"));
        attn_out = dropout(attn_out, cfg.dropout_p, mode, rng);
        y = add(y, reshape(attn_out, {b, s, d}));

        auto m = layer_norm(reshape(y, {b * s, d}), p.at(lp + ".ln2.g"), p.at(lp + ".ln2.b"),
                            static_cast<T>(1e-5));
        auto h1 = gelu(add_bias(matmul(m, p.at(lp + ".mlp.0.w")), p.at(lp + ".mlp.0.b")));
        auto h2 = add_bias(matmul(h1, p.at(lp + ".mlp.1.w")), p.at(lp + ".mlp.1.b"));
        h2 = dropout(h2, cfg.dropout_p, mode, rng);
        y = add(y, reshape(h2, {b, s, d}));
    }
    auto cls_out = slice_time(y, 0);
    auto normed = layer_norm(cls_out, p.at("ln_f.g"), p.at("ln_f.b"), static_cast<T>(1e-5));
    return add_bias(matmul(normed, p.at("head.w")), p.at("head.b"));
}

template <typename T>
Tensor<T> forward_model(const ModelConfig& cfg, ModelParams<T>& p, const Tensor<T>& batch,
                        const std::vector<std::size_t>& lengths, Mode mode, Rng& rng) {
    if (const auto* s = std::get_if<StackedRnnConfig>(&cfg))
        return forward_stacked_rnn(*s, p, batch, lengths, mode, rng);
    if (const auto* d = std::get_if<DenseRnnConfig>(&cfg))
        return forward_dense_rnn(*d, p, batch, lengths, mode, rng);
    return forward_encoder(std::get<EncoderConfig>(cfg), p, batch, lengths, mode, rng);
}

}  // namespace signspeak
