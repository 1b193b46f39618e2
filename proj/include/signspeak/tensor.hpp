#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "signspeak/rng.hpp"

namespace signspeak {

class TensorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same size as value once present
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void()> backprop;  // accumulates this->grad into parents

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

// Shared handle onto a node of the computation graph. Leaf tensors with
// requires_grad set receive gradients after backward(); intermediate nodes
// keep the graph alive through their parent links.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return from_values(std::move(shape), {});
    }

    static Tensor full(Shape shape, T fill) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->value.assign(numel(shape), fill);
        t.node_->shape = std::move(shape);
        return t;
    }

    static Tensor from_values(Shape shape, std::vector<T> values) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        const auto n = numel(shape);
        if (values.empty()) values.assign(n, T(0));
        if (values.size() != n)
            throw TensorError("tensor value count " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        return t;
    }

    static Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        Tensor t = zeros(shape);
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-a, a));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t ndim() const { return node_->shape.size(); }

    std::vector<T>& values() { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b = true) {
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw TensorError("gradient not populated; run backward() first");
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    bool all_finite() const {
        for (const T v : node_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T item() const {
        if (size() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<std::shared_ptr<TensorNode<T>>> parents) {
    Tensor<T> out = Tensor<T>::zeros(std::move(shape));
    bool needs = false;
    for (const auto& p : parents) needs |= p->requires_grad;
    out.node()->requires_grad = needs;
    if (needs) out.node()->parents = std::move(parents);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ops

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
        throw TensorError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    auto out = detail::make_op<T>({m, n}, {a.node(), b.node()});
    detail::CMap<T> A(a.values().data(), m, k), B(b.values().data(), k, n);
    detail::Map<T>(out.values().data(), m, n).noalias() = A * B;
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();  // raw: the node owns this lambda
        on->backprop = [an, bn, on, m, k, n] {
            detail::CMap<T> G(on->grad.data(), m, n);
            detail::CMap<T> A(an->value.data(), m, k), B(bn->value.data(), k, n);
            if (an->requires_grad) {
                an->ensure_grad();
                detail::Map<T>(an->grad.data(), m, k).noalias() += G * B.transpose();
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                detail::Map<T>(bn->grad.data(), k, n).noalias() += A.transpose() * G;
            }
        };
    }
    return out;
}

// batched matmul over leading dim: (P,m,k) x (P,k,n) -> (P,m,n)
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.shape()[0] != b.shape()[0] ||
        a.shape()[2] != b.shape()[1])
        throw TensorError("bmm dimension mismatch: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const std::size_t p = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
    auto out = detail::make_op<T>({p, m, n}, {a.node(), b.node()});
    for (std::size_t i = 0; i < p; ++i) {
        detail::CMap<T> A(a.values().data() + i * m * k, m, k);
        detail::CMap<T> B(b.values().data() + i * k * n, k, n);
        detail::Map<T>(out.values().data() + i * m * n, m, n).noalias() = A * B;
    }
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        on->backprop = [an, bn, on, p, m, k, n] {
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::size_t i = 0; i < p; ++i) {
                detail::CMap<T> G(on->grad.data() + i * m * n, m, n);
                detail::CMap<T> A(an->value.data() + i * m * k, m, k);
                detail::CMap<T> B(bn->value.data() + i * k * n, k, n);
                if (an->requires_grad)
                    detail::Map<T>(an->grad.data() + i * m * k, m, k).noalias() +=
                        G * B.transpose();
                if (bn->requires_grad)
                    detail::Map<T>(bn->grad.data() + i * k * n, k, n).noalias() +=
                        A.transpose() * G;
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw TensorError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    auto out = detail::make_op<T>(a.shape(), {a.node(), b.node()});
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        on->backprop = [an, bn, on, n] {
            for (auto* pn : {an.get(), bn.get()}) {
                if (!pn->requires_grad) continue;
                pn->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pn->grad[i] += on->grad[i];
            }
        };
    }
    return out;
}

// out[..., j] = x[..., j] + b[j]; b flattened size must equal the trailing
// extent product it broadcasts over (last dim, or a flattened tail).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    const std::size_t w = b.size();
    if (w == 0 || x.size() % w != 0)
        throw TensorError("add_bias width mismatch: " + shape_str(x.shape()) + " vs " +
                          shape_str(b.shape()));
    auto out = detail::make_op<T>(x.shape(), {x.node(), b.node()});
    const std::size_t rows = x.size() / w;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j)
            out.values()[r * w + j] = x.values()[r * w + j] + b.values()[j];
    if (out.requires_grad()) {
        auto xn = x.node(), bn = b.node();
        auto* on = out.node().get();
        on->backprop = [xn, bn, on, rows, w] {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < rows * w; ++i) xn->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) bn->grad[j] += on->grad[r * w + j];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw TensorError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    auto out = detail::make_op<T>(a.shape(), {a.node(), b.node()});
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        auto* on = out.node().get();
        on->backprop = [an, bn, on, n] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->value[i];
            }
        };
    }
    return out;
}

// out = scale * x + shift, elementwise with scalar coefficients
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
    auto out = detail::make_op<T>(x.shape(), {x.node()});
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = scale * x.values()[i] + shift;
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, scale, n] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) xn->grad[i] += scale * on->grad[i];
        };
    }
    return out;
}

// row i of a 2D tensor scaled by the constant s[i]
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const std::vector<T>& s) {
    if (x.ndim() != 2 || x.shape()[0] != s.size())
        throw TensorError("scale_rows: row count mismatch for " + shape_str(x.shape()));
    auto out = detail::make_op<T>(x.shape(), {x.node()});
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.values()[r * cols + c] = x.values()[r * cols + c] * s[r];
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, s, rows, cols] {
            xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    xn->grad[r * cols + c] += on->grad[r * cols + c] * s[r];
        };
    }
    return out;
}

namespace detail {

template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& x, F f, DF df_from_xy) {
    auto out = detail::make_op<T>(x.shape(), {x.node()});
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = f(x.values()[i]);
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, df_from_xy, n] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                xn->grad[i] += on->grad[i] * df_from_xy(xn->value[i], on->value[i]);
        };
    }
    return out;
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return detail::stable_sigmoid(v); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

// tanh-approximation GELU
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    return detail::unary_op(
        x,
        [](T v) {
            const double d = static_cast<double>(v);
            return static_cast<T>(0.5 * d * (1.0 + std::tanh(kC * (d + kA * d * d * d))));
        },
        [](T v, T) {
            const double d = static_cast<double>(v);
            const double u = kC * (d + kA * d * d * d);
            const double th = std::tanh(u);
            const double du = kC * (1.0 + 3.0 * kA * d * d);
            return static_cast<T>(0.5 * (1.0 + th) + 0.5 * d * (1.0 - th * th) * du);
        });
}

namespace detail {

// softmax over the last dim; positions with valid==0 (when given) get
// probability exactly 0. valid repeats with period `mask_period` rows of the
// mask array (pass nullptr for unmasked).
template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& x, const std::vector<std::uint8_t>* valid,
                       std::size_t rows_per_mask_row) {
    const std::size_t w = x.shape().back();
    const std::size_t rows = x.size() / w;
    auto out = detail::make_op<T>(x.shape(), {x.node()});
    auto mask_at = [&](std::size_t r, std::size_t j) -> bool {
        if (!valid) return true;
        const std::size_t mrow = (r / rows_per_mask_row) % (valid->size() / w);
        return (*valid)[mrow * w + j] != 0;
    };
    for (std::size_t r = 0; r < rows; ++r) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < w; ++j)
            if (mask_at(r, j)) mx = std::max(mx, x.values()[r * w + j]);
        if (!(mx > -std::numeric_limits<T>::infinity()))
            throw TensorError("softmax row with no valid positions");
        T denom = T(0);
        for (std::size_t j = 0; j < w; ++j) {
            T e = T(0);
            if (mask_at(r, j)) e = std::exp(x.values()[r * w + j] - mx);
            out.values()[r * w + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < w; ++j) out.values()[r * w + j] /= denom;
    }
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, rows, w] {
            xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = T(0);
                for (std::size_t j = 0; j < w; ++j)
                    dot += on->grad[r * w + j] * on->value[r * w + j];
                for (std::size_t j = 0; j < w; ++j)
                    xn->grad[r * w + j] +=
                        on->value[r * w + j] * (on->grad[r * w + j] - dot);
            }
        };
    }
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    return detail::softmax_impl(x, nullptr, 1);
}

// scores: (B, H, S, S); key_mask: B x S flags, broadcast over heads and query
// positions. Masked-out keys receive probability exactly 0.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& scores, const std::vector<std::uint8_t>& key_mask) {
    if (scores.ndim() != 4)
        throw TensorError("masked_softmax expects a 4D score tensor, got " +
                          shape_str(scores.shape()));
    const std::size_t s = scores.shape().back();
    const std::size_t b = key_mask.size() / s;
    if (key_mask.size() != b * s || scores.shape()[0] != b)
        throw TensorError("masked_softmax: mask size does not match scores");
    const std::size_t rows_per_batch = scores.shape()[1] * scores.shape()[2];
    return detail::softmax_impl(scores, &key_mask, rows_per_batch);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    const std::size_t w = x.shape().back();
    if (gain.size() != w || bias.size() != w)
        throw TensorError("layer_norm gain/bias must match last extent " + std::to_string(w));
    const std::size_t rows = x.size() / w;
    auto out = detail::make_op<T>(x.shape(), {x.node(), gain.node(), bias.node()});
    std::vector<T> inv_std(rows), xhat(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        T mean = T(0);
        for (std::size_t j = 0; j < w; ++j) mean += x.values()[r * w + j];
        mean /= static_cast<T>(w);
        T var = T(0);
        for (std::size_t j = 0; j < w; ++j) {
            const T d = x.values()[r * w + j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(w);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < w; ++j) {
            const T xh = (x.values()[r * w + j] - mean) * inv;
            xhat[r * w + j] = xh;
            out.values()[r * w + j] = gain.values()[j] * xh + bias.values()[j];
        }
    }
    if (out.requires_grad()) {
        auto xn = x.node(), gn = gain.node(), bn = bias.node();
        auto* on = out.node().get();
        on->backprop = [xn, gn, bn, on, rows, w, inv_std = std::move(inv_std),
                        xhat = std::move(xhat)] {
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) bn->grad[j] += on->grad[r * w + j];
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j)
                        gn->grad[j] += on->grad[r * w + j] * xhat[r * w + j];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    T m1 = T(0), m2 = T(0);
                    for (std::size_t j = 0; j < w; ++j) {
                        const T dxh = on->grad[r * w + j] * gn->value[j];
                        m1 += dxh;
                        m2 += dxh * xhat[r * w + j];
                    }
                    m1 /= static_cast<T>(w);
                    m2 /= static_cast<T>(w);
                    for (std::size_t j = 0; j < w; ++j) {
                        const T dxh = on->grad[r * w + j] * gn->value[j];
                        xn->grad[r * w + j] += inv_std[r] * (dxh - m1 - xhat[r * w + j] * m2);
                    }
                }
            }
        };
    }
    return out;
}

enum class Mode { Train, Eval };

// inverted dropout: eval is the identity
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw TensorError("dropout probability must be in [0,1), got " + std::to_string(p));
    if (mode == Mode::Eval || p == 0.0) return x;
    auto out = detail::make_op<T>(x.shape(), {x.node()});
    const std::size_t n = x.size();
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> keep(n);
    for (std::size_t i = 0; i < n; ++i) {
        keep[i] = rng.next_double() < p ? T(0) : scale;
        out.values()[i] = x.values()[i] * keep[i];
    }
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, keep = std::move(keep), n] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * keep[i];
        };
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw TensorError("reshape element count mismatch: " + shape_str(x.shape()) + " -> " +
                          shape_str(shape));
    auto out = detail::make_op<T>(std::move(shape), {x.node()});
    out.values() = x.values();
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        };
    }
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const std::size_t nd = x.ndim();
    if (perm.size() != nd) throw TensorError("transpose permutation arity mismatch");
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = x.shape()[perm[i]];
    auto out = detail::make_op<T>(out_shape, {x.node()});
    std::vector<std::size_t> in_stride(nd, 1), out_stride(nd, 1);
    for (std::size_t i = nd - 1; i-- > 0;) {
        in_stride[i] = in_stride[i + 1] * x.shape()[i + 1];
        out_stride[i] = out_stride[i + 1] * out_shape[i + 1];
    }
    // index map from output flat offset to input flat offset
    std::vector<std::size_t> src(x.size());
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t in_off = 0;
        for (std::size_t i = 0; i < nd; ++i) in_off += idx[i] * in_stride[perm[i]];
        src[o] = in_off;
        out.values()[o] = x.values()[in_off];
        for (std::size_t i = nd; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, src = std::move(src)] {
            xn->ensure_grad();
            for (std::size_t o = 0; o < src.size(); ++o) xn->grad[src[o]] += on->grad[o];
        };
    }
    return out;
}

// extract timestep t: (B,T,C) -> (B,C)
template <typename T>
Tensor<T> slice_time(const Tensor<T>& x, std::size_t t) {
    if (x.ndim() != 3 || t >= x.shape()[1])
        throw TensorError("slice_time: invalid index " + std::to_string(t) + " for " +
                          shape_str(x.shape()));
    const std::size_t b = x.shape()[0], tt = x.shape()[1], c = x.shape()[2];
    auto out = detail::make_op<T>({b, c}, {x.node()});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.values()[i * c + j] = x.values()[(i * tt + t) * c + j];
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on, b, tt, c, t] {
            xn->ensure_grad();
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    xn->grad[(i * tt + t) * c + j] += on->grad[i * c + j];
        };
    }
    return out;
}

// prepend one learnable row to every sequence: (B,S,D) + (D) -> (B,S+1,D)
template <typename T>
Tensor<T> prepend_token(const Tensor<T>& x, const Tensor<T>& token) {
    if (x.ndim() != 3 || token.size() != x.shape()[2])
        throw TensorError("prepend_token: token width must match " + shape_str(x.shape()));
    const std::size_t b = x.shape()[0], s = x.shape()[1], d = x.shape()[2];
    auto out = detail::make_op<T>({b, s + 1, d}, {x.node(), token.node()});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            out.values()[i * (s + 1) * d + j] = token.values()[j];
        std::copy_n(x.values().data() + i * s * d, s * d,
                    out.values().data() + i * (s + 1) * d + d);
    }
    if (out.requires_grad()) {
        auto xn = x.node(), tn = token.node();
        auto* on = out.node().get();
        on->backprop = [xn, tn, on, b, s, d] {
            if (tn->requires_grad) {
                tn->ensure_grad();
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        tn->grad[j] += on->grad[i * (s + 1) * d + j];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t k = 0; k < s * d; ++k)
                        xn->grad[i * s * d + k] += on->grad[i * (s + 1) * d + d + k];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    auto out = detail::make_op<T>({1}, {x.node()});
    out.values()[0] = std::accumulate(x.values().begin(), x.values().end(), T(0));
    if (out.requires_grad()) {
        auto xn = x.node();
        auto* on = out.node().get();
        on->backprop = [xn, on] {
            xn->ensure_grad();
            for (auto& g : xn->grad) g += on->grad[0];
        };
    }
    return out;
}

// mean over the batch of -log softmax(logits)[label], log-sum-exp form
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2 || logits.shape()[0] != labels.size())
        throw TensorError("cross_entropy: logits " + shape_str(logits.shape()) +
                          " do not match " + std::to_string(labels.size()) + " labels");
    const std::size_t b = logits.shape()[0], k = logits.shape()[1];
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= k)
            throw TensorError("cross_entropy: label " + std::to_string(l) + " out of range");
    auto out = detail::make_op<T>({1}, {logits.node()});
    std::vector<T> probs(logits.size());
    T loss = T(0);
    for (std::size_t r = 0; r < b; ++r) {
        const T* row = logits.values().data() + r * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const T lse = mx + std::log(denom);
        loss += lse - row[static_cast<std::size_t>(labels[r])];
        for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - lse);
    }
    out.values()[0] = loss / static_cast<T>(b);
    if (out.requires_grad()) {
        auto ln = logits.node();
        auto* on = out.node().get();
        on->backprop = [ln, on, labels, probs = std::move(probs), b, k] {
            ln->ensure_grad();
            const T g = on->grad[0] / static_cast<T>(b);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t j = 0; j < k; ++j) {
                    T p = probs[r * k + j];
                    if (j == static_cast<std::size_t>(labels[r])) p -= T(1);
                    ln->grad[r * k + j] += g * p;
                }
        };
    }
    return out;
}

// reverse-mode sweep from a scalar loss; visits each recorded op exactly once
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
        throw TensorError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.all_finite()) throw TensorError("backward on non-finite loss");

    // iterative post-order topological sort
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    struct Frame {
        TensorNode<T>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode<T>* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

}  // namespace signspeak
