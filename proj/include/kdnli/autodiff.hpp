#ifndef KDNLI_AUTODIFF_HPP_
#define KDNLI_AUTODIFF_HPP_

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their parents and a closure that pushes the
// output gradient back into them; backward() walks the recorded graph in
// reverse topological order. Leaves (parameters) accumulate gradients across
// backward calls until zero_grad().
//
// Tensors of rank >= 1 are viewed as a matrix of rows() x cols(), where
// cols() is the last dimension. Row-wise operations (softmax, layer norm,
// bias broadcast) act along the last axis.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kdnli/error.hpp"

namespace kdnli {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient first reaches this node
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), T{0});
        }
        return grad;
    }
};

inline int& no_grad_depth() {
    thread_local int depth = 0;
    return depth;
}

}  // namespace detail

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard() { ++detail::no_grad_depth(); }
    ~NoGradGuard() { --detail::no_grad_depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

template <class T>
class Tensor {
public:
    using value_type = T;
    using NodeT = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> data(shape_numel(shape), T{0});
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto node = std::make_shared<NodeT>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor vector(std::vector<T> data, bool requires_grad = false) {
        Shape shape{data.size()};
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from(Shape{}, std::vector<T>{value}, requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t cols() const { return rank() == 0 ? 1 : node_->shape.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

    std::span<const T> data() const { return node_->data; }
    std::span<T> mutable_data() { return node_->data; }
    T operator[](std::size_t i) const { return node_->data[i]; }
    T item() const {
        if (size() != 1) {
            throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        }
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() {
        if (!node_->grad.empty()) {
            std::fill(node_->grad.begin(), node_->grad.end(), T{0});
        }
    }

    /// Copy of the values with no graph attached.
    Tensor clone(bool requires_grad = false) const {
        return from(shape(), node_->data, requires_grad);
    }

    const void* id() const noexcept { return node_.get(); }
    NodeT& node() const { return *node_; }
    const std::shared_ptr<NodeT>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<NodeT> node_;
};

namespace detail {

/// Builds an op result. When any input tracks gradients the node records
/// its parents and backward closure; otherwise it is a plain constant.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
    bool track = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) {
            track = track || in.requires_grad();
        }
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (track) {
        node->requires_grad = true;
        node->leaf = false;
        for (auto& in : inputs) {
            node->parents.push_back(in.node_ptr());
        }
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <class T>
Shape with_last_dim(const Shape& shape, std::size_t last) {
    Shape out = shape.empty() ? Shape{1} : shape;
    out.back() = last;
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Element-wise arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * factor;
    }
    return detail::make_result<T>(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

/// x + b with b broadcast across every row of x (b has cols(x) elements).
template <class T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& b) {
    const std::size_t n = x.cols();
    if (b.size() != n) {
        throw ShapeError("add_row: bias of size " + std::to_string(b.size()) + " for rows of " +
                         std::to_string(n));
    }
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out[r * n + c] = x[r * n + c] + b[c];
        }
    }
    return detail::make_result<T>(x.shape(), std::move(out), {x, b}, [n](detail::Node<T>& self) {
        auto& px = self.parents[0];
        auto& pb = self.parents[1];
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Activations and normalisation

template <class T>
T gelu_value(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <class T>
T gelu_derivative(T x) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
    const T pdf = T(inv_sqrt_2pi) * std::exp(T(-0.5) * x * x);
    return cdf + x * pdf;
}

/// Exact (erf-based) Gaussian Error Linear Unit.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw NumericalInputError("gelu: non-finite input at index " + std::to_string(i));
        }
        out[i] = gelu_value(x[i]);
    }
    return detail::make_result<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * gelu_derivative(p->data[i]);
    });
}

/// Softmax along the last axis, with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
    const std::size_t n = logits.cols();
    if (logits.size() == 0 || n == 0) {
        throw ShapeError("softmax: empty input");
    }
    const std::size_t rows = logits.rows();
    std::vector<T> out(logits.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = logits.data().data() + r * n;
        T* o = out.data() + r * n;
        const T mx = *std::max_element(in, in + n);
        T total = 0;
        for (std::size_t c = 0; c < n; ++c) {
            o[c] = std::exp(in[c] - mx);
            total += o[c];
        }
        for (std::size_t c = 0; c < n; ++c) o[c] /= total;
    }
    Shape shape = logits.rank() == 0 ? Shape{1} : logits.shape();
    return detail::make_result<T>(std::move(shape), std::move(out), {logits}, [n, rows](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * n;
            const T* dy = self.grad.data() + r * n;
            T dot = 0;
            for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
        }
    });
}

/// Layer normalisation along the last axis with learned gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const std::size_t n = x.cols();
    if (gamma.size() != n || beta.size() != n) {
        throw ShapeError("layer_norm: gain/bias size mismatch");
    }
    const std::size_t rows = x.rows();
    std::vector<T> out(x.size());
    std::vector<T> xhat(x.size());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * n;
        T mean = 0;
        for (std::size_t c = 0; c < n; ++c) mean += in[c];
        mean /= T(n);
        T var = 0;
        for (std::size_t c = 0; c < n; ++c) var += (in[c] - mean) * (in[c] - mean);
        var /= T(n);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            xhat[r * n + c] = (in[c] - mean) * inv_std[r];
            out[r * n + c] = xhat[r * n + c] * gamma[c] + beta[c];
        }
    }
    return detail::make_result<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            if (pg->requires_grad) {
                auto& gg = pg->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) gg[i % n] += self.grad[i] * xhat[i];
            }
            if (pb->requires_grad) {
                auto& gb = pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % n] += self.grad[i];
            }
            if (px->requires_grad) {
                auto& gx = px->ensure_grad();
                std::vector<T> dxhat(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    T sum_d = 0;
                    T sum_dx = 0;
                    for (std::size_t c = 0; c < n; ++c) {
                        dxhat[c] = self.grad[r * n + c] * pg->data[c];
                        sum_d += dxhat[c];
                        sum_dx += dxhat[c] * xhat[r * n + c];
                    }
                    for (std::size_t c = 0; c < n; ++c) {
                        gx[r * n + c] += inv_std[r] / T(n) *
                                         (T(n) * dxhat[c] - sum_d - xhat[r * n + c] * sum_dx);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Linear algebra and reshaping

/// a (..., k) times b [k, n]; the result keeps a's leading dims.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (b.rank() != 2) {
        throw ShapeError("matmul: right operand must be rank 2, got " + shape_str(b.shape()));
    }
    const std::size_t k = a.cols();
    const std::size_t n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.rows();
    std::vector<T> out(m * n, T{0});
    const T* A = a.data().data();
    const T* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* o = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            const T* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += av * brow[j];
        }
    }
    return detail::make_result<T>(detail::with_last_dim<T>(a.shape(), n), std::move(out), {a, b},
                                  [m, k, n](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const T* G = self.grad.data();
        if (pa->requires_grad) {
            auto& ga = pa->ensure_grad();
            const T* B = pb->data.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T* brow = B + p * n;
                    const T* grow = G + i * n;
                    T acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (pb->requires_grad) {
            auto& gb = pb->ensure_grad();
            const T* A = pa->data.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = A[i * k + p];
                    T* gbrow = gb.data() + p * n;
                    const T* grow = G + i * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) {
        throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
    }
    const std::size_t r = x.shape()[0];
    const std::size_t c = x.shape()[1];
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    }
    return detail::make_result<T>(Shape{c, r}, std::move(out), {x}, [r, c](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
        }
    });
}

/// Columns [start, start + len) of every row.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t len) {
    const std::size_t n = x.cols();
    if (start + len > n) {
        throw ShapeError("slice_cols: range out of bounds");
    }
    const std::size_t rows = x.rows();
    std::vector<T> out(rows * len);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data().data() + r * n + start, len, out.data() + r * len);
    }
    return detail::make_result<T>(detail::with_last_dim<T>(x.shape(), len), std::move(out), {x},
                                  [n, start, len, rows](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < len; ++c) g[r * n + start + c] += self.grad[r * len + c];
        }
    });
}

/// Concatenation along the last axis; all parts must have the same rows().
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const std::size_t rows = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw ShapeError("concat_cols: row count mismatch");
        }
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<T> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(parts[k].data().data() + r * widths[k], widths[k], out.data() + r * total + offset);
        }
        offset += widths[k];
    }
    return detail::make_result<T>(detail::with_last_dim<T>(parts[0].shape(), total), std::move(out), parts,
                                  [rows, total, widths](detail::Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
                }
            }
            off += widths[k];
        }
    });
}

/// Stacks equal-length vectors into a [count, len] matrix.
template <class T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
    if (rows.empty()) {
        throw ShapeError("stack_rows: no inputs");
    }
    const std::size_t len = rows[0].size();
    std::vector<T> out;
    out.reserve(rows.size() * len);
    for (const auto& r : rows) {
        if (r.size() != len) {
            throw ShapeError("stack_rows: length mismatch");
        }
        out.insert(out.end(), r.data().begin(), r.data().end());
    }
    return detail::make_result<T>(Shape{rows.size(), len}, std::move(out), rows, [len](detail::Node<T>& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t c = 0; c < len; ++c) g[c] += self.grad[k * len + c];
        }
    });
}

/// Gathers rows of table [V, d] by index into an [ids.size(), d] matrix.
template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::size_t> ids) {
    if (table.rank() != 2) {
        throw ShapeError("embedding_lookup: table must be rank 2");
    }
    const std::size_t vocab = table.shape()[0];
    const std::size_t d = table.shape()[1];
    std::vector<T> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw TokenizationError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                                    std::to_string(vocab));
        }
        std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
    }
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return detail::make_result<T>(Shape{ids.size(), d}, std::move(out), {table},
                                  [d, idx = std::move(idx)](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < d; ++c) g[idx[i] * d + c] += self.grad[i * d + c];
        }
    });
}

/// Mean of the rows of x [L, d] whose mask entry is true; result has shape {d}.
template <class T>
Tensor<T> masked_mean_rows(const Tensor<T>& x, const std::vector<bool>& keep) {
    const std::size_t d = x.cols();
    const std::size_t rows = x.rows();
    if (keep.size() != rows) {
        throw ShapeError("masked_mean_rows: mask length mismatch");
    }
    const auto count = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    if (count == 0) {
        throw ShapeError("masked_mean_rows: every row is masked");
    }
    std::vector<T> out(d, T{0});
    for (std::size_t r = 0; r < rows; ++r) {
        if (!keep[r]) continue;
        for (std::size_t c = 0; c < d; ++c) out[c] += x[r * d + c];
    }
    for (auto& v : out) v /= T(count);
    return detail::make_result<T>(Shape{d}, std::move(out), {x}, [d, rows, count, keep](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            if (!keep[r]) continue;
            for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[c] / T(count);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (const T v : x.data()) total += v;
    return detail::make_result<T>(Shape{}, std::vector<T>{total}, {x}, [](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.size() == 0) {
        throw ShapeError("mean: empty input");
    }
    return scale(sum(x), T(1) / T(x.size()));
}

/// Mean over all elements of the squared difference.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mse_loss");
    if (a.size() == 0) {
        throw ShapeError("mse_loss: empty input");
    }
    const std::size_t n = a.size();
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T diff = a[i] - b[i];
        total += diff * diff;
    }
    return detail::make_result<T>(Shape{}, std::vector<T>{total / T(n)}, {a, b}, [n](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const T factor = T(2) * self.grad[0] / T(n);
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += factor * (pa->data[i] - pb->data[i]);
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) g[i] -= factor * (pa->data[i] - pb->data[i]);
        }
    });
}

inline constexpr double kLogClamp = 1e-12;

/// -log(p[gold]) with the log argument clamped to at least 1e-12.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& probabilities, std::size_t gold_class) {
    if (gold_class >= probabilities.size()) {
        throw LabelError("cross_entropy: gold class " + std::to_string(gold_class) + " outside " +
                         std::to_string(probabilities.size()) + " classes");
    }
    const T p = probabilities[gold_class];
    const bool clamped = p < T(kLogClamp);
    const T value = -std::log(clamped ? T(kLogClamp) : p);
    return detail::make_result<T>(Shape{}, std::vector<T>{value}, {probabilities},
                                  [gold_class, clamped](detail::Node<T>& self) {
        if (clamped) return;
        auto& parent = self.parents[0];
        auto& g = parent->ensure_grad();
        g[gold_class] -= self.grad[0] / parent->data[gold_class];
    });
}

/// Sum of scalar tensors as one graph node.
template <class T>
Tensor<T> add_n(const std::vector<Tensor<T>>& terms) {
    if (terms.empty()) {
        throw ShapeError("add_n: no inputs");
    }
    T total = 0;
    for (const auto& t : terms) {
        total += t.item();
    }
    return detail::make_result<T>(Shape{}, std::vector<T>{total}, terms, [](detail::Node<T>& self) {
        for (auto& p : self.parents) {
            if (p->requires_grad) p->ensure_grad()[0] += self.grad[0];
        }
    });
}

// ---------------------------------------------------------------------------

/// Back-propagates from a scalar loss. Gradients of intermediate nodes are
/// recomputed on every call; gradients of leaves accumulate.
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return;
    }
    using NodeT = detail::Node<T>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(&loss.node(), 0);
    visited.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeT* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (NodeT* node : order) {
        if (!node->leaf) {
            node->grad.assign(node->data.size(), T{0});
        }
    }
    loss.node().ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) {
            (*it)->backward(**it);
        }
    }
}

}  // namespace kdnli

#endif  // KDNLI_AUTODIFF_HPP_
