#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Minimal reverse-mode tensor engine. Define-by-run: every primitive builds a
// graph node; backward() walks the tape in reverse topological order. Tensors
// are rank 1..3, row-major; the leading dimensions of a rank-3 tensor act as a
// batch for matmul and the sequence ops.

namespace rim {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
    os << ']';
    return os.str();
}

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Global switch: with grad disabled, primitives produce detached results and
// retain no parents, so inference runs are graph-free.
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool saved;
    NoGradGuard() : saved(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = saved; }
};

template <typename S>
struct Node {
    Shape shape;
    std::vector<S> val;
    std::vector<S> grad;  // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // accumulates into parents' grads

    void ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), S(0));
    }
};

template <typename S>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape) { return filled(std::move(shape), S(0)); }

    static Tensor filled(Shape shape, S v) {
        auto n = std::make_shared<Node<S>>();
        n->val.assign(static_cast<size_t>(numel(shape)), v);
        n->shape = std::move(shape);
        return Tensor(n);
    }

    static Tensor from(Shape shape, std::vector<S> values) {
        check(static_cast<std::int64_t>(values.size()) == numel(shape),
              "tensor data size does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->val = std::move(values);
        return Tensor(n);
    }

    static Tensor param(Shape shape, std::vector<S> values) {
        Tensor t = from(std::move(shape), std::move(values));
        t.n_->requires_grad = true;
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(n_->val.size()); }

    std::vector<S>& values() { return n_->val; }
    const std::vector<S>& values() const { return n_->val; }
    std::vector<S>& grad() { return n_->grad; }
    const std::vector<S>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }

    std::shared_ptr<Node<S>> node() const { return n_; }

    S item() const {
        check(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return n_->val[0];
    }

    Tensor detach() const {
        auto n = std::make_shared<Node<S>>();
        n->shape = n_->shape;
        n->val = n_->val;
        return Tensor(n);
    }

    bool all_finite() const {
        for (S v : n_->val)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <typename S>
Tensor<S> make_result(Shape shape, std::vector<S> val,
                      std::vector<std::shared_ptr<Node<S>>> parents,
                      std::function<void(Node<S>&)> backprop) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    if (grad_enabled()) {
        bool need = false;
        for (auto& p : parents)
            if (p->requires_grad) need = true;
        if (need) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
    }
    return Tensor<S>(n);
}

// True when b's shape is a strict suffix of a's (bias/row broadcasting).
inline bool suffix_of(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    for (size_t i = 0; i < b.size(); ++i)
        if (a[a.size() - b.size() + i] != b[i]) return false;
    return true;
}

template <typename S>
using EigenMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using EigenCMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---- elementwise with suffix broadcasting -------------------------------

template <typename S, typename FwdOp, typename BwdA, typename BwdB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, FwdOp fwd, BwdA bwd_a, BwdB bwd_b,
                    const char* name) {
    check(numel(b.shape()) == 1 || detail::suffix_of(a.shape(), b.shape()),
          std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    const size_t nb = bv.size();
    std::vector<S> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % nb]);
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_result<S>(
        a.shape(), std::move(out), {pa, pb}, [pa, pb, bwd_a, bwd_b](Node<S>& self) {
            const size_t nb2 = pb->val.size();
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < self.val.size(); ++i)
                    pa->grad[i] += bwd_a(self.grad[i], pa->val[i], pb->val[i % nb2]);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < self.val.size(); ++i)
                    pb->grad[i % nb2] += bwd_b(self.grad[i], pa->val[i], pb->val[i % nb2]);
            }
        });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x + y; }, [](S g, S, S) { return g; },
        [](S g, S, S) { return g; }, "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x - y; }, [](S g, S, S) { return g; },
        [](S g, S, S) { return -g; }, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x * y; }, [](S g, S, S y) { return g * y; },
        [](S g, S x, S) { return g * x; }, "mul");
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    std::vector<S> out(a.values());
    for (S& v : out) v *= c;
    auto pa = a.node();
    return detail::make_result<S>(a.shape(), std::move(out), {pa}, [pa, c](Node<S>& self) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.val.size(); ++i) pa->grad[i] += c * self.grad[i];
    });
}

// ---- unary nonlinearities -----------------------------------------------

template <typename S, typename FwdOp, typename BwdOp>
Tensor<S> unary_op(const Tensor<S>& a, FwdOp fwd, BwdOp bwd) {
    std::vector<S> out(a.size());
    const auto& av = a.values();
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    auto pa = a.node();
    return detail::make_result<S>(a.shape(), std::move(out), {pa}, [pa, bwd](Node<S>& self) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.val.size(); ++i)
            pa->grad[i] += self.grad[i] * bwd(pa->val[i], self.val[i]);
    });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    return unary_op(
        a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> tanh_act(const Tensor<S>& a) {
    return unary_op(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
    return unary_op(
        a, [](S x) { return x / (S(1) + std::exp(-x)); },
        [](S x, S) {
            S s = S(1) / (S(1) + std::exp(-x));
            return s * (S(1) + x * (S(1) - s));
        });
}

// ---- matmul --------------------------------------------------------------

// a: [.., m, k]; b: [k, n] or [batch.., k, n] with matching leading dims.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    check(a.rank() >= 2 && b.rank() >= 2, "matmul: operands must have rank >= 2");
    const int m = a.dim(a.rank() - 2);
    const int k = a.dim(a.rank() - 1);
    const int kb = b.dim(b.rank() - 2);
    const int n = b.dim(b.rank() - 1);
    check(k == kb, "matmul: inner dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t batch = numel(a.shape()) / (std::int64_t(m) * k);
    const bool b_batched = b.rank() > 2;
    if (b_batched) {
        check(numel(b.shape()) / (std::int64_t(kb) * n) == batch,
              "matmul: batch dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    std::vector<S> out(static_cast<size_t>(batch) * m * n);
    for (std::int64_t t = 0; t < batch; ++t) {
        detail::EigenCMap<S> A(a.values().data() + t * m * k, m, k);
        detail::EigenCMap<S> B(b.values().data() + (b_batched ? t * k * n : 0), k, n);
        detail::EigenMap<S> C(out.data() + t * m * n, m, n);
        C.noalias() = A * B;
    }
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_result<S>(
        std::move(out_shape), std::move(out), {pa, pb},
        [pa, pb, m, k, n, batch, b_batched](Node<S>& self) {
            if (pa->requires_grad) pa->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for (std::int64_t t = 0; t < batch; ++t) {
                detail::EigenCMap<S> G(self.grad.data() + t * m * n, m, n);
                detail::EigenCMap<S> A(pa->val.data() + t * m * k, m, k);
                detail::EigenCMap<S> B(pb->val.data() + (b_batched ? t * k * n : 0), k, n);
                if (pa->requires_grad) {
                    detail::EigenMap<S> dA(pa->grad.data() + t * m * k, m, k);
                    dA.noalias() += G * B.transpose();
                }
                if (pb->requires_grad) {
                    detail::EigenMap<S> dB(pb->grad.data() + (b_batched ? t * k * n : 0), k, n);
                    dB.noalias() += A.transpose() * G;
                }
            }
        });
}

template <typename S>
Tensor<S> transpose_last(const Tensor<S>& a) {
    check(a.rank() >= 2, "transpose_last: rank must be >= 2");
    const int m = a.dim(a.rank() - 2);
    const int n = a.dim(a.rank() - 1);
    const std::int64_t batch = numel(a.shape()) / (std::int64_t(m) * n);
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    std::vector<S> out(a.values().size());
    for (std::int64_t t = 0; t < batch; ++t)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out[t * m * n + std::int64_t(j) * m + i] = a.values()[t * m * n + std::int64_t(i) * n + j];
    auto pa = a.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {pa},
                                  [pa, m, n, batch](Node<S>& self) {
                                      pa->ensure_grad();
                                      for (std::int64_t t = 0; t < batch; ++t)
                                          for (int i = 0; i < m; ++i)
                                              for (int j = 0; j < n; ++j)
                                                  pa->grad[t * m * n + std::int64_t(i) * n + j] +=
                                                      self.grad[t * m * n + std::int64_t(j) * m + i];
                                  });
}

// ---- softmax / normalization over the last axis -------------------------

template <typename S>
Tensor<S> softmax_last(const Tensor<S>& a) {
    const int n = a.dim(a.rank() - 1);
    const std::int64_t rows = numel(a.shape()) / n;
    std::vector<S> out(a.values().size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* x = a.values().data() + r * n;
        S* y = out.data() + r * n;
        S mx = *std::max_element(x, x + n);
        S sum = 0;
        for (int i = 0; i < n; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        for (int i = 0; i < n; ++i) y[i] /= sum;
    }
    auto pa = a.node();
    return detail::make_result<S>(a.shape(), std::move(out), {pa}, [pa, n, rows](Node<S>& self) {
        pa->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* y = self.val.data() + r * n;
            const S* g = self.grad.data() + r * n;
            S dot = 0;
            for (int i = 0; i < n; ++i) dot += g[i] * y[i];
            for (int i = 0; i < n; ++i) pa->grad[r * n + i] += y[i] * (g[i] - dot);
        }
    });
}

// RMS normalization over the last axis with a learned per-channel gain.
template <typename S>
Tensor<S> rmsnorm(const Tensor<S>& a, const Tensor<S>& gain) {
    const int n = a.dim(a.rank() - 1);
    check(gain.rank() == 1 && gain.dim(0) == n,
          "rmsnorm: gain shape " + shape_str(gain.shape()) + " does not match channels");
    const std::int64_t rows = numel(a.shape()) / n;
    const S eps = S(1e-6);
    std::vector<S> out(a.values().size());
    std::vector<S> inv_rms(static_cast<size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* x = a.values().data() + r * n;
        S ms = 0;
        for (int i = 0; i < n; ++i) ms += x[i] * x[i];
        S ir = S(1) / std::sqrt(ms / n + eps);
        inv_rms[static_cast<size_t>(r)] = ir;
        for (int i = 0; i < n; ++i) out[r * n + i] = x[i] * ir * gain.values()[i];
    }
    auto pa = a.node();
    auto pg = gain.node();
    return detail::make_result<S>(
        a.shape(), std::move(out), {pa, pg},
        [pa, pg, n, rows, inv_rms = std::move(inv_rms)](Node<S>& self) {
            if (pa->requires_grad) pa->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S* x = pa->val.data() + r * n;
                const S* g = self.grad.data() + r * n;
                const S ir = inv_rms[static_cast<size_t>(r)];
                if (pg->requires_grad)
                    for (int i = 0; i < n; ++i) pg->grad[i] += g[i] * x[i] * ir;
                if (pa->requires_grad) {
                    S dot = 0;  // mean over channels of dxhat * xhat
                    for (int i = 0; i < n; ++i) dot += g[i] * pg->val[i] * x[i] * ir;
                    dot /= n;
                    for (int i = 0; i < n; ++i)
                        pa->grad[r * n + i] += ir * (g[i] * pg->val[i] - x[i] * ir * dot);
                }
            }
        });
}

// ---- embedding -----------------------------------------------------------

// table: [vocab, d]; tokens laid out row-major with the given shape.
// Output appends d as the trailing axis. Backward is scatter-add into table.
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& tokens, Shape token_shape) {
    check(table.rank() == 2, "embedding: table must be rank 2");
    check(static_cast<std::int64_t>(tokens.size()) == numel(token_shape),
          "embedding: token count does not match shape " + shape_str(token_shape));
    const int vocab = table.dim(0);
    const int d = table.dim(1);
    for (int t : tokens)
        check(t >= 0 && t < vocab,
              "embedding: token " + std::to_string(t) + " out of vocabulary (size " +
                  std::to_string(vocab) + ")");
    Shape out_shape = token_shape;
    out_shape.push_back(d);
    std::vector<S> out(tokens.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < tokens.size(); ++i)
        std::copy_n(table.values().data() + std::int64_t(tokens[i]) * d, d, out.data() + i * d);
    auto pt = table.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {pt},
                                  [pt, tokens, d](Node<S>& self) {
                                      pt->ensure_grad();
                                      for (size_t i = 0; i < tokens.size(); ++i)
                                          for (int j = 0; j < d; ++j)
                                              pt->grad[std::int64_t(tokens[i]) * d + j] +=
                                                  self.grad[i * d + j];
                                  });
}

// ---- sequence-axis concat / slice (axis = rank - 2) ----------------------

template <typename S>
Tensor<S> concat_seq(const std::vector<Tensor<S>>& parts) {
    check(!parts.empty(), "concat_seq: empty input");
    const int rank = parts[0].rank();
    check(rank >= 2, "concat_seq: rank must be >= 2");
    const int d = parts[0].dim(rank - 1);
    std::int64_t batch = numel(parts[0].shape()) / (std::int64_t(parts[0].dim(rank - 2)) * d);
    int total = 0;
    for (const auto& p : parts) {
        check(p.rank() == rank && p.dim(rank - 1) == d &&
                  numel(p.shape()) / (std::int64_t(p.dim(rank - 2)) * d) == batch,
              "concat_seq: incompatible part shape " + shape_str(p.shape()));
        total += p.dim(rank - 2);
    }
    Shape out_shape = parts[0].shape();
    out_shape[out_shape.size() - 2] = total;
    std::vector<S> out(static_cast<size_t>(batch) * total * d);
    std::vector<int> seq_lens;
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : parts) {
        seq_lens.push_back(p.dim(rank - 2));
        parents.push_back(p.node());
    }
    for (std::int64_t t = 0; t < batch; ++t) {
        std::int64_t off = 0;
        for (size_t pi = 0; pi < parts.size(); ++pi) {
            const std::int64_t rows = seq_lens[pi];
            std::copy_n(parts[pi].values().data() + t * rows * d, rows * d,
                        out.data() + (t * total + off) * d);
            off += rows;
        }
    }
    return detail::make_result<S>(
        std::move(out_shape), std::move(out), std::move(parents),
        [seq_lens = std::move(seq_lens), batch, total, d](Node<S>& self) {
            for (std::int64_t t = 0; t < batch; ++t) {
                std::int64_t off = 0;
                for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                    auto& p = self.parents[pi];
                    const std::int64_t rows = seq_lens[pi];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (std::int64_t i = 0; i < rows * d; ++i)
                            p->grad[t * rows * d + i] += self.grad[(t * total + off) * d + i];
                    }
                    off += rows;
                }
            }
        });
}

template <typename S>
Tensor<S> slice_seq(const Tensor<S>& a, int start, int len) {
    const int rank = a.rank();
    check(rank >= 2, "slice_seq: rank must be >= 2");
    const int seq = a.dim(rank - 2);
    const int d = a.dim(rank - 1);
    check(start >= 0 && len >= 1 && start + len <= seq, "slice_seq: range out of bounds");
    const std::int64_t batch = numel(a.shape()) / (std::int64_t(seq) * d);
    Shape out_shape = a.shape();
    out_shape[out_shape.size() - 2] = len;
    std::vector<S> out(static_cast<size_t>(batch) * len * d);
    for (std::int64_t t = 0; t < batch; ++t)
        std::copy_n(a.values().data() + (t * seq + start) * d, std::int64_t(len) * d,
                    out.data() + t * len * d);
    auto pa = a.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {pa},
                                  [pa, start, len, seq, d, batch](Node<S>& self) {
                                      pa->ensure_grad();
                                      for (std::int64_t t = 0; t < batch; ++t)
                                          for (std::int64_t i = 0; i < std::int64_t(len) * d; ++i)
                                              pa->grad[(t * seq + start) * d + i] +=
                                                  self.grad[t * len * d + i];
                                  });
}

// Channel slice over the last axis (used to split attention heads).
template <typename S>
Tensor<S> slice_last(const Tensor<S>& a, int start, int len) {
    const int n = a.dim(a.rank() - 1);
    check(start >= 0 && len >= 1 && start + len <= n, "slice_last: range out of bounds");
    const std::int64_t rows = numel(a.shape()) / n;
    Shape out_shape = a.shape();
    out_shape.back() = len;
    std::vector<S> out(static_cast<size_t>(rows) * len);
    for (std::int64_t r = 0; r < rows; ++r)
        std::copy_n(a.values().data() + r * n + start, len, out.data() + r * len);
    auto pa = a.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {pa},
                                  [pa, start, len, n, rows](Node<S>& self) {
                                      pa->ensure_grad();
                                      for (std::int64_t r = 0; r < rows; ++r)
                                          for (int i = 0; i < len; ++i)
                                              pa->grad[r * n + start + i] += self.grad[r * len + i];
                                  });
}

template <typename S>
Tensor<S> concat_last(const std::vector<Tensor<S>>& parts) {
    check(!parts.empty(), "concat_last: empty input");
    const int rank = parts[0].rank();
    int total = 0;
    std::int64_t rows = numel(parts[0].shape()) / parts[0].dim(rank - 1);
    std::vector<int> widths;
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : parts) {
        check(p.rank() == rank && numel(p.shape()) / p.dim(rank - 1) == rows,
              "concat_last: incompatible part shape " + shape_str(p.shape()));
        widths.push_back(p.dim(rank - 1));
        parents.push_back(p.node());
        total += p.dim(rank - 1);
    }
    Shape out_shape = parts[0].shape();
    out_shape.back() = total;
    std::vector<S> out(static_cast<size_t>(rows) * total);
    for (std::int64_t r = 0; r < rows; ++r) {
        int off = 0;
        for (size_t pi = 0; pi < parts.size(); ++pi) {
            std::copy_n(parts[pi].values().data() + r * widths[pi], widths[pi],
                        out.data() + r * total + off);
            off += widths[pi];
        }
    }
    return detail::make_result<S>(
        std::move(out_shape), std::move(out), std::move(parents),
        [widths = std::move(widths), rows, total](Node<S>& self) {
            for (std::int64_t r = 0; r < rows; ++r) {
                int off = 0;
                for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                    auto& p = self.parents[pi];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int i = 0; i < widths[pi]; ++i)
                            p->grad[r * widths[pi] + i] += self.grad[r * total + off + i];
                    }
                    off += widths[pi];
                }
            }
        });
}

// Same data, new shape; element counts must match.
template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    check(numel(shape) == a.size(),
          "reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) + " changes element count");
    auto pa = a.node();
    std::vector<S> out = a.values();
    return detail::make_result<S>(std::move(shape), std::move(out), {pa}, [pa](Node<S>& self) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.val.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

// ---- reductions ----------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
    S total = 0;
    for (S v : a.values()) total += v;
    auto pa = a.node();
    return detail::make_result<S>(Shape{1}, std::vector<S>{total}, {pa}, [pa](Node<S>& self) {
        pa->ensure_grad();
        for (S& g : pa->grad) g += self.grad[0];
    });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
    const S inv = S(1) / static_cast<S>(a.size());
    S total = 0;
    for (S v : a.values()) total += v;
    auto pa = a.node();
    return detail::make_result<S>(Shape{1}, std::vector<S>{total * inv}, {pa},
                                  [pa, inv](Node<S>& self) {
                                      pa->ensure_grad();
                                      for (S& g : pa->grad) g += self.grad[0] * inv;
                                  });
}

// Mean per-position cross-entropy between logits [.., V] and integer targets.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets) {
    const int v = logits.dim(logits.rank() - 1);
    const std::int64_t rows = numel(logits.shape()) / v;
    check(static_cast<std::int64_t>(targets.size()) == rows,
          "cross_entropy: target count " + std::to_string(targets.size()) +
              " does not match logit rows " + std::to_string(rows));
    std::vector<S> probs(logits.values().size());
    S loss = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* x = logits.values().data() + r * v;
        S* p = probs.data() + r * v;
        S mx = *std::max_element(x, x + v);
        S sum = 0;
        for (int i = 0; i < v; ++i) {
            p[i] = std::exp(x[i] - mx);
            sum += p[i];
        }
        for (int i = 0; i < v; ++i) p[i] /= sum;
        loss -= std::log(std::max(p[targets[static_cast<size_t>(r)]], S(1e-30)));
    }
    loss /= static_cast<S>(rows);
    auto pl = logits.node();
    return detail::make_result<S>(
        Shape{1}, std::vector<S>{loss}, {pl},
        [pl, targets, v, rows, probs = std::move(probs)](Node<S>& self) {
            pl->ensure_grad();
            const S g = self.grad[0] / static_cast<S>(rows);
            for (std::int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < v; ++i)
                    pl->grad[r * v + i] +=
                        g * (probs[r * v + i] - (i == targets[static_cast<size_t>(r)] ? S(1) : S(0)));
        });
}

// ---- backward ------------------------------------------------------------

// Reverse-topological accumulation into every reachable leaf. Grads
// accumulate across calls; reset via ParamStore::zero_grad.
template <typename S>
void backward(const Tensor<S>& root) {
    check(root.size() == 1, "backward: root must be scalar, got " + shape_str(root.shape()));
    std::vector<Node<S>*> order;
    std::vector<std::pair<Node<S>*, size_t>> stack;
    std::unordered_map<Node<S>*, int> state;  // 0 unseen, 1 open, 2 done
    stack.emplace_back(root.node().get(), 0);
    state[root.node().get()] = 1;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<S>* p = node->parents[idx++].get();
            if (state[p] == 0 && p->requires_grad) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            }
        } else {
            state[node] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior grads are scratch per backward call; only leaves accumulate.
    for (Node<S>* n : order)
        if (n->backprop && !n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), S(0));
    root.node()->ensure_grad();
    root.node()->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

}  // namespace rim
