#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records matrix-valued nodes in creation order; every op appends one
// node holding its value and a closure that pushes the node's gradient into
// its parents. Tape::backward walks the nodes in reverse. Only the handful of
// ops the model needs are provided, each with a hand-written adjoint.

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsnpl::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] const Matrix& value() const;
    [[nodiscard]] Index rows() const { return value().rows(); }
    [[nodiscard]] Index cols() const { return value().cols(); }
    [[nodiscard]] double scalar() const { return value()(0, 0); }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::vector<std::size_t> parents;
        std::function<void(Tape&, const Node&)> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf.
    Var variable(Matrix value) { return push(std::move(value), true, {}, {}); }

    /// Non-differentiable leaf.
    Var constant(Matrix value) { return push(std::move(value), false, {}, {}); }

    Var push(Matrix value, bool requires_grad, std::vector<std::size_t> parents,
             std::function<void(Tape&, const Node&)> backward) {
        auto node = std::make_unique<Node>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    [[nodiscard]] const Node& node(std::size_t id) const { return *nodes_.at(id); }
    [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_.at(v.id())->requires_grad; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Adds `contribution` to the gradient of node `id` (no-op for constants).
    template <typename Derived>
    void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& contribution) {
        Node& n = *nodes_[id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = contribution;
        } else {
            n.grad += contribution;
        }
    }

    /// Seeds d(loss)/d(loss) = 1 and back-propagates. `loss` must be 1x1.
    void backward(const Var& loss) {
        if (loss.tape() != this) throw std::logic_error("backward: variable from another tape");
        Node& root = *nodes_.at(loss.id());
        if (root.value.size() != 1) throw std::logic_error("backward: loss must be a 1x1 matrix");
        root.grad = Matrix::Ones(1, 1);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = *nodes_[i];
            if (n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, n);
        }
    }

    /// Gradient of a node after backward(); zeros if it received none.
    [[nodiscard]] Matrix gradient(const Var& v) const {
        const Node& n = *nodes_.at(v.id());
        if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

inline const Matrix& Var::value() const { return tape_->node(id_).value; }

namespace detail {

inline Tape& tape_of(const Var& a) {
    assert(a.valid());
    return *a.tape();
}

inline bool any_grad(std::initializer_list<Var> vs) {
    for (const auto& v : vs)
        if (v.tape()->requires_grad(v)) return true;
    return false;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()));
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value() * b.value(), detail::any_grad({a, b}), {ia, ib}, [ia, ib](Tape& tp, const Tape::Node& n) {
        if (tp.node(ia).requires_grad) tp.accumulate(ia, n.grad * tp.node(ib).value.transpose());
        if (tp.node(ib).requires_grad) tp.accumulate(ib, tp.node(ia).value.transpose() * n.grad);
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value() + b.value(), detail::any_grad({a, b}), {ia, ib}, [ia, ib](Tape& tp, const Tape::Node& n) {
        tp.accumulate(ia, n.grad);
        tp.accumulate(ib, n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value() - b.value(), detail::any_grad({a, b}), {ia, ib}, [ia, ib](Tape& tp, const Tape::Node& n) {
        tp.accumulate(ia, n.grad);
        tp.accumulate(ib, -n.grad);
    });
}

/// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value().cwiseProduct(b.value()), detail::any_grad({a, b}), {ia, ib},
                  [ia, ib](Tape& tp, const Tape::Node& n) {
                      if (tp.node(ia).requires_grad) tp.accumulate(ia, n.grad.cwiseProduct(tp.node(ib).value));
                      if (tp.node(ib).requires_grad) tp.accumulate(ib, n.grad.cwiseProduct(tp.node(ia).value));
                  });
}

inline Var scale(const Var& a, double c) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    return t.push(a.value() * c, t.requires_grad(a), {ia},
                  [ia, c](Tape& tp, const Tape::Node& n) { tp.accumulate(ia, n.grad * c); });
}

/// Elementwise product with a constant matrix (dropout masks, fixed weights).
inline Var mul_const(const Var& a, Matrix c) {
    if (c.rows() != a.rows() || c.cols() != a.cols()) throw std::invalid_argument("mul_const: shape mismatch");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    Matrix v = a.value().cwiseProduct(c);
    return t.push(std::move(v), t.requires_grad(a), {ia}, [ia, c = std::move(c)](Tape& tp, const Tape::Node& n) {
        tp.accumulate(ia, n.grad.cwiseProduct(c));
    });
}

inline Var transpose(const Var& a) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    return t.push(a.value().transpose(), t.requires_grad(a), {ia},
                  [ia](Tape& tp, const Tape::Node& n) { tp.accumulate(ia, n.grad.transpose()); });
}

/// X (n x q) + broadcast row b (1 x q).
inline Var add_row(const Var& x, const Var& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id(), ib = b.id();
    Matrix v = x.value().rowwise() + b.value().row(0);
    return t.push(std::move(v), detail::any_grad({x, b}), {ix, ib}, [ix, ib](Tape& tp, const Tape::Node& n) {
        tp.accumulate(ix, n.grad);
        if (tp.node(ib).requires_grad) tp.accumulate(ib, n.grad.colwise().sum());
    });
}

/// Rows [start, start + count) of a.
inline Var slice_rows(const Var& a, Index start, Index count) {
    if (start < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    const Index total = a.rows();
    return t.push(a.value().middleRows(start, count), t.requires_grad(a), {ia},
                  [ia, start, count, total](Tape& tp, const Tape::Node& n) {
                      Matrix g = Matrix::Zero(total, n.grad.cols());
                      g.middleRows(start, count) = n.grad;
                      tp.accumulate(ia, g);
                  });
}

/// Column-wise concatenation of equally tall matrices.
inline Var hstack(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("hstack: no inputs");
    Tape& t = detail::tape_of(parts[0]);
    const Index rows = parts[0].rows();
    Index cols = 0;
    bool rg = false;
    std::vector<std::size_t> ids;
    std::vector<Index> widths;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("hstack: row mismatch");
        cols += p.cols();
        rg = rg || t.requires_grad(p);
        ids.push_back(p.id());
        widths.push_back(p.cols());
    }
    Matrix v(rows, cols);
    Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    return t.push(std::move(v), rg, ids, [ids, widths](Tape& tp, const Tape::Node& n) {
        Index o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            tp.accumulate(ids[k], n.grad.middleCols(o, widths[k]));
            o += widths[k];
        }
    });
}

/// Row-wise concatenation of equally wide matrices.
inline Var vstack(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("vstack: no inputs");
    Tape& t = detail::tape_of(parts[0]);
    const Index cols = parts[0].cols();
    Index rows = 0;
    bool rg = false;
    std::vector<std::size_t> ids;
    std::vector<Index> heights;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("vstack: column mismatch");
        rows += p.rows();
        rg = rg || t.requires_grad(p);
        ids.push_back(p.id());
        heights.push_back(p.rows());
    }
    Matrix v(rows, cols);
    Index off = 0;
    for (const auto& p : parts) {
        v.middleRows(off, p.rows()) = p.value();
        off += p.rows();
    }
    return t.push(std::move(v), rg, ids, [ids, heights](Tape& tp, const Tape::Node& n) {
        Index o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            tp.accumulate(ids[k], n.grad.middleRows(o, heights[k]));
            o += heights[k];
        }
    });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline Var leaky_relu(const Var& a, double slope = 0.2) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    Matrix v = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    return t.push(std::move(v), t.requires_grad(a), {ia}, [ia, slope](Tape& tp, const Tape::Node& n) {
        const Matrix& x = tp.node(ia).value;
        Matrix d = x.unaryExpr([slope](double z) { return z > 0.0 ? 1.0 : slope; });
        tp.accumulate(ia, n.grad.cwiseProduct(d));
    });
}

/// ELU with unit scale.
inline Var elu(const Var& a) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    Matrix v = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
    return t.push(std::move(v), t.requires_grad(a), {ia}, [ia](Tape& tp, const Tape::Node& n) {
        const Matrix& x = tp.node(ia).value;
        Matrix d = x.unaryExpr([](double z) { return z > 0.0 ? 1.0 : std::exp(z); });
        tp.accumulate(ia, n.grad.cwiseProduct(d));
    });
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    Matrix v = a.value().unaryExpr([](double x) { return sigmoid(x); });
    return t.push(std::move(v), t.requires_grad(a), {ia}, [ia](Tape& tp, const Tape::Node& n) {
        Matrix d = n.value.unaryExpr([](double s) { return s * (1.0 - s); });
        tp.accumulate(ia, n.grad.cwiseProduct(d));
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& a) {
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    const Index r = a.rows(), c = a.cols();
    return t.push(Matrix::Constant(1, 1, a.value().sum()), t.requires_grad(a), {ia},
                  [ia, r, c](Tape& tp, const Tape::Node& n) { tp.accumulate(ia, Matrix::Constant(r, c, n.grad(0, 0))); });
}

/// 1 x q mean over rows.
inline Var mean_rows(const Var& a) {
    if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
    Tape& t = detail::tape_of(a);
    const std::size_t ia = a.id();
    const Index r = a.rows();
    return t.push(a.value().colwise().mean(), t.requires_grad(a), {ia}, [ia, r](Tape& tp, const Tape::Node& n) {
        tp.accumulate(ia, n.grad.replicate(r, 1) / static_cast<double>(r));
    });
}

/// Euclidean norm of all entries of all inputs, as a 1x1 node. Gradient at
/// the origin is taken as zero.
inline Var l2_norm(std::span<const Var> parts, bool squared = false) {
    if (parts.empty()) throw std::invalid_argument("l2_norm: no inputs");
    Tape& t = detail::tape_of(parts[0]);
    double ss = 0.0;
    bool rg = false;
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        ss += p.value().squaredNorm();
        rg = rg || t.requires_grad(p);
        ids.push_back(p.id());
    }
    const double norm = std::sqrt(ss);
    const double out = squared ? ss : norm;
    return t.push(Matrix::Constant(1, 1, out), rg, ids, [ids, norm, squared](Tape& tp, const Tape::Node& n) {
        const double g = n.grad(0, 0);
        double factor = 0.0;
        if (squared) {
            factor = 2.0 * g;
        } else if (norm > 0.0) {
            factor = g / norm;
        }
        for (auto id : ids) tp.accumulate(id, tp.node(id).value * factor);
    });
}

// ---------------------------------------------------------------------------
// Indexing / graph ops
// ---------------------------------------------------------------------------

/// out.row(k) = x.row(idx[k]).
inline Var gather_rows(const Var& x, std::vector<Index> idx) {
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id();
    const Matrix& xv = x.value();
    Matrix v(static_cast<Index>(idx.size()), xv.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
        v.row(static_cast<Index>(k)) = xv.row(idx[k]);
    }
    const Index rows = xv.rows();
    return t.push(std::move(v), t.requires_grad(x), {ix}, [ix, rows, idx = std::move(idx)](Tape& tp, const Tape::Node& n) {
        Matrix g = Matrix::Zero(rows, n.grad.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += n.grad.row(static_cast<Index>(k));
        tp.accumulate(ix, g);
    });
}

/// out (n x q) with out.row(idx[k]) += x.row(k).
inline Var scatter_add_rows(const Var& x, std::vector<Index> idx, Index n_out) {
    if (static_cast<Index>(idx.size()) != x.rows()) throw std::invalid_argument("scatter_add_rows: index count mismatch");
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id();
    const Matrix& xv = x.value();
    Matrix v = Matrix::Zero(n_out, xv.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= n_out) throw std::out_of_range("scatter_add_rows: index out of range");
        v.row(idx[k]) += xv.row(static_cast<Index>(k));
    }
    return t.push(std::move(v), t.requires_grad(x), {ix}, [ix, idx = std::move(idx)](Tape& tp, const Tape::Node& n) {
        Matrix g(static_cast<Index>(idx.size()), n.grad.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) g.row(static_cast<Index>(k)) = n.grad.row(idx[k]);
        tp.accumulate(ix, g);
    });
}

/// out.row(k) = w(k) * x.row(k), with w an (n x 1) column.
inline Var scale_rows(const Var& x, const Var& w) {
    if (w.cols() != 1 || w.rows() != x.rows()) throw std::invalid_argument("scale_rows: weight shape mismatch");
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id(), iw = w.id();
    Matrix v = x.value().array().colwise() * w.value().col(0).array();
    return t.push(std::move(v), detail::any_grad({x, w}), {ix, iw}, [ix, iw](Tape& tp, const Tape::Node& n) {
        if (tp.node(ix).requires_grad) {
            Matrix gx = n.grad.array().colwise() * tp.node(iw).value.col(0).array();
            tp.accumulate(ix, gx);
        }
        if (tp.node(iw).requires_grad) {
            Matrix gw = n.grad.cwiseProduct(tp.node(ix).value).rowwise().sum();
            tp.accumulate(iw, gw);
        }
    });
}

/// (m x 1) column with out(k) = x(rows[k], cols[k]).
inline Var gather_elements(const Var& x, std::vector<Index> rows, std::vector<Index> cols) {
    if (rows.size() != cols.size()) throw std::invalid_argument("gather_elements: index size mismatch");
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id();
    const Matrix& xv = x.value();
    Matrix v(static_cast<Index>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) v(static_cast<Index>(k), 0) = xv(rows[k], cols[k]);
    const Index r = xv.rows(), c = xv.cols();
    return t.push(std::move(v), t.requires_grad(x), {ix},
                  [ix, r, c, rows = std::move(rows), cols = std::move(cols)](Tape& tp, const Tape::Node& n) {
                      Matrix g = Matrix::Zero(r, c);
                      for (std::size_t k = 0; k < rows.size(); ++k) g(rows[k], cols[k]) += n.grad(static_cast<Index>(k), 0);
                      tp.accumulate(ix, g);
                  });
}

/// Inverse of gather_elements: (r x c) matrix with out(rows[k], cols[k]) += x(k).
inline Var scatter_elements(const Var& x, std::vector<Index> rows, std::vector<Index> cols, Index r, Index c) {
    if (x.cols() != 1 || static_cast<Index>(rows.size()) != x.rows() || rows.size() != cols.size())
        throw std::invalid_argument("scatter_elements: shape mismatch");
    Tape& t = detail::tape_of(x);
    const std::size_t ix = x.id();
    Matrix v = Matrix::Zero(r, c);
    for (std::size_t k = 0; k < rows.size(); ++k) v(rows[k], cols[k]) += x.value()(static_cast<Index>(k), 0);
    return t.push(std::move(v), t.requires_grad(x), {ix},
                  [ix, rows = std::move(rows), cols = std::move(cols)](Tape& tp, const Tape::Node& n) {
                      Matrix g(static_cast<Index>(rows.size()), 1);
                      for (std::size_t k = 0; k < rows.size(); ++k) g(static_cast<Index>(k), 0) = n.grad(rows[k], cols[k]);
                      tp.accumulate(ix, g);
                  });
}

/// Softmax of an (m x 1) score column within groups: entries sharing
/// segment[k] are normalized together. Every segment id must be < n_segments.
inline Var segment_softmax(const Var& scores, std::vector<Index> segment, Index n_segments) {
    if (scores.cols() != 1 || static_cast<Index>(segment.size()) != scores.rows())
        throw std::invalid_argument("segment_softmax: shape mismatch");
    Tape& t = detail::tape_of(scores);
    const std::size_t is = scores.id();
    const auto& s = scores.value();
    const std::size_t m = segment.size();
    std::vector<double> seg_max(static_cast<std::size_t>(n_segments), -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < m; ++k) {
        auto& mx = seg_max[static_cast<std::size_t>(segment[k])];
        mx = std::max(mx, s(static_cast<Index>(k), 0));
    }
    std::vector<double> seg_sum(static_cast<std::size_t>(n_segments), 0.0);
    Matrix v(static_cast<Index>(m), 1);
    for (std::size_t k = 0; k < m; ++k) {
        const auto sg = static_cast<std::size_t>(segment[k]);
        const double e = std::exp(s(static_cast<Index>(k), 0) - seg_max[sg]);
        v(static_cast<Index>(k), 0) = e;
        seg_sum[sg] += e;
    }
    for (std::size_t k = 0; k < m; ++k) v(static_cast<Index>(k), 0) /= seg_sum[static_cast<std::size_t>(segment[k])];
    return t.push(std::move(v), t.requires_grad(scores), {is},
                  [is, n_segments, segment = std::move(segment)](Tape& tp, const Tape::Node& n) {
                      // d s_k = p_k (g_k - sum_{j in seg} p_j g_j)
                      std::vector<double> dot(static_cast<std::size_t>(n_segments), 0.0);
                      for (std::size_t k = 0; k < segment.size(); ++k)
                          dot[static_cast<std::size_t>(segment[k])] +=
                              n.value(static_cast<Index>(k), 0) * n.grad(static_cast<Index>(k), 0);
                      Matrix g(static_cast<Index>(segment.size()), 1);
                      for (std::size_t k = 0; k < segment.size(); ++k) {
                          const auto i = static_cast<Index>(k);
                          g(i, 0) = n.value(i, 0) * (n.grad(i, 0) - dot[static_cast<std::size_t>(segment[k])]);
                      }
                      tp.accumulate(is, g);
                  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean negative log-likelihood of softmax(logits.row(r)) at labels[k] over
/// the selected rows.
inline Var softmax_cross_entropy(const Var& logits, std::vector<Index> rows, std::vector<int> labels) {
    if (rows.size() != labels.size()) throw std::invalid_argument("softmax_cross_entropy: size mismatch");
    if (rows.empty()) throw std::invalid_argument("softmax_cross_entropy: no rows selected");
    Tape& t = detail::tape_of(logits);
    const std::size_t il = logits.id();
    const Matrix& z = logits.value();
    const auto inv_n = 1.0 / static_cast<double>(rows.size());
    Matrix probs(static_cast<Index>(rows.size()), z.cols());
    double loss = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (labels[k] < 0 || labels[k] >= z.cols()) throw std::invalid_argument("softmax_cross_entropy: label out of range");
        const auto row = z.row(rows[k]);
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        loss += lse - row(labels[k]);
        probs.row(static_cast<Index>(k)) = (row.array() - lse).exp();
    }
    loss *= inv_n;
    const Index r = z.rows(), c = z.cols();
    return t.push(Matrix::Constant(1, 1, loss), t.requires_grad(logits), {il},
                  [il, r, c, inv_n, rows = std::move(rows), labels = std::move(labels),
                   probs = std::move(probs)](Tape& tp, const Tape::Node& n) {
                      Matrix g = Matrix::Zero(r, c);
                      const double up = n.grad(0, 0) * inv_n;
                      for (std::size_t k = 0; k < rows.size(); ++k) {
                          g.row(rows[k]) += up * probs.row(static_cast<Index>(k));
                          g(rows[k], labels[k]) -= up;
                      }
                      tp.accumulate(il, g);
                  });
}

/// Binary cross-entropy on logits with probabilities clamped to
/// [eps, 1 - eps]. Returns the SUM (not mean) over entries; callers divide.
/// Entries whose probability hits the clamp get zero gradient.
inline Var bce_sum(const Var& logits, std::vector<int> targets, double eps = 1e-7) {
    if (logits.cols() != 1 || static_cast<Index>(targets.size()) != logits.rows())
        throw std::invalid_argument("bce_sum: shape mismatch");
    Tape& t = detail::tape_of(logits);
    const std::size_t il = logits.id();
    const Matrix& z = logits.value();
    Matrix dz(z.rows(), 1);
    double loss = 0.0;
    for (Index k = 0; k < z.rows(); ++k) {
        const double p_raw = sigmoid(z(k, 0));
        const double p = std::clamp(p_raw, eps, 1.0 - eps);
        const bool clamped = p != p_raw;
        if (targets[static_cast<std::size_t>(k)] == 1) {
            loss -= std::log(p);
            dz(k, 0) = clamped ? 0.0 : -(1.0 - p);
        } else {
            loss -= std::log(1.0 - p);
            dz(k, 0) = clamped ? 0.0 : p;
        }
    }
    return t.push(Matrix::Constant(1, 1, loss), t.requires_grad(logits), {il},
                  [il, dz = std::move(dz)](Tape& tp, const Tape::Node& n) { tp.accumulate(il, dz * n.grad(0, 0)); });
}

/// Weighted sum of 1x1 nodes.
inline Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
    if (terms.size() != weights.size() || terms.empty()) throw std::invalid_argument("weighted_sum: size mismatch");
    Tape& t = detail::tape_of(terms[0]);
    double v = 0.0;
    bool rg = false;
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        v += weights[k] * terms[k].scalar();
        rg = rg || t.requires_grad(terms[k]);
        ids.push_back(terms[k].id());
    }
    std::vector<double> w(weights.begin(), weights.end());
    return t.push(Matrix::Constant(1, 1, v), rg, ids, [ids, w](Tape& tp, const Tape::Node& n) {
        for (std::size_t k = 0; k < ids.size(); ++k) tp.accumulate(ids[k], n.grad * w[k]);
    });
}

} // namespace hsnpl::ad
