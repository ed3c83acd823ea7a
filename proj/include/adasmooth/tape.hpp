// Minimal reverse-mode tape over vector-valued nodes. Forward passes
// append nodes; backward() walks the tape in reverse and accumulates
// adjoints. Scalars are length-1 vectors. The op set is exactly what the
// classifiers, attacks and mixer training need; nothing speculative.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "adasmooth/core.hpp"

namespace adasmooth {

enum class Op {
    Leaf,        // constant or parameter; adjoint readable after backward
    Affine,      // y = W x + b          (in: W, b, x)
    Relu,        // y = max(x, 0)
    TanhAct,     // y = tanh(x)
    Sigmoid,     // y = 1/(1+exp(-x)), output clamped to (0,1) open
    Softmax,     // y = softmax(x), max-stabilized
    LogFloor,    // y = log(max(x, floor))
    ScaleShift,  // y = a*x + b elementwise, a/b const scalars
    AddConst,    // y = x + c, c const vector
    Add,         // y = u + v
    AxpyW,       // y = u + w.*v, w const vector
    SmoMix,      // y_i = (u_i + w_i v_i) / (1 + w_i), w const vector
    ConvexMix,   // y = (1-a)*u + a*v, a scalar node
    Concat,      // y = [x0; x1; ...]
    Mean,        // y = mean(x0, x1, ...), elementwise
    CeLogits,    // scalar: logsumexp(z) - z_y
    CeSoft,      // scalar: logsumexp(z) - p_ref . z, p_ref const probabilities
    LogitMargin, // scalar: max_{i != y} z_i - z_y
    BceConst,    // scalar: -(t log a + (1-t) log(1-a)), a scalar node, t const
    AddS,        // scalar: u + v
    MulS,        // scalar: u * v
    ScaleS,      // scalar: c * u
};

class Tape {
public:
    struct Node {
        Op op;
        std::array<int, 3> in{{-1, -1, -1}};
        std::vector<int> in_many;     // Concat / Mean only
        std::size_t rows = 0, cols = 1;  // cols > 1 only for matrix leaves
        int cls = -1;                 // CeLogits / LogitMargin label
        double c0 = 0, c1 = 0;        // op constants
        std::vector<double> aux;      // const vector / cached forward data
        RealVector val, adj;
    };

    int size() const { return static_cast<int>(nodes_.size()); }
    void clear() { nodes_.clear(); }

    const RealVector& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    const RealVector& adj(int id) const { return nodes_[static_cast<std::size_t>(id)].adj; }
    double scalar(int id) const { return nodes_[static_cast<std::size_t>(id)].val[0]; }

    int leaf(const RealVector& v) {
        Node n;
        n.op = Op::Leaf;
        n.rows = v.size();
        n.val = v;
        return push(std::move(n));
    }
    int leaf_matrix(const RealMatrix& m) {
        Node n;
        n.op = Op::Leaf;
        n.rows = m.rows;
        n.cols = m.cols;
        n.val = m.data;
        return push(std::move(n));
    }

    int affine(int w, int b, int x) {
        const Node& W = at(w);
        const Node& X = at(x);
        require_shape(W.cols == X.rows, "affine: weight/input dimension mismatch");
        require_shape(at(b).rows == W.rows, "affine: bias dimension mismatch");
        Node n;
        n.op = Op::Affine;
        n.in = {w, b, x};
        n.rows = W.rows;
        n.val.assign(W.rows, 0.0);
        for (std::size_t i = 0; i < W.rows; ++i) {
            double s = at(b).val[i];
            const double* wrow = &W.val[i * W.cols];
            for (std::size_t j = 0; j < W.cols; ++j) s += wrow[j] * X.val[j];
            n.val[i] = s;
        }
        return push(std::move(n));
    }

    int relu(int x) { return unary(Op::Relu, x, [](double v) { return v > 0 ? v : 0.0; }); }
    int tanh_act(int x) { return unary(Op::TanhAct, x, [](double v) { return std::tanh(v); }); }
    int sigmoid(int x) {
        return unary(Op::Sigmoid, x, [](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            return std::min(1.0 - 1e-12, std::max(1e-12, s));
        });
    }

    int softmax(int x) {
        const Node& X = at(x);
        Node n;
        n.op = Op::Softmax;
        n.in[0] = x;
        n.rows = X.rows;
        n.val = softmax_stable(X.val);
        return push(std::move(n));
    }

    int log_floor(int x, double floor_val = 1e-300) {
        const Node& X = at(x);
        Node n;
        n.op = Op::LogFloor;
        n.in[0] = x;
        n.rows = X.rows;
        n.c0 = floor_val;
        n.val.resize(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) n.val[i] = std::log(std::max(X.val[i], floor_val));
        return push(std::move(n));
    }

    int scale_shift(int x, double a, double b = 0.0) {
        const Node& X = at(x);
        Node n;
        n.op = Op::ScaleShift;
        n.in[0] = x;
        n.rows = X.rows;
        n.c0 = a;
        n.c1 = b;
        n.val.resize(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) n.val[i] = a * X.val[i] + b;
        return push(std::move(n));
    }

    int add_const(int x, const RealVector& c) {
        const Node& X = at(x);
        require_shape(X.rows == c.size(), "add_const: size mismatch");
        Node n;
        n.op = Op::AddConst;
        n.in[0] = x;
        n.rows = X.rows;
        n.aux = c;
        n.val.resize(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) n.val[i] = X.val[i] + c[i];
        return push(std::move(n));
    }

    int add(int u, int v) {
        require_shape(at(u).rows == at(v).rows, "add: size mismatch");
        Node n;
        n.op = Op::Add;
        n.in = {u, v, -1};
        n.rows = at(u).rows;
        n.val.resize(n.rows);
        for (std::size_t i = 0; i < n.rows; ++i) n.val[i] = at(u).val[i] + at(v).val[i];
        return push(std::move(n));
    }

    int axpy_w(int u, int v, const RealVector& w) {
        require_shape(at(u).rows == at(v).rows && at(u).rows == w.size(), "axpy_w: size mismatch");
        Node n;
        n.op = Op::AxpyW;
        n.in = {u, v, -1};
        n.rows = at(u).rows;
        n.aux = w;
        n.val.resize(n.rows);
        for (std::size_t i = 0; i < n.rows; ++i) n.val[i] = at(u).val[i] + w[i] * at(v).val[i];
        return push(std::move(n));
    }

    int smo_mix(int u, int v, const RealVector& w) {
        require_shape(at(u).rows == at(v).rows && at(u).rows == w.size(), "smo_mix: size mismatch");
        Node n;
        n.op = Op::SmoMix;
        n.in = {u, v, -1};
        n.rows = at(u).rows;
        n.aux = w;
        n.val.resize(n.rows);
        for (std::size_t i = 0; i < n.rows; ++i)
            n.val[i] = (at(u).val[i] + w[i] * at(v).val[i]) / (1.0 + w[i]);
        return push(std::move(n));
    }

    int convex_mix(int a, int u, int v) {
        require_shape(at(a).rows == 1, "convex_mix: alpha must be scalar");
        require_shape(at(u).rows == at(v).rows, "convex_mix: size mismatch");
        double al = at(a).val[0];
        Node n;
        n.op = Op::ConvexMix;
        n.in = {a, u, v};
        n.rows = at(u).rows;
        n.val.resize(n.rows);
        for (std::size_t i = 0; i < n.rows; ++i)
            n.val[i] = (1.0 - al) * at(u).val[i] + al * at(v).val[i];
        return push(std::move(n));
    }

    int concat(const std::vector<int>& xs) {
        Node n;
        n.op = Op::Concat;
        n.in_many = xs;
        std::size_t total = 0;
        for (int x : xs) total += at(x).rows;
        n.rows = total;
        n.val.reserve(total);
        for (int x : xs) n.val.insert(n.val.end(), at(x).val.begin(), at(x).val.end());
        return push(std::move(n));
    }

    int mean_of(const std::vector<int>& xs) {
        require(!xs.empty(), "mean_of: empty input list");
        std::size_t r = at(xs[0]).rows;
        Node n;
        n.op = Op::Mean;
        n.in_many = xs;
        n.rows = r;
        n.val.assign(r, 0.0);
        for (int x : xs) {
            require_shape(at(x).rows == r, "mean_of: size mismatch");
            for (std::size_t i = 0; i < r; ++i) n.val[i] += at(x).val[i];
        }
        for (std::size_t i = 0; i < r; ++i) n.val[i] /= static_cast<double>(xs.size());
        return push(std::move(n));
    }

    int ce_logits(int z, int y) {
        const Node& Z = at(z);
        require(y >= 0 && static_cast<std::size_t>(y) < Z.rows, "ce_logits: class out of range");
        Node n;
        n.op = Op::CeLogits;
        n.in[0] = z;
        n.rows = 1;
        n.cls = y;
        n.aux = softmax_stable(Z.val);  // cached for backward
        double m = *std::max_element(Z.val.begin(), Z.val.end());
        double lse = 0;
        for (double v : Z.val) lse += std::exp(v - m);
        n.val = {m + std::log(lse) - Z.val[static_cast<std::size_t>(y)]};
        return push(std::move(n));
    }

    /// Soft-label cross entropy against constant reference probabilities;
    /// equals KL(p_ref || softmax(z)) up to an additive constant.
    int ce_soft(int z, const RealVector& p_ref) {
        const Node& Z = at(z);
        require_shape(Z.rows == p_ref.size(), "ce_soft: size mismatch");
        Node n;
        n.op = Op::CeSoft;
        n.in[0] = z;
        n.rows = 1;
        n.aux = softmax_stable(Z.val);
        n.aux.insert(n.aux.end(), p_ref.begin(), p_ref.end());
        double m = *std::max_element(Z.val.begin(), Z.val.end());
        double lse = 0, dot = 0;
        for (std::size_t i = 0; i < Z.rows; ++i) {
            lse += std::exp(Z.val[i] - m);
            dot += p_ref[i] * Z.val[i];
        }
        n.val = {m + std::log(lse) - dot};
        return push(std::move(n));
    }

    int logit_margin(int z, int y) {
        const Node& Z = at(z);
        require(Z.rows >= 2, "logit_margin: need >= 2 classes");
        require(y >= 0 && static_cast<std::size_t>(y) < Z.rows, "logit_margin: class out of range");
        int best = -1;
        double bv = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < Z.rows; ++i)
            if (static_cast<int>(i) != y && Z.val[i] > bv) {
                bv = Z.val[i];
                best = static_cast<int>(i);
            }
        Node n;
        n.op = Op::LogitMargin;
        n.in[0] = z;
        n.rows = 1;
        n.cls = y;
        n.c0 = best;  // cached argmax over i != y
        n.val = {bv - Z.val[static_cast<std::size_t>(y)]};
        return push(std::move(n));
    }

    int bce_const(int a, double target) {
        require_shape(at(a).rows == 1, "bce_const: probability must be scalar");
        double p = std::min(1.0 - 1e-12, std::max(1e-12, at(a).val[0]));
        Node n;
        n.op = Op::BceConst;
        n.in[0] = a;
        n.rows = 1;
        n.c0 = target;
        n.c1 = p;  // clamped prob cached for backward
        n.val = {-(target * std::log(p) + (1.0 - target) * std::log(1.0 - p))};
        return push(std::move(n));
    }

    int add_s(int u, int v) { return binary_scalar(Op::AddS, u, v, at(u).val[0] + at(v).val[0]); }
    int mul_s(int u, int v) { return binary_scalar(Op::MulS, u, v, at(u).val[0] * at(v).val[0]); }
    int scale_s(int u, double c) {
        Node n;
        n.op = Op::ScaleS;
        n.in[0] = u;
        n.rows = 1;
        n.c0 = c;
        n.val = {c * at(u).val[0]};
        return push(std::move(n));
    }

    void zero_adjoints() {
        for (Node& n : nodes_) std::fill(n.adj.begin(), n.adj.end(), 0.0);
    }

    /// Backward from a scalar root with seed 1.
    void backward(int root) {
        require_shape(at(root).rows == 1, "backward: root must be scalar");
        backward_seed(root, {1.0});
    }

    /// Backward with an explicit seed vector on an arbitrary node.
    void backward_seed(int root, const RealVector& seed) {
        require_shape(at(root).rows == seed.size(), "backward_seed: seed size mismatch");
        for (Node& n : nodes_)
            if (n.adj.size() != n.val.size()) n.adj.assign(n.val.size(), 0.0);
        Node& r = nodes_[static_cast<std::size_t>(root)];
        for (std::size_t i = 0; i < seed.size(); ++i) r.adj[i] += seed[i];
        for (int id = root; id >= 0; --id) step_backward(id);
    }

private:
    std::vector<Node> nodes_;

    Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    int push(Node&& n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    template <typename F>
    int unary(Op op, int x, F f) {
        const Node& X = at(x);
        Node n;
        n.op = op;
        n.in[0] = x;
        n.rows = X.rows;
        n.val.resize(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) n.val[i] = f(X.val[i]);
        return push(std::move(n));
    }

    int binary_scalar(Op op, int u, int v, double value) {
        require_shape(at(u).rows == 1 && at(v).rows == 1, "scalar op: inputs must be scalar");
        Node n;
        n.op = op;
        n.in = {u, v, -1};
        n.rows = 1;
        n.val = {value};
        return push(std::move(n));
    }

    static RealVector softmax_stable(const RealVector& z) {
        double m = *std::max_element(z.begin(), z.end());
        RealVector p(z.size());
        double s = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            p[i] = std::exp(z[i] - m);
            s += p[i];
        }
        for (double& v : p) v /= s;
        return p;
    }

    void step_backward(int id) {
        Node& n = at(id);
        bool any = false;
        for (double a : n.adj)
            if (a != 0.0) {
                any = true;
                break;
            }
        if (!any) return;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Affine: {
                Node& W = at(n.in[0]);
                Node& B = at(n.in[1]);
                Node& X = at(n.in[2]);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    double d = n.adj[i];
                    if (d == 0.0) continue;
                    B.adj[i] += d;
                    double* wadj = &W.adj[i * W.cols];
                    const double* wrow = &W.val[i * W.cols];
                    for (std::size_t j = 0; j < W.cols; ++j) {
                        wadj[j] += d * X.val[j];
                        X.adj[j] += d * wrow[j];
                    }
                }
                break;
            }
            case Op::Relu: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i)
                    if (X.val[i] > 0) X.adj[i] += n.adj[i];
                break;
            }
            case Op::TanhAct: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i)
                    X.adj[i] += n.adj[i] * (1.0 - n.val[i] * n.val[i]);
                break;
            }
            case Op::Sigmoid: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i)
                    X.adj[i] += n.adj[i] * n.val[i] * (1.0 - n.val[i]);
                break;
            }
            case Op::Softmax: {
                Node& X = at(n.in[0]);
                double dot = 0;
                for (std::size_t i = 0; i < n.rows; ++i) dot += n.adj[i] * n.val[i];
                for (std::size_t i = 0; i < n.rows; ++i)
                    X.adj[i] += n.val[i] * (n.adj[i] - dot);
                break;
            }
            case Op::LogFloor: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i)
                    if (X.val[i] >= n.c0) X.adj[i] += n.adj[i] / X.val[i];
                break;
            }
            case Op::ScaleShift: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i) X.adj[i] += n.c0 * n.adj[i];
                break;
            }
            case Op::AddConst: {
                Node& X = at(n.in[0]);
                for (std::size_t i = 0; i < n.rows; ++i) X.adj[i] += n.adj[i];
                break;
            }
            case Op::Add: {
                Node& U = at(n.in[0]);
                Node& V = at(n.in[1]);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    U.adj[i] += n.adj[i];
                    V.adj[i] += n.adj[i];
                }
                break;
            }
            case Op::AxpyW: {
                Node& U = at(n.in[0]);
                Node& V = at(n.in[1]);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    U.adj[i] += n.adj[i];
                    V.adj[i] += n.aux[i] * n.adj[i];
                }
                break;
            }
            case Op::SmoMix: {
                Node& U = at(n.in[0]);
                Node& V = at(n.in[1]);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    double denom = 1.0 + n.aux[i];
                    U.adj[i] += n.adj[i] / denom;
                    V.adj[i] += n.adj[i] * n.aux[i] / denom;
                }
                break;
            }
            case Op::ConvexMix: {
                Node& A = at(n.in[0]);
                Node& U = at(n.in[1]);
                Node& V = at(n.in[2]);
                double al = A.val[0];
                double da = 0;
                for (std::size_t i = 0; i < n.rows; ++i) {
                    U.adj[i] += (1.0 - al) * n.adj[i];
                    V.adj[i] += al * n.adj[i];
                    da += n.adj[i] * (V.val[i] - U.val[i]);
                }
                A.adj[0] += da;
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (int x : n.in_many) {
                    Node& X = at(x);
                    for (std::size_t i = 0; i < X.rows; ++i) X.adj[i] += n.adj[off + i];
                    off += X.rows;
                }
                break;
            }
            case Op::Mean: {
                double inv = 1.0 / static_cast<double>(n.in_many.size());
                for (int x : n.in_many) {
                    Node& X = at(x);
                    for (std::size_t i = 0; i < n.rows; ++i) X.adj[i] += inv * n.adj[i];
                }
                break;
            }
            case Op::CeLogits: {
                Node& Z = at(n.in[0]);
                double d = n.adj[0];
                for (std::size_t i = 0; i < Z.rows; ++i) {
                    double g = n.aux[i] - (static_cast<int>(i) == n.cls ? 1.0 : 0.0);
                    Z.adj[i] += d * g;
                }
                break;
            }
            case Op::CeSoft: {
                Node& Z = at(n.in[0]);
                double d = n.adj[0];
                for (std::size_t i = 0; i < Z.rows; ++i)
                    Z.adj[i] += d * (n.aux[i] - n.aux[Z.rows + i]);
                break;
            }
            case Op::LogitMargin: {
                Node& Z = at(n.in[0]);
                Z.adj[static_cast<std::size_t>(n.c0)] += n.adj[0];
                Z.adj[static_cast<std::size_t>(n.cls)] -= n.adj[0];
                break;
            }
            case Op::BceConst: {
                Node& A = at(n.in[0]);
                double p = n.c1, t = n.c0;
                A.adj[0] += n.adj[0] * (p - t) / (p * (1.0 - p));
                break;
            }
            case Op::AddS: {
                at(n.in[0]).adj[0] += n.adj[0];
                at(n.in[1]).adj[0] += n.adj[0];
                break;
            }
            case Op::MulS: {
                at(n.in[0]).adj[0] += n.adj[0] * at(n.in[1]).val[0];
                at(n.in[1]).adj[0] += n.adj[0] * at(n.in[0]).val[0];
                break;
            }
            case Op::ScaleS: {
                at(n.in[0]).adj[0] += n.c0 * n.adj[0];
                break;
            }
        }
    }
};

}  // namespace adasmooth
