// Feed-forward classifier: affine layers with ReLU/tanh activations,
// plain and tape-backed forward passes, loss gradients with respect to
// inputs and parameters, and a bit-exact text serialization format.
#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "adasmooth/core.hpp"
#include "adasmooth/tape.hpp"

namespace adasmooth {

enum class Activation { None, Relu, Tanh };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "none";
}
inline Activation activation_from_name(const std::string& s) {
    if (s == "none") return Activation::None;
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw FormatError("unknown activation kind: " + s);
}

/// Numerically stabilized softmax; output entries sum to 1 within 1e-9.
inline RealVector softmax(const RealVector& logits) {
    require_finite(logits, "softmax input");
    double m = *std::max_element(logits.begin(), logits.end());
    RealVector p(logits.size());
    double s = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

inline bool is_prob_vector(const RealVector& p, double tol = 1e-9) {
    double s = 0;
    for (double v : p) {
        if (v < 0.0 || v > 1.0 || !std::isfinite(v)) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= tol;
}

struct Layer {
    RealMatrix w;   // out x in
    RealVector b;   // out
    Activation act = Activation::None;
    bool capture = false;  // expose post-activation values

    std::size_t in_dim() const { return w.cols; }
    std::size_t out_dim() const { return w.rows; }
};

/// Handles into a net's subgraph on a tape.
struct NetGraph {
    int input = -1;
    int logits = -1;
    std::vector<int> captured;    // capture-flagged post-activation nodes
    std::vector<int> weight_ids;  // per layer
    std::vector<int> bias_ids;
};

class Net {
public:
    std::vector<Layer> layers;

    Net() = default;

    /// Build with fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static Net make_mlp(const std::vector<std::size_t>& dims, Activation hidden_act,
                        std::uint64_t seed) {
        require(dims.size() >= 2, "make_mlp: need at least input and output dims");
        Net net;
        Rng rng = make_rng(derive_seed(seed, "net-init"));
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            Layer layer;
            layer.w = RealMatrix(dims[l + 1], dims[l]);
            layer.b.assign(dims[l + 1], 0.0);
            double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (double& v : layer.w.data) v = uniform(rng, -bound, bound);
            for (double& v : layer.b) v = uniform(rng, -bound, bound);
            bool last = (l + 2 == dims.size());
            layer.act = last ? Activation::None : hidden_act;
            layer.capture = !last;  // hidden activations feed the mixing network
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }

    void check_chain() const {
        require(!layers.empty(), "net has no layers");
        for (std::size_t l = 0; l + 1 < layers.size(); ++l)
            require_shape(layers[l].out_dim() == layers[l + 1].in_dim(),
                          "net: consecutive layer dimensions do not chain");
    }

    /// Plain forward; optionally collects capture-flagged activations.
    RealVector forward(const RealVector& x, std::vector<RealVector>* captured = nullptr) const {
        require_shape(x.size() == input_dim(), "forward: input dimension mismatch");
        RealVector cur = x;
        if (captured) captured->clear();
        for (const Layer& layer : layers) {
            RealVector next(layer.out_dim());
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                double s = layer.b[i];
                const double* wrow = &layer.w.data[i * layer.w.cols];
                for (std::size_t j = 0; j < layer.w.cols; ++j) s += wrow[j] * cur[j];
                next[i] = s;
            }
            switch (layer.act) {
                case Activation::Relu:
                    for (double& v : next)
                        if (v < 0) v = 0;
                    break;
                case Activation::Tanh:
                    for (double& v : next) v = std::tanh(v);
                    break;
                case Activation::None:
                    break;
            }
            if (captured && layer.capture) captured->push_back(next);
            cur = std::move(next);
        }
        return cur;
    }

    RealVector probs(const RealVector& x) const { return softmax(forward(x)); }

    /// Append this net's computation to a tape, starting from an existing
    /// input node. Parameters become leaves (ids returned for training).
    NetGraph build(Tape& tape, int input_id) const {
        check_chain();
        NetGraph g;
        g.input = input_id;
        int cur = input_id;
        for (const Layer& layer : layers) {
            int w = tape.leaf_matrix(layer.w);
            int b = tape.leaf(layer.b);
            g.weight_ids.push_back(w);
            g.bias_ids.push_back(b);
            cur = tape.affine(w, b, cur);
            if (layer.act == Activation::Relu) cur = tape.relu(cur);
            if (layer.act == Activation::Tanh) cur = tape.tanh_act(cur);
            if (layer.capture) g.captured.push_back(cur);
        }
        g.logits = cur;
        return g;
    }

    // -- serialization ---------------------------------------------------
    //
    // Versioned text format; values are written as hexfloats so that a
    // round trip restores every weight bit-exactly.

    void save(std::ostream& os) const {
        os << "adasmooth-net v1\n";
        os << "layers " << layers.size() << "\n";
        for (const Layer& layer : layers) {
            os << "layer " << layer.out_dim() << " " << layer.in_dim() << " "
               << activation_name(layer.act) << " " << (layer.capture ? 1 : 0) << "\n";
            os << std::hexfloat;
            for (std::size_t i = 0; i < layer.w.data.size(); ++i)
                os << layer.w.data[i] << (i + 1 == layer.w.data.size() ? '\n' : ' ');
            for (std::size_t i = 0; i < layer.b.size(); ++i)
                os << layer.b[i] << (i + 1 == layer.b.size() ? '\n' : ' ');
            os << std::defaultfloat;
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw FormatError("cannot open for write: " + path);
        save(os);
    }

    static Net load(std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line != "adasmooth-net v1")
            throw FormatError("net file: bad header");
        std::size_t n = 0;
        {
            std::string kw;
            std::istringstream ls(read_line(is));
            ls >> kw >> n;
            if (kw != "layers") throw FormatError("net file: expected layer count");
        }
        Net net;
        for (std::size_t l = 0; l < n; ++l) {
            std::istringstream ls(read_line(is));
            std::string kw, act;
            std::size_t rows = 0, cols = 0;
            int cap = 0;
            ls >> kw >> rows >> cols >> act >> cap;
            if (kw != "layer" || rows == 0 || cols == 0)
                throw FormatError("net file: bad layer header");
            Layer layer;
            layer.w = RealMatrix(rows, cols);
            layer.b.assign(rows, 0.0);
            layer.act = activation_from_name(act);
            layer.capture = cap != 0;
            read_values(is, layer.w.data);
            read_values(is, layer.b);
            net.layers.push_back(std::move(layer));
        }
        net.check_chain();
        return net;
    }

    static Net load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw FormatError("cannot open: " + path);
        return load(is);
    }

    bool operator==(const Net& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const Layer& a = layers[l];
            const Layer& b = other.layers[l];
            if (a.w.rows != b.w.rows || a.w.cols != b.w.cols || a.act != b.act ||
                a.capture != b.capture || a.w.data != b.w.data || a.b != b.b)
                return false;
        }
        return true;
    }

private:
    static std::string read_line(std::istream& is) {
        std::string line;
        if (!std::getline(is, line)) throw FormatError("net file: truncated");
        return line;
    }
    static void read_values(std::istream& is, std::vector<double>& out) {
        std::istringstream ls(read_line(is));
        for (double& v : out)
            if (!(ls >> v)) throw FormatError("net file: truncated value row");
    }
};

// ---- losses ------------------------------------------------------------

enum class LossKind {
    CrossEntropy,          // untargeted CE on the true label (ascend)
    TargetedCrossEntropy,  // -CE on a chosen target class (ascend = move toward target)
    LogitMargin,           // max_{i != y} z_i - z_y
};

/// Scalar loss node over a logits node. `target` is the attack target for
/// the targeted variant, ignored otherwise.
inline int build_loss(Tape& tape, int logits, LossKind kind, int label, int target = -1) {
    switch (kind) {
        case LossKind::CrossEntropy:
            return tape.ce_logits(logits, label);
        case LossKind::TargetedCrossEntropy: {
            require(target >= 0, "targeted loss: target class required");
            return tape.scale_s(tape.ce_logits(logits, target), -1.0);
        }
        case LossKind::LogitMargin:
            return tape.logit_margin(logits, label);
    }
    throw std::logic_error("unreachable");
}

/// Gradient of a scalar loss with respect to the input.
inline RealVector input_gradient(const Net& net, const RealVector& x, LossKind kind,
                                 int label, int target = -1) {
    require(label >= 0 && static_cast<std::size_t>(label) < net.output_dim(),
            "input_gradient: class index out of range");
    Tape tape;
    int xid = tape.leaf(x);
    NetGraph g = net.build(tape, xid);
    int loss = build_loss(tape, g.logits, kind, label, target);
    tape.backward(loss);
    RealVector grad = tape.adj(xid);
    require_finite(grad, "input_gradient");
    return grad;
}

}  // namespace adasmooth
