// Classifier mixing: the three gradient-weighted formulations, the
// production convex combination of output probabilities, and the
// MixedClassifier that evaluates the full pipeline (temperature scales,
// optional hardmax on the accurate base, fixed or input-adaptive mixing
// weight) both as plain math and as a differentiable tape graph.
#pragma once

#include <optional>

#include "adasmooth/core.hpp"
#include "adasmooth/net.hpp"
#include "adasmooth/tape.hpp"

namespace adasmooth {

enum class MixVariant { Smo1, Smo2, Smo3, Final };
enum class ROption { One, GradI, GradMax, GradRatio };
enum class MixSpace { Logits, Probabilities };

inline std::string r_option_name(ROption r) {
    switch (r) {
        case ROption::One: return "one";
        case ROption::GradI: return "grad_i";
        case ROption::GradMax: return "grad_max";
        case ROption::GradRatio: return "grad_ratio";
    }
    return "one";
}
inline ROption r_option_from_name(const std::string& s) {
    if (s == "one") return ROption::One;
    if (s == "grad_i") return ROption::GradI;
    if (s == "grad_max") return ROption::GradMax;
    if (s == "grad_ratio") return ROption::GradRatio;
    throw ConfigError("unknown R option: " + s);
}
inline std::string mix_space_name(MixSpace s) {
    return s == MixSpace::Logits ? "logits" : "probabilities";
}

struct MixConfig {
    MixVariant variant = MixVariant::Final;
    double gamma = 1.0;  // trade-off parameter for smo1-smo3
    double alpha = 0.5;  // trade-off parameter for the final variant
    ROption r_option = ROption::One;
    MixSpace space = MixSpace::Probabilities;
    bool g_hardmax = false;
    // Logit multipliers applied before softmax (inverse temperatures).
    // The accurate base is typically sharpened (> 1), the robust base may
    // be softened with a multiplier in (0, 1].
    double scale_g = 1.0;
    double scale_h = 1.0;
    std::optional<Norm> pstar;  // dual-norm axis for gradient-based R options

    bool needs_gradients() const {
        return variant == MixVariant::Smo1 || variant == MixVariant::Smo2 ||
               (variant == MixVariant::Smo3 && r_option != ROption::One);
    }

    void validate() const {
        require(alpha >= 0.0 && alpha <= 1.0, "mix config: alpha must be in [0,1]");
        require(gamma >= 0.0, "mix config: gamma must be >= 0");
        require(scale_g >= 0.0, "mix config: g scale must be >= 0");
        require(scale_h > 0.0 && scale_h <= 1.0, "mix config: h scale must be in (0,1]");
        if (variant == MixVariant::Final)
            require(space == MixSpace::Probabilities,
                    "mix config: final variant operates on probabilities");
        if (needs_gradients())
            require(pstar.has_value(),
                    "mix config: gradient-based R options require the dual norm to be set");
    }
};

// ---- the four formulations (pure functions) -----------------------------

/// h_i = g_i + gamma * h_i * ||grad g_i||.
inline RealVector mix_smo1(const RealVector& g_out, const RealVector& h_out,
                           const RealVector& grad_norms, double gamma) {
    require(gamma >= 0.0, "mix_smo1: gamma must be >= 0");
    require_shape(g_out.size() == h_out.size() && g_out.size() == grad_norms.size(),
                  "mix_smo1: size mismatch");
    RealVector out(g_out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = g_out[i] + gamma * h_out[i] * grad_norms[i];
    return out;
}

/// Normalized variant: (g_i + gamma h_i ||grad g_i||) / (1 + gamma ||grad g_i||).
inline RealVector mix_smo2(const RealVector& g_out, const RealVector& h_out,
                           const RealVector& grad_norms, double gamma) {
    require(gamma >= 0.0, "mix_smo2: gamma must be >= 0");
    require_shape(g_out.size() == h_out.size() && g_out.size() == grad_norms.size(),
                  "mix_smo2: size mismatch");
    RealVector out(g_out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double w = gamma * grad_norms[i];
        out[i] = (g_out[i] + w * h_out[i]) / (1.0 + w);
    }
    return out;
}

/// Generalized variant with a per-class trust term R_i >= 0.
inline RealVector mix_smo3(const RealVector& g_out, const RealVector& h_out,
                           const RealVector& R, double gamma) {
    require(gamma >= 0.0, "mix_smo3: gamma must be >= 0");
    require_shape(g_out.size() == h_out.size() && g_out.size() == R.size(),
                  "mix_smo3: size mismatch");
    for (double r : R) require(r >= 0.0, "mix_smo3: R must be non-negative");
    RealVector out(g_out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double w = gamma * R[i];
        out[i] = (g_out[i] + w * h_out[i]) / (1.0 + w);
    }
    return out;
}

constexpr double kLogFloor = 1e-300;

/// Mixed logits: log((1-alpha) g_prob + alpha h_prob). The log is the
/// inverse-softmax, so exp of the output sums to 1. Zeros are floored at
/// 1e-300 before the log, which preserves the argmax.
inline RealVector mix_final(const RealVector& g_probs, const RealVector& h_probs, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "mix_final: alpha must be in [0,1]");
    require_shape(g_probs.size() == h_probs.size(), "mix_final: size mismatch");
    RealVector out(g_probs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double p = (1.0 - alpha) * g_probs[i] + alpha * h_probs[i];
        out[i] = std::log(std::max(p, kLogFloor));
    }
    return out;
}

// ---- per-class gradient norms -------------------------------------------

/// Dual norms of the per-class input gradients of a net's logits or
/// probabilities. Exact per-class backprop (one backward pass per class).
inline RealVector class_grad_norms(const Net& net, const RealVector& x, MixSpace space,
                                   Norm pstar) {
    Tape tape;
    int xid = tape.leaf(x);
    NetGraph g = net.build(tape, xid);
    int out = (space == MixSpace::Probabilities) ? tape.softmax(g.logits) : g.logits;
    std::size_t c = net.output_dim();
    RealVector norms(c);
    for (std::size_t i = 0; i < c; ++i) {
        tape.zero_adjoints();
        RealVector seed(c, 0.0);
        seed[i] = 1.0;
        tape.backward_seed(out, seed);
        norms[i] = dual_norm_of(tape.adj(xid), pstar);
    }
    return norms;
}

/// Dual norm of the gradient of the predicted-class output.
inline double max_class_grad_norm(const Net& net, const RealVector& x, MixSpace space,
                                  Norm pstar) {
    Tape tape;
    int xid = tape.leaf(x);
    NetGraph g = net.build(tape, xid);
    int out = (space == MixSpace::Probabilities) ? tape.softmax(g.logits) : g.logits;
    std::size_t top = argmax(tape.val(out));
    RealVector seed(net.output_dim(), 0.0);
    seed[top] = 1.0;
    tape.backward_seed(out, seed);
    return dual_norm_of(tape.adj(xid), pstar);
}

/// The per-class trust term R for the configured option.
inline RealVector compute_r_terms(const Net& g, const Net& h, const RealVector& x,
                                  const MixConfig& cfg) {
    std::size_t c = g.output_dim();
    switch (cfg.r_option) {
        case ROption::One:
            return RealVector(c, 1.0);
        case ROption::GradI:
            return class_grad_norms(g, x, cfg.space, *cfg.pstar);
        case ROption::GradMax:
            return RealVector(c, max_class_grad_norm(g, x, cfg.space, *cfg.pstar));
        case ROption::GradRatio: {
            RealVector ng = class_grad_norms(g, x, cfg.space, *cfg.pstar);
            RealVector nh = class_grad_norms(h, x, cfg.space, *cfg.pstar);
            RealVector r(c);
            for (std::size_t i = 0; i < c; ++i) r[i] = ng[i] / std::max(nh[i], 1e-12);
            return r;
        }
    }
    throw std::logic_error("unreachable");
}

inline RealVector one_hot(std::size_t index, std::size_t size) {
    RealVector v(size, 0.0);
    v[index] = 1.0;
    return v;
}

// ---- alpha providers ------------------------------------------------------

/// Input-adaptive mixing weight source. Implemented by the mixing network;
/// a constant provider exists for tests.
class AlphaProvider {
public:
    virtual ~AlphaProvider() = default;
    /// Plain evaluation from the bases' captured activations.
    virtual double alpha(const std::vector<RealVector>& g_acts,
                         const std::vector<RealVector>& h_acts, bool training) const = 0;
    /// Tape node for the same value (end-to-end differentiable path).
    virtual int build_alpha(Tape& tape, const std::vector<int>& g_acts,
                            const std::vector<int>& h_acts, bool training) const = 0;
};

class ConstantAlpha final : public AlphaProvider {
public:
    explicit ConstantAlpha(double a) : a_(a) {}
    double alpha(const std::vector<RealVector>&, const std::vector<RealVector>&,
                 bool) const override {
        return a_;
    }
    int build_alpha(Tape& tape, const std::vector<int>&, const std::vector<int>&,
                    bool) const override {
        return tape.leaf({a_});
    }

private:
    double a_;
};

// ---- the mixed classifier --------------------------------------------------

/// How attacks see the adaptive mixing weight.
enum class AlphaGradMode {
    Frozen,    // alpha treated as a constant (gradient stopped at the mixer)
    EndToEnd,  // gradients flow through the mixing network
};

struct MixedGraph {
    int input = -1;
    int logits = -1;   // mixed logits (or smo outputs)
    int alpha = -1;    // scalar node when the final variant is active
    NetGraph g, h;
};

class MixedClassifier {
public:
    const Net* g = nullptr;
    const Net* h = nullptr;
    MixConfig cfg;
    const AlphaProvider* mixer = nullptr;  // overrides cfg.alpha when set

    MixedClassifier() = default;
    MixedClassifier(const Net& g_net, const Net& h_net, MixConfig config,
                    const AlphaProvider* alpha_fn = nullptr)
        : g(&g_net), h(&h_net), cfg(config), mixer(alpha_fn) {
        cfg.validate();
        require_shape(g->input_dim() == h->input_dim(),
                      "mixed classifier: base nets must share the input dimension");
        require_shape(g->output_dim() == h->output_dim(),
                      "mixed classifier: base nets must share the class count");
    }

    std::size_t classes() const { return g->output_dim(); }

    double alpha_at(const RealVector& x, bool training = false) const {
        if (!mixer) return cfg.alpha;
        std::vector<RealVector> ga, ha;
        g->forward(x, &ga);
        h->forward(x, &ha);
        return mixer->alpha(ga, ha, training);
    }

    /// Probabilities of the accurate base after scaling / hardmax.
    RealVector g_probs(const RealVector& x) const {
        RealVector gl = g->forward(x);
        if (cfg.g_hardmax) return one_hot(argmax(gl), gl.size());
        for (double& v : gl) v *= cfg.scale_g;
        return softmax(gl);
    }
    RealVector h_probs(const RealVector& x) const {
        RealVector hl = h->forward(x);
        for (double& v : hl) v *= cfg.scale_h;
        return softmax(hl);
    }

    /// Full pipeline output. For the final variant these are mixed logits
    /// (log-probabilities); for smo variants the formula output in the
    /// configured space.
    RealVector mixed_logits(const RealVector& x) const {
        if (cfg.variant == MixVariant::Final) {
            std::vector<RealVector> ga, ha;
            RealVector gl = g->forward(x, &ga);
            RealVector hl = h->forward(x, &ha);
            double a = mixer ? mixer->alpha(ga, ha, false) : cfg.alpha;
            RealVector pg = cfg.g_hardmax ? one_hot(argmax(gl), gl.size())
                                          : scaled_softmax(gl, cfg.scale_g);
            return mix_final(pg, scaled_softmax(hl, cfg.scale_h), a);
        }
        RealVector og = base_out(*g, x, cfg.scale_g, cfg.g_hardmax);
        RealVector oh = base_out(*h, x, cfg.scale_h, false);
        if (cfg.variant == MixVariant::Smo3)
            return mix_smo3(og, oh, compute_r_terms(*g, *h, x, cfg), cfg.gamma);
        RealVector norms = class_grad_norms(*g, x, cfg.space, *cfg.pstar);
        return cfg.variant == MixVariant::Smo1 ? mix_smo1(og, oh, norms, cfg.gamma)
                                               : mix_smo2(og, oh, norms, cfg.gamma);
    }

    /// Probability-space view of the mixed output.
    RealVector mixed_probs(const RealVector& x) const {
        if (cfg.variant == MixVariant::Final) {
            RealVector ml = mixed_logits(x);
            for (double& v : ml) v = std::exp(v);
            return ml;
        }
        return softmax(mixed_logits(x));
    }

    std::size_t predict(const RealVector& x) const { return argmax(mixed_logits(x)); }

    /// Differentiable pipeline on a tape. Gradient-weighted trust terms are
    /// evaluated at the current point and frozen (exact almost everywhere
    /// for ReLU bases, whose per-class gradients are piecewise constant).
    MixedGraph build(Tape& tape, const RealVector& x, AlphaGradMode mode,
                     bool training_alpha = false) const {
        MixedGraph mg;
        mg.input = tape.leaf(x);
        mg.g = g->build(tape, mg.input);
        mg.h = h->build(tape, mg.input);
        if (cfg.variant == MixVariant::Final) {
            int pg;
            if (cfg.g_hardmax) {
                pg = tape.leaf(one_hot(argmax(tape.val(mg.g.logits)), classes()));
            } else {
                pg = tape.softmax(tape.scale_shift(mg.g.logits, cfg.scale_g));
            }
            int ph = tape.softmax(tape.scale_shift(mg.h.logits, cfg.scale_h));
            if (mixer && mode == AlphaGradMode::EndToEnd) {
                mg.alpha = mixer->build_alpha(tape, mg.g.captured, mg.h.captured, training_alpha);
            } else {
                mg.alpha = tape.leaf({alpha_at(x, training_alpha)});
            }
            mg.logits = tape.log_floor(tape.convex_mix(mg.alpha, pg, ph), kLogFloor);
            return mg;
        }
        int og = build_base_out(tape, mg.g.logits, cfg.scale_g, cfg.g_hardmax);
        int oh = build_base_out(tape, mg.h.logits, cfg.scale_h, false);
        RealVector w;
        if (cfg.variant == MixVariant::Smo3) {
            w = compute_r_terms(*g, *h, x, cfg);
        } else {
            w = class_grad_norms(*g, x, cfg.space, *cfg.pstar);
        }
        for (double& v : w) v *= cfg.gamma;
        mg.logits = (cfg.variant == MixVariant::Smo1) ? tape.axpy_w(og, oh, w)
                                                      : tape.smo_mix(og, oh, w);
        return mg;
    }

private:
    static RealVector scaled_softmax(RealVector logits, double scale) {
        for (double& v : logits) v *= scale;
        return softmax(logits);
    }
    RealVector base_out(const Net& net, const RealVector& x, double scale, bool hard) const {
        RealVector l = net.forward(x);
        if (cfg.space == MixSpace::Logits) return l;
        if (hard) return one_hot(argmax(l), l.size());
        return scaled_softmax(std::move(l), scale);
    }
    int build_base_out(Tape& tape, int logits, double scale, bool hard) const {
        if (cfg.space == MixSpace::Logits) return logits;
        if (hard) return tape.leaf(one_hot(argmax(tape.val(logits)), classes()));
        return tape.softmax(tape.scale_shift(logits, scale));
    }
};

}  // namespace adasmooth
