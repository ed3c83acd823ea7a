// Base classifier training: standard cross-entropy minimization,
// adversarial training on freshly crafted PGD examples, and the
// robustness-regularized variant with a perturbation-stability surrogate
// weighted by beta (beta = 0 reduces exactly to standard training).
#pragma once

#include "adasmooth/attacks.hpp"
#include "adasmooth/core.hpp"
#include "adasmooth/data.hpp"
#include "adasmooth/net.hpp"

namespace adasmooth {

struct TrainConfig {
    int epochs = 50;
    double lr = 0.1;
    std::size_t batch_size = 64;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    void validate() const {
        require(epochs >= 1, "train config: epochs must be >= 1");
        require(lr > 0.0, "train config: learning rate must be > 0");
        require(batch_size >= 1, "train config: batch size must be >= 1");
        require(momentum >= 0.0 && momentum < 1.0, "train config: momentum in [0,1)");
    }
};

struct TrainReport {
    std::vector<double> epoch_losses;
};

namespace detail {

struct ParamGrads {
    std::vector<RealMatrix> w;
    std::vector<RealVector> b;

    explicit ParamGrads(const Net& net) {
        for (const Layer& l : net.layers) {
            w.emplace_back(l.w.rows, l.w.cols);
            b.emplace_back(l.b.size(), 0.0);
        }
    }
    void zero() {
        for (auto& m : w) std::fill(m.data.begin(), m.data.end(), 0.0);
        for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
    }
    void accumulate(const Tape& tape, const NetGraph& g) {
        for (std::size_t l = 0; l < w.size(); ++l) {
            const RealVector& wa = tape.adj(g.weight_ids[l]);
            const RealVector& ba = tape.adj(g.bias_ids[l]);
            for (std::size_t i = 0; i < wa.size(); ++i) w[l].data[i] += wa[i];
            for (std::size_t i = 0; i < ba.size(); ++i) b[l][i] += ba[i];
        }
    }
};

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    return idx;
}

}  // namespace detail

/// Fraction of the dataset the net classifies correctly.
inline double accuracy(const Net& net, const Dataset& ds) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (argmax(net.forward(ds.inputs.row(i))) == static_cast<std::size_t>(ds.labels[i]))
            ++ok;
    return static_cast<double>(ok) / static_cast<double>(ds.size());
}

namespace detail {

enum class TrainMode { Standard, Adversarial, Stability };

inline Net train_core(Net net, const Dataset& ds, const TrainConfig& cfg, TrainMode mode,
                      const AttackSpec& attack, double beta, TrainReport* report) {
    cfg.validate();
    ds.validate();
    require_shape(net.input_dim() == ds.dim(), "train: net/dataset dimension mismatch");
    DomainBox domain = DomainBox::for_dataset(ds, attack.eps);

    ParamGrads grads(net);
    ParamGrads vel(net);
    if (report) report->epoch_losses.clear();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng =
            make_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = shuffled_indices(ds.size(), shuffle_rng);
        double epoch_loss = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            Rng attack_rng = make_rng(derive_seed(
                cfg.seed, "attack", static_cast<std::uint64_t>(epoch) * 1000003ULL + start));

            for (std::size_t k = start; k < end; ++k) {
                RealVector x = ds.inputs.row(order[k]);
                int y = ds.labels[order[k]];
                Tape tape;

                if (mode == TrainMode::Adversarial) {
                    AttackSpec sp = attack.randomize_radius
                                        ? randomized_variant(attack, attack_rng)
                                        : attack;
                    sp.mode = AttackMode::Rob;
                    NetTarget t(net);
                    std::uint64_t aseed = derive_seed(
                        cfg.seed, "adv-example",
                        static_cast<std::uint64_t>(epoch) * 1000003ULL + order[k]);
                    x = pgd(t, x, y, sp, domain, aseed).x_adv;
                }

                int xid = tape.leaf(x);
                NetGraph g = net.build(tape, xid);
                int loss = tape.ce_logits(g.logits, y);

                if (mode == TrainMode::Stability && beta > 0.0) {
                    RealVector p_clean = softmax(tape.val(g.logits));
                    // Inner maximization of the stability surrogate.
                    RealVector xa = x;
                    AttackSpec sp = attack;
                    double eta = sp.effective_step();
                    for (int t = 0; t < sp.steps; ++t) {
                        Tape inner;
                        int xin = inner.leaf(xa);
                        NetGraph gi = net.build(inner, xin);
                        int sur = inner.ce_soft(gi.logits, p_clean);
                        inner.backward(sur);
                        const RealVector& grad = inner.adj(xin);
                        if (!all_finite(grad)) break;
                        if (sp.norm == Norm::Linf) {
                            for (std::size_t j = 0; j < xa.size(); ++j)
                                xa[j] += eta * (grad[j] > 0 ? 1.0 : (grad[j] < 0 ? -1.0 : 0.0));
                        } else {
                            double n = norm_l2(grad);
                            if (n == 0) break;
                            for (std::size_t j = 0; j < xa.size(); ++j)
                                xa[j] += eta * grad[j] / n;
                        }
                        detail::project_ball(xa, x, sp.norm, sp.eps);
                        domain.clamp(xa);
                    }
                    int xaid = tape.leaf(xa);
                    NetGraph ga = net.build(tape, xaid);
                    int sur = tape.ce_soft(ga.logits, p_clean);
                    loss = tape.add_s(loss, tape.scale_s(sur, beta));
                    tape.backward(loss);
                    double lv = tape.scalar(loss);
                    if (!std::isfinite(lv))
                        throw NumericalError("training diverged: loss is NaN");
                    epoch_loss += lv;
                    grads.accumulate(tape, g);
                    grads.accumulate(tape, ga);
                    continue;
                }

                tape.backward(loss);
                double lv = tape.scalar(loss);
                if (!std::isfinite(lv)) throw NumericalError("training diverged: loss is NaN");
                epoch_loss += lv;
                grads.accumulate(tape, g);
            }

            double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                Layer& layer = net.layers[l];
                for (std::size_t i = 0; i < layer.w.data.size(); ++i) {
                    vel.w[l].data[i] =
                        cfg.momentum * vel.w[l].data[i] + grads.w[l].data[i] * inv;
                    layer.w.data[i] -= cfg.lr * vel.w[l].data[i];
                }
                for (std::size_t i = 0; i < layer.b.size(); ++i) {
                    vel.b[l][i] = cfg.momentum * vel.b[l][i] + grads.b[l][i] * inv;
                    layer.b[i] -= cfg.lr * vel.b[l][i];
                }
            }
        }
        if (report) report->epoch_losses.push_back(epoch_loss / static_cast<double>(ds.size()));
    }
    return net;
}

}  // namespace detail

inline Net train_standard(Net net, const Dataset& ds, const TrainConfig& cfg,
                          TrainReport* report = nullptr) {
    return detail::train_core(std::move(net), ds, cfg, detail::TrainMode::Standard,
                              AttackSpec{}, 0.0, report);
}

inline Net train_adversarial(Net net, const Dataset& ds, const TrainConfig& cfg,
                             const AttackSpec& attack, TrainReport* report = nullptr) {
    attack.validate();
    return detail::train_core(std::move(net), ds, cfg, detail::TrainMode::Adversarial, attack,
                              0.0, report);
}

/// Stability-regularized training: CE(x) + beta * max_d surrogate(x + d).
inline Net train_trades(Net net, const Dataset& ds, const TrainConfig& cfg,
                        const AttackSpec& attack, double beta,
                        TrainReport* report = nullptr) {
    require(beta >= 0.0, "train_trades: beta must be >= 0");
    if (beta > 0.0) attack.validate();
    return detail::train_core(std::move(net), ds, cfg,
                              beta > 0.0 ? detail::TrainMode::Stability
                                         : detail::TrainMode::Standard,
                              attack, beta, report);
}

}  // namespace adasmooth
