// First-order adversaries: projected gradient ascent in l2 / linf balls
// with domain clamping and minimum-margin iterate tracking, transfer and
// end-to-end modes against the mixed classifier, and a reduced multi-loss
// multi-restart ensemble ("apgd-lite": untargeted CE, per-class targeted
// CE and a logit-margin loss with step-size halving; FAB/Square and the
// full DLR loss of the reference ensemble are intentionally not included).
#pragma once

#include <functional>
#include <memory>

#include "adasmooth/core.hpp"
#include "adasmooth/data.hpp"
#include "adasmooth/mixing.hpp"
#include "adasmooth/net.hpp"

namespace adasmooth {

enum class AttackMode { Std, Rob, MixGrayblend, MixWhitebox, MixAdaptive };

inline std::string attack_mode_name(AttackMode m) {
    switch (m) {
        case AttackMode::Std: return "STD";
        case AttackMode::Rob: return "ROB";
        case AttackMode::MixGrayblend: return "MIX-grayblend";
        case AttackMode::MixWhitebox: return "MIX-whitebox";
        case AttackMode::MixAdaptive: return "MIX-adaptive";
    }
    return "?";
}

struct AttackSpec {
    Norm norm = Norm::Linf;
    double eps = 0.1;
    int steps = 20;
    double step_size = 0.0;  // <= 0 means the 2.5 * eps / steps default
    int restarts = 1;
    LossKind loss = LossKind::CrossEntropy;
    AttackMode mode = AttackMode::MixWhitebox;
    double lambda = 0.0;        // mixing-weight suppression (adaptive mode only)
    bool random_starts = false; // restarts > 0 start from a random ball point
    bool randomize_radius = false;  // training-time diversity flag

    double effective_step() const {
        if (step_size > 0) return step_size;
        return steps > 0 ? 2.5 * eps / steps : 0.0;
    }
    void validate() const {
        require(std::isfinite(eps) && eps >= 0.0, "attack spec: radius must be finite and >= 0");
        require(steps >= 0, "attack spec: steps must be >= 0");
        require(restarts >= 1, "attack spec: restarts must be >= 1");
        require(std::isfinite(effective_step()), "attack spec: step size must be finite");
        require(lambda >= 0.0, "attack spec: lambda must be >= 0");
        if (lambda > 0.0)
            require(mode == AttackMode::MixAdaptive,
                    "attack spec: lambda is only used in the adaptive mode");
    }
};

/// Training-time attack diversity: radius ~ U[0.5 eps, 1.5 eps], steps
/// ~ U{T/2 .. T}.
inline AttackSpec randomized_variant(const AttackSpec& spec, Rng& rng) {
    AttackSpec out = spec;
    out.eps = spec.eps * uniform(rng, 0.5, 1.5);
    int lo = std::max(1, spec.steps / 2);
    out.steps = std::uniform_int_distribution<int>(lo, std::max(lo, spec.steps))(rng);
    out.randomize_radius = false;
    return out;
}

/// Valid input domain for attack projection.
struct DomainBox {
    RealVector lo, hi;

    static DomainBox unbounded(std::size_t dim) {
        DomainBox b;
        b.lo.assign(dim, -std::numeric_limits<double>::infinity());
        b.hi.assign(dim, std::numeric_limits<double>::infinity());
        return b;
    }
    /// Synthetic data: empirical bounding box padded by the attack radius.
    /// Image data: the exact [0,1] box.
    static DomainBox for_dataset(const Dataset& ds, double eps) {
        DomainBox b;
        b.lo = ds.lo;
        b.hi = ds.hi;
        if (ds.pad_domain_by_eps)
            for (std::size_t j = 0; j < b.lo.size(); ++j) {
                b.lo[j] -= eps;
                b.hi[j] += eps;
            }
        return b;
    }
    void clamp(RealVector& x) const {
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = std::min(hi[j], std::max(lo[j], x[j]));
    }
    bool contains(const RealVector& x, double tol = 1e-9) const {
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] < lo[j] - tol || x[j] > hi[j] + tol) return false;
        return true;
    }
};

/// A model first-order attacks can query: probabilities for margin
/// tracking and the gradient of an attack loss with respect to the input.
class AttackTarget {
public:
    virtual ~AttackTarget() = default;
    virtual std::size_t classes() const = 0;
    virtual RealVector probs(const RealVector& x) const = 0;
    virtual RealVector loss_input_grad(const RealVector& x, int y, LossKind kind,
                                       int target) const = 0;
};

class NetTarget final : public AttackTarget {
public:
    explicit NetTarget(const Net& net) : net_(&net) {}
    std::size_t classes() const override { return net_->output_dim(); }
    RealVector probs(const RealVector& x) const override { return net_->probs(x); }
    RealVector loss_input_grad(const RealVector& x, int y, LossKind kind,
                               int target) const override {
        return input_gradient(*net_, x, kind, y, target);
    }

private:
    const Net* net_;
};

/// The mixed classifier as an attack target. The gradient mode implements
/// the visibility settings: Frozen stops the gradient at the mixing
/// network, EndToEnd differentiates through it, and a positive lambda adds
/// the suppression term that steers the mixing weight toward zero.
class MixedTarget final : public AttackTarget {
public:
    MixedTarget(const MixedClassifier& mc, AlphaGradMode mode, double lambda = 0.0)
        : mc_(&mc), mode_(mode), lambda_(lambda) {}

    std::size_t classes() const override { return mc_->classes(); }
    RealVector probs(const RealVector& x) const override { return mc_->mixed_probs(x); }
    RealVector loss_input_grad(const RealVector& x, int y, LossKind kind,
                               int target) const override {
        Tape tape;
        MixedGraph mg = mc_->build(tape, x, mode_);
        int loss = build_loss(tape, mg.logits, kind, y, target);
        if (lambda_ > 0.0 && mg.alpha >= 0 &&
            tape.val(mg.alpha)[0] > 0.0 && tape.val(mg.alpha)[0] < 1.0) {
            int suppress = tape.bce_const(mg.alpha, 0.0);
            loss = tape.add_s(loss, tape.scale_s(suppress, lambda_));
        }
        tape.backward(loss);
        return tape.adj(mg.input);
    }

private:
    const MixedClassifier* mc_;
    AlphaGradMode mode_;
    double lambda_;
};

struct AttackResult {
    RealVector x_adv;
    bool success = false;  // prediction at x_adv differs from the label
    double margin = 0.0;   // probability margin of the attacked model at x_adv
    double lp_dist = 0.0;
    int aborted_restarts = 0;  // restarts stopped on a non-finite gradient
};

namespace detail {

inline void project_ball(RealVector& x, const RealVector& x0, Norm norm, double eps) {
    if (norm == Norm::Linf) {
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = std::min(x0[j] + eps, std::max(x0[j] - eps, x[j]));
    } else {
        RealVector delta(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) delta[j] = x[j] - x0[j];
        double n = norm_l2(delta);
        if (n > eps) {
            double s = eps / n;
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = x0[j] + delta[j] * s;
        }
    }
}

inline RealVector random_ball_point(const RealVector& x0, Norm norm, double eps, Rng& rng) {
    RealVector x = x0;
    if (norm == Norm::Linf) {
        for (double& v : x) v += uniform(rng, -eps, eps);
    } else {
        RealVector dir(x.size());
        for (double& v : dir) v = gaussian(rng);
        double n = norm_l2(dir);
        if (n > 0) {
            double r = eps * std::pow(uniform(rng, 0.0, 1.0),
                                      1.0 / static_cast<double>(x.size()));
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += dir[j] * r / n;
        }
    }
    return x;
}

struct RunConfig {
    bool halving_schedule = false;  // halve the step at 0.25/0.5/0.75 of T
};

/// One multi-restart PGD run for a single loss; keeps the minimum-margin
/// iterate across every restart and step (the nominal point included).
inline void pgd_core(const AttackTarget& target, const RealVector& x, int y,
                     const AttackSpec& spec, const DomainBox& domain, LossKind kind,
                     int target_class, std::uint64_t seed, const RunConfig& rc,
                     const RealVector* warm_start, RealVector& best_x, double& best_margin,
                     int& aborted) {
    double consider = label_margin(target.probs(x), y);
    if (consider < best_margin) {
        best_margin = consider;
        best_x = x;
    }
    const double eta0 = spec.effective_step();
    for (int r = 0; r < spec.restarts; ++r) {
        Rng rng = make_rng(derive_seed(seed, "pgd-restart", static_cast<std::uint64_t>(r)));
        RealVector cur = (warm_start && r == 0) ? *warm_start : x;
        if (spec.random_starts && r > 0) {
            cur = random_ball_point(x, spec.norm, spec.eps, rng);
            domain.clamp(cur);
            double m0 = label_margin(target.probs(cur), y);
            if (m0 < best_margin) {
                best_margin = m0;
                best_x = cur;
            }
        }
        double eta = eta0;
        for (int t = 0; t < spec.steps; ++t) {
            if (rc.halving_schedule && spec.steps >= 4 &&
                (t == spec.steps / 4 || t == spec.steps / 2 || t == 3 * spec.steps / 4))
                eta *= 0.5;
            RealVector grad = target.loss_input_grad(cur, y, kind, target_class);
            if (!all_finite(grad)) {
                ++aborted;
                break;
            }
            if (spec.norm == Norm::Linf) {
                for (std::size_t j = 0; j < cur.size(); ++j)
                    cur[j] += eta * (grad[j] > 0 ? 1.0 : (grad[j] < 0 ? -1.0 : 0.0));
            } else {
                double n = norm_l2(grad);
                if (n == 0.0) break;
                for (std::size_t j = 0; j < cur.size(); ++j) cur[j] += eta * grad[j] / n;
            }
            project_ball(cur, x, spec.norm, spec.eps);
            domain.clamp(cur);
            double m = label_margin(target.probs(cur), y);
            if (m < best_margin) {
                best_margin = m;
                best_x = cur;
            }
        }
    }
}

}  // namespace detail

inline double distance(const RealVector& a, const RealVector& b, Norm norm) {
    RealVector d(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) d[j] = a[j] - b[j];
    return norm_of(d, norm);
}

/// Untargeted PGD with the configured loss. steps = 0 or eps = 0 returns
/// the nominal point unchanged.
inline AttackResult pgd(const AttackTarget& target, const RealVector& x, int y,
                        const AttackSpec& spec, const DomainBox& domain, std::uint64_t seed,
                        const RealVector* warm_start = nullptr) {
    spec.validate();
    require(y >= 0 && static_cast<std::size_t>(y) < target.classes(),
            "pgd: label out of range");
    AttackResult res;
    res.x_adv = x;
    res.margin = std::numeric_limits<double>::infinity();
    detail::RunConfig rc;
    detail::pgd_core(target, x, y, spec, domain, spec.loss, -1, seed, rc, warm_start,
                     res.x_adv, res.margin, res.aborted_restarts);
    res.success = argmax(target.probs(res.x_adv)) != static_cast<std::size_t>(y);
    res.lp_dist = distance(res.x_adv, x, spec.norm);
    return res;
}

/// Reduced attack ensemble: union over untargeted CE (plain and with the
/// halving schedule), per-class targeted CE and the logit-margin loss;
/// keeps the per-example minimum-margin point. Requires restarts >= 2.
inline AttackResult apgd_lite(const AttackTarget& target, const RealVector& x, int y,
                              const AttackSpec& spec, const DomainBox& domain,
                              std::uint64_t seed) {
    spec.validate();
    require(spec.restarts >= 2, "apgd_lite: needs at least two restarts");
    AttackResult res;
    res.x_adv = x;
    res.margin = std::numeric_limits<double>::infinity();

    // Plain constant-step CE run first, so the ensemble is a strict
    // superset of pgd() with the same spec and seed.
    detail::RunConfig plain;
    detail::pgd_core(target, x, y, spec, domain, LossKind::CrossEntropy, -1, seed, plain,
                     nullptr, res.x_adv, res.margin, res.aborted_restarts);

    detail::RunConfig sched;
    sched.halving_schedule = true;
    std::uint64_t k = 1;
    detail::pgd_core(target, x, y, spec, domain, LossKind::CrossEntropy, -1,
                     derive_seed(seed, "apgd-loss", k++), sched, nullptr, res.x_adv,
                     res.margin, res.aborted_restarts);
    detail::pgd_core(target, x, y, spec, domain, LossKind::LogitMargin, -1,
                     derive_seed(seed, "apgd-loss", k++), sched, nullptr, res.x_adv,
                     res.margin, res.aborted_restarts);
    for (std::size_t t = 0; t < target.classes(); ++t) {
        if (static_cast<int>(t) == y) continue;
        detail::pgd_core(target, x, y, spec, domain, LossKind::TargetedCrossEntropy,
                         static_cast<int>(t), derive_seed(seed, "apgd-loss", k++), sched,
                         nullptr, res.x_adv, res.margin, res.aborted_restarts);
    }
    res.success = argmax(target.probs(res.x_adv)) != static_cast<std::size_t>(y);
    res.lp_dist = distance(res.x_adv, x, spec.norm);
    return res;
}

/// Attack the mixed classifier under the configured visibility mode.
/// STD / ROB craft against a base net alone and transfer; the MIX modes
/// attack the mixture itself. Success and margin are always reported for
/// the mixed classifier at the returned point.
inline AttackResult attack_mixed(const MixedClassifier& mc, const RealVector& x, int y,
                                 const AttackSpec& spec, const DomainBox& domain,
                                 std::uint64_t seed) {
    spec.validate();
    AttackResult res;
    switch (spec.mode) {
        case AttackMode::Std: {
            NetTarget t(*mc.g);
            res = pgd(t, x, y, spec, domain, seed);
            break;
        }
        case AttackMode::Rob: {
            NetTarget t(*mc.h);
            res = pgd(t, x, y, spec, domain, seed);
            break;
        }
        case AttackMode::MixGrayblend: {
            MixedTarget t(mc, AlphaGradMode::Frozen);
            res = pgd(t, x, y, spec, domain, seed);
            break;
        }
        case AttackMode::MixWhitebox: {
            MixedTarget t(mc, AlphaGradMode::EndToEnd);
            res = pgd(t, x, y, spec, domain, seed);
            break;
        }
        case AttackMode::MixAdaptive: {
            MixedTarget t(mc, AlphaGradMode::EndToEnd, spec.lambda);
            res = pgd(t, x, y, spec, domain, seed);
            break;
        }
    }
    RealVector p = mc.mixed_probs(res.x_adv);
    res.success = argmax(p) != static_cast<std::size_t>(y);
    res.margin = label_margin(p, y);
    return res;
}

// ---- batch evaluation -----------------------------------------------------

struct BatchAttackResult {
    RealMatrix x_adv;
    std::vector<char> success;
    RealVector margins;
    RealVector lp_dists;

    double success_rate() const {
        if (success.empty()) return 0.0;
        double s = 0;
        for (char c : success) s += c ? 1 : 0;
        return s / static_cast<double>(success.size());
    }
    double accuracy() const { return 1.0 - success_rate(); }
};

template <typename AttackFn>
inline BatchAttackResult attack_batch(const Dataset& ds, AttackFn&& one) {
    BatchAttackResult out;
    out.x_adv = RealMatrix(ds.size(), ds.dim());
    out.success.resize(ds.size());
    out.margins.resize(ds.size());
    out.lp_dists.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        AttackResult r = one(ds.inputs.row(i), ds.labels[i], i);
        out.x_adv.set_row(i, r.x_adv);
        out.success[i] = r.success ? 1 : 0;
        out.margins[i] = r.margin;
        out.lp_dists[i] = r.lp_dist;
    }
    return out;
}

inline BatchAttackResult attack_mixed_batch(const MixedClassifier& mc, const Dataset& ds,
                                            const AttackSpec& spec, std::uint64_t seed) {
    DomainBox domain = DomainBox::for_dataset(ds, spec.eps);
    return attack_batch(ds, [&](const RealVector& x, int y, std::size_t i) {
        return attack_mixed(mc, x, y, spec, domain,
                            derive_seed(seed, "example", static_cast<std::uint64_t>(i)));
    });
}

inline void export_attack_csv(const BatchAttackResult& r, std::ostream& os) {
    os << "# adasmooth csv v1 attack-result\n";
    os << "index,success,margin,lp_distance\n";
    os.precision(17);
    for (std::size_t i = 0; i < r.success.size(); ++i)
        os << i << "," << (r.success[i] ? 1 : 0) << "," << r.margins[i] << ","
           << r.lp_dists[i] << "\n";
}

}  // namespace adasmooth
