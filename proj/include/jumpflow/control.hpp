#pragma once

// Intensity control of a marked point process over a finite action set:
// the Hamiltonian generator, policy synthesis from the solved equation,
// the change-of-measure density for a policy, and Monte-Carlo cost
// estimation under the base measure.
//
// An admissible policy scales the jump intensity by the factor
// r(t, x, u) in [0, C]; its cost is J(u) = E_u[ integral l(t, u_t) dA_t + xi ],
// computed here as E[ L^u_T (integral l dA + xi) ] with the density
//   L^u_T = exp( integral (1 - r(s, x, u_s)) nu(ds, dx) )
//           * prod_{jumps} r(S_n, X_n, u_{S_n}).
// The minimal cost equals the solved equation's Y_0 with the Hamiltonian
// generator, and the minimizing action field defines the optimal policy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jumpflow/generator.hpp"
#include "jumpflow/model.hpp"
#include "jumpflow/solver.hpp"

namespace jumpflow {

struct ControlModel {
    MppModel base;                 ///< uncontrolled dynamics
    std::vector<double> actions;   ///< finite action set U, index order fixed
    /// Intensity factor r(t, x, u) in [0, C].
    std::function<double(double t, MarkId x, double u)> r;
    /// Running cost l(t, u).
    std::function<double(double t, double u)> l;
    TerminalSpec terminal;         ///< terminal cost
    double bound_c = 1.0;          ///< C bounding r
};

inline void validate_control_model(const ControlModel& cm) {
    validate_model(cm.base);
    if (cm.actions.empty()) {
        throw std::invalid_argument("ControlModel: action set must be nonempty");
    }
    if (!cm.r || !cm.l) {
        throw std::invalid_argument("ControlModel: r and l are required");
    }
    if (!(cm.bound_c > 0.0)) {
        throw std::invalid_argument("ControlModel: bound C must be positive");
    }
    // Probe 0 <= r <= C on a coarse grid of times, marks, actions.
    for (int i = 0; i <= 8; ++i) {
        const double t = cm.base.horizon * static_cast<double>(i) / 8.0;
        for (int x = 0; x < cm.base.n_marks(); ++x) {
            for (double u : cm.actions) {
                const double v = cm.r(t, x, u);
                if (!(v >= 0.0) || !(v <= cm.bound_c + 1e-12)) {
                    throw std::invalid_argument(
                        "ControlModel: intensity factor r must stay within [0, C]");
                }
            }
        }
    }
}

struct HamiltonianResult {
    double value = 0.0;
    int action_index = 0;
};

/// Exact minimum over the finite action set of
///   l(t, u) + sum_x weights[x] * zeta[x] * r(t, x, u),
/// ties broken by the lowest action index.
inline HamiltonianResult hamiltonian_min(const ControlModel& cm, double t,
                                         std::span<const double> zeta,
                                         std::span<const double> weights) {
    HamiltonianResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < cm.actions.size(); ++a) {
        const double u = cm.actions[a];
        double v = cm.l(t, u);
        for (std::size_t x = 0; x < weights.size(); ++x) {
            if (weights[x] == 0.0) continue;
            v += weights[x] * zeta[x] * cm.r(t, static_cast<MarkId>(x), u);
        }
        if (v < best.value) {
            best.value = v;
            best.action_index = static_cast<int>(a);
        }
    }
    return best;
}

/// The Hamiltonian as a kernel-averaged generator. The candidate average is
///   eta(t, zeta) = ( H(t, zeta) - min_u l(t, u) ) / C,
/// which satisfies |eta(zeta) - eta(zeta')| <= sum_x w_x |zeta - zeta'|, and
/// the outer map f(t, y, eta) = C eta + min_u l(t, u) recovers H with
/// Lipschitz constants L = C and L' = 0.
inline GeneratorSpec hamiltonian_generator(const ControlModel& cm) {
    struct Pieces {
        std::vector<double> actions;
        std::function<double(double, MarkId, double)> r;
        std::function<double(double, double)> l;
        double c;
        double lmin(double t) const {
            double v = std::numeric_limits<double>::infinity();
            for (double u : actions) v = std::min(v, l(t, u));
            return v;
        }
    };
    auto pieces = std::make_shared<Pieces>(Pieces{cm.actions, cm.r, cm.l, cm.bound_c});

    auto eta = [pieces](double t, std::span<const double> zeta,
                        std::span<const double> w) {
        double best = std::numeric_limits<double>::infinity();
        for (double u : pieces->actions) {
            double v = pieces->l(t, u);
            for (std::size_t x = 0; x < w.size(); ++x) {
                if (w[x] == 0.0) continue;
                v += w[x] * zeta[x] * pieces->r(t, static_cast<MarkId>(x), u);
            }
            best = std::min(best, v);
        }
        return (best - pieces->lmin(t)) / pieces->c;
    };
    auto f2 = [pieces](double t, double, double eta_val) {
        return pieces->c * eta_val + pieces->lmin(t);
    };
    return GeneratorSpec::type2_custom(std::move(f2), std::move(eta), cm.bound_c, 0.0,
                                       "hamiltonian");
}

/// A deterministic policy, constant on grid cells within each jump level.
/// A level with a single stored action (no nodes) is constant in time; the
/// last stored level applies to all higher ones.
struct Policy {
    struct LevelPolicy {
        std::vector<double> nodes;     ///< ascending; empty for constant-in-time
        std::vector<int> cell_action;  ///< per cell, or exactly one if constant
    };
    std::string name;
    std::vector<LevelPolicy> levels;

    [[nodiscard]] const LevelPolicy& level(int n) const {
        if (levels.empty()) throw std::logic_error("Policy: no levels defined");
        const std::size_t i =
            std::min(static_cast<std::size_t>(std::max(n, 0)), levels.size() - 1);
        return levels[i];
    }

    /// Action index at (level, t); `left_limit` selects the cell whose
    /// interior lies to the left of t (the predictable convention used at
    /// jump times).
    [[nodiscard]] int action_index_at(int n, double t, bool left_limit = false) const {
        const LevelPolicy& lp = level(n);
        if (lp.cell_action.empty()) throw std::logic_error("Policy: empty level");
        if (lp.cell_action.size() == 1 || lp.nodes.size() < 2) return lp.cell_action[0];
        std::size_t j;
        if (left_limit) {
            const auto it = std::lower_bound(lp.nodes.begin(), lp.nodes.end(), t);
            j = (it == lp.nodes.begin()) ? 0
                                         : static_cast<std::size_t>(it - lp.nodes.begin()) - 1;
        } else {
            const auto it = std::upper_bound(lp.nodes.begin(), lp.nodes.end(), t);
            j = (it == lp.nodes.begin()) ? 0
                                         : static_cast<std::size_t>(it - lp.nodes.begin()) - 1;
        }
        j = std::min(j, lp.cell_action.size() - 1);
        return lp.cell_action[j];
    }
};

/// A policy holding one action index per level, constant in time.
inline Policy level_constant_policy(std::string name, std::vector<int> per_level) {
    Policy p;
    p.name = std::move(name);
    for (int a : per_level) p.levels.push_back({{}, {a}});
    return p;
}

inline Policy constant_policy(std::string name, int action_index, int n_levels = 1) {
    return level_constant_policy(std::move(name),
                                 std::vector<int>(static_cast<std::size_t>(n_levels),
                                                  action_index));
}

/// A uniformly random level-constant policy (seeded, reproducible).
inline Policy random_policy(const ControlModel& cm, std::string name, RngStream& rng) {
    std::vector<int> per_level;
    for (int n = 0; n <= cm.base.m_cap; ++n) {
        per_level.push_back(rng.uniform_index(static_cast<int>(cm.actions.size())));
    }
    return level_constant_policy(std::move(name), std::move(per_level));
}

/// Reads the minimizing action field off the solved per-level functions:
/// on each grid cell the action minimizing the Hamiltonian at the cell's
/// left node. Requires the solver's per-level fast path.
inline Policy synthesize_policy(const ControlModel& cm, BsdeSolver& solver,
                                std::string name = "optimal") {
    if (!solver.uses_fast_path()) {
        throw std::invalid_argument(
            "synthesize_policy: requires per-level solutions (history-independent "
            "hazard increments/kernels and count-only terminal)");
    }
    const auto& fns = solver.level_functions();
    Policy p;
    p.name = std::move(name);
    const std::size_t k = static_cast<std::size_t>(cm.base.n_marks());
    std::vector<double> zeta(k, 0.0);
    for (int n = 0; n < cm.base.m_cap; ++n) {
        const LevelFunction& fn = *fns[static_cast<std::size_t>(n)];
        Policy::LevelPolicy lp;
        lp.nodes = fn.t;
        const std::size_t cells = (fn.t.size() >= 2) ? fn.t.size() - 1 : 1;
        lp.cell_action.resize(cells, 0);
        for (std::size_t j = 0; j < cells; ++j) {
            for (std::size_t x = 0; x < k; ++x) {
                zeta[x] = fn.yhat[j * k + x] - fn.y[j];
            }
            const std::span<const double> w(&fn.weights[j * k], k);
            lp.cell_action[j] =
                hamiltonian_min(cm, fn.t[j], std::span<const double>(zeta), w)
                    .action_index;
        }
        p.levels.push_back(std::move(lp));
    }
    // Above the cap no jumps occur; the action is irrelevant but well-defined.
    p.levels.push_back({{}, {0}});
    return p;
}

/// Per-path density weight and running cost under a policy.
struct PathCost {
    double weight = 1.0;        ///< L^u_T
    double running_cost = 0.0;  ///< integral l(t, u_t) dA_t
    bool zero_weight = false;   ///< r vanished at a realized jump
};

/// Evaluates density weights and running costs along paths. For
/// level-homogeneous models the per-level integrals are precomputed as
/// prefix sums on the policy's grids (trapezoid within cells, which is exact
/// for time-independent r and l); otherwise each path is integrated directly
/// against its segment laws.
class CostEvaluator {
public:
    CostEvaluator(const ControlModel& cm, const Policy& policy, int quad_cells = 256)
        : cm_(&cm), policy_(&policy), quad_cells_(quad_cells) {
        validate_control_model(cm);
        fast_ = cm.base.level_homogeneous;
        if (fast_) build_prefixes();
    }

    [[nodiscard]] PathCost evaluate(const Path& path) const {
        PathCost out;
        double exponent = 0.0;
        History d;
        const int n_jumps = path.count();
        for (int n = 0; n <= n_jumps; ++n) {
            const double t0 = (n == 0) ? 0.0 : path.jumps[static_cast<std::size_t>(n - 1)].time;
            const double t1 = (n < n_jumps) ? path.jumps[static_cast<std::size_t>(n)].time
                                            : path.horizon;
            if (n < cm_->base.m_cap && t1 > t0) {
                if (fast_) {
                    const Level& lv = levels_[static_cast<std::size_t>(n)];
                    exponent += eval_prefix(lv, /*exponent_family=*/true, t0, t1);
                    out.running_cost += eval_prefix(lv, /*exponent_family=*/false, t0, t1);
                } else {
                    accumulate_slow(n, d, t0, t1, exponent, out.running_cost);
                }
            }
            if (n < n_jumps) {
                const Event& e = path.jumps[static_cast<std::size_t>(n)];
                const int a_idx = policy_->action_index_at(n, e.time, /*left_limit=*/true);
                const double r_val = cm_->r(e.time, e.mark, cm_->actions[static_cast<std::size_t>(a_idx)]);
                if (r_val <= 0.0) {
                    out.zero_weight = true;
                    out.weight = 0.0;
                } else if (!out.zero_weight) {
                    out.weight *= r_val;
                }
                if (!fast_) d = d.extend(e.time, e.mark);
            }
        }
        if (!out.zero_weight) {
            out.weight *= std::exp(exponent);
        }
        if (!std::isfinite(out.weight)) {
            throw std::runtime_error(
                "CostEvaluator: density weight overflow; consider a smaller bound C "
                "or a shorter horizon");
        }
        return out;
    }

private:
    struct Level {
        std::vector<double> nodes;  ///< grid, ascending, covering [0, T]
        std::vector<double> tau;    ///< representative cumulative hazard at nodes
        std::vector<int> action;    ///< per cell
        // Prefix sums at nodes and per-cell endpoint rates for partial cells:
        // integral over a cell of rate dtau with rate linear between r0, r1.
        std::vector<double> exp_prefix, exp_r0, exp_r1;
        std::vector<double> cost_prefix, cost_r0, cost_r1;
        std::shared_ptr<const SurvivalLaw> law;
    };

    void build_prefixes() {
        const int cap = cm_->base.m_cap;
        const std::size_t k = static_cast<std::size_t>(cm_->base.n_marks());
        std::vector<double> w(k, 0.0);
        for (int n = 0; n < cap; ++n) {
            Level lv;
            const History d = representative_history(cm_->base, n);
            lv.law = std::shared_ptr<const SurvivalLaw>(cm_->base.law_for(n, d));
            const Policy::LevelPolicy& lp = policy_->level(n);
            if (lp.nodes.size() >= 2) {
                lv.nodes = lp.nodes;
            } else {
                const int cells = std::max(1, quad_cells_);
                lv.nodes.resize(static_cast<std::size_t>(cells) + 1);
                for (int i = 0; i <= cells; ++i) {
                    lv.nodes[static_cast<std::size_t>(i)] =
                        cm_->base.horizon * static_cast<double>(i) / cells;
                }
            }
            const std::size_t m = lv.nodes.size();
            lv.tau.resize(m);
            for (std::size_t i = 0; i < m; ++i) lv.tau[i] = lv.law->hazard(lv.nodes[i]);
            lv.action.resize(m - 1);
            for (std::size_t j = 0; j + 1 < m; ++j) {
                lv.action[j] = policy_->action_index_at(n, lv.nodes[j], false);
            }
            lv.exp_prefix.assign(m, 0.0);
            lv.cost_prefix.assign(m, 0.0);
            lv.exp_r0.assign(m - 1, 0.0);
            lv.exp_r1.assign(m - 1, 0.0);
            lv.cost_r0.assign(m - 1, 0.0);
            lv.cost_r1.assign(m - 1, 0.0);
            for (std::size_t j = 0; j + 1 < m; ++j) {
                const double u = cm_->actions[static_cast<std::size_t>(lv.action[j])];
                // Densities of the exponent (1 - integral r dphi) and running
                // cost at the two cell endpoints, the cell's action held fixed.
                double rx0 = 0.0;
                double rx1 = 0.0;
                cm_->base.kernel_weights(n, d, lv.nodes[j], std::span<double>(w));
                for (std::size_t x = 0; x < k; ++x) {
                    if (w[x] != 0.0) rx0 += w[x] * cm_->r(lv.nodes[j], static_cast<MarkId>(x), u);
                }
                cm_->base.kernel_weights(n, d, lv.nodes[j + 1], std::span<double>(w));
                for (std::size_t x = 0; x < k; ++x) {
                    if (w[x] != 0.0) rx1 += w[x] * cm_->r(lv.nodes[j + 1], static_cast<MarkId>(x), u);
                }
                lv.exp_r0[j] = 1.0 - rx0;
                lv.exp_r1[j] = 1.0 - rx1;
                lv.cost_r0[j] = cm_->l(lv.nodes[j], u);
                lv.cost_r1[j] = cm_->l(lv.nodes[j + 1], u);
                const double dtau = lv.tau[j + 1] - lv.tau[j];
                lv.exp_prefix[j + 1] =
                    lv.exp_prefix[j] + 0.5 * (lv.exp_r0[j] + lv.exp_r1[j]) * dtau;
                lv.cost_prefix[j + 1] =
                    lv.cost_prefix[j] + 0.5 * (lv.cost_r0[j] + lv.cost_r1[j]) * dtau;
            }
            levels_.push_back(std::move(lv));
        }
    }

    /// Integral of one rate family (density exponent or running cost) over
    /// (t0, t1] using the level's prefix sums, exact τ for partial cells.
    [[nodiscard]] double eval_prefix(const Level& lv, bool exponent_family, double t0,
                                     double t1) const {
        const auto& prefix = exponent_family ? lv.exp_prefix : lv.cost_prefix;
        const auto& r0 = exponent_family ? lv.exp_r0 : lv.cost_r0;
        const auto& r1 = exponent_family ? lv.exp_r1 : lv.cost_r1;
        auto value_at = [&](double t) {
            if (t <= lv.nodes.front()) return prefix.front();
            if (t >= lv.nodes.back()) return prefix.back();
            const auto it = std::upper_bound(lv.nodes.begin(), lv.nodes.end(), t);
            const std::size_t j = static_cast<std::size_t>(it - lv.nodes.begin()) - 1;
            const double dtau_cell = lv.tau[j + 1] - lv.tau[j];
            const double dtau = lv.law->hazard(t) - lv.tau[j];
            if (dtau_cell <= 0.0) return prefix[j];
            // Rate linear in tau within the cell (trapezoid-consistent).
            const double frac = dtau / dtau_cell;
            const double rate_t = r0[j] + frac * (r1[j] - r0[j]);
            return prefix[j] + 0.5 * (r0[j] + rate_t) * dtau;
        };
        return value_at(t1) - value_at(t0);
    }

    void accumulate_slow(int level, const History& d, double t0, double t1,
                         double& exponent, double& cost) const {
        const std::shared_ptr<const SurvivalLaw> law(cm_->base.law_for(level, d));
        const std::size_t k = static_cast<std::size_t>(cm_->base.n_marks());
        std::vector<double> w(k, 0.0);
        const int cells = std::max(1, quad_cells_);
        double prev_tau = 0.0;
        double prev_exp = 0.0;
        double prev_cost = 0.0;
        for (int i = 0; i <= cells; ++i) {
            const double s = t0 + (t1 - t0) * static_cast<double>(i) / cells;
            const double tau = law->hazard(s);
            const int a_idx = policy_->action_index_at(level, s, /*left_limit=*/i == cells);
            const double u = cm_->actions[static_cast<std::size_t>(a_idx)];
            cm_->base.kernel_weights(level, d, s, std::span<double>(w));
            double rx = 0.0;
            for (std::size_t x = 0; x < k; ++x) {
                if (w[x] != 0.0) rx += w[x] * cm_->r(s, static_cast<MarkId>(x), u);
            }
            const double e_rate = 1.0 - rx;
            const double c_rate = cm_->l(s, u);
            if (i > 0) {
                exponent += 0.5 * (prev_exp + e_rate) * (tau - prev_tau);
                cost += 0.5 * (prev_cost + c_rate) * (tau - prev_tau);
            }
            prev_tau = tau;
            prev_exp = e_rate;
            prev_cost = c_rate;
        }
    }

    const ControlModel* cm_;
    const Policy* policy_;
    int quad_cells_;
    bool fast_ = false;
    std::vector<Level> levels_;
};

/// Density weight L^u_T of one path under a policy.
inline double girsanov_weight(const ControlModel& cm, const Policy& policy,
                              const Path& path) {
    return CostEvaluator(cm, policy).evaluate(path).weight;
}

struct CostReport {
    double j_hat = 0.0;
    double se = 0.0;
    double mean_weight = 0.0;   ///< E[L^u_T], should be 1
    double weight_se = 0.0;
    int zero_weight_paths = 0;
};

/// Monte-Carlo cost under the base measure: J(u) = E[ L^u_T ( int l dA + xi ) ].
inline CostReport cost_estimate(const ControlModel& cm, const Policy& policy, int n_mc,
                                std::uint64_t seed, const std::string& stream_tag = {}) {
    if (n_mc < 2) throw std::invalid_argument("cost_estimate: n_mc >= 2");
    const CostEvaluator eval(cm, policy);
    RngStream rng =
        derive_stream(seed, stream_tag.empty() ? ("cost:" + policy.name) : stream_tag);
    double sum = 0.0, sum_sq = 0.0, wsum = 0.0, wsum_sq = 0.0;
    CostReport out;
    for (int i = 0; i < n_mc; ++i) {
        const Path path = simulate_path(cm.base, rng);
        const PathCost pc = eval.evaluate(path);
        const double xi = cm.terminal.value(path.count(), path.history());
        const double v = pc.weight * (pc.running_cost + xi);
        if (!std::isfinite(v)) {
            throw std::runtime_error(
                "cost_estimate: non-finite weighted cost; consider a smaller bound C "
                "or a shorter horizon");
        }
        if (pc.zero_weight) ++out.zero_weight_paths;
        sum += v;
        sum_sq += v * v;
        wsum += pc.weight;
        wsum_sq += pc.weight * pc.weight;
    }
    const double n = static_cast<double>(n_mc);
    out.j_hat = sum / n;
    out.se = std::sqrt(std::max(0.0, (sum_sq - n * out.j_hat * out.j_hat) / (n - 1.0)) / n);
    out.mean_weight = wsum / n;
    out.weight_se = std::sqrt(
        std::max(0.0, (wsum_sq - n * out.mean_weight * out.mean_weight) / (n - 1.0)) / n);
    return out;
}

/// Direct cross-check: simulates under the controlled measure (hazard scaled
/// by r) and averages the unweighted cost. Requires r independent of the
/// mark, so the mark kernel is unchanged.
inline CostReport direct_cost_estimate(const ControlModel& cm, const Policy& policy,
                                       int n_mc, std::uint64_t seed) {
    validate_control_model(cm);
    if (!cm.base.level_homogeneous) {
        throw std::invalid_argument(
            "direct_cost_estimate: requires a level-homogeneous base model");
    }
    // The mark kernel is unchanged under the controlled measure only when r
    // does not depend on the mark; probe that before trusting it.
    for (int i = 0; i <= 4; ++i) {
        const double t = cm.base.horizon * static_cast<double>(i) / 4.0;
        for (double u : cm.actions) {
            const double r0 = cm.r(t, 0, u);
            for (int x = 1; x < cm.base.n_marks(); ++x) {
                if (std::abs(cm.r(t, x, u) - r0) > 1e-12) {
                    throw std::invalid_argument(
                        "direct_cost_estimate: requires a mark-independent intensity "
                        "factor");
                }
            }
        }
    }

    // Per-level controlled cumulative hazard on the policy grid: the prefix
    // of r(s, u(s)) against exact base-hazard increments, with the action (and
    // for time-dependent r, its value at the cell's left node) frozen per
    // cell. Inverting this prefix samples the controlled jump times exactly
    // when r is time-independent; marks keep the base kernel.
    struct ControlledLevel {
        std::vector<double> nodes, tau, prefix;
        std::shared_ptr<const SurvivalLaw> law;  ///< representative base law
    };
    const int cap = cm.base.m_cap;
    const std::size_t k = static_cast<std::size_t>(cm.base.n_marks());
    std::vector<ControlledLevel> levels;
    std::vector<History> rep_hist;
    const int fallback_cells = 1024;
    for (int n = 0; n < cap; ++n) {
        ControlledLevel lv;
        const History d = representative_history(cm.base, n);
        lv.law = std::shared_ptr<const SurvivalLaw>(cm.base.law_for(n, d));
        const Policy::LevelPolicy& lp = policy.level(n);
        if (lp.nodes.size() >= 2) {
            lv.nodes = lp.nodes;
        } else {
            lv.nodes.resize(static_cast<std::size_t>(fallback_cells) + 1);
            for (int i = 0; i <= fallback_cells; ++i) {
                lv.nodes[static_cast<std::size_t>(i)] =
                    cm.base.horizon * static_cast<double>(i) / fallback_cells;
            }
        }
        const std::size_t m = lv.nodes.size();
        lv.tau.resize(m);
        lv.prefix.assign(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) lv.tau[i] = lv.law->hazard(lv.nodes[i]);
        for (std::size_t j = 0; j + 1 < m; ++j) {
            const int a_idx = policy.action_index_at(n, lv.nodes[j], false);
            const double u = cm.actions[static_cast<std::size_t>(a_idx)];
            lv.prefix[j + 1] =
                lv.prefix[j] + cm.r(lv.nodes[j], 0, u) * (lv.tau[j + 1] - lv.tau[j]);
        }
        levels.push_back(std::move(lv));
        rep_hist.push_back(d);
    }

    // Controlled prefix value at arbitrary time, linear in base hazard
    // within a cell.
    auto prefix_at = [](const ControlledLevel& lv, double tau) {
        if (tau <= lv.tau.front()) return lv.prefix.front();
        if (tau >= lv.tau.back()) return lv.prefix.back();
        const auto it = std::upper_bound(lv.tau.begin(), lv.tau.end(), tau);
        const std::size_t j = static_cast<std::size_t>(it - lv.tau.begin()) - 1;
        const double dt = lv.tau[j + 1] - lv.tau[j];
        if (dt <= 0.0) return lv.prefix[j];
        return lv.prefix[j] + (lv.prefix[j + 1] - lv.prefix[j]) * (tau - lv.tau[j]) / dt;
    };

    // The running cost integrates l against the *base* compensator along the
    // controlled path; the evaluator's prefix sums respect the policy grid.
    const CostEvaluator eval(cm, policy);
    RngStream rng = derive_stream(seed, "direct-cost:" + policy.name);
    std::vector<double> w(k, 0.0);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        Path path;
        path.horizon = cm.base.horizon;
        double last = 0.0;
        for (int n = 0; n < cap; ++n) {
            const ControlledLevel& lv = levels[static_cast<std::size_t>(n)];
            const double p0 = prefix_at(lv, lv.law->hazard(std::max(last, lv.nodes.front())));
            const double target = p0 - std::log(rng.uniform());
            if (target > lv.prefix.back()) break;  // next jump beyond the horizon
            const auto it = std::upper_bound(lv.prefix.begin(), lv.prefix.end(), target);
            std::size_t j = (it == lv.prefix.begin())
                                ? 0
                                : static_cast<std::size_t>(it - lv.prefix.begin()) - 1;
            j = std::min(j, lv.prefix.size() - 2);
            const double dp = lv.prefix[j + 1] - lv.prefix[j];
            const double tau_star =
                (dp > 0.0) ? lv.tau[j] + (target - lv.prefix[j]) * (lv.tau[j + 1] - lv.tau[j]) / dp
                           : lv.tau[j + 1];
            double t_star = lv.law->inverse_hazard(tau_star);
            if (t_star > cm.base.horizon) t_star = cm.base.horizon;
            if (!(t_star > last)) t_star = std::nextafter(last, cm.base.horizon);
            cm.base.kernel_weights(n, rep_hist[static_cast<std::size_t>(n)], t_star,
                                   std::span<double>(w));
            const double uu = rng.uniform();
            double cum = 0.0;
            MarkId mark = cm.base.n_marks() - 1;
            for (int x = 0; x < cm.base.n_marks(); ++x) {
                cum += w[static_cast<std::size_t>(x)];
                if (cum >= uu) {
                    mark = x;
                    break;
                }
            }
            path.jumps.push_back(Event{t_star, mark});
            last = t_star;
        }
        path.truncated = (path.count() == cap) && !cm.base.bounded;
        const double cost = eval.evaluate(path).running_cost +
                            cm.terminal.value(path.count(), path.history());
        sum += cost;
        sum_sq += cost * cost;
    }
    const double n = static_cast<double>(n_mc);
    CostReport out;
    out.j_hat = sum / n;
    out.se = std::sqrt(std::max(0.0, (sum_sq - n * out.j_hat * out.j_hat) / (n - 1.0)) / n);
    out.mean_weight = 1.0;
    return out;
}

struct OptimalityRow {
    std::string policy_id;
    double j_hat = 0.0;
    double se = 0.0;
    double mean_weight = 0.0;
    double weight_se = 0.0;
};

struct OptimalityReport {
    double y0 = 0.0;
    std::vector<OptimalityRow> rows;  ///< "optimal" first, then competitors
    bool optimal_matches = false;     ///< |Y0 - J(u*)| <= 3 se
    bool competitors_above = false;   ///< every J(u_k) >= Y0 - 3 se_k
    bool weights_ok = false;          ///< every |E[L] - 1| <= 3 se
};

/// Solves the Hamiltonian equation, synthesizes the optimal policy, and
/// validates optimality against random competitor policies by weighted MC.
/// One base-measure path set is shared across all policies (common random
/// numbers), so policy comparisons are low-variance and the sweep costs a
/// single simulation pass.
inline OptimalityReport optimality_check(const ControlModel& cm, int n_mc,
                                         int n_random_policies, std::uint64_t seed,
                                         const SolverOptions& opts = {}) {
    if (n_mc < 2) throw std::invalid_argument("optimality_check: n_mc >= 2");
    validate_control_model(cm);
    BsdeSolver solver(cm.base, hamiltonian_generator(cm), cm.terminal, opts);
    OptimalityReport rep;
    rep.y0 = solver.y0();

    std::vector<Policy> policies;
    policies.push_back(synthesize_policy(cm, solver));
    RngStream prng = derive_stream(seed, "competitor-policies");
    for (int q = 0; q < n_random_policies; ++q) {
        policies.push_back(random_policy(cm, "random-" + std::to_string(q), prng));
    }

    std::vector<CostEvaluator> evals;
    evals.reserve(policies.size());
    for (const Policy& p : policies) evals.emplace_back(cm, p);

    const std::size_t np = policies.size();
    std::vector<double> sum(np, 0.0), sum_sq(np, 0.0), wsum(np, 0.0), wsum_sq(np, 0.0);
    RngStream rng = derive_stream(seed, "optimality-paths");
    for (int i = 0; i < n_mc; ++i) {
        const Path path = simulate_path(cm.base, rng);
        const double xi = cm.terminal.value(path.count(), path.history());
        for (std::size_t p = 0; p < np; ++p) {
            const PathCost pc = evals[p].evaluate(path);
            const double v = pc.weight * (pc.running_cost + xi);
            if (!std::isfinite(v)) {
                throw std::runtime_error(
                    "optimality_check: non-finite weighted cost; consider a smaller "
                    "bound C or a shorter horizon");
            }
            sum[p] += v;
            sum_sq[p] += v * v;
            wsum[p] += pc.weight;
            wsum_sq[p] += pc.weight * pc.weight;
        }
    }

    rep.optimal_matches = false;
    rep.competitors_above = true;
    rep.weights_ok = true;
    const double n = static_cast<double>(n_mc);
    for (std::size_t p = 0; p < np; ++p) {
        OptimalityRow row;
        row.policy_id = policies[p].name;
        row.j_hat = sum[p] / n;
        row.se = std::sqrt(
            std::max(0.0, (sum_sq[p] - n * row.j_hat * row.j_hat) / (n - 1.0)) / n);
        row.mean_weight = wsum[p] / n;
        row.weight_se = std::sqrt(
            std::max(0.0, (wsum_sq[p] - n * row.mean_weight * row.mean_weight) / (n - 1.0)) /
            n);
        rep.rows.push_back(row);
        if (std::abs(row.mean_weight - 1.0) > 3.0 * row.weight_se) rep.weights_ok = false;
        if (p == 0) {
            rep.optimal_matches = std::abs(rep.y0 - row.j_hat) <= 3.0 * row.se;
        } else if (row.j_hat < rep.y0 - 3.0 * row.se) {
            rep.competitors_above = false;
        }
    }
    return rep;
}

}  // namespace jumpflow
