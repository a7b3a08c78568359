#pragma once

// The marked point process model: per-level conditional survival laws for
// jump times, a mark kernel over a finite alphabet, a horizon, and a hard
// jump cap. Operations: law evaluation, inverse sampling, path simulation,
// kernel-weighted hazard integration, and the Monte-Carlo identity tying the
// compensator integral to an expectation over the next jump.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpflow/rng.hpp"
#include "jumpflow/survival.hpp"
#include "jumpflow/types.hpp"

namespace jumpflow {

/// Builds the conditional law of the next jump time after `history` at the
/// given level. Called only with level < m_cap.
using LawFactory =
    std::function<std::unique_ptr<SurvivalLaw>(int level, const History& history)>;

/// Fills `weights` (size = alphabet size) with the mark distribution at time
/// t for the next jump after `history`. Weights are nonnegative and sum to 1.
using MarkKernel = std::function<void(int level, const History& history, double t,
                                      std::span<double> weights)>;

struct MppModel {
    double horizon = 1.0;
    std::vector<std::string> alphabet;
    int m_cap = 1;        ///< hard jump cap: paths carry at most m_cap jumps
    bool bounded = false; ///< true when the cap is intrinsic (no further jump exists)
    LawFactory law;
    MarkKernel kernel;
    /// True when hazard *increments* and kernel weights depend on the history
    /// only through its level (enables the per-level solver fast path).
    bool level_homogeneous = false;

    [[nodiscard]] int n_marks() const { return static_cast<int>(alphabet.size()); }

    [[nodiscard]] std::unique_ptr<SurvivalLaw> law_for(int level,
                                                       const History& history) const {
        if (level < 0 || level >= m_cap) {
            throw std::domain_error("MppModel: no survival law at this level");
        }
        if (history.level() != level) {
            throw std::invalid_argument("MppModel: history level mismatch");
        }
        return law(level, history);
    }

    void kernel_weights(int level, const History& history, double t,
                        std::span<double> weights) const {
        if (static_cast<int>(weights.size()) != n_marks()) {
            throw std::invalid_argument("MppModel: weight span size mismatch");
        }
        kernel(level, history, t, weights);
    }
};

/// Survival value and cumulative hazard of the next-jump law at time t.
struct SurvivalHazard {
    double survival = 1.0;
    double hazard = 0.0;
};

inline SurvivalHazard survival_and_hazard(const MppModel& model, int level,
                                          const History& history, double t) {
    const auto law = model.law_for(level, history);
    if (t < law->origin() - 1e-12 || t > model.horizon + 1e-12) {
        throw std::domain_error("survival_and_hazard: time outside [D_max, horizon]");
    }
    const double g = law->survival(t);
    if (!(g > 0.0)) {
        throw std::runtime_error(
            "survival_and_hazard: survival vanished before the horizon (invalid model)");
    }
    return SurvivalHazard{g, -std::log(g)};
}

/// Draws the next jump after `history`, or nothing if it falls beyond the
/// horizon. Time uses inverse-survival sampling (uniform v -> g^{-1}(v));
/// the mark is drawn by inverse CDF over the alphabet in id order.
inline std::optional<Event> sample_next(const MppModel& model, int level,
                                        const History& history, RngStream& rng) {
    if (level >= model.m_cap) return std::nullopt;
    const auto law = model.law_for(level, history);
    const double g_horizon = law->survival(model.horizon);
    if (!(g_horizon > 0.0)) {
        throw std::runtime_error(
            "sample_next: survival vanished before the horizon (invalid model)");
    }
    const double v = rng.uniform();
    if (v < g_horizon) return std::nullopt;  // next jump beyond the horizon
    double t = law->inverse_survival(v);
    if (t <= law->origin()) {
        // Guard against inverse round-off at v ~ 1.
        t = std::nextafter(law->origin(), model.horizon);
    }
    if (t > model.horizon) t = model.horizon;

    std::vector<double> w(static_cast<std::size_t>(model.n_marks()), 0.0);
    model.kernel_weights(level, history, t, w);
    const double u = rng.uniform();
    double cum = 0.0;
    MarkId mark = model.n_marks() - 1;
    for (int x = 0; x < model.n_marks(); ++x) {
        cum += w[static_cast<std::size_t>(x)];
        if (cum >= u) {
            mark = x;
            break;
        }
    }
    return Event{t, mark};
}

/// Simulates one path. If the jump cap is hit on a model that is not
/// intrinsically bounded, the path is flagged truncated.
inline Path simulate_path(const MppModel& model, RngStream& rng) {
    Path path;
    path.horizon = model.horizon;
    History d;
    while (true) {
        const int level = d.level();
        if (level >= model.m_cap) {
            path.truncated = !model.bounded;
            break;
        }
        const auto ev = sample_next(model, level, d, rng);
        if (!ev) break;
        d = d.extend(ev->time, ev->mark);
        path.jumps.push_back(*ev);
    }
    return path;
}

/// Integrates h against the level's compensator over [t0, t1]:
///   integral of sum_x w_x(s) h(s, x) da(s),
/// by the trapezoid rule in exact hazard increments (telescopes exactly for
/// h independent of time and mark).
inline double integrate_kernel(const MppModel& model, int level, const History& history,
                               const std::function<double(double, MarkId)>& h,
                               double t0, double t1, int n_cells = 256) {
    const auto law = model.law_for(level, history);
    if (t0 < law->origin() - 1e-12 || t1 > model.horizon + 1e-12 || t1 < t0) {
        throw std::domain_error("integrate_kernel: bad integration range");
    }
    if (n_cells < 1) throw std::invalid_argument("integrate_kernel: n_cells >= 1");
    if (t1 == t0) return 0.0;

    const int k = model.n_marks();
    std::vector<double> w(static_cast<std::size_t>(k), 0.0);
    auto node_value = [&](double t) {
        model.kernel_weights(level, history, t, w);
        double s = 0.0;
        for (int x = 0; x < k; ++x) s += w[static_cast<std::size_t>(x)] * h(t, x);
        return s;
    };

    double total = 0.0;
    double t_prev = t0;
    double a_prev = law->hazard(t0);
    double h_prev = node_value(t0);
    for (int i = 1; i <= n_cells; ++i) {
        const double t = t0 + (t1 - t0) * static_cast<double>(i) / n_cells;
        const double a = law->hazard(t);
        const double hv = node_value(t);
        total += 0.5 * (h_prev + hv) * (a - a_prev);
        t_prev = t;
        a_prev = a;
        h_prev = hv;
    }
    (void)t_prev;
    return total;
}

/// Result of the compensator/next-jump identity check.
struct CompensatorCheck {
    double lhs = 0.0;  ///< quadrature of the compensator integral
    double rhs = 0.0;  ///< MC estimate of E[h(S, X) e^{a(S)} 1{S <= horizon}]
    double se = 0.0;   ///< standard error of the MC estimate
};

/// Verifies that the compensator integral of h over [D_max, horizon] equals
/// the expectation of h at the next jump weighted by e^{a(S)} on {S <= T}.
inline CompensatorCheck check_compensator_identity(
    const MppModel& model, int level, const History& history,
    const std::function<double(double, MarkId)>& h, int n_mc, std::uint64_t seed,
    int n_cells = 2048) {
    CompensatorCheck out;
    out.lhs = integrate_kernel(model, level, history, h, model.law_for(level, history)->origin(),
                               model.horizon, n_cells);

    const auto law = model.law_for(level, history);
    const double g_horizon = law->survival(model.horizon);
    RngStream rng = derive_stream(seed, "compensator-identity");
    std::vector<double> w(static_cast<std::size_t>(model.n_marks()), 0.0);

    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        const double v = rng.uniform();
        double val = 0.0;
        if (v >= g_horizon) {  // jump lands inside the horizon
            double s = law->inverse_survival(v);
            if (s > model.horizon) s = model.horizon;
            if (s <= law->origin()) s = std::nextafter(law->origin(), model.horizon);
            model.kernel_weights(level, history, s, w);
            const double u = rng.uniform();
            double cum = 0.0;
            MarkId mark = model.n_marks() - 1;
            for (int x = 0; x < model.n_marks(); ++x) {
                cum += w[static_cast<std::size_t>(x)];
                if (cum >= u) {
                    mark = x;
                    break;
                }
            }
            val = h(s, mark) / v;  // e^{a(S)} = 1/g(S) = 1/v
        }
        sum += val;
        sum_sq += val * val;
    }
    const double n = static_cast<double>(n_mc);
    out.rhs = sum / n;
    const double var = std::max(0.0, (sum_sq - n * out.rhs * out.rhs) / (n - 1.0));
    out.se = std::sqrt(var / n);
    return out;
}

/// Cumulative base compensator A_t along a realized path: the sum over
/// completed segments of each level's hazard at its exit time, plus the
/// running level's hazard at t. Levels at the cap contribute nothing.
inline double base_hazard_at(const MppModel& model, const Path& path, double t) {
    double total = 0.0;
    History d;
    for (std::size_t n = 0; n <= path.jumps.size(); ++n) {
        const int level = static_cast<int>(n);
        const double seg_start = (n == 0) ? 0.0 : path.jumps[n - 1].time;
        const double seg_end =
            (n < path.jumps.size()) ? path.jumps[n].time : model.horizon;
        if (level < model.m_cap) {
            const auto law = model.law_for(level, d);
            const double upto = std::min(t, seg_end);
            if (upto > seg_start) total += law->hazard(upto);
            if (t <= seg_end) break;
        } else {
            break;
        }
        if (n < path.jumps.size()) d = d.extend(path.jumps[n].time, path.jumps[n].mark);
    }
    return total;
}

/// A placeholder history with the required number of jumps, for use with
/// level-homogeneous models whose laws and kernels ignore the history beyond
/// its level. Tiny jitter keeps the jump times strictly increasing near 0.
inline History representative_history(const MppModel& model, int level) {
    History d;
    const double jitter = model.horizon * 1e-14;
    for (int i = 0; i < level; ++i) d = d.extend(jitter * (i + 1), 0);
    return d;
}

/// Cheap structural validation: probes laws and kernels along one nested
/// history chain, checking g(origin) = 1, positivity at the horizon,
/// monotonicity, and kernel weights that are nonnegative and sum to 1.
inline void validate_model(const MppModel& model) {
    if (!(model.horizon > 0.0)) {
        throw std::invalid_argument("MppModel: horizon must be positive");
    }
    if (model.alphabet.empty()) {
        throw std::invalid_argument("MppModel: alphabet must be nonempty");
    }
    if (model.m_cap < 0) throw std::invalid_argument("MppModel: negative jump cap");

    History d;
    const int probe_levels = std::min(model.m_cap, 8);
    std::vector<double> w(static_cast<std::size_t>(model.n_marks()), 0.0);
    for (int level = 0; level < probe_levels; ++level) {
        const auto law = model.law_for(level, d);
        const double t0 = law->origin();
        if (std::abs(law->survival(t0) - 1.0) > 1e-9) {
            throw std::runtime_error("validate_model: survival at the origin is not 1");
        }
        if (!(law->survival(model.horizon) > 0.0)) {
            throw std::runtime_error(
                "validate_model: survival vanishes at or before the horizon");
        }
        double prev = 1.0;
        for (int i = 1; i <= 16; ++i) {
            const double t = t0 + (model.horizon - t0) * i / 16.0;
            const double g = law->survival(t);
            if (g > prev + 1e-12) {
                throw std::runtime_error("validate_model: survival is not nonincreasing");
            }
            prev = g;
        }
        const double t_mid = 0.5 * (t0 + model.horizon);
        model.kernel_weights(level, d, t_mid, w);
        double sum = 0.0;
        int best = 0;
        for (int x = 0; x < model.n_marks(); ++x) {
            const double wx = w[static_cast<std::size_t>(x)];
            if (wx < -1e-12) {
                throw std::runtime_error("validate_model: negative kernel weight");
            }
            sum += wx;
            if (wx > w[static_cast<std::size_t>(best)]) best = x;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::runtime_error("validate_model: kernel weights do not sum to 1");
        }
        // Extend along the most likely mark at a strictly later probe time.
        const double t_next =
            (d.dmax() < t_mid) ? t_mid : 0.5 * (d.dmax() + model.horizon);
        d = d.extend(t_next, best);
    }
}

}  // namespace jumpflow
