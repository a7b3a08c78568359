#pragma once

// Weighted norms, the pathwise absolute-value identity, and the a priori /
// stability bounds, all verified numerically on solved examples. Pathwise
// quantities are integrated with the same hazard-coordinate reconstruction
// the solver produces, so identity residuals reflect quadrature error only.

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

/// Exponential weights of the norm e^{beta A} alpha^{N}.
struct NormParams {
    double alpha = 1.0;
    double beta = 0.0;
};

struct McEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Result of a one-sided bound check: pass iff slack >= -3 se (or >= -tol
/// for deterministic checks, where se = 0).
struct BoundCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double se = 0.0;
    double slack = 0.0;
    bool pass = false;
};

/// (Y, Z) given as plain functions along one path; what the norm integrates.
struct PathFunctions {
    std::function<double(double)> y;
    std::function<double(double, MarkId)> z;
};

inline void require_norm_params(const NormParams& p) {
    if (!(p.alpha > 0.0) || !(p.beta >= 0.0)) {
        throw std::domain_error("NormParams: require alpha > 0 and beta >= 0");
    }
}

/// Admissibility for the bound checks: alpha > L and beta > 1 + alpha + L'.
inline void require_admissible(const NormParams& p, const GeneratorSpec& gen) {
    require_norm_params(p);
    if (!(p.alpha > gen.lipschitz_z) ||
        !(p.beta > 1.0 + p.alpha + gen.lipschitz_y)) {
        throw std::domain_error(
            "NormParams: bound checks require alpha > L and beta > 1 + alpha + L' "
            "(got alpha=" +
            std::to_string(p.alpha) + ", beta=" + std::to_string(p.beta) +
            " for L=" + std::to_string(gen.lipschitz_z) +
            ", L'=" + std::to_string(gen.lipschitz_y) + ")");
    }
}

namespace detail {

/// Inter-jump decomposition of a path with each segment's law and the
/// cumulative base hazard at its start. Levels at or above the model cap
/// carry no law (zero compensator).
struct SegmentInfo {
    int level = 0;
    double t_begin = 0.0;
    double t_end = 0.0;
    double a_offset = 0.0;
    std::shared_ptr<const SurvivalLaw> law;
    History history;
};

inline std::vector<SegmentInfo> decompose(const MppModel& model, const Path& path) {
    std::vector<SegmentInfo> out;
    History d;
    double a_offset = 0.0;
    const int n_jumps = path.count();
    for (int n = 0; n <= n_jumps; ++n) {
        SegmentInfo seg;
        seg.level = n;
        seg.t_begin = (n == 0) ? 0.0 : path.jumps[static_cast<std::size_t>(n - 1)].time;
        seg.t_end =
            (n < n_jumps) ? path.jumps[static_cast<std::size_t>(n)].time : path.horizon;
        seg.a_offset = a_offset;
        seg.history = d;
        if (n < model.m_cap) {
            seg.law = std::shared_ptr<const SurvivalLaw>(model.law_for(n, d));
            if (seg.t_end > seg.t_begin) a_offset += seg.law->hazard(seg.t_end);
        }
        out.push_back(std::move(seg));
        if (n < n_jumps) {
            const Event& e = path.jumps[static_cast<std::size_t>(n)];
            d = d.extend(e.time, e.mark);
        }
    }
    return out;
}

/// Trapezoid quadrature of integrand(s, weights) against the segment's
/// hazard measure, weighted by e^{beta A_s} alpha^{level}.
template <typename Integrand>
double segment_quadrature(const MppModel& model, const SegmentInfo& seg,
                          const NormParams& p, int n_cells, Integrand&& integrand) {
    if (!seg.law || !(seg.t_end > seg.t_begin)) return 0.0;
    const std::size_t k = static_cast<std::size_t>(model.n_marks());
    std::vector<double> w(k, 0.0);
    const double level_weight = std::pow(p.alpha, static_cast<double>(seg.level));
    double prev_a = 0.0;
    double prev_g = 0.0;
    double acc = 0.0;
    for (int i = 0; i <= n_cells; ++i) {
        const double s =
            seg.t_begin + (seg.t_end - seg.t_begin) * static_cast<double>(i) / n_cells;
        const double a = seg.law->hazard(s);
        model.kernel_weights(seg.level, seg.history, s, std::span<double>(w));
        const double g = integrand(s, std::span<const double>(w)) *
                         std::exp(p.beta * (seg.a_offset + a)) * level_weight;
        if (i > 0) acc += 0.5 * (prev_g + g) * (a - prev_a);
        prev_a = a;
        prev_g = g;
    }
    return acc;
}

inline double sgn(double v) { return (v > 0.0) ? 1.0 : ((v < 0.0) ? -1.0 : 0.0); }

/// Real roots of the cell-local reconstruction quadratic
///   q(tau) = y0 - f0 tau - c tau^2
/// strictly inside (lo, hi), appended to `out` in increasing order. These are
/// the only points where the solution's sign can change within a cell, so
/// integrals of sign(y)-weighted quantities are split there.
inline void reconstruction_roots(double y0, double f0, double c, double lo, double hi,
                                 std::vector<double>& out) {
    const std::size_t base = out.size();
    if (std::abs(c) * hi <= 1e-14 * (std::abs(f0) + 1e-300)) {
        if (f0 != 0.0) out.push_back(y0 / f0);
    } else {
        const double disc = f0 * f0 + 4.0 * c * y0;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            // Stable quadratic formula for -c tau^2 - f0 tau + y0 = 0.
            const double q = -0.5 * (-f0 + ((-f0 >= 0.0) ? sq : -sq));
            if (q != 0.0) out.push_back(y0 / q);
            if (q != 0.0 && c != 0.0) out.push_back(q / (-c));
        }
    }
    std::size_t keep = base;
    for (std::size_t i = base; i < out.size(); ++i) {
        if (out[i] > lo && out[i] < hi && std::isfinite(out[i])) out[keep++] = out[i];
    }
    out.resize(keep);
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(base), out.end());
}

inline void mc_push(double v, double& sum, double& sum_sq) {
    sum += v;
    sum_sq += v * v;
}

inline McEstimate mc_finish(double sum, double sum_sq, int n_mc) {
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = (n_mc > 1) ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0))
                                  : 0.0;
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// Pathwise weighted norm integral of (|Y| + |Z|) e^{beta A} alpha^{N}
/// against the compensator, over (0, T].
inline double weighted_norm_on_path(const MppModel& model, const Path& path,
                                    const PathFunctions& fns, const NormParams& p,
                                    int n_cells_per_segment = 256) {
    require_norm_params(p);
    double total = 0.0;
    for (const auto& seg : detail::decompose(model, path)) {
        total += detail::segment_quadrature(
            model, seg, p, n_cells_per_segment,
            [&](double s, std::span<const double> w) {
                double v = 0.0;
                const double y_abs = std::abs(fns.y(s));
                for (std::size_t x = 0; x < w.size(); ++x) {
                    if (w[x] <= 0.0) continue;
                    v += w[x] * (y_abs + std::abs(fns.z(s, static_cast<MarkId>(x))));
                }
                return v;
            });
    }
    return total;
}

/// Monte-Carlo estimate of the weighted norm over model paths, with the
/// per-path (Y, Z) supplied by `provider`.
inline McEstimate weighted_norm(const MppModel& model,
                                const std::function<PathFunctions(const Path&)>& provider,
                                const NormParams& p, int n_mc, std::uint64_t seed,
                                int n_cells_per_segment = 128) {
    require_norm_params(p);
    if (n_mc < 2) throw std::invalid_argument("weighted_norm: n_mc >= 2");
    RngStream rng = derive_stream(seed, "weighted-norm");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        const Path path = simulate_path(model, rng);
        const PathFunctions fns = provider(path);
        detail::mc_push(weighted_norm_on_path(model, path, fns, p, n_cells_per_segment),
                        sum, sum_sq);
    }
    return detail::mc_finish(sum, sum_sq, n_mc);
}

/// Wraps a solved path as plain (Y, Z) functions for the norm.
inline PathFunctions solution_functions(const PathSolution& sol) {
    return PathFunctions{
        [&sol](double t) { return sol.y(t); },
        [&sol](double t, MarkId x) { return sol.z(t, x); },
    };
}

/// A priori bound at time 0:
///   |Y_0| <= E[ |xi| e^{beta A_T} alpha^{N_T}
///               + integral |f(s,x,0,0)| e^{beta A} alpha^{N} dnu ].
/// The right side is estimated by MC with per-path quadrature of the data
/// term; requires admissible (alpha, beta).
inline BoundCheck apriori_bound_check(const MppModel& model, const GeneratorSpec& gen,
                                      const TerminalSpec& terminal, double y0,
                                      const NormParams& p, int n_mc, std::uint64_t seed,
                                      int n_cells_per_segment = 128) {
    require_admissible(p, gen);
    if (n_mc < 2) throw std::invalid_argument("apriori_bound_check: n_mc >= 2");
    RngStream rng = derive_stream(seed, "apriori-bound");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        const Path path = simulate_path(model, rng);
        const double xi = terminal.value(path.count(), path.history());
        const double a_t = base_hazard_at(model, path, path.horizon);
        double v = std::abs(xi) * std::exp(p.beta * a_t) *
                   std::pow(p.alpha, static_cast<double>(path.count()));
        for (const auto& seg : detail::decompose(model, path)) {
            v += detail::segment_quadrature(
                model, seg, p, n_cells_per_segment,
                [&](double s, std::span<const double> w) {
                    double data = 0.0;
                    for (std::size_t x = 0; x < w.size(); ++x) {
                        if (w[x] <= 0.0) continue;
                        data += w[x] * std::abs(gen.at_zero(s, static_cast<MarkId>(x), w));
                    }
                    return data;
                });
        }
        detail::mc_push(v, sum, sum_sq);
    }
    const McEstimate rhs = detail::mc_finish(sum, sum_sq, n_mc);
    BoundCheck out;
    out.lhs = std::abs(y0);
    out.rhs = rhs.value;
    out.se = rhs.se;
    out.slack = out.rhs - out.lhs;
    out.pass = out.slack >= -3.0 * out.se;
    return out;
}

/// Stability of the value in the terminal condition:
///   |Y'_0 - Y_0| <= E[ |xi' - xi| e^{beta A_T} alpha^{N_T} ].
inline BoundCheck stability_check(const MppModel& model, const GeneratorSpec& gen,
                                  const TerminalSpec& xi, const TerminalSpec& xi_prime,
                                  const NormParams& p, int n_mc, std::uint64_t seed,
                                  const SolverOptions& opts = {}) {
    require_admissible(p, gen);
    if (n_mc < 2) throw std::invalid_argument("stability_check: n_mc >= 2");
    BsdeSolver solver_a(model, gen, xi, opts);
    BsdeSolver solver_b(model, gen, xi_prime, opts);
    const double lhs = std::abs(solver_b.y0() - solver_a.y0());

    RngStream rng = derive_stream(seed, "stability-bound");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        const Path path = simulate_path(model, rng);
        const History d = path.history();
        const double diff =
            std::abs(xi_prime.value(path.count(), d) - xi.value(path.count(), d));
        const double a_t = base_hazard_at(model, path, path.horizon);
        detail::mc_push(diff * std::exp(p.beta * a_t) *
                            std::pow(p.alpha, static_cast<double>(path.count())),
                        sum, sum_sq);
    }
    const McEstimate rhs = detail::mc_finish(sum, sum_sq, n_mc);
    BoundCheck out;
    out.lhs = lhs;
    out.rhs = rhs.value;
    out.se = rhs.se;
    out.slack = out.rhs - out.lhs;
    out.pass = out.lhs <= out.rhs + 3.0 * out.se;
    return out;
}

/// Pathwise absolute-value identity: for a solution (Y, Z) along a path,
///
///   |Y_t| e^{beta A_t} alpha^{N_t}
///     + sum_{t < S <= T} (alpha |Y_S| - |Y_{S-}|) e^{beta A_S} alpha^{N_{S-}}
///     + beta * integral_t^T |Y_s| e^{beta A_s} alpha^{N_s} dA_s
///   = |xi| e^{beta A_T} alpha^{N_T}
///     + integral_t^T sign(Y_s) F(s) e^{beta A_s} alpha^{N_s} dA_s,
///
/// where F is the kernel-combined generator integrand. Both integrals are
/// evaluated per grid cell by Simpson's rule in the hazard coordinate against
/// the solver's reconstruction, under which the identity is exact in the
/// continuum; the returned value is the sup over grid times of |LHS - RHS|.
inline double identity_p1_check(const PathSolution& sol, const NormParams& p) {
    require_norm_params(p);
    const double xi = sol.terminal_value;
    const double a_total = sol.base_hazard(sol.path.horizon);
    const int n_total = sol.path.count();
    const double terminal_term = std::abs(xi) * std::exp(p.beta * a_total) *
                                 std::pow(p.alpha, static_cast<double>(n_total));

    double mu_sum = 0.0;    // jump terms accumulated above the current time
    double beta_int = 0.0;  // beta * integral of |Y| e^{beta A} alpha^N dA
    double gen_int = 0.0;   // integral of sign(Y) F e^{beta A} alpha^N dA
    double residual = 0.0;
    std::vector<double> breakpoints;

    auto eval_at = [&](double t, double y_val, int level) {
        const double weight = std::exp(p.beta * sol.base_hazard(t)) *
                              std::pow(p.alpha, static_cast<double>(level));
        const double lhs = std::abs(y_val) * weight + mu_sum + beta_int;
        const double rhs = terminal_term + gen_int;
        residual = std::max(residual, std::abs(lhs - rhs));
    };

    for (std::size_t si = sol.segments.size(); si-- > 0;) {
        const PathSegment& seg = sol.segments[si];
        const LevelFunction& fn = *seg.fn;
        const double level_weight = std::pow(p.alpha, static_cast<double>(seg.level));

        if (!fn.is_constant() && seg.t_end > seg.t_begin) {
            const std::size_t j_hi = fn.cell_of(std::min(seg.t_end, fn.t.back()));
            const std::size_t j_lo = fn.cell_of(std::max(seg.t_begin, fn.t.front()));
            for (std::size_t j = j_hi + 1; j-- > j_lo;) {
                const double cell_lo = std::max(fn.t[j], seg.t_begin);
                const double cell_hi = std::min(fn.t[j + 1], seg.t_end);
                if (cell_hi <= cell_lo) continue;
                const double tau_lo = fn.tau_of(j, cell_lo);
                const double tau_hi = fn.tau_of(j, cell_hi);
                // A at the cell's lower edge; within the cell A increases
                // exactly with the hazard coordinate tau.
                const double a_base = seg.a_offset + seg.law->hazard(cell_lo);

                // Split the cell at the sign changes of the reconstruction so
                // each Simpson piece has smooth integrands (sign constant).
                const double delta = fn.a[j + 1] - fn.a[j];
                const double curv =
                    (delta > 0.0) ? 0.5 * (fn.f[j + 1] - fn.f[j]) / delta : 0.0;
                breakpoints.clear();
                breakpoints.push_back(tau_lo);
                detail::reconstruction_roots(fn.y[j], fn.f[j], curv, tau_lo, tau_hi,
                                             breakpoints);
                breakpoints.push_back(tau_hi);
                for (std::size_t b = breakpoints.size() - 1; b-- > 0;) {
                    const double u = breakpoints[b];
                    const double v = breakpoints[b + 1];
                    if (!(v > u)) continue;
                    const double piece_sign =
                        detail::sgn(fn.value_in_cell(j, 0.5 * (u + v)));
                    auto terms_at = [&](double tau) {
                        const double y_val = fn.value_in_cell(j, tau);
                        const double f_val = fn.integrand_in_cell(j, tau);
                        const double w =
                            std::exp(p.beta * (a_base + (tau - tau_lo))) * level_weight;
                        return std::pair<double, double>(piece_sign * y_val * w,
                                                         piece_sign * f_val * w);
                    };
                    const auto lo = terms_at(u);
                    const auto mid = terms_at(0.5 * (u + v));
                    const auto hi = terms_at(v);
                    const double h6 = (v - u) / 6.0;
                    beta_int += p.beta * h6 * (lo.first + 4.0 * mid.first + hi.first);
                    gen_int += h6 * (lo.second + 4.0 * mid.second + hi.second);
                }
                eval_at(cell_lo, fn.value_in_cell(j, tau_lo), seg.level);
            }
        } else {
            eval_at(seg.t_begin, fn.value_at(seg.t_begin), seg.level);
        }

        if (si > 0) {
            // Jump term at S = t_begin of this segment: N_{S-} = si - 1.
            const double s = seg.t_begin;
            const double y_after = fn.value_at(s);
            const double y_before = sol.segments[si - 1].fn->value_at(s);
            mu_sum += (p.alpha * std::abs(y_after) - std::abs(y_before)) *
                      std::exp(p.beta * sol.base_hazard(s)) *
                      std::pow(p.alpha, static_cast<double>(si - 1));
        }
    }
    return residual;
}

/// Deterministic single-level bound, checked on a retained level function:
///   |y(t)| e^{rho a(t)} <= |u| e^{rho a(T)}
///       + integral_t^T (|f(s,x,0,0)| + L |yhat(s,x)|) e^{rho a(s)} dnu(s,x)
/// for rho >= L + L'. Returns the minimal slack over grid nodes (se = 0).
inline BoundCheck deterministic_bound_check(const LevelFunction& fn,
                                            const GeneratorSpec& gen, double rho) {
    if (!(rho >= gen.lipschitz_z + gen.lipschitz_y)) {
        throw std::domain_error("deterministic_bound_check: require rho >= L + L'");
    }
    if (fn.yhat.empty() || fn.weights.empty()) {
        throw std::invalid_argument(
            "deterministic_bound_check: level function must retain per-mark data");
    }
    const std::size_t n = fn.t.size();
    const std::size_t k = static_cast<std::size_t>(fn.n_marks);
    const double a_t_final = fn.a.back();

    // Integrand of the data term at each node.
    std::vector<double> data(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> w(&fn.weights[i * k], k);
        double v = 0.0;
        for (std::size_t x = 0; x < k; ++x) {
            if (w[x] <= 0.0) continue;
            v += w[x] * (std::abs(gen.at_zero(fn.t[i], static_cast<MarkId>(x), w)) +
                         gen.lipschitz_z * std::abs(fn.yhat[i * k + x]));
        }
        data[i] = v * std::exp(rho * fn.a[i]);
    }

    BoundCheck out;
    out.se = 0.0;
    double min_slack = std::numeric_limits<double>::infinity();
    double integral = 0.0;  // backward-accumulated data integral from T
    double worst_lhs = 0.0;
    double worst_rhs = 0.0;
    const double u_term = std::abs(fn.terminal_value) * std::exp(rho * a_t_final);
    for (std::size_t i = n; i-- > 0;) {
        if (i + 1 < n) {
            integral += 0.5 * (data[i] + data[i + 1]) * (fn.a[i + 1] - fn.a[i]);
        }
        const double lhs = std::abs(fn.y[i]) * std::exp(rho * fn.a[i]);
        const double rhs = u_term + integral;
        if (rhs - lhs < min_slack) {
            min_slack = rhs - lhs;
            worst_lhs = lhs;
            worst_rhs = rhs;
        }
    }
    out.lhs = worst_lhs;
    out.rhs = worst_rhs;
    out.slack = min_slack;
    out.pass = min_slack >= -1e-9;
    return out;
}

}  // namespace jumpflow
