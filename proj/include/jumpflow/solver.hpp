#pragma once

// Backward solver. The equation driven by the marked point process reduces,
// level by level in the jump count, to a family of deterministic backward
// integral equations against each level's conditional hazard:
//
//   y(t) = u + integral_t^T integrand(s, y(s)) da(s),   t in [D_max, T],
//
// where the integrand couples the current level to the next one through the
// diagonal extension values yhat(s, x) = y_next(history + (s,x))(s) and the
// candidate integrand zeta(s, x) = yhat(s, x) - y(s). The solution of the
// original equation is recovered by stitching level functions along a path,
// with jumps of size Z(S, X) = yhat(S, X) - y(S-).
//
// Each level solve is a Picard iteration with backward trapezoid accumulation
// in exact hazard increments; iterates converge factorially in the total
// hazard, so no smallness condition is needed. Two evaluation modes exist:
// a memoized lazy recursion over histories (general), and a per-level fast
// path used when hazard increments and kernels are history-independent and
// the terminal value depends only on the jump count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jumpflow/generator.hpp"
#include "jumpflow/model.hpp"

namespace jumpflow {

class PicardError : public std::runtime_error {
public:
    explicit PicardError(const std::string& what) : std::runtime_error(what) {}
};

struct SolverOptions {
    enum class Mode { automatic, full_history, level_only };

    int n_grid = 2000;          ///< number of grid cells per level over [D_max, T]
    double tol_picard = 1e-10;  ///< sup-norm stopping tolerance of the iteration
    int max_iters = 200;
    Mode mode = Mode::automatic;
    double initial_offset = 0.0;   ///< added to the Picard starting guess (testing)
    std::size_t memo_limit = 20000;
};

/// A solved level function on its node grid. Between nodes the solution is
/// the cell-wise quadratic reconstruction in the hazard variable: with
/// tau = a(s) - a_j on cell j and F~ the linear interpolant of the nodal
/// integrands, y(tau) = y_j - tau F_j - tau^2 (F_{j+1}-F_j) / (2 Delta).
/// The reconstruction satisfies y' = -F~ pointwise and matches the trapezoid
/// node relation exactly, which is what the identity checks integrate.
struct LevelFunction {
    int level = 0;
    double terminal_value = 0.0;
    std::vector<double> t;  ///< nodes, ascending; t.back() is the horizon
    std::vector<double> a;  ///< cumulative hazard of the solve's law at the nodes
    std::vector<double> y;  ///< solution values at the nodes
    std::vector<double> f;  ///< kernel-combined generator integrand at the nodes
    /// Optional retained per-mark data, row-major by node: index k * n_marks + x.
    std::vector<double> yhat;
    std::vector<double> weights;
    int n_marks = 0;
    /// The law the solve integrated against (null for constant levels). Its
    /// hazard is consistent with `a`, so tau = law->hazard(s) - a[j] is the
    /// exact in-cell hazard coordinate used by the identity checks.
    std::shared_ptr<const SurvivalLaw> law;

    [[nodiscard]] std::size_t n_nodes() const { return t.size(); }

    [[nodiscard]] bool is_constant() const { return t.size() < 2 || !law; }

    [[nodiscard]] std::size_t cell_of(double s) const {
        if (t.size() < 2) return 0;
        const auto it = std::upper_bound(t.begin(), t.end(), s);
        std::size_t j = static_cast<std::size_t>(it - t.begin());
        if (j == 0) return 0;
        if (j >= t.size()) return t.size() - 2;
        return j - 1;
    }

    /// Quadratic-in-hazard reconstruction given the exact tau = a(s) - a[j].
    [[nodiscard]] double value_in_cell(std::size_t j, double tau) const {
        if (is_constant()) return y.empty() ? terminal_value : y.front();
        const double delta = a[j + 1] - a[j];
        if (delta <= 0.0) return y[j];
        const double df = f[j + 1] - f[j];
        return y[j] - tau * f[j] - 0.5 * tau * tau * df / delta;
    }

    /// Linear-in-hazard interpolation of the integrand within cell j.
    [[nodiscard]] double integrand_in_cell(std::size_t j, double tau) const {
        if (is_constant()) return 0.0;
        const double delta = a[j + 1] - a[j];
        if (delta <= 0.0) return f[j];
        return f[j] + tau * (f[j + 1] - f[j]) / delta;
    }

    /// Exact in-cell hazard coordinate of s (requires the law).
    [[nodiscard]] double tau_of(std::size_t j, double s) const {
        if (!law) return 0.0;
        return law->hazard(s) - a[j];
    }

    /// Value at s via the reconstruction with the exact hazard coordinate
    /// when a law is attached, else nodal clamping.
    [[nodiscard]] double value_at(double s) const {
        if (is_constant()) return y.empty() ? terminal_value : y.front();
        if (s <= t.front()) return y.front();
        if (s >= t.back()) return y.back();
        const std::size_t j = cell_of(s);
        return value_in_cell(j, tau_of(j, s));
    }

    [[nodiscard]] double integrand_at(double s) const {
        if (is_constant()) return 0.0;
        if (s <= t.front()) return f.front();
        if (s >= t.back()) return f.back();
        const std::size_t j = cell_of(s);
        return integrand_in_cell(j, tau_of(j, s));
    }

    /// Retained diagonal extension value for mark x at s (linear in time).
    [[nodiscard]] double yhat_at(double s, MarkId x) const {
        if (yhat.empty()) {
            throw std::logic_error("LevelFunction: per-mark values were not retained");
        }
        const std::size_t k = static_cast<std::size_t>(n_marks);
        if (t.size() < 2) return yhat[static_cast<std::size_t>(x)];
        if (s <= t.front()) return yhat[static_cast<std::size_t>(x)];
        if (s >= t.back()) return yhat[(t.size() - 1) * k + static_cast<std::size_t>(x)];
        const std::size_t j = cell_of(s);
        const double w = (s - t[j]) / (t[j + 1] - t[j]);
        const double lo = yhat[j * k + static_cast<std::size_t>(x)];
        const double hi = yhat[(j + 1) * k + static_cast<std::size_t>(x)];
        return lo + w * (hi - lo);
    }

    /// Retained kernel weight for mark x at s (linear in time).
    [[nodiscard]] double weight_at(double s, MarkId x) const {
        if (weights.empty()) {
            throw std::logic_error("LevelFunction: per-mark weights were not retained");
        }
        const std::size_t k = static_cast<std::size_t>(n_marks);
        if (t.size() < 2) return weights[static_cast<std::size_t>(x)];
        if (s <= t.front()) return weights[static_cast<std::size_t>(x)];
        if (s >= t.back()) {
            return weights[(t.size() - 1) * k + static_cast<std::size_t>(x)];
        }
        const std::size_t j = cell_of(s);
        const double w = (s - t[j]) / (t[j + 1] - t[j]);
        const double lo = weights[j * k + static_cast<std::size_t>(x)];
        const double hi = weights[(j + 1) * k + static_cast<std::size_t>(x)];
        return lo + w * (hi - lo);
    }
};

/// One inter-jump segment of a solved path.
struct PathSegment {
    int level = 0;
    double t_begin = 0.0;  ///< segment start (jump time S_n, or 0)
    double t_end = 0.0;    ///< segment end (next jump time, or the horizon)
    double a_offset = 0.0; ///< cumulative base compensator at t_begin
    std::shared_ptr<const LevelFunction> fn;
    std::shared_ptr<const SurvivalLaw> law;  ///< this level's law (null at the cap)
};

/// A backward solution evaluated along one realized path.
struct PathSolution {
    const MppModel* model = nullptr;
    Path path;
    double terminal_value = 0.0;
    std::vector<PathSegment> segments;

    [[nodiscard]] double y0() const { return segments.front().fn->value_at(0.0); }

    /// Right-continuous value at t.
    [[nodiscard]] double y(double t) const {
        for (std::size_t i = segments.size(); i-- > 0;) {
            if (t >= segments[i].t_begin) return segments[i].fn->value_at(t);
        }
        return segments.front().fn->value_at(t);
    }

    /// Left limit at t (value of the segment running up to t).
    [[nodiscard]] double y_left(double t) const {
        for (std::size_t i = segments.size(); i-- > 0;) {
            if (t > segments[i].t_begin) return segments[i].fn->value_at(t);
        }
        return segments.front().fn->value_at(t);
    }

    /// Jump size at the i-th jump, computed from the two segment functions so
    /// that Delta Y = Z holds exactly.
    [[nodiscard]] double jump_z(std::size_t i) const {
        const double s = path.jumps.at(i).time;
        return segments.at(i + 1).fn->value_at(s) - segments.at(i).fn->value_at(s);
    }

    /// Candidate integrand z(t, x) on the segment running at t (predictable
    /// convention: at a jump time the pre-jump segment applies). At a jump
    /// (t, x) of the path itself this returns the exact jump size; marks
    /// outside the kernel support carry the null-integrand convention z = 0.
    [[nodiscard]] double z(double t, MarkId x) const {
        for (std::size_t i = 0; i < path.jumps.size(); ++i) {
            if (path.jumps[i].time == t && path.jumps[i].mark == x) return jump_z(i);
        }
        const PathSegment& seg = segment_left(t);
        if (!seg.fn->yhat.empty()) {
            return seg.fn->yhat_at(t, x) - seg.fn->value_at(t);
        }
        return 0.0;
    }

    /// Base compensator A_t along the path (exact via the segment laws).
    [[nodiscard]] double base_hazard(double t) const {
        for (std::size_t i = segments.size(); i-- > 0;) {
            const PathSegment& seg = segments[i];
            if (t >= seg.t_begin || i == 0) {
                if (!seg.law) return seg.a_offset;
                const double upto = std::clamp(t, seg.t_begin, seg.t_end);
                return seg.a_offset + seg.law->hazard(upto);
            }
        }
        return 0.0;
    }

    [[nodiscard]] const PathSegment& segment_left(double t) const {
        for (std::size_t i = segments.size(); i-- > 0;) {
            if (t > segments[i].t_begin) return segments[i];
        }
        return segments.front();
    }
};

/// Convergence/monotonicity report for solving under increasing jump caps.
struct TruncationReport {
    std::vector<int> caps;
    std::vector<double> y0;          ///< solver value per cap
    std::vector<double> delta_proxy; ///< MC tail-error proxy per cap
    std::vector<double> delta_se;
    double reference_mc = 0.0;       ///< independent MC of the terminal expectation
    double reference_se = 0.0;
};

namespace detail {

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    return h;
}

inline std::uint64_t double_bits(double x) {
    std::uint64_t b = 0;
    std::memcpy(&b, &x, sizeof(b));
    return b;
}

inline std::uint64_t memo_key(int level, const History& d, std::size_t n_nodes,
                              double first_node) {
    std::uint64_t h = 1469598103934665603ULL;
    h = hash_mix(h, static_cast<std::uint64_t>(level));
    for (const Event& e : d.events()) {
        h = hash_mix(h, double_bits(e.time));
        h = hash_mix(h, static_cast<std::uint64_t>(e.mark) + 1);
    }
    h = hash_mix(h, n_nodes);
    h = hash_mix(h, double_bits(first_node));
    return h;
}

}  // namespace detail

class BsdeSolver {
public:
    /// The model is held by pointer and must outlive the solver.
    BsdeSolver(const MppModel& model, GeneratorSpec gen, TerminalSpec terminal,
               SolverOptions opts = {})
        : model_(&model),
          gen_(std::move(gen)),
          terminal_(std::move(terminal)),
          opts_(opts) {
        if (opts_.n_grid < 1) throw std::invalid_argument("SolverOptions: n_grid >= 1");
        if (!(opts_.tol_picard > 0.0)) {
            throw std::invalid_argument("SolverOptions: tol_picard must be positive");
        }
        validate_model(*model_);
        const bool eligible = model_->level_homogeneous && terminal_.count_only;
        if (opts_.mode == SolverOptions::Mode::level_only && !eligible) {
            throw std::invalid_argument(
                "SolverOptions: level_only mode requires history-independent hazard "
                "increments/kernels and a count-only terminal");
        }
        fast_path_ = (opts_.mode == SolverOptions::Mode::level_only) ||
                     (opts_.mode == SolverOptions::Mode::automatic && eligible);
    }

    [[nodiscard]] bool uses_fast_path() const { return fast_path_; }

    /// Level-0 function from the empty history.
    [[nodiscard]] std::shared_ptr<const LevelFunction> root() {
        if (fast_path_) {
            solve_levels_fast();
            return levels_fast_[0];
        }
        if (!root_) {
            root_ = solve_level_full(0, History(), make_nodes(0.0), /*retain=*/true);
        }
        return root_;
    }

    [[nodiscard]] double y0() { return root()->value_at(0.0); }

    /// Solves along a realized path, stitching one level function per
    /// inter-jump segment.
    [[nodiscard]] PathSolution solve_path(const Path& path) {
        PathSolution sol;
        sol.model = model_;
        sol.path = path;
        sol.terminal_value = terminal_.value(path.count(), path.history());

        if (fast_path_) solve_levels_fast();

        History d;
        double a_offset = 0.0;
        const int n_jumps = path.count();
        for (int n = 0; n <= n_jumps; ++n) {
            PathSegment seg;
            seg.level = n;
            seg.t_begin = (n == 0) ? 0.0 : path.jumps[static_cast<std::size_t>(n - 1)].time;
            seg.t_end =
                (n < n_jumps) ? path.jumps[static_cast<std::size_t>(n)].time : model_->horizon;
            seg.a_offset = a_offset;
            if (n < model_->m_cap) {
                seg.law = std::shared_ptr<const SurvivalLaw>(model_->law_for(n, d));
            }
            if (n >= model_->m_cap) {
                seg.fn = constant_level(n, d, seg.t_begin);
            } else if (fast_path_) {
                seg.fn = levels_fast_[static_cast<std::size_t>(n)];
            } else if (n == 0) {
                seg.fn = root();
            } else {
                seg.fn = solve_level_full(n, d, make_nodes(seg.t_begin), /*retain=*/true);
            }
            if (seg.law && seg.t_end > seg.t_begin) {
                a_offset += seg.law->hazard(seg.t_end);
            }
            sol.segments.push_back(std::move(seg));
            if (n < n_jumps) {
                const Event& e = path.jumps[static_cast<std::size_t>(n)];
                d = d.extend(e.time, e.mark);
            }
        }
        return sol;
    }

    /// Per-level functions of the fast path (levels 0..m_cap).
    [[nodiscard]] const std::vector<std::shared_ptr<const LevelFunction>>&
    level_functions() {
        if (!fast_path_) {
            throw std::logic_error("BsdeSolver: level_functions() requires the fast path");
        }
        solve_levels_fast();
        return levels_fast_;
    }

    /// Low-level single-interval solve on explicit node data (`h` and `w`
    /// row-major by node). Exposed for the solve_interval free function.
    [[nodiscard]] LevelFunction solve_interval_on(
        int level, double terminal_u, std::vector<double> nodes, std::vector<double> a,
        std::vector<double> h, std::vector<double> w,
        std::shared_ptr<const SurvivalLaw> law) const {
        return picard_solve(level, terminal_u, std::move(nodes), std::move(a),
                            std::move(h), std::move(w), /*retain=*/true, std::move(law));
    }

    [[nodiscard]] const MppModel& model() const { return *model_; }
    [[nodiscard]] const GeneratorSpec& generator() const { return gen_; }
    [[nodiscard]] const TerminalSpec& terminal() const { return terminal_; }
    [[nodiscard]] const SolverOptions& options() const { return opts_; }

private:
    // ===== grids =====

    [[nodiscard]] std::vector<double> make_nodes(double t_begin) const {
        const double horizon = model_->horizon;
        const double len = horizon - t_begin;
        if (len <= 0.0) return {horizon};
        const int cells = std::max(
            1, static_cast<int>(std::llround(static_cast<double>(opts_.n_grid) * len /
                                             horizon)));
        std::vector<double> nodes(static_cast<std::size_t>(cells) + 1);
        for (int i = 0; i <= cells; ++i) {
            nodes[static_cast<std::size_t>(i)] =
                t_begin + len * static_cast<double>(i) / cells;
        }
        nodes.back() = horizon;
        return nodes;
    }

    // ===== generic single-level Picard solve =====

    [[nodiscard]] LevelFunction picard_solve(int level, double terminal_u,
                                             std::vector<double> nodes,
                                             std::vector<double> a, std::vector<double> h,
                                             std::vector<double> w, bool retain,
                                             std::shared_ptr<const SurvivalLaw> law) const {
        const std::size_t n = nodes.size();
        const std::size_t k = static_cast<std::size_t>(model_->n_marks());
        LevelFunction out;
        out.level = level;
        out.terminal_value = terminal_u;
        out.t = std::move(nodes);
        out.a = std::move(a);
        out.n_marks = static_cast<int>(k);
        out.law = std::move(law);
        out.y.assign(n, terminal_u + opts_.initial_offset);
        out.f.assign(n, 0.0);

        std::vector<double> zeta(k, 0.0);
        std::vector<double> y_new(n, 0.0);

        auto integrand_at_node = [&](std::size_t idx, double y_val) {
            const std::span<const double> w_row(&w[idx * k], k);
            const std::span<const double> h_row(&h[idx * k], k);
            for (std::size_t x = 0; x < k; ++x) zeta[x] = h_row[x] - y_val;
            return gen_.integrand(out.t[idx], w_row, std::span<const double>(zeta), y_val);
        };

        if (n < 2) {
            out.y.assign(std::max<std::size_t>(n, 1), terminal_u);
            out.f.assign(std::max<std::size_t>(n, 1), 0.0);
        } else {
            double delta = std::numeric_limits<double>::infinity();
            for (int iter = 0; iter < opts_.max_iters && delta >= opts_.tol_picard;
                 ++iter) {
                for (std::size_t i = 0; i < n; ++i) {
                    out.f[i] = integrand_at_node(i, out.y[i]);
                }
                double acc = 0.0;
                y_new[n - 1] = terminal_u;
                for (std::size_t i = n - 1; i-- > 0;) {
                    acc += 0.5 * (out.f[i] + out.f[i + 1]) * (out.a[i + 1] - out.a[i]);
                    y_new[i] = terminal_u + acc;
                }
                delta = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    delta = std::max(delta, std::abs(y_new[i] - out.y[i]));
                }
                out.y.swap(y_new);
            }
            if (delta >= opts_.tol_picard) {
                const double lip = gen_.lipschitz_z + gen_.lipschitz_y;
                throw PicardError(
                    "Picard iteration did not converge within max_iters; effective "
                    "contraction scale (L+L')*total_hazard = " +
                    std::to_string(lip * (out.a.back() - out.a.front())));
            }
            // Final integrand pass so the stored relation matches the solution.
            for (std::size_t i = 0; i < n; ++i) out.f[i] = integrand_at_node(i, out.y[i]);
        }

        if (retain) {
            out.yhat = std::move(h);
            out.weights = std::move(w);
        }
        return out;
    }

    // ===== full-history recursion =====

    std::shared_ptr<const LevelFunction> solve_level_full(int level, const History& d,
                                                          std::vector<double> nodes,
                                                          bool retain) {
        const std::uint64_t key = detail::memo_key(level, d, nodes.size(), nodes.front());
        if (!retain) {
            const auto it = memo_.find(key);
            if (it != memo_.end()) return it->second;
        }

        if (level >= model_->m_cap) {
            auto fn = constant_level(level, d, nodes.front());
            if (!retain) remember(key, fn);
            return fn;
        }

        const std::size_t n = nodes.size();
        const std::size_t k = static_cast<std::size_t>(model_->n_marks());
        std::shared_ptr<const SurvivalLaw> law(model_->law_for(level, d));
        const double horizon = model_->horizon;

        std::vector<double> a(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) a[i] = law->hazard(nodes[i]);

        std::vector<double> w(n * k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            model_->kernel_weights(level, d, nodes[i], std::span<double>(&w[i * k], k));
        }
        std::vector<char> need(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t x = 0; x < k; ++x) {
                if (w[i * k + x] > 0.0) need[x] = 1;
            }
        }

        std::vector<double> h(n * k, 0.0);
        if (n >= 2) {
            for (std::size_t i = 0; i < n; ++i) {
                // The diagonal extension adds a jump at the node time; at the
                // anchor node (the last jump time itself) use the continuous
                // limit from the right.
                double t_ext = nodes[i];
                if (t_ext <= d.dmax()) {
                    t_ext = d.dmax() + 1e-12 * (horizon - d.dmax());
                }
                const bool at_horizon = (i + 1 == n) || t_ext >= horizon;
                for (std::size_t x = 0; x < k; ++x) {
                    if (!need[x]) continue;
                    const History child_d = d.extend(std::min(t_ext, horizon),
                                                     static_cast<MarkId>(x));
                    if (level + 1 >= model_->m_cap || at_horizon) {
                        // At the horizon the extension value is the terminal
                        // value of the extended history.
                        h[i * k + x] = terminal_.value(level + 1, child_d);
                    } else {
                        std::vector<double> child_nodes(
                            nodes.begin() + static_cast<std::ptrdiff_t>(i), nodes.end());
                        child_nodes.front() = t_ext;
                        const auto child = solve_level_full(level + 1, child_d,
                                                            std::move(child_nodes),
                                                            /*retain=*/false);
                        h[i * k + x] = child->y.front();
                    }
                }
            }
        }

        auto fn = std::make_shared<LevelFunction>(
            picard_solve(level, terminal_.value(level, d), std::move(nodes), std::move(a),
                         std::move(h), std::move(w), retain, law));
        if (retain && !fn->yhat.empty()) {
            // Null-integrand convention for marks outside the kernel support.
            for (std::size_t i = 0; i < fn->t.size(); ++i) {
                for (std::size_t x = 0; x < k; ++x) {
                    if (!need[x]) fn->yhat[i * k + x] = fn->y[i];
                }
            }
        }
        std::shared_ptr<const LevelFunction> out = fn;
        if (!retain) remember(key, out);
        return out;
    }

    void remember(std::uint64_t key, std::shared_ptr<const LevelFunction> fn) {
        if (memo_.size() < opts_.memo_limit) memo_.emplace(key, std::move(fn));
    }

    // ===== per-level fast path =====

    void solve_levels_fast() {
        if (!levels_fast_.empty()) return;
        const int cap = model_->m_cap;
        const std::size_t k = static_cast<std::size_t>(model_->n_marks());
        const std::vector<double> nodes = make_nodes(0.0);
        const std::size_t n = nodes.size();

        levels_fast_.assign(static_cast<std::size_t>(cap) + 1, nullptr);
        levels_fast_[static_cast<std::size_t>(cap)] =
            constant_level(cap, representative_history(*model_, cap), 0.0, nodes);

        for (int level = cap - 1; level >= 0; --level) {
            const History d = representative_history(*model_, level);
            std::shared_ptr<const SurvivalLaw> law(model_->law_for(level, d));
            std::vector<double> a(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) a[i] = law->hazard(nodes[i]);
            std::vector<double> w(n * k, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                model_->kernel_weights(level, d, nodes[i], std::span<double>(&w[i * k], k));
            }
            const LevelFunction& next = *levels_fast_[static_cast<std::size_t>(level) + 1];
            std::vector<double> h(n * k, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = (next.t.size() == n) ? next.y[i] : next.terminal_value;
                for (std::size_t x = 0; x < k; ++x) h[i * k + x] = v;
            }
            levels_fast_[static_cast<std::size_t>(level)] =
                std::make_shared<LevelFunction>(picard_solve(
                    level, terminal_.value(level, d), nodes, std::move(a), std::move(h),
                    std::move(w), /*retain=*/true, std::move(law)));
        }
    }

    [[nodiscard]] std::shared_ptr<const LevelFunction> constant_level(
        int level, const History& d, double t_begin,
        std::optional<std::vector<double>> nodes = std::nullopt) const {
        auto fn = std::make_shared<LevelFunction>();
        fn->level = level;
        fn->terminal_value = terminal_.value(level, d);
        fn->n_marks = model_->n_marks();
        if (nodes) {
            fn->t = *nodes;
        } else if (t_begin >= model_->horizon) {
            fn->t = {model_->horizon};
        } else {
            fn->t = {t_begin, model_->horizon};
        }
        fn->a.assign(fn->t.size(), 0.0);
        fn->y.assign(fn->t.size(), fn->terminal_value);
        fn->f.assign(fn->t.size(), 0.0);
        return fn;
    }

    const MppModel* model_;
    GeneratorSpec gen_;
    TerminalSpec terminal_;
    SolverOptions opts_;
    bool fast_path_ = false;
    std::shared_ptr<const LevelFunction> root_;
    std::vector<std::shared_ptr<const LevelFunction>> levels_fast_;
    std::unordered_map<std::uint64_t, std::shared_ptr<const LevelFunction>> memo_;
};

// ===== free-function operations =====

/// Solves one level's backward equation with caller-supplied diagonal
/// extension values yhat(t, x). This is the single-interval building block;
/// the recursive solver wires levels together through the same routine.
inline LevelFunction solve_interval(const MppModel& model, int level, const History& d,
                                    const GeneratorSpec& gen, const TerminalSpec& terminal,
                                    const std::function<double(double, MarkId)>& yhat,
                                    const SolverOptions& opts = {}) {
    if (level >= model.m_cap) {
        throw std::invalid_argument("solve_interval: level must be below the jump cap");
    }
    std::shared_ptr<const SurvivalLaw> law(model.law_for(level, d));
    const double t0 = std::max(law->origin(), 0.0);
    const double horizon = model.horizon;
    const int cells = std::max(1, opts.n_grid);
    const std::size_t n = static_cast<std::size_t>(cells) + 1;
    const std::size_t k = static_cast<std::size_t>(model.n_marks());

    std::vector<double> nodes(n), a(n), w(n * k, 0.0), h(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = t0 + (horizon - t0) * static_cast<double>(i) / cells;
    }
    nodes.back() = horizon;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = law->hazard(nodes[i]);
        model.kernel_weights(level, d, nodes[i], std::span<double>(&w[i * k], k));
        for (std::size_t x = 0; x < k; ++x) {
            h[i * k + x] = yhat(nodes[i], static_cast<MarkId>(x));
        }
    }

    BsdeSolver shim(model, gen, terminal, opts);
    return shim.solve_interval_on(level, terminal.value(level, d), std::move(nodes),
                                  std::move(a), std::move(h), std::move(w), std::move(law));
}

/// Full solve along a realized path with a bounded (capped) model.
inline PathSolution solve_bounded(const MppModel& model, const GeneratorSpec& gen,
                                  const TerminalSpec& terminal, const Path& path,
                                  const SolverOptions& opts = {}) {
    BsdeSolver solver(model, gen, terminal, opts);
    return solver.solve_path(path);
}

/// The candidate-integrand process of a solved path.
struct ZProcess {
    const PathSolution* solution;
    double operator()(double t, MarkId x) const { return solution->z(t, x); }
};

inline ZProcess extract_z(const PathSolution& solution) { return ZProcess{&solution}; }

/// Sup over grid times of the pathwise equation defect
///   | Y_t + sum_{S_i > t} Z_i - xi - integral_t^T F dA |,
/// evaluated with the same trapezoid rule the solver uses (partial cells use
/// the exact linear-in-hazard integrand, which integrates exactly). `y_shift`,
/// when given, perturbs the Y values only, to demonstrate sensitivity.
inline double bsde_residual(const PathSolution& sol,
                            const std::function<double(double)>& y_shift = {}) {
    double integral_above = 0.0;
    double jumps_above = 0.0;
    double residual = 0.0;
    const double xi = sol.terminal_value;

    for (std::size_t si = sol.segments.size(); si-- > 0;) {
        const PathSegment& seg = sol.segments[si];
        const LevelFunction& fn = *seg.fn;
        if (!fn.is_constant() && seg.t_end > seg.t_begin) {
            const std::size_t j_hi = fn.cell_of(std::min(seg.t_end, fn.t.back()));
            const std::size_t j_lo = fn.cell_of(std::max(seg.t_begin, fn.t.front()));
            for (std::size_t j = j_hi + 1; j-- > j_lo;) {
                const double cell_lo = std::max(fn.t[j], seg.t_begin);
                const double cell_hi = std::min(fn.t[j + 1], seg.t_end);
                if (cell_hi <= cell_lo) continue;
                const double tau_lo = fn.tau_of(j, cell_lo);
                const double tau_hi = fn.tau_of(j, cell_hi);
                const double f_lo = fn.integrand_in_cell(j, tau_lo);
                const double f_hi = fn.integrand_in_cell(j, tau_hi);
                integral_above += 0.5 * (f_lo + f_hi) * (tau_hi - tau_lo);
                const double y_val =
                    fn.value_in_cell(j, tau_lo) + (y_shift ? y_shift(cell_lo) : 0.0);
                residual = std::max(std::abs(y_val + jumps_above - xi - integral_above),
                                    residual);
            }
        } else {
            const double y_val =
                fn.value_at(seg.t_begin) + (y_shift ? y_shift(seg.t_begin) : 0.0);
            residual =
                std::max(std::abs(y_val + jumps_above - xi - integral_above), residual);
        }
        if (si > 0) jumps_above += sol.jump_z(si - 1);
    }
    return residual;
}

/// Value of the solution at time t along the path (right-continuous).
inline double evaluate_on_path(const PathSolution& sol, double t) { return sol.y(t); }

/// Solves under increasing jump caps and reports the monotone convergence
/// data plus the Monte-Carlo tail-error proxy per cap.
inline TruncationReport solve_truncated(const MppModel& unbounded, const GeneratorSpec& gen,
                                        const TerminalSpec& terminal,
                                        const std::vector<int>& caps, double alpha,
                                        double beta, int n_mc, std::uint64_t seed,
                                        const SolverOptions& opts = {}) {
    TruncationReport rep;
    rep.caps = caps;
    for (int cap : caps) {
        if (cap < 1 || cap > unbounded.m_cap) {
            throw std::invalid_argument("solve_truncated: cap outside the model range");
        }
        MppModel capped = unbounded;
        capped.m_cap = cap;
        BsdeSolver solver(capped, gen, terminal, opts);
        rep.y0.push_back(solver.y0());
    }

    // Tail proxy: E[ |xi| e^{beta A_T} alpha^{N_T} 1{N_T >= cap} ] on the
    // uncapped model, one path set shared across caps.
    std::vector<double> sums(caps.size(), 0.0);
    std::vector<double> sums_sq(caps.size(), 0.0);
    {
        RngStream rng = derive_stream(seed, "truncation-proxy");
        for (int i = 0; i < n_mc; ++i) {
            const Path p = simulate_path(unbounded, rng);
            const double xi = terminal.value(p.count(), p.history());
            const double a_t = base_hazard_at(unbounded, p, unbounded.horizon);
            const double weight = std::abs(xi) * std::exp(beta * a_t) *
                                  std::pow(alpha, static_cast<double>(p.count()));
            for (std::size_t c = 0; c < caps.size(); ++c) {
                const double v = (p.count() >= caps[c]) ? weight : 0.0;
                sums[c] += v;
                sums_sq[c] += v * v;
            }
        }
    }
    const double n = static_cast<double>(n_mc);
    for (std::size_t c = 0; c < caps.size(); ++c) {
        const double mean = sums[c] / n;
        const double var = std::max(0.0, (sums_sq[c] - n * mean * mean) / (n - 1.0));
        rep.delta_proxy.push_back(mean);
        rep.delta_se.push_back(std::sqrt(var / n));
    }

    // Independent reference expectation of the terminal value.
    {
        RngStream rng = derive_stream(seed, "truncation-reference");
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int i = 0; i < n_mc; ++i) {
            const Path p = simulate_path(unbounded, rng);
            const double xi = terminal.value(p.count(), p.history());
            sum += xi;
            sum_sq += xi * xi;
        }
        rep.reference_mc = sum / n;
        const double var =
            std::max(0.0, (sum_sq - n * rep.reference_mc * rep.reference_mc) / (n - 1.0));
        rep.reference_se = std::sqrt(var / n);
    }
    return rep;
}

}  // namespace jumpflow
