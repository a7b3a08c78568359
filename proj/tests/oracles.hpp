#pragma once

// Independent reference values for the test suite. Everything in this header
// is computed from scratch (closed forms, series sums, or a Runge-Kutta
// integration of the underlying ODE systems) without touching the library's
// solver, so each comparison pits two separate derivations against each other.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracles {

// ---------------------------------------------------------------------------
// Two-level exponential example: waits Exp(l0) then Exp(l1), the first mark
// is forced, the second is fair over two letters, the terminal pays 1 when
// the second letter is the middle one, and the generator keeps the value a
// martingale. Conditioning on the jump times gives closed forms.
// ---------------------------------------------------------------------------

/// Value between the two jumps: half the chance the second jump lands by T.
inline double example_y1(double l1, double horizon, double t) {
    return 0.5 * (1.0 - std::exp(-l1 * (horizon - t)));
}

/// Value before the first jump: integrate example_y1 against the first wait.
inline double example_y0(double l0, double l1, double horizon, double t) {
    const double u = horizon - t;
    if (std::abs(l1 - l0) <= 1e-12 * std::max(l0, l1)) {
        return 0.5 * (1.0 - std::exp(-l0 * u) - l0 * u * std::exp(-l0 * u));
    }
    return 0.5 * ((1.0 - std::exp(-l0 * u)) -
                  l0 * (std::exp(-l0 * u) - std::exp(-l1 * u)) / (l1 - l0));
}

// ---------------------------------------------------------------------------
// Poisson counts
// ---------------------------------------------------------------------------

/// E[min(min(N, sim_cap), terminal_cap)] for N ~ Poisson(mean), by series sum.
inline double poisson_capped_mean(double mean, int sim_cap, int terminal_cap) {
    double sum = 0.0;
    double p = std::exp(-mean);
    for (int n = 0; n < 80; ++n) {
        sum += static_cast<double>(std::min(std::min(n, sim_cap), terminal_cap)) * p;
        p *= mean / static_cast<double>(n + 1);
    }
    return sum;
}

/// E[g(min(N, sim_cap))] for N ~ Poisson(mean), by series sum.
template <typename G>
inline double poisson_capped_expect(double mean, int sim_cap, G g) {
    double sum = 0.0;
    double p = std::exp(-mean);
    for (int n = 0; n < 80; ++n) {
        sum += g(std::min(n, sim_cap)) * p;
        p *= mean / static_cast<double>(n + 1);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Single-interval linear equations (no further jumps contribute): with
// hazard increment a(t) and terminal u at T,
//   driver -y               ->  y(t) = u * exp(a(t) - a(T))
//   driver (c - y) (mart.)  ->  y(t) = c + (u - c) * exp(a(t) - a(T))
// ---------------------------------------------------------------------------

inline double decay_interval(double u, double a_t, double a_T) {
    return u * std::exp(a_t - a_T);
}

inline double relax_interval(double u, double c, double a_t, double a_T) {
    return c + (u - c) * std::exp(a_t - a_T);
}

// ---------------------------------------------------------------------------
// Intensity-control desk problem: unit-rate arrivals, one mark, intensity
// scaled by the chosen action u, running cost kappa * u, terminal -min(N, cap).
// The value per backlog level solves the coupled backward system
//   y_n'(t) = -min_u u * (kappa + y_{n+1}(t) - y_n(t)),   y_n(T) = -min(n, cap),
// with y_cap identically -cap. Integrated here with classic fourth-order
// Runge-Kutta on a fine grid.
// ---------------------------------------------------------------------------

inline double desk_rk4_y0(const std::vector<double>& actions, double kappa, int cap,
                          double horizon, int steps) {
    const std::size_t m = static_cast<std::size_t>(cap);
    auto rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
        for (std::size_t n = 0; n < m; ++n) {
            const double zeta =
                ((n + 1 < m) ? y[n + 1] : -static_cast<double>(cap)) - y[n];
            double best = std::numeric_limits<double>::infinity();
            for (double u : actions) best = std::min(best, u * (kappa + zeta));
            dy[n] = -best;
        }
    };
    std::vector<double> y(m);
    for (std::size_t n = 0; n < m; ++n) y[n] = -static_cast<double>(n);
    const double h = -horizon / steps;
    std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
    for (int i = 0; i < steps; ++i) {
        rhs(y, k1);
        for (std::size_t n = 0; n < m; ++n) tmp[n] = y[n] + 0.5 * h * k1[n];
        rhs(tmp, k2);
        for (std::size_t n = 0; n < m; ++n) tmp[n] = y[n] + 0.5 * h * k2[n];
        rhs(tmp, k3);
        for (std::size_t n = 0; n < m; ++n) tmp[n] = y[n] + h * k3[n];
        rhs(tmp, k4);
        for (std::size_t n = 0; n < m; ++n) {
            y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
    }
    return y[0];
}

/// In the desk problem the level just below the cap decouples: there
/// kappa + zeta = kappa - cap - y(t) stays negative, so the fast action u_max
/// is optimal throughout and the level solves the scalar linear ODE
/// y' = -u_max (kappa - cap - y) through y(T) = -(cap - 1), giving
///   y(t) = (kappa - cap) + (y(T) - (kappa - cap)) e^{u_max (t - T)}.
inline double desk_top_level(double u_max, double kappa, int cap, double horizon,
                             double t) {
    const double fixed = kappa - static_cast<double>(cap);
    const double terminal = -(static_cast<double>(cap) - 1.0);
    return fixed + (terminal - fixed) * std::exp(u_max * (t - horizon));
}

}  // namespace oracles
