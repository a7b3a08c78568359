#pragma once

// Counter-examples for the single-jump equation when the usual structural
// assumptions fail: an atom in the jump law (existence can fail outright)
// and a law supported by [0, T] (a one-parameter family of solutions indexed
// by the starting value, so uniqueness fails).

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jumpflow/survival.hpp"

namespace jumpflow {

// ===== atom case =====
//
// The jump time takes a single finite value r with probability p (else no
// jump), so the compensator has an atom of mass p at r. With terminal value
// a on {jump} and b on {no jump}, any solution is described by a quadruple
// (gamma, delta, rho, eta): the jump integrand at r, the value on [0, r),
// and the values on [r, T] with / without a jump. The system forces
//   eta = b,  rho = a,  gamma = a - b,  delta = b + p f(delta, a - b),
// and the scalar fixed-point equation for delta decides everything.

struct AtomCase {
    double r = 0.5;   ///< atom location in (0, T]
    double p = 0.5;   ///< atom mass in (0, 1)
    double a = 0.0;   ///< terminal value when the jump occurs
    double b = 0.0;   ///< terminal value when it does not
    std::function<double(double y, double z)> f;  ///< generator at the atom
};

struct AtomQuadruple {
    double gamma = 0.0;
    double delta = 0.0;
    double rho = 0.0;
    double eta = 0.0;
};

struct AtomClassification {
    enum class Kind { unique, none, infinite };
    Kind kind = Kind::unique;
    AtomQuadruple solution;  ///< valid when kind == unique
    /// Two distinct witnesses when kind == infinite (their delta differs).
    AtomQuadruple witness_a;
    AtomQuadruple witness_b;
    /// Discriminant of the degenerate family: a + p f(0, a - b).
    double discriminant = 0.0;
    bool degenerate = false;  ///< the fixed-point map had unit slope
};

/// Classifies the atom-case equation into the unique / none / infinitely-many
/// alternative. The fixed point delta = b + p f(delta, a - b) is solved by
/// bracketed bisection; when the map has unit slope (the affine degenerate
/// family), the alternative is decided by the discriminant a + p f(0, a - b),
/// matching the displayed dichotomy for generators of the form
/// f(y, z) = (y + g(z)) / p.
inline AtomClassification atom_classify(const AtomCase& c, double tol = 1e-10) {
    if (!(c.p > 0.0 && c.p < 1.0)) {
        throw std::invalid_argument("AtomCase: atom mass p must lie in (0, 1)");
    }
    if (!c.f) throw std::invalid_argument("AtomCase: generator f is required");

    const double gamma = c.a - c.b;
    auto phi = [&](double delta) { return c.b + c.p * c.f(delta, gamma); };

    AtomClassification out;
    auto quad = [&](double delta) {
        return AtomQuadruple{gamma, delta, c.a, c.b};
    };

    // Probe the slope of the fixed-point map at a few points: the degenerate
    // family is exactly the unit-slope (affine) case.
    const double probes[] = {-1.0, 0.0, 1.0};
    const double h = 1e-6;
    bool unit_slope = true;
    for (double d : probes) {
        const double slope = (phi(d + h) - phi(d - h)) / (2.0 * h);
        if (std::abs(slope - 1.0) > 1e-6) {
            unit_slope = false;
            break;
        }
    }

    if (unit_slope) {
        out.degenerate = true;
        out.discriminant = c.a + c.p * c.f(0.0, gamma);
        if (std::abs(out.discriminant) <= tol) {
            out.kind = AtomClassification::Kind::infinite;
            out.witness_a = quad(0.0);
            out.witness_b = quad(1.0);
        } else {
            out.kind = AtomClassification::Kind::none;
        }
        return out;
    }

    // Non-degenerate: locate a sign change of psi(delta) = phi(delta) - delta
    // on an expanding bracket, then bisect.
    auto psi = [&](double delta) { return phi(delta) - delta; };
    double lo = -1.0;
    double hi = 1.0;
    bool bracketed = false;
    for (int k = 0; k < 64; ++k) {
        if (psi(lo) == 0.0) {
            out.kind = AtomClassification::Kind::unique;
            out.solution = quad(lo);
            return out;
        }
        if (psi(hi) == 0.0) {
            out.kind = AtomClassification::Kind::unique;
            out.solution = quad(hi);
            return out;
        }
        if ((psi(lo) > 0.0) != (psi(hi) > 0.0)) {
            bracketed = true;
            break;
        }
        lo *= 2.0;
        hi *= 2.0;
        if (std::abs(lo) > 1e12) break;
    }
    if (!bracketed) {
        throw std::runtime_error(
            "atom_classify: could not bracket the fixed point; the generator does "
            "not appear to be Lipschitz with a contraction/crossing structure");
    }
    for (int k = 0; k < 200 && (hi - lo) > tol * (1.0 + std::abs(lo)); ++k) {
        const double mid = 0.5 * (lo + hi);
        if ((psi(mid) > 0.0) == (psi(lo) > 0.0)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.kind = AtomClassification::Kind::unique;
    out.solution = quad(0.5 * (lo + hi));
    return out;
}

// ===== support case (one-parameter solution family) =====
//
// When the jump law is continuous but supported by [0, T], the hazard blows
// up at the support endpoint and the equation with martingale generator has
// one solution per starting value w:
//   Y_t = xi 1{t >= S} + (w - integral_0^t e^{-a(s)} h(s) da(s)) e^{a(t)} 1{t < S},
// with Z_t = h(t) - Y_{t-}. The family is constructed on a grid uniform in
// the hazard coordinate and validated against the forward identity
//   y(t) = y(0) + integral_0^t (y(s) - h(s)) da(s).

struct SupportCase {
    std::shared_ptr<const SurvivalLaw> law;     ///< survival g, g(origin)=1, g(v)=0
    std::function<double(double)> h;            ///< terminal function xi = h(S)
    double horizon = 1.0;                       ///< T (support endpoint v <= T)
    double g_clip = 1e-6;                       ///< clip evaluation where g <= g_clip
};

struct FamilySolution {
    double w = 0.0;        ///< starting value; y(0) == w exactly
    double t_clip = 0.0;   ///< last evaluable time (hazard blow-up clip)
    bool clipped = false;  ///< true when t_clip < horizon
    double residual = 0.0; ///< sup over grid nodes of the forward-identity defect
    std::vector<double> t;    ///< grid times (uniform in hazard)
    std::vector<double> tau;  ///< hazard coordinates of the grid
    std::vector<double> y;    ///< constructed solution on {t < S}
    std::vector<double> p;    ///< prefix integral of e^{-a} h at the grid nodes
    std::shared_ptr<const SurvivalLaw> law;

    /// Value on {t < S} via the exact hazard transform (w - P) e^{a(s)},
    /// with P interpolated linearly in the hazard coordinate; in particular
    /// exact whenever h vanishes.
    [[nodiscard]] double value_at(double s) const {
        const double tau_s = std::min(law->hazard(std::min(s, t.back())), tau.back());
        double p_s = 0.0;
        if (tau_s >= tau.back()) {
            p_s = p.back();
        } else if (tau_s > 0.0) {
            const auto it = std::upper_bound(tau.begin(), tau.end(), tau_s);
            const std::size_t j = static_cast<std::size_t>(it - tau.begin()) - 1;
            const double frac = (tau_s - tau[j]) / (tau[j + 1] - tau[j]);
            p_s = p[j] + frac * (p[j + 1] - p[j]);
        }
        return (w - p_s) * std::exp(tau_s);
    }
};

/// Constructs the family member for starting value w on a hazard-uniform
/// grid with n cells, and reports the forward-identity residual. Integrals
/// are accumulated by composite Simpson on half-cells (midpoints located by
/// the exact inverse hazard), so the residual reflects the construction's
/// genuine defect at O(h^4).
inline FamilySolution pb1_family(const SupportCase& c, double w, int n = 20000) {
    if (!c.law) throw std::invalid_argument("SupportCase: survival law is required");
    if (!c.h) throw std::invalid_argument("SupportCase: terminal function h is required");
    if (n < 2) throw std::invalid_argument("pb1_family: n >= 2");
    if (!(c.g_clip > 0.0 && c.g_clip < 1.0)) {
        throw std::invalid_argument("pb1_family: g_clip in (0, 1)");
    }

    FamilySolution out;
    out.w = w;

    const double origin = c.law->origin();
    const double g_end = c.law->survival(c.horizon);
    if (g_end <= c.g_clip) {
        out.clipped = true;
        out.t_clip = c.law->inverse_survival(c.g_clip);
    } else {
        out.clipped = false;
        out.t_clip = c.horizon;
    }
    const double tau_max = c.law->hazard(out.t_clip);

    // Half-grid in the hazard coordinate (2n + 1 nodes).
    const std::size_t m = 2 * static_cast<std::size_t>(n);
    std::vector<double> tau_h(m + 1), t_h(m + 1), h_h(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        tau_h[j] = tau_max * static_cast<double>(j) / static_cast<double>(m);
        t_h[j] = (j == 0) ? origin : c.law->inverse_hazard(tau_h[j]);
        h_h[j] = c.h(t_h[j]);
    }

    // P(tau) = integral_0^tau e^{-u} h du on the half-grid: composite Simpson
    // on full cells, quadratic half-panel for the odd (midpoint) nodes.
    std::vector<double> p_h(m + 1, 0.0);
    for (std::size_t j = 0; j + 2 <= m; j += 2) {
        const double hh = tau_h[j + 1] - tau_h[j];
        const double g0 = std::exp(-tau_h[j]) * h_h[j];
        const double g1 = std::exp(-tau_h[j + 1]) * h_h[j + 1];
        const double g2 = std::exp(-tau_h[j + 2]) * h_h[j + 2];
        p_h[j + 1] = p_h[j] + (hh / 12.0) * (5.0 * g0 + 8.0 * g1 - g2);
        p_h[j + 2] = p_h[j] + (hh / 3.0) * (g0 + 4.0 * g1 + g2);
    }

    std::vector<double> y_h(m + 1);
    for (std::size_t j = 0; j <= m; ++j) y_h[j] = (w - p_h[j]) * std::exp(tau_h[j]);

    // Forward identity I(tau) = integral_0^tau (y - h) du, composite Simpson;
    // residual at the full-grid nodes.
    double integral = 0.0;
    double residual = 0.0;
    for (std::size_t j = 0; j + 2 <= m; j += 2) {
        const double hh = tau_h[j + 1] - tau_h[j];
        const double g0 = y_h[j] - h_h[j];
        const double g1 = y_h[j + 1] - h_h[j + 1];
        const double g2 = y_h[j + 2] - h_h[j + 2];
        integral += (hh / 3.0) * (g0 + 4.0 * g1 + g2);
        residual = std::max(residual, std::abs(y_h[j + 2] - y_h[0] - integral));
    }

    out.residual = residual;
    out.law = c.law;
    out.t.resize(static_cast<std::size_t>(n) + 1);
    out.tau.resize(static_cast<std::size_t>(n) + 1);
    out.y.resize(static_cast<std::size_t>(n) + 1);
    out.p.resize(static_cast<std::size_t>(n) + 1);
    for (std::size_t j = 0; j <= static_cast<std::size_t>(n); ++j) {
        out.t[j] = t_h[2 * j];
        out.tau[j] = tau_h[2 * j];
        out.y[j] = y_h[2 * j];
        out.p[j] = p_h[2 * j];
    }
    return out;
}

/// The associated jump integrand Z_t = h(t) - Y_{t-} of a family member.
inline double pb1_z_at(const SupportCase& c, const FamilySolution& sol, double t) {
    return c.h(t) - sol.value_at(t);
}

}  // namespace jumpflow
