#pragma once

// Generator and terminal-condition descriptors for the backward equations.
//
// Two generator kinds are supported. Type I evaluates per mark on the
// candidate integrand value z(t, x). Type II is mark-independent and sees a
// scalar functional eta of the whole candidate integrand; the standard
// functional is the mark-kernel average, and custom functionals (bounded by
// the kernel average in the Lipschitz sense after scaling) plug into the
// same slot — the intensity-control Hamiltonian uses this.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jumpflow/types.hpp"

namespace jumpflow {

struct GeneratorSpec {
    enum class Kind { type1, type2 };

    Kind kind = Kind::type1;

    /// Type I driver: f(t, x, y, z).
    std::function<double(double, MarkId, double, double)> f1;

    /// Type II driver: f(t, y, eta). `eta` is the functional value below.
    std::function<double(double, double, double)> f2;

    /// Functional applied to the per-mark candidate integrand for Type II:
    /// eta(t, zeta, weights) with zeta_x = yhat(t, x) - y(t). Defaults to the
    /// kernel average sum_x w_x zeta_x.
    std::function<double(double, std::span<const double>, std::span<const double>)> eta;

    double lipschitz_z = 0.0;  ///< Lipschitz constant in the integrand slot
    double lipschitz_y = 0.0;  ///< Lipschitz constant in y
    std::string name;

    /// Kernel-weighted integrand at one time node:
    ///   Type I : sum_x w_x f1(t, x, y, zeta_x)
    ///   Type II: f2(t, y, eta(t, zeta, w))   (mark-independent)
    [[nodiscard]] double integrand(double t, std::span<const double> weights,
                                   std::span<const double> zeta, double y) const {
        if (kind == Kind::type1) {
            double s = 0.0;
            for (std::size_t x = 0; x < weights.size(); ++x) {
                if (weights[x] == 0.0) continue;
                s += weights[x] * f1(t, static_cast<MarkId>(x), y, zeta[x]);
            }
            return s;
        }
        return f2(t, y, eta(t, zeta, weights));
    }

    /// Generator value at the zero solution/integrand (the "data" term of the
    /// a-priori bounds), per mark for Type I and flat for Type II.
    [[nodiscard]] double at_zero(double t, MarkId x, std::span<const double> weights) const {
        if (kind == Kind::type1) return f1(t, x, 0.0, 0.0);
        thread_local std::vector<double> zeros;
        zeros.assign(weights.size(), 0.0);
        return f2(t, 0.0, eta(t, std::span<const double>(zeros), weights));
    }

    static GeneratorSpec type1(std::function<double(double, MarkId, double, double)> f,
                               double lip_z, double lip_y, std::string name = "custom") {
        GeneratorSpec g;
        g.kind = Kind::type1;
        g.f1 = std::move(f);
        g.lipschitz_z = lip_z;
        g.lipschitz_y = lip_y;
        g.name = std::move(name);
        return g;
    }

    static GeneratorSpec type2(std::function<double(double, double, double)> f,
                               double lip_z, double lip_y, std::string name = "custom") {
        GeneratorSpec g;
        g.kind = Kind::type2;
        g.f2 = std::move(f);
        g.eta = kernel_average_eta();
        g.lipschitz_z = lip_z;
        g.lipschitz_y = lip_y;
        g.name = std::move(name);
        return g;
    }

    static GeneratorSpec type2_custom(
        std::function<double(double, double, double)> f,
        std::function<double(double, std::span<const double>, std::span<const double>)> eta,
        double lip_z, double lip_y, std::string name = "custom") {
        GeneratorSpec g;
        g.kind = Kind::type2;
        g.f2 = std::move(f);
        g.eta = std::move(eta);
        g.lipschitz_z = lip_z;
        g.lipschitz_y = lip_y;
        g.name = std::move(name);
        return g;
    }

    static std::function<double(double, std::span<const double>, std::span<const double>)>
    kernel_average_eta() {
        return [](double, std::span<const double> zeta, std::span<const double> w) {
            double s = 0.0;
            for (std::size_t x = 0; x < w.size(); ++x) s += w[x] * zeta[x];
            return s;
        };
    }

    /// The identically-zero driver.
    static GeneratorSpec zero() {
        return type1([](double, MarkId, double, double) { return 0.0; }, 0.0, 0.0, "zero");
    }

    /// Martingale normal form: f(t, x, y, z) = z, so the solution is the
    /// conditional expectation of the terminal value.
    static GeneratorSpec martingale() {
        return type1([](double, MarkId, double, double z) { return z; }, 1.0, 0.0,
                     "martingale");
    }

    /// Linear decay driver f = -y (useful closed-form test case).
    static GeneratorSpec linear_decay() {
        return type1([](double, MarkId, double y, double) { return -y; }, 0.0, 1.0,
                     "linear_decay");
    }
};

/// Terminal condition evaluated on a stopped history: the value the solution
/// takes at the horizon when exactly the recorded jumps occurred.
struct TerminalSpec {
    std::function<double(int level, const History&)> value;
    /// True when the value depends on the history only through its level
    /// (jump count); enables the per-level solver fast path.
    bool count_only = false;
    std::string name;

    static TerminalSpec from_history(std::function<double(int, const History&)> fn,
                                     std::string name = "terminal") {
        TerminalSpec t;
        t.value = std::move(fn);
        t.count_only = false;
        t.name = std::move(name);
        return t;
    }

    static TerminalSpec from_count(std::function<double(int)> fn,
                                   std::string name = "terminal") {
        TerminalSpec t;
        t.value = [fn = std::move(fn)](int level, const History&) { return fn(level); };
        t.count_only = true;
        t.name = std::move(name);
        return t;
    }

    static TerminalSpec constant(double c) {
        return from_count([c](int) { return c; }, "constant");
    }

    static TerminalSpec zero() { return constant(0.0); }

    /// Adds a constant shift (used by stability experiments).
    [[nodiscard]] TerminalSpec shifted(double delta) const {
        TerminalSpec t;
        t.value = [base = value, delta](int level, const History& d) {
            return base(level, d) + delta;
        };
        t.count_only = count_only;
        t.name = name + "+shift";
        return t;
    }
};

}  // namespace jumpflow
