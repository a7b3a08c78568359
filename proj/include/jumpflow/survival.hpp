#pragma once

// Conditional survival laws for the next jump time given a history. Each law
// lives on [origin, +inf) with origin the last jump time, satisfies
// g(origin) = 1, is continuous and nonincreasing, and exposes the cumulative
// hazard a(t) = -log g(t) plus exact inverses used for sampling and for
// hazard-variable quadrature.

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace jumpflow {

class SurvivalLaw {
public:
    virtual ~SurvivalLaw() = default;

    /// g(t) = P(next jump > t | history); defined for t >= origin().
    [[nodiscard]] virtual double survival(double t) const = 0;

    /// Cumulative hazard a(t) = -log g(t).
    [[nodiscard]] virtual double hazard(double t) const {
        return -std::log(survival(t));
    }

    /// Hazard density a'(t) where the law is absolutely continuous.
    [[nodiscard]] virtual double hazard_density(double t) const = 0;

    /// Left end of the law's domain (the conditioning history's last jump).
    [[nodiscard]] virtual double origin() const = 0;

    /// Smallest t with g(t) <= v, for v in (0, 1). Used for inverse sampling.
    [[nodiscard]] virtual double inverse_survival(double v) const = 0;

    /// t with a(t) = alpha; default goes through the survival inverse.
    [[nodiscard]] virtual double inverse_hazard(double alpha) const {
        return inverse_survival(std::exp(-alpha));
    }

protected:
    void check_domain(double t) const {
        if (t < origin() - 1e-12) {
            throw std::domain_error("SurvivalLaw: time below the law's origin");
        }
    }
};

/// Exponential tail: g(t) = exp(-rate * (t - origin)).
class ExponentialLaw final : public SurvivalLaw {
public:
    ExponentialLaw(double origin, double rate) : origin_(origin), rate_(rate) {
        if (!(rate > 0.0)) {
            throw std::invalid_argument("ExponentialLaw: rate must be positive");
        }
    }

    [[nodiscard]] double survival(double t) const override {
        check_domain(t);
        return std::exp(-rate_ * (std::max(t, origin_) - origin_));
    }

    [[nodiscard]] double hazard(double t) const override {
        check_domain(t);
        return rate_ * (std::max(t, origin_) - origin_);
    }

    [[nodiscard]] double hazard_density(double /*t*/) const override { return rate_; }

    [[nodiscard]] double origin() const override { return origin_; }

    [[nodiscard]] double inverse_survival(double v) const override {
        return origin_ - std::log(v) / rate_;
    }

    [[nodiscard]] double inverse_hazard(double alpha) const override {
        return origin_ + alpha / rate_;
    }

    [[nodiscard]] double rate() const { return rate_; }

private:
    double origin_;
    double rate_;
};

/// Uniform tail on [origin, endpoint): g(t) = (endpoint - t)/(endpoint - origin).
/// The hazard density 1/(endpoint - t) blows up toward the endpoint, so the
/// model horizon must stay strictly below it.
class UniformTailLaw final : public SurvivalLaw {
public:
    UniformTailLaw(double origin, double endpoint)
        : origin_(origin), endpoint_(endpoint) {
        if (!(endpoint > origin)) {
            throw std::invalid_argument(
                "UniformTailLaw: endpoint must exceed the origin");
        }
    }

    [[nodiscard]] double survival(double t) const override {
        check_domain(t);
        if (t >= endpoint_) return 0.0;
        return (endpoint_ - std::max(t, origin_)) / (endpoint_ - origin_);
    }

    [[nodiscard]] double hazard(double t) const override {
        const double g = survival(t);
        if (g <= 0.0) {
            throw std::domain_error("UniformTailLaw: hazard diverges at the endpoint");
        }
        return -std::log(g);
    }

    [[nodiscard]] double hazard_density(double t) const override {
        check_domain(t);
        if (t >= endpoint_) {
            throw std::domain_error("UniformTailLaw: density diverges at the endpoint");
        }
        return 1.0 / (endpoint_ - t);
    }

    [[nodiscard]] double origin() const override { return origin_; }

    [[nodiscard]] double inverse_survival(double v) const override {
        return endpoint_ - v * (endpoint_ - origin_);
    }

    [[nodiscard]] double inverse_hazard(double alpha) const override {
        return endpoint_ - (endpoint_ - origin_) * std::exp(-alpha);
    }

    [[nodiscard]] double endpoint() const { return endpoint_; }

private:
    double origin_;
    double endpoint_;
};

/// Piecewise-linear tabulated tail. The table holds an *unconditional* tail
/// function on absolute time; the conditional law given a history with last
/// jump at `origin` renormalizes it: g(t) = tail(t) / tail(origin). The
/// hazard density -tail'(t)/tail(t) is then independent of the history.
class TabulatedLaw final : public SurvivalLaw {
public:
    TabulatedLaw(double origin, std::vector<double> times, std::vector<double> tail)
        : origin_(origin), times_(std::move(times)), tail_(std::move(tail)) {
        if (times_.size() != tail_.size() || times_.size() < 2) {
            throw std::invalid_argument(
                "TabulatedLaw: need matching time/tail tables with >= 2 knots");
        }
        for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
            if (!(times_[i + 1] > times_[i])) {
                throw std::invalid_argument("TabulatedLaw: knot times must increase");
            }
            if (tail_[i + 1] > tail_[i]) {
                throw std::invalid_argument("TabulatedLaw: tail must be nonincreasing");
            }
        }
        for (double v : tail_) {
            if (!(v > 0.0)) {
                throw std::invalid_argument("TabulatedLaw: tail must stay positive");
            }
        }
        if (origin_ < times_.front() - 1e-12 || origin_ > times_.back() + 1e-12) {
            throw std::invalid_argument("TabulatedLaw: origin outside the table");
        }
        tail_at_origin_ = tail_interp(origin_);
    }

    [[nodiscard]] double survival(double t) const override {
        check_domain(t);
        return tail_interp(std::max(t, origin_)) / tail_at_origin_;
    }

    [[nodiscard]] double hazard_density(double t) const override {
        check_domain(t);
        const std::size_t i = segment(std::max(t, origin_));
        const double slope =
            (tail_[i + 1] - tail_[i]) / (times_[i + 1] - times_[i]);
        return -slope / tail_interp(std::max(t, origin_));
    }

    [[nodiscard]] double origin() const override { return origin_; }

    [[nodiscard]] double inverse_survival(double v) const override {
        const double target = v * tail_at_origin_;
        if (target >= tail_at_origin_) return origin_;
        if (target < tail_.back()) return times_.back() + 1.0;  // beyond the table
        // Find the knot segment where the tail crosses the target value.
        std::size_t i = segment(origin_);
        for (; i + 1 < times_.size(); ++i) {
            if (tail_[i + 1] <= target) break;
        }
        const double t0 = std::max(times_[i], origin_);
        const double v0 = tail_interp(t0);
        const double slope = (tail_[i + 1] - tail_[i]) / (times_[i + 1] - times_[i]);
        if (slope == 0.0) return times_[i + 1];
        return t0 + (target - v0) / slope;
    }

private:
    [[nodiscard]] std::size_t segment(double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t i = static_cast<std::size_t>(it - times_.begin());
        if (i == 0) return 0;
        if (i >= times_.size()) return times_.size() - 2;
        return i - 1;
    }

    [[nodiscard]] double tail_interp(double t) const {
        if (t <= times_.front()) return tail_.front();
        if (t >= times_.back()) return tail_.back();
        const std::size_t i = segment(t);
        const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
        return tail_[i] + w * (tail_[i + 1] - tail_[i]);
    }

    double origin_;
    std::vector<double> times_;
    std::vector<double> tail_;
    double tail_at_origin_;
};

}  // namespace jumpflow
