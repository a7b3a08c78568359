#pragma once

// Core value types shared across the library: marks, jump histories, and
// simulated paths of a marked point process on a finite horizon.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace jumpflow {

/// Index into the finite mark alphabet of a model.
using MarkId = int;

/// Sentinel used where "no jump before the horizon" must be representable.
inline constexpr double kNoJump = std::numeric_limits<double>::infinity();

/// A single jump: time and mark drawn at that time.
struct Event {
    double time = 0.0;
    MarkId mark = 0;
};

/// An ordered jump history (t_1, x_1), ..., (t_n, x_n) with strictly
/// increasing times. The history level equals the number of recorded jumps;
/// `dmax()` is the last jump time (0 for the empty history), which is the
/// left end of the time interval the next conditional law lives on.
class History {
public:
    History() = default;

    explicit History(std::vector<Event> events) : events_(std::move(events)) {
        for (std::size_t i = 0; i < events_.size(); ++i) {
            const double prev = (i == 0) ? 0.0 : events_[i - 1].time;
            if (!(events_[i].time >= prev) || (i > 0 && events_[i].time <= prev)) {
                throw std::invalid_argument(
                    "History: jump times must be strictly increasing and nonnegative");
            }
        }
    }

    /// Number of recorded jumps (the level of the history).
    [[nodiscard]] int level() const { return static_cast<int>(events_.size()); }

    [[nodiscard]] bool empty() const { return events_.empty(); }

    /// Last jump time, or 0 for the empty history.
    [[nodiscard]] double dmax() const {
        return events_.empty() ? 0.0 : events_.back().time;
    }

    [[nodiscard]] const std::vector<Event>& events() const { return events_; }

    [[nodiscard]] const Event& at(std::size_t i) const { return events_.at(i); }

    /// Mark of the last jump; throws on the empty history.
    [[nodiscard]] MarkId last_mark() const {
        if (events_.empty()) {
            throw std::domain_error("History::last_mark: empty history");
        }
        return events_.back().mark;
    }

    /// Returns a copy extended by one jump at (t, x); requires t > dmax().
    [[nodiscard]] History extend(double t, MarkId x) const {
        if (!(t > dmax())) {
            throw std::invalid_argument(
                "History::extend: new jump time must exceed the last jump time");
        }
        History out(*this);
        out.events_.push_back(Event{t, x});
        return out;
    }

    bool operator==(const History& other) const {
        if (events_.size() != other.events_.size()) return false;
        for (std::size_t i = 0; i < events_.size(); ++i) {
            if (events_[i].time != other.events_[i].time ||
                events_[i].mark != other.events_[i].mark) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Event> events_;
};

/// A realized trajectory on [0, horizon]: the jumps that occurred, plus a
/// flag marking runs stopped by the hard jump cap of a model that is not
/// intrinsically bounded (such paths under-count late jumps).
struct Path {
    std::vector<Event> jumps;
    double horizon = 0.0;
    bool truncated = false;

    /// Jump count N_t at time t (number of jumps with time <= t).
    [[nodiscard]] int count_at(double t) const {
        int n = 0;
        for (const Event& e : jumps) {
            if (e.time <= t) ++n;
        }
        return n;
    }

    [[nodiscard]] int count() const { return static_cast<int>(jumps.size()); }

    /// History made of the first n jumps.
    [[nodiscard]] History prefix(int n) const {
        return History(std::vector<Event>(jumps.begin(), jumps.begin() + n));
    }

    /// Full history of the path.
    [[nodiscard]] History history() const { return prefix(count()); }
};

}  // namespace jumpflow
