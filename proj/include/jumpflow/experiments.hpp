#pragma once

// Experiment runner: turns a parsed config plus a resolved seed into result
// tables, plot-ready long-format series, and named assertions, then writes
// CSV files and a run manifest. All numeric work is deterministic given
// (config, seed); output writing happens in one pass at the end of a run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jumpflow/config.hpp"
#include "jumpflow/control.hpp"
#include "jumpflow/estimates.hpp"
#include "jumpflow/model.hpp"
#include "jumpflow/pathology.hpp"
#include "jumpflow/solver.hpp"

namespace jumpflow {

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shortest round-trippable decimal form used in all CSV output.
inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

inline std::string fmt_int(long long v) { return std::to_string(v); }

struct ResultTable {
    std::string name;  ///< file stem; written as <name>.csv
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size()) {
            throw std::logic_error("ResultTable: row width mismatch in " + name);
        }
        rows.push_back(std::move(row));
    }
};

struct SeriesPoint {
    std::string series;
    double x = 0.0;
    double y = 0.0;
};

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ExperimentResult {
    std::vector<ResultTable> tables;
    std::vector<SeriesPoint> series;
    std::vector<Assertion> assertions;

    [[nodiscard]] bool all_pass() const {
        return std::all_of(assertions.begin(), assertions.end(),
                           [](const Assertion& a) { return a.pass; });
    }

    void check(std::string name, bool pass, std::string detail) {
        assertions.push_back({std::move(name), pass, std::move(detail)});
    }
};

namespace detail {

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// solve: tabulate the solution from the empty history
// ---------------------------------------------------------------------------

inline ExperimentResult run_solve(const ExperimentConfig& cfg, std::uint64_t /*seed*/) {
    const MppModel model = build_model(*cfg.model);
    const GeneratorSpec gen = build_generator(*cfg.generator);
    const TerminalSpec term = build_terminal(*cfg.terminal, cfg.model->alphabet);
    BsdeSolver solver(model, gen, term, build_solver_options(cfg.numeric));
    const auto fn = solver.root();

    ExperimentResult res;
    ResultTable table;
    table.name = "solution";
    table.columns = {"t", "Y"};
    for (const std::string& mark : model.alphabet) table.columns.push_back("Z_" + mark);

    const std::size_t k = static_cast<std::size_t>(model.n_marks());
    for (std::size_t i = 0; i < fn->t.size(); ++i) {
        std::vector<std::string> row = {fmt_num(fn->t[i]), fmt_num(fn->y[i])};
        res.series.push_back({"Y", fn->t[i], fn->y[i]});
        for (std::size_t x = 0; x < k; ++x) {
            const double z = fn->yhat.empty() ? 0.0 : fn->yhat[i * k + x] - fn->y[i];
            row.push_back(fmt_num(z));
            res.series.push_back({"Z_" + model.alphabet[x], fn->t[i], z});
        }
        table.add_row(std::move(row));
    }
    res.tables.push_back(std::move(table));
    res.check("solved", true, "Y0 = " + fmt_num(fn->value_at(0.0)));
    return res;
}

// ---------------------------------------------------------------------------
// simulate: sample paths, histogram counts, compensator identity checks
// ---------------------------------------------------------------------------

inline ExperimentResult run_simulate(const ExperimentConfig& cfg, std::uint64_t seed) {
    const MppModel model = build_model(*cfg.model);
    validate_model(model);
    const int n_mc = cfg.numeric.n_mc;

    ExperimentResult res;
    ResultTable paths;
    paths.name = "paths";
    paths.columns = {"path", "jump", "t", "mark"};
    std::vector<long long> counts;

    RngStream rng = derive_stream(seed, "simulate-paths");
    for (int i = 0; i < n_mc; ++i) {
        const Path p = simulate_path(model, rng);
        if (static_cast<std::size_t>(p.count()) >= counts.size()) {
            counts.resize(static_cast<std::size_t>(p.count()) + 1, 0);
        }
        ++counts[static_cast<std::size_t>(p.count())];
        for (int j = 0; j < p.count(); ++j) {
            const Event& e = p.jumps[static_cast<std::size_t>(j)];
            paths.add_row({fmt_int(i), fmt_int(j), fmt_num(e.time),
                           model.alphabet[static_cast<std::size_t>(e.mark)]});
        }
    }
    res.tables.push_back(std::move(paths));

    ResultTable hist;
    hist.name = "counts";
    hist.columns = {"count", "paths", "frequency"};
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double freq = static_cast<double>(counts[c]) / n_mc;
        hist.add_row({fmt_int(static_cast<long long>(c)), fmt_int(counts[c]),
                      fmt_num(freq)});
        res.series.push_back({"count_frequency", static_cast<double>(c), freq});
    }
    res.tables.push_back(std::move(hist));

    // Compensator / next-jump identity for three integrands at the root level.
    ResultTable comp;
    comp.name = "compensator";
    comp.columns = {"integrand", "lhs", "rhs", "se", "pass"};
    const std::vector<std::pair<std::string, std::function<double(double, MarkId)>>>
        integrands = {
            {"unit", [](double, MarkId) { return 1.0; }},
            {"time", [](double s, MarkId) { return s; }},
            {"mark", [](double, MarkId x) { return 1.0 / (1.0 + static_cast<double>(x)); }},
        };
    for (std::size_t q = 0; q < integrands.size(); ++q) {
        const auto check = check_compensator_identity(
            model, 0, History(), integrands[q].second, n_mc,
            derive_seed(seed, "compensator", q));
        const bool pass = std::abs(check.lhs - check.rhs) <= std::max(3.0 * check.se, 1e-12);
        comp.add_row({integrands[q].first, fmt_num(check.lhs), fmt_num(check.rhs),
                      fmt_num(check.se), detail::bool_str(pass)});
        res.check("compensator_" + integrands[q].first, pass,
                  "lhs = " + fmt_num(check.lhs) + ", rhs = " + fmt_num(check.rhs) +
                      " +- " + fmt_num(check.se));
    }
    res.tables.push_back(std::move(comp));
    return res;
}

// ---------------------------------------------------------------------------
// verify-example: closed-form reproduction of the bundled linear example
// ---------------------------------------------------------------------------

namespace detail {

/// The bundled example: two exponential levels (rates l0 then l1 from the
/// jump), first mark fixed, second mark split evenly over marks 2 and 3,
/// terminal = indicator of the second mark being the middle letter. Closed
/// forms for the pre-jump value:
///   y1(t) = (1 - e^{-l1 (T-t)}) / 2                       (between the jumps)
///   y0(t) = ((1-e^{-l0 u}) - l0 (e^{-l0 u}-e^{-l1 u})/(l1-l0)) / 2,  u = T-t.
struct ExampleOracle {
    double l0 = 1.0, l1 = 2.0, horizon = 1.0;

    [[nodiscard]] double y1(double t) const {
        return 0.5 * (1.0 - std::exp(-l1 * (horizon - t)));
    }

    [[nodiscard]] double y0(double t) const {
        const double u = horizon - t;
        if (std::abs(l1 - l0) <= 1e-12 * std::max(l0, l1)) {
            return 0.5 * (1.0 - std::exp(-l0 * u) - l0 * u * std::exp(-l0 * u));
        }
        return 0.5 * ((1.0 - std::exp(-l0 * u)) -
                      l0 * (std::exp(-l0 * u) - std::exp(-l1 * u)) / (l1 - l0));
    }
};

inline ExampleOracle require_example_shape(const ExperimentConfig& cfg) {
    const ModelConfig& m = *cfg.model;
    const bool shape_ok =
        m.law.kind == "exponential" && m.law.rates.size() == 2 &&
        m.alphabet.size() == 3 && m.m_cap == 2 && m.bounded &&
        m.kernel.kind == "per_level" && m.kernel.rows.size() == 2 &&
        m.kernel.rows[0] == std::vector<double>{1.0, 0.0, 0.0} &&
        m.kernel.rows[1] == std::vector<double>{0.0, 0.5, 0.5} &&
        cfg.generator->kind == "martingale" &&
        cfg.terminal->kind == "indicator_last_mark" &&
        cfg.terminal->mark == m.alphabet[1];
    if (!shape_ok) {
        throw ConfigError(
            "verify-example: config must describe the bundled two-level example "
            "(exponential rates [l0, l1], three marks, per-level kernel "
            "[[1,0,0],[0,0.5,0.5]], martingale generator, terminal indicator on "
            "the second mark)");
    }
    return ExampleOracle{m.law.rates[0], m.law.rates[1], m.horizon};
}

}  // namespace detail

inline ExperimentResult run_verify_example(const ExperimentConfig& cfg,
                                           std::uint64_t /*seed*/) {
    const detail::ExampleOracle oracle = detail::require_example_shape(cfg);
    const MppModel model = build_model(*cfg.model);
    const GeneratorSpec gen = build_generator(*cfg.generator);
    const TerminalSpec term = build_terminal(*cfg.terminal, cfg.model->alphabet);
    BsdeSolver solver(model, gen, term, build_solver_options(cfg.numeric));
    const double horizon = model.horizon;

    ExperimentResult res;
    const double y0_num = solver.y0();
    const double y0_ref = oracle.y0(0.0);
    res.check("y0_matches", std::abs(y0_num - y0_ref) <= cfg.numeric.tol,
              "Y0 = " + fmt_num(y0_num) + " (reference " + fmt_num(y0_ref) + ")");

    struct Scenario {
        std::string id;
        Path path;
    };
    std::vector<Scenario> scenarios;
    scenarios.push_back({"no_jumps", Path{{}, horizon, false}});
    scenarios.push_back({"one_jump", Path{{{0.5 * horizon, 0}}, horizon, false}});
    scenarios.push_back(
        {"two_jumps_mid", Path{{{0.3 * horizon, 0}, {0.7 * horizon, 1}}, horizon, false}});
    scenarios.push_back(
        {"two_jumps_last", Path{{{0.3 * horizon, 0}, {0.7 * horizon, 2}}, horizon, false}});

    ResultTable table;
    table.name = "verify_example";
    table.columns = {"path", "regime", "t", "y_num", "y_ref", "abs_err"};
    double max_err[3] = {0.0, 0.0, 0.0};
    const char* regime_name[3] = {"before_first", "between", "after_second"};

    for (const Scenario& sc : scenarios) {
        const PathSolution sol = solver.solve_path(sc.path);
        const double s1 = sc.path.count() >= 1 ? sc.path.jumps[0].time : kNoJump;
        const double s2 = sc.path.count() >= 2 ? sc.path.jumps[1].time : kNoJump;
        const double xi = term.value(sc.path.count(), sc.path.history());
        for (int i = 0; i <= 100; ++i) {
            const double t = horizon * static_cast<double>(i) / 100.0;
            int regime = 0;
            double ref = 0.0;
            if (t >= s2) {
                regime = 2;
                ref = xi;
            } else if (t >= s1) {
                regime = 1;
                ref = oracle.y1(t);
            } else {
                regime = 0;
                ref = oracle.y0(t);
            }
            const double y_num = sol.y(t);
            const double err = std::abs(y_num - ref);
            max_err[regime] = std::max(max_err[regime], err);
            table.add_row({sc.id, regime_name[regime], fmt_num(t), fmt_num(y_num),
                           fmt_num(ref), fmt_num(err)});
            res.series.push_back({sc.id + ":y_num", t, y_num});
            res.series.push_back({sc.id + ":y_ref", t, ref});
        }
    }
    res.tables.push_back(std::move(table));
    for (int r = 0; r < 3; ++r) {
        res.check(std::string("regime_") + regime_name[r],
                  max_err[r] <= cfg.numeric.tol,
                  "max abs error = " + fmt_num(max_err[r]) + " (tol " +
                      fmt_num(cfg.numeric.tol) + ")");
    }
    return res;
}

// ---------------------------------------------------------------------------
// estimates: identity, a-priori bound, stability, deterministic bound
// ---------------------------------------------------------------------------

inline ExperimentResult run_estimates(const ExperimentConfig& cfg, std::uint64_t seed) {
    const MppModel model = build_model(*cfg.model);
    const GeneratorSpec gen = build_generator(*cfg.generator);
    const TerminalSpec term = build_terminal(*cfg.terminal, cfg.model->alphabet);
    const EstimatesConfig& ec = *cfg.estimates;
    const NormParams params{ec.alpha, ec.beta};
    const SolverOptions opts = build_solver_options(cfg.numeric);
    BsdeSolver solver(model, gen, term, opts);

    ExperimentResult res;
    ResultTable table;
    table.name = "estimates";
    table.columns = {"check", "detail", "lhs", "rhs", "se", "slack", "pass"};

    // Pathwise absolute-value identity on sampled paths.
    {
        RngStream rng = derive_stream(seed, "identity-paths");
        double worst = 0.0;
        for (int i = 0; i < ec.identity_paths; ++i) {
            const Path path = simulate_path(model, rng);
            const PathSolution sol = solver.solve_path(path);
            const double r = identity_p1_check(sol, params);
            worst = std::max(worst, r);
            const bool pass = r <= ec.identity_tol;
            table.add_row({"identity", "path " + fmt_int(i) + " (" +
                               fmt_int(path.count()) + " jumps)",
                           fmt_num(r), fmt_num(ec.identity_tol), "0",
                           fmt_num(ec.identity_tol - r), detail::bool_str(pass)});
            res.series.push_back({"identity_residual", static_cast<double>(i), r});
        }
        res.check("identity_residual", worst <= ec.identity_tol,
                  "max residual = " + fmt_num(worst) + " over " +
                      fmt_int(ec.identity_paths) + " paths (tol " +
                      fmt_num(ec.identity_tol) + ")");
    }

    // A-priori bound on |Y0|.
    {
        const BoundCheck b = apriori_bound_check(model, gen, term, solver.y0(), params,
                                                 cfg.numeric.n_mc, seed);
        table.add_row({"apriori", "|Y0| vs data expectation", fmt_num(b.lhs),
                       fmt_num(b.rhs), fmt_num(b.se), fmt_num(b.slack),
                       detail::bool_str(b.pass)});
        res.check("apriori_bound", b.pass,
                  "|Y0| = " + fmt_num(b.lhs) + " <= " + fmt_num(b.rhs) + " +- " +
                      fmt_num(b.se));
    }

    // Stability under a terminal perturbation.
    {
        const BoundCheck b = stability_check(model, gen, term, term.shifted(ec.shift),
                                             params, cfg.numeric.n_mc, seed, opts);
        table.add_row({"stability", "terminal shift " + fmt_num(ec.shift),
                       fmt_num(b.lhs), fmt_num(b.rhs), fmt_num(b.se), fmt_num(b.slack),
                       detail::bool_str(b.pass)});
        res.check("stability_bound", b.pass,
                  "|Y0' - Y0| = " + fmt_num(b.lhs) + " <= " + fmt_num(b.rhs) + " +- " +
                      fmt_num(b.se));
    }

    // Deterministic weighted bound on the root level function.
    {
        const double rho =
            std::max(ec.rho, gen.lipschitz_z + gen.lipschitz_y);
        const BoundCheck b = deterministic_bound_check(*solver.root(), gen, rho);
        table.add_row({"deterministic", "rho = " + fmt_num(rho), fmt_num(b.lhs),
                       fmt_num(b.rhs), "0", fmt_num(b.slack), detail::bool_str(b.pass)});
        res.check("deterministic_bound", b.pass,
                  "min slack = " + fmt_num(b.slack) + " at rho = " + fmt_num(rho));
    }

    res.tables.push_back(std::move(table));
    return res;
}

// ---------------------------------------------------------------------------
// pathology: atom-case classification and the non-uniqueness family
// ---------------------------------------------------------------------------

inline ExperimentResult run_pathology(const ExperimentConfig& cfg, std::uint64_t /*seed*/) {
    const PathologyConfig& pc = *cfg.pathology;
    ExperimentResult res;

    ResultTable atom;
    atom.name = "atom";
    atom.columns = {"case_id", "a",   "b",   "p",         "kind",      "discriminant",
                    "gamma",   "rho", "eta", "delta",     "delta_alt", "pass"};

    auto kind_str = [](AtomClassification::Kind k) {
        switch (k) {
            case AtomClassification::Kind::unique: return "unique";
            case AtomClassification::Kind::none: return "none";
            case AtomClassification::Kind::infinite: return "infinite";
        }
        return "unknown";
    };

    // Scaled-affine generator f(y, z) = (y + z) / p: the fixed-point map has
    // unit slope, so the alternative is decided by the discriminant a + (a-b);
    // zero means a one-parameter family, nonzero means no solution at all.
    for (const auto& [a, b] : pc.atom_cases) {
        AtomCase c;
        c.r = pc.atom_r;
        c.p = pc.p;
        c.a = a;
        c.b = b;
        c.f = [p = pc.p](double y, double z) { return (y + z) / p; };
        const AtomClassification cls = atom_classify(c);
        const double disc_ref = a + (a - b);
        const auto expected = (std::abs(disc_ref) <= 1e-10)
                                  ? AtomClassification::Kind::infinite
                                  : AtomClassification::Kind::none;
        bool pass = cls.kind == expected && cls.degenerate &&
                    std::abs(cls.discriminant - disc_ref) <= 1e-9;
        std::string delta = "";
        std::string delta_alt = "";
        if (cls.kind == AtomClassification::Kind::infinite) {
            pass = pass && cls.witness_a.delta != cls.witness_b.delta;
            delta = fmt_num(cls.witness_a.delta);
            delta_alt = fmt_num(cls.witness_b.delta);
        }
        const std::string id = "affine(" + fmt_num(a) + "," + fmt_num(b) + ")";
        atom.add_row({id, fmt_num(a), fmt_num(b), fmt_num(pc.p), kind_str(cls.kind),
                      fmt_num(cls.discriminant), fmt_num(a - b), fmt_num(a), fmt_num(b),
                      delta, delta_alt, detail::bool_str(pass)});
        res.check("atom_" + id, pass,
                  std::string("classified ") + kind_str(cls.kind) + " (expected " +
                      kind_str(expected) + "), discriminant = " +
                      fmt_num(cls.discriminant));
    }

    // Vanishing generator: the system has the unique explicit quadruple
    // (gamma, delta, rho, eta) = (a-b, b, a, b).
    {
        const auto [a, b] = pc.atom_cases.front();
        AtomCase c;
        c.r = pc.atom_r;
        c.p = pc.p;
        c.a = a;
        c.b = b;
        c.f = [](double, double) { return 0.0; };
        const AtomClassification cls = atom_classify(c);
        const bool pass = cls.kind == AtomClassification::Kind::unique &&
                          std::abs(cls.solution.gamma - (a - b)) <= 1e-9 &&
                          std::abs(cls.solution.delta - b) <= 1e-9 &&
                          std::abs(cls.solution.rho - a) <= 1e-9 &&
                          std::abs(cls.solution.eta - b) <= 1e-9;
        atom.add_row({"f_zero", fmt_num(a), fmt_num(b), fmt_num(pc.p),
                      kind_str(cls.kind), fmt_num(cls.discriminant), fmt_num(a - b),
                      fmt_num(a), fmt_num(b), fmt_num(cls.solution.delta), "",
                      detail::bool_str(pass)});
        res.check("atom_f_zero", pass,
                  "quadruple (" + fmt_num(cls.solution.gamma) + ", " +
                      fmt_num(cls.solution.delta) + ", " + fmt_num(cls.solution.rho) +
                      ", " + fmt_num(cls.solution.eta) + ")");
    }
    res.tables.push_back(std::move(atom));

    // One-parameter family under a support-saturating law: one solution per
    // starting value, each passing the forward-identity residual check.
    ResultTable family;
    family.name = "family";
    family.columns = {"w", "y0", "residual", "t_clip", "clipped", "pass"};
    SupportCase sc;
    sc.law = std::make_shared<UniformTailLaw>(0.0, 1.0);
    sc.h = [](double) { return 0.0; };
    sc.horizon = 1.0;
    bool all_start_exact = true;
    for (double w : pc.w_values) {
        const FamilySolution fam = pb1_family(sc, w, pc.family_n);
        const double y0 = fam.y.front();
        const bool pass = fam.residual <= pc.residual_tol && std::abs(y0 - w) <= 1e-12;
        all_start_exact = all_start_exact && std::abs(y0 - w) <= 1e-12;
        family.add_row({fmt_num(w), fmt_num(y0), fmt_num(fam.residual),
                        fmt_num(fam.t_clip), detail::bool_str(fam.clipped),
                        detail::bool_str(pass)});
        res.check("family_w_" + fmt_num(w), pass,
                  "residual = " + fmt_num(fam.residual) + ", Y0 = " + fmt_num(y0));
        const std::size_t stride = std::max<std::size_t>(1, fam.t.size() / 200);
        for (std::size_t i = 0; i < fam.t.size(); i += stride) {
            res.series.push_back({"family_w_" + fmt_num(w), fam.t[i], fam.y[i]});
        }
    }
    res.tables.push_back(std::move(family));

    // Distinct starting values give distinct solutions from the same data.
    if (pc.w_values.size() >= 2) {
        std::set<std::string> distinct;
        for (double w : pc.w_values) distinct.insert(fmt_num(w));
        res.check("family_distinct", all_start_exact && distinct.size() == pc.w_values.size(),
                  fmt_int(static_cast<long long>(distinct.size())) +
                      " distinct solutions from one terminal condition");
    }
    return res;
}

// ---------------------------------------------------------------------------
// control: Hamiltonian solve, synthesized policy, weighted-MC validation
// ---------------------------------------------------------------------------

inline ExperimentResult run_control(const ExperimentConfig& cfg, std::uint64_t seed) {
    const ControlConfig& cc = *cfg.control;
    ControlModel cm;
    cm.base = build_model(*cfg.model);
    cm.actions = cc.actions;
    cm.r = [](double, MarkId, double u) { return u; };
    cm.l = [rate = cc.cost_rate](double, double u) { return rate * u; };
    cm.terminal = build_terminal(*cfg.terminal, cfg.model->alphabet);
    cm.bound_c = *std::max_element(cc.actions.begin(), cc.actions.end());

    const SolverOptions opts = build_solver_options(cfg.numeric);
    const OptimalityReport rep =
        optimality_check(cm, cfg.numeric.n_mc, cc.n_random_policies, seed, opts);

    ExperimentResult res;
    ResultTable table;
    table.name = "control";
    table.columns = {"policy_id", "j_hat", "se", "y0", "mean_weight", "weight_se", "pass"};
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const OptimalityRow& row = rep.rows[i];
        const bool pass = (i == 0) ? std::abs(rep.y0 - row.j_hat) <= 3.0 * row.se
                                   : row.j_hat >= rep.y0 - 3.0 * row.se;
        table.add_row({row.policy_id, fmt_num(row.j_hat), fmt_num(row.se),
                       fmt_num(rep.y0), fmt_num(row.mean_weight), fmt_num(row.weight_se),
                       detail::bool_str(pass)});
        res.series.push_back({"j_hat", static_cast<double>(i), row.j_hat});
        res.series.push_back({"mean_weight", static_cast<double>(i), row.mean_weight});
    }

    // Independent cross-check: simulate under the controlled dynamics.
    {
        BsdeSolver solver(cm.base, hamiltonian_generator(cm), cm.terminal, opts);
        const Policy opt = synthesize_policy(cm, solver);
        const CostReport direct = direct_cost_estimate(cm, opt, cfg.numeric.n_mc, seed);
        const bool pass = std::abs(rep.y0 - direct.j_hat) <= 3.0 * direct.se;
        table.add_row({"optimal_direct", fmt_num(direct.j_hat), fmt_num(direct.se),
                       fmt_num(rep.y0), "1", "0", detail::bool_str(pass)});
        res.check("direct_simulation_matches", pass,
                  "J_direct = " + fmt_num(direct.j_hat) + " +- " + fmt_num(direct.se) +
                      ", Y0 = " + fmt_num(rep.y0));
    }
    res.tables.push_back(std::move(table));

    res.check("optimal_matches_y0", rep.optimal_matches,
              "Y0 = " + fmt_num(rep.y0) + ", J(optimal) = " + fmt_num(rep.rows[0].j_hat) +
                  " +- " + fmt_num(rep.rows[0].se));
    res.check("competitors_not_cheaper", rep.competitors_above,
              fmt_int(cc.n_random_policies) + " random policies all >= Y0 - 3 se");
    res.check("density_mean_one", rep.weights_ok,
              "E[L] within 3 se of 1 for every policy");
    return res;
}

// ---------------------------------------------------------------------------
// truncation: increasing caps, tail proxy, MC reference
// ---------------------------------------------------------------------------

inline ExperimentResult run_truncation(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TruncationConfig& tc = *cfg.truncation;
    const MppModel model = build_model(*cfg.model);
    const GeneratorSpec gen = build_generator(*cfg.generator);
    const TerminalSpec term = build_terminal(*cfg.terminal, cfg.model->alphabet);
    const TruncationReport rep =
        solve_truncated(model, gen, term, tc.caps, tc.alpha, tc.beta, cfg.numeric.n_mc,
                        seed, build_solver_options(cfg.numeric));

    ExperimentResult res;
    ResultTable table;
    table.name = "truncation";
    table.columns = {"cap",         "y0",           "delta_proxy",
                     "delta_se",    "reference_mc", "reference_se"};
    for (std::size_t i = 0; i < rep.caps.size(); ++i) {
        table.add_row({fmt_int(rep.caps[i]), fmt_num(rep.y0[i]),
                       fmt_num(rep.delta_proxy[i]), fmt_num(rep.delta_se[i]),
                       fmt_num(rep.reference_mc), fmt_num(rep.reference_se)});
        res.series.push_back({"y0", static_cast<double>(rep.caps[i]), rep.y0[i]});
        res.series.push_back(
            {"delta_proxy", static_cast<double>(rep.caps[i]), rep.delta_proxy[i]});
    }
    res.tables.push_back(std::move(table));

    // Solver values must be strictly monotone, and every step must shrink the
    // distance to the reference up to the reference's own MC noise.
    bool monotone = rep.y0.size() >= 2;
    const int dir = (rep.y0.back() > rep.y0.front()) ? 1 : -1;
    for (std::size_t i = 0; i + 1 < rep.y0.size(); ++i) {
        if (!(dir * (rep.y0[i + 1] - rep.y0[i]) > 0.0)) monotone = false;
        if (std::abs(rep.y0[i + 1] - rep.reference_mc) >
            std::abs(rep.y0[i] - rep.reference_mc) + 3.0 * rep.reference_se) {
            monotone = false;
        }
    }
    res.check("monotone_convergence", monotone,
              "each cap moves Y0 toward the reference " + fmt_num(rep.reference_mc) +
                  " +- " + fmt_num(rep.reference_se));

    const double final_gap = std::abs(rep.y0.back() - rep.reference_mc);
    res.check("final_cap_within_3se", final_gap <= 3.0 * rep.reference_se,
              "|Y0(cap " + fmt_int(rep.caps.back()) + ") - reference| = " +
                  fmt_num(final_gap) + " vs 3 se = " + fmt_num(3.0 * rep.reference_se));

    bool delta_decreasing = true;
    for (std::size_t i = 0; i + 1 < rep.delta_proxy.size(); ++i) {
        if (!(rep.delta_proxy[i + 1] < rep.delta_proxy[i])) delta_decreasing = false;
    }
    res.check("tail_proxy_decreasing", delta_decreasing,
              "delta proxy strictly decreases across caps");
    return res;
}

// ---------------------------------------------------------------------------
// Dispatcher and report emission
// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
    switch (cfg.kind) {
        case ExperimentKind::solve: return run_solve(cfg, seed);
        case ExperimentKind::simulate: return run_simulate(cfg, seed);
        case ExperimentKind::verify_example: return run_verify_example(cfg, seed);
        case ExperimentKind::estimates: return run_estimates(cfg, seed);
        case ExperimentKind::pathology: return run_pathology(cfg, seed);
        case ExperimentKind::control: return run_control(cfg, seed);
        case ExperimentKind::truncation: return run_truncation(cfg, seed);
    }
    throw std::logic_error("run_experiment: unhandled experiment kind");
}

/// Writes result tables, the long-format series file, and the run manifest
/// into `out_dir`. Output is byte-identical for identical (config, seed).
inline void emit_report(const ExperimentConfig& cfg, std::uint64_t seed,
                        const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }

    auto write_file = [&](const std::string& name, const std::string& content) {
        const fs::path path = fs::path(out_dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        out << content;
        if (!out) throw IoError("failed writing " + path.string());
    };

    std::vector<std::string> outputs;
    for (const ResultTable& table : result.tables) {
        std::string text;
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (c) text += ',';
            text += detail::csv_escape(table.columns[c]);
        }
        text += '\n';
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) text += ',';
                text += detail::csv_escape(row[c]);
            }
            text += '\n';
        }
        write_file(table.name + ".csv", text);
        outputs.push_back(table.name + ".csv");
    }

    if (!result.series.empty()) {
        std::string text = "series,x,y\n";
        for (const SeriesPoint& pt : result.series) {
            text += detail::csv_escape(pt.series);
            text += ',';
            text += fmt_num(pt.x);
            text += ',';
            text += fmt_num(pt.y);
            text += '\n';
        }
        write_file("series.csv", text);
        outputs.push_back("series.csv");
    }

    Json manifest;
    manifest["experiment"] = to_string(cfg.kind);
    manifest["seed"] = seed;
    manifest["library"] = Json{{"name", "jumpflow"}, {"version", "1.0.0"}};
    manifest["config"] = cfg.raw;
    std::sort(outputs.begin(), outputs.end());
    manifest["outputs"] = outputs;
    Json checks = Json::array();
    for (const Assertion& a : result.assertions) {
        checks.push_back(Json{{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    }
    manifest["assertions"] = checks;
    manifest["all_pass"] = result.all_pass();
    write_file("manifest.json", manifest.dump(2) + "\n");
}

}  // namespace jumpflow
