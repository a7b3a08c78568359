// Tests for the strict config schema and the factories that turn parsed
// blocks into models, generators, and terminal conditions.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/config.hpp"
#include "jumpflow/model.hpp"

using namespace jumpflow;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

/// Asserts that `fn` throws a ConfigError whose message contains `needle`
/// (schema errors must stay anchored to their JSON path).
template <typename F>
void expect_config_error(F&& fn, const std::string& needle) {
    try {
        fn();
        FAIL("expected a ConfigError mentioning \"" << needle << "\"");
    } catch (const ConfigError& e) {
        REQUIRE_THAT(std::string(e.what()), ContainsSubstring(needle));
    }
}

Json base_solve() {
    return Json::parse(R"({
        "experiment": "solve",
        "model": {
            "horizon": 1.0,
            "alphabet": ["x1", "x2", "x3"],
            "m_cap": 2,
            "bounded": true,
            "law": {"kind": "exponential", "rates": [1.0, 2.0]},
            "kernel": {"kind": "per_level",
                       "weights": [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]]}
        },
        "generator": {"kind": "martingale"},
        "terminal": {"kind": "indicator_last_mark", "mark": "x2"},
        "numeric": {"seed": 42, "n_grid": 500, "tol": 0.001}
    })");
}

Json base_control() {
    return Json::parse(R"({
        "experiment": "control",
        "model": {
            "horizon": 1.0,
            "alphabet": ["call"],
            "m_cap": 4,
            "law": {"kind": "exponential", "rate": 1.0},
            "kernel": {"kind": "uniform"}
        },
        "terminal": {"kind": "neg_count_min", "cap": 4},
        "control": {"actions": [0.5, 2.0], "cost_rate": 0.4},
        "numeric": {"seed": 7}
    })");
}

Json base_pathology() {
    return Json::parse(R"({
        "experiment": "pathology",
        "pathology": {
            "p": 0.5,
            "atom_cases": [[1.0, 2.0], [1.0, 0.0]],
            "w_values": [-1.0, 0.0, 1.0]
        },
        "numeric": {"seed": 1}
    })");
}

Json base_truncation() {
    Json j = base_solve();
    j["experiment"] = "truncation";
    j["model"]["m_cap"] = 12;
    j["model"]["alphabet"] = Json::array({"tick"});
    j["model"]["kernel"] = Json::parse(R"({"kind": "uniform"})");
    j["terminal"] = Json::parse(R"({"kind": "count_min", "cap": 5})");
    j["truncation"] = Json::parse(R"({"caps": [2, 4, 6]})");
    return j;
}

}  // namespace

TEST_CASE("experiment kinds round-trip through their names") {
    const ExperimentKind kinds[] = {
        ExperimentKind::solve,     ExperimentKind::simulate,
        ExperimentKind::verify_example, ExperimentKind::estimates,
        ExperimentKind::pathology, ExperimentKind::control,
        ExperimentKind::truncation};
    for (ExperimentKind k : kinds) {
        REQUIRE(experiment_kind_from(to_string(k)) == k);
    }
    REQUIRE(to_string(ExperimentKind::verify_example) == "verify-example");
    expect_config_error([] { experiment_kind_from("frobnicate"); }, "unknown kind");
}

TEST_CASE("a full solve config parses into typed blocks") {
    const Json j = base_solve();
    const ExperimentConfig cfg = parse_experiment_config(j);

    REQUIRE(cfg.kind == ExperimentKind::solve);
    REQUIRE(cfg.raw == j);

    REQUIRE(cfg.model.has_value());
    REQUIRE(cfg.model->horizon == 1.0);
    REQUIRE(cfg.model->alphabet == std::vector<std::string>{"x1", "x2", "x3"});
    REQUIRE(cfg.model->m_cap == 2);
    REQUIRE(cfg.model->bounded);
    REQUIRE(cfg.model->law.kind == "exponential");
    REQUIRE(cfg.model->law.rates == std::vector<double>{1.0, 2.0});
    REQUIRE(cfg.model->kernel.kind == "per_level");
    REQUIRE(cfg.model->kernel.rows.size() == 2);

    REQUIRE(cfg.generator.has_value());
    REQUIRE(cfg.generator->kind == "martingale");
    REQUIRE(cfg.terminal.has_value());
    REQUIRE(cfg.terminal->kind == "indicator_last_mark");
    REQUIRE(cfg.terminal->mark == "x2");

    REQUIRE(cfg.numeric.seed == 42);
    REQUIRE(cfg.numeric.n_grid == 500);
    REQUIRE(cfg.numeric.tol == 0.001);
    REQUIRE(cfg.output_dir.empty());
}

TEST_CASE("optional numeric fields take documented defaults") {
    Json j = base_solve();
    j["numeric"] = Json::parse(R"({"seed": 9})");
    const ExperimentConfig cfg = parse_experiment_config(j);
    REQUIRE(cfg.numeric.n_grid == 2000);
    REQUIRE(cfg.numeric.tol_picard == 1e-10);
    REQUIRE(cfg.numeric.max_iters == 200);
    REQUIRE(cfg.numeric.n_mc == 10000);
    REQUIRE(cfg.numeric.tol == 1e-3);
    REQUIRE(cfg.numeric.seed == 9);
}

TEST_CASE("unknown keys are rejected with their JSON path") {
    SECTION("at the root") {
        Json j = base_solve();
        j["bogus"] = 1;
        expect_config_error([&] { parse_experiment_config(j); },
                            "(root).bogus: unknown key");
    }
    SECTION("inside a block") {
        Json j = base_solve();
        j["model"]["extra"] = true;
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.extra: unknown key");
    }
    SECTION("inside numeric") {
        Json j = base_solve();
        j["numeric"]["paths"] = 5;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.paths: unknown key");
    }
    SECTION("inside nested law") {
        Json j = base_solve();
        j["model"]["law"]["scale"] = 2.0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.law.scale: unknown key");
    }
}

TEST_CASE("missing required keys name the field") {
    SECTION("seed is mandatory") {
        Json j = base_solve();
        j["numeric"].erase("seed");
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric: missing required key \"seed\"");
    }
    SECTION("numeric block is mandatory") {
        Json j = base_solve();
        j.erase("numeric");
        expect_config_error([&] { parse_experiment_config(j); },
                            "(root): missing required key \"numeric\"");
    }
    SECTION("model fields") {
        Json j = base_solve();
        j["model"].erase("horizon");
        expect_config_error([&] { parse_experiment_config(j); },
                            "model: missing required key \"horizon\"");
    }
    SECTION("experiment key itself") {
        Json j = base_solve();
        j.erase("experiment");
        expect_config_error([&] { parse_experiment_config(j); },
                            "missing required key \"experiment\"");
    }
}

TEST_CASE("each kind accepts exactly its own blocks") {
    SECTION("a control config cannot carry a generator") {
        Json j = base_control();
        j["generator"] = Json::parse(R"({"kind": "zero"})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "(root).generator: unknown key");
    }
    SECTION("a pathology config cannot carry a model") {
        Json j = base_pathology();
        j["model"] = base_solve()["model"];
        expect_config_error([&] { parse_experiment_config(j); },
                            "(root).model: unknown key");
    }
    SECTION("a simulate config cannot carry a terminal") {
        Json j = base_solve();
        j["experiment"] = "simulate";
        j.erase("generator");
        expect_config_error([&] { parse_experiment_config(j); },
                            "(root).terminal: unknown key");
    }
    SECTION("an estimates config requires its estimates block") {
        Json j = base_solve();
        j["experiment"] = "estimates";
        expect_config_error([&] { parse_experiment_config(j); },
                            "missing required key \"estimates\"");
    }
    SECTION("valid control and pathology configs parse") {
        REQUIRE(parse_experiment_config(base_control()).control.has_value());
        REQUIRE(parse_experiment_config(base_pathology()).pathology.has_value());
    }
}

TEST_CASE("law blocks are validated") {
    SECTION("rate and rates are mutually exclusive") {
        Json j = base_solve();
        j["model"]["law"]["rate"] = 1.0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "exactly one of rate/rates");
        j["model"]["law"].erase("rate");
        j["model"]["law"].erase("rates");
        expect_config_error([&] { parse_experiment_config(j); },
                            "exactly one of rate/rates");
    }
    SECTION("rates must be positive") {
        Json j = base_solve();
        j["model"]["law"]["rates"] = Json::array({1.0, 0.0});
        expect_config_error([&] { parse_experiment_config(j); }, "must be positive");
    }
    SECTION("unknown law kind") {
        Json j = base_solve();
        j["model"]["law"] = Json::parse(R"({"kind": "weibull", "rate": 1.0})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.law.kind: unknown law");
    }
    SECTION("uniform_tail endpoint must be positive") {
        Json j = base_solve();
        j["model"]["law"] = Json::parse(R"({"kind": "uniform_tail", "endpoint": -1.0})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.law.endpoint: must be positive");
    }
    SECTION("uniform_tail endpoint must exceed the horizon to build") {
        Json j = base_solve();
        j["model"]["law"] = Json::parse(R"({"kind": "uniform_tail", "endpoint": 0.5})");
        const ExperimentConfig cfg = parse_experiment_config(j);
        expect_config_error([&] { build_model(*cfg.model); },
                            "must exceed the horizon");
    }
}

TEST_CASE("kernel blocks are validated") {
    SECTION("row length must match the alphabet") {
        Json j = base_solve();
        j["model"]["kernel"]["weights"] = Json::parse(R"([[0.5, 0.5]])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.kernel.weights[0]: expected 3 weights");
    }
    SECTION("weights must be nonnegative") {
        Json j = base_solve();
        j["model"]["kernel"]["weights"] =
            Json::parse(R"([[1.0, 0.0, 0.0], [1.5, -0.5, 0.0]])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "weights[1]: weights must be nonnegative");
    }
    SECTION("rows must sum to one") {
        Json j = base_solve();
        j["model"]["kernel"]["weights"] = Json::parse(R"([[0.5, 0.2, 0.2]])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "weights[0]: weights must sum to 1");
    }
    SECTION("unknown kernel kind") {
        Json j = base_solve();
        j["model"]["kernel"] = Json::parse(R"({"kind": "dirichlet"})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "model.kernel.kind: unknown kernel");
    }
}

TEST_CASE("terminal blocks are validated and resolved") {
    SECTION("unknown kind") {
        Json j = base_solve();
        j["terminal"] = Json::parse(R"({"kind": "quantile"})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "terminal.kind: unknown terminal");
    }
    SECTION("count caps must be nonnegative") {
        Json j = base_solve();
        j["terminal"] = Json::parse(R"({"kind": "count_min", "cap": -1})");
        expect_config_error([&] { parse_experiment_config(j); },
                            "terminal.cap: must be >= 0");
    }
    SECTION("the indicator mark must be in the alphabet") {
        Json j = base_solve();
        j["terminal"]["mark"] = "x9";
        const ExperimentConfig cfg = parse_experiment_config(j);
        expect_config_error([&] { build_terminal(*cfg.terminal, cfg.model->alphabet); },
                            "terminal.mark: \"x9\" is not in model.alphabet");
    }
    SECTION("resolved terminals evaluate correctly") {
        const ExperimentConfig cfg = parse_experiment_config(base_solve());
        const TerminalSpec ind = build_terminal(*cfg.terminal, cfg.model->alphabet);
        REQUIRE_FALSE(ind.count_only);
        REQUIRE(ind.value(0, History()) == 0.0);
        const History ends_x2(std::vector<Event>{{0.4, 1}});
        const History ends_x3(std::vector<Event>{{0.4, 2}});
        REQUIRE(ind.value(1, ends_x2) == 1.0);
        REQUIRE(ind.value(1, ends_x3) == 0.0);

        TerminalConfig tc;
        tc.kind = "count_min";
        tc.cap = 5;
        const TerminalSpec cm = build_terminal(tc, {});
        REQUIRE(cm.count_only);
        REQUIRE(cm.value(3, History()) == 3.0);
        REQUIRE(cm.value(9, History()) == 5.0);

        tc.kind = "neg_count_min";
        REQUIRE(build_terminal(tc, {}).value(9, History()) == -5.0);

        tc.kind = "constant";
        tc.value = 2.5;
        REQUIRE(build_terminal(tc, {}).value(7, History()) == 2.5);
    }
}

TEST_CASE("numeric blocks are validated") {
    Json j = base_solve();
    SECTION("negative seed") {
        j["numeric"]["seed"] = -3;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.seed: expected a nonnegative integer");
    }
    SECTION("fractional seed") {
        j["numeric"]["seed"] = 1.5;
        expect_config_error([&] { parse_experiment_config(j); }, "numeric.seed");
    }
    SECTION("grid and iteration floors") {
        j["numeric"]["n_grid"] = 0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.n_grid: must be >= 1");
        j = base_solve();
        j["numeric"]["max_iters"] = 0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.max_iters: must be >= 1");
        j = base_solve();
        j["numeric"]["n_mc"] = 1;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.n_mc: must be >= 2");
    }
    SECTION("tolerances must be positive") {
        j["numeric"]["tol_picard"] = 0.0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.tol_picard: must be positive");
        j = base_solve();
        j["numeric"]["tol"] = -1.0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "numeric.tol: must be positive");
    }
}

TEST_CASE("pathology blocks are validated") {
    SECTION("a valid block parses with defaults") {
        const ExperimentConfig cfg = parse_experiment_config(base_pathology());
        REQUIRE(cfg.pathology.has_value());
        REQUIRE(cfg.pathology->p == 0.5);
        REQUIRE(cfg.pathology->atom_r == 1.0);
        REQUIRE(cfg.pathology->atom_cases.size() == 2);
        REQUIRE(cfg.pathology->atom_cases[0] == std::pair<double, double>{1.0, 2.0});
        REQUIRE(cfg.pathology->w_values == std::vector<double>{-1.0, 0.0, 1.0});
        REQUIRE(cfg.pathology->residual_tol == 1e-6);
        REQUIRE(cfg.pathology->family_n == 20000);
    }
    SECTION("atom mass must lie in (0,1)") {
        Json j = base_pathology();
        j["pathology"]["p"] = 1.0;
        expect_config_error([&] { parse_experiment_config(j); },
                            "pathology.p: must lie in (0,1)");
    }
    SECTION("atom cases must be [a, b] pairs") {
        Json j = base_pathology();
        j["pathology"]["atom_cases"] = Json::parse(R"([[1.0]])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "entries must be [a, b] number pairs");
        j["pathology"]["atom_cases"] = Json::parse(R"([])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "expected a nonempty array");
    }
    SECTION("w_values are required") {
        Json j = base_pathology();
        j["pathology"].erase("w_values");
        expect_config_error([&] { parse_experiment_config(j); },
                            "missing required key \"w_values\"");
    }
    SECTION("family grid floor") {
        Json j = base_pathology();
        j["pathology"]["family_n"] = 1;
        expect_config_error([&] { parse_experiment_config(j); },
                            "pathology.family_n: must be >= 2");
    }
}

TEST_CASE("control blocks are validated") {
    SECTION("defaults") {
        Json j = base_control();
        j["control"] = Json::parse(R"({"actions": [1.0]})");
        const ExperimentConfig cfg = parse_experiment_config(j);
        REQUIRE(cfg.control->cost_rate == 0.4);
        REQUIRE(cfg.control->n_random_policies == 10);
    }
    SECTION("actions must be nonnegative") {
        Json j = base_control();
        j["control"]["actions"] = Json::array({0.5, -2.0});
        expect_config_error([&] { parse_experiment_config(j); },
                            "control.actions: must be nonnegative");
    }
    SECTION("random policy count floor") {
        Json j = base_control();
        j["control"]["n_random_policies"] = -1;
        expect_config_error([&] { parse_experiment_config(j); },
                            "control.n_random_policies: must be >= 0");
    }
}

TEST_CASE("truncation blocks are validated") {
    SECTION("defaults and a valid ladder") {
        const ExperimentConfig cfg = parse_experiment_config(base_truncation());
        REQUIRE(cfg.truncation->caps == std::vector<int>{2, 4, 6});
        REQUIRE(cfg.truncation->alpha == 2.0);
        REQUIRE(cfg.truncation->beta == 4.0);
    }
    SECTION("at least two caps") {
        Json j = base_truncation();
        j["truncation"]["caps"] = Json::array({4});
        expect_config_error([&] { parse_experiment_config(j); },
                            "at least two caps");
    }
    SECTION("caps must be strictly increasing") {
        Json j = base_truncation();
        j["truncation"]["caps"] = Json::array({4, 4});
        expect_config_error([&] { parse_experiment_config(j); },
                            "strictly increasing");
        j["truncation"]["caps"] = Json::array({6, 2});
        expect_config_error([&] { parse_experiment_config(j); },
                            "strictly increasing");
    }
    SECTION("caps must be positive integers") {
        Json j = base_truncation();
        j["truncation"]["caps"] = Json::array({0, 2});
        expect_config_error([&] { parse_experiment_config(j); },
                            "entries must be integers >= 1");
        j["truncation"]["caps"] = Json::parse(R"([1.5, 2])");
        expect_config_error([&] { parse_experiment_config(j); },
                            "entries must be integers >= 1");
    }
    SECTION("the ladder cannot exceed the model cap") {
        Json j = base_truncation();
        j["model"]["m_cap"] = 4;
        expect_config_error([&] { parse_experiment_config(j); },
                            "truncation.caps: largest cap exceeds model.m_cap");
    }
}

TEST_CASE("text-level parse errors are wrapped as config errors") {
    expect_config_error([] { parse_experiment_config(std::string("{ nope")); },
                        "config parse error:");
    expect_config_error([] { parse_experiment_config(std::string("[1, 2]")); },
                        "(root): expected an object");
}

TEST_CASE("the output block sets a default directory") {
    Json j = base_solve();
    j["output"] = Json::parse(R"({"dir": "runs/demo"})");
    REQUIRE(parse_experiment_config(j).output_dir == "runs/demo");

    j["output"]["format"] = "csv";
    expect_config_error([&] { parse_experiment_config(j); },
                        "output.format: unknown key");
}

TEST_CASE("build_model produces a validated model") {
    const ExperimentConfig cfg = parse_experiment_config(base_solve());
    const MppModel m = build_model(*cfg.model);
    REQUIRE_NOTHROW(validate_model(m));
    REQUIRE(m.level_homogeneous);
    REQUIRE(m.n_marks() == 3);

    // Per-level rates, the last entry repeating for deeper levels: read the
    // rate back off the hazard slope.
    const History d0;
    const auto law0 = m.law_for(0, d0);
    REQUIRE(law0->hazard(1.0) - law0->hazard(0.0) == Approx(1.0).margin(1e-12));
    Json deep = base_solve();
    deep["model"]["m_cap"] = 5;
    const MppModel md = build_model(*parse_experiment_config(deep).model);
    const History d4 = representative_history(md, 4);
    const auto law4 = md.law_for(4, d4);
    REQUIRE(law4->hazard(d4.dmax() + 0.5) - law4->hazard(d4.dmax()) ==
            Approx(2.0 * 0.5).margin(1e-10));

    // Kernel rows, last row repeating.
    std::vector<double> w(3, 0.0);
    m.kernel_weights(0, d0, 0.2, std::span<double>(w));
    REQUIRE(w == std::vector<double>{1.0, 0.0, 0.0});
    m.kernel_weights(5, d0, 0.2, std::span<double>(w));
    REQUIRE(w[1] == Approx(0.5));
    REQUIRE(w[2] == Approx(0.5));

    SECTION("a uniform-tail law disables level homogeneity") {
        Json j = base_solve();
        j["model"]["law"] = Json::parse(R"({"kind": "uniform_tail", "endpoint": 2.0})");
        const ExperimentConfig c2 = parse_experiment_config(j);
        const MppModel m2 = build_model(*c2.model);
        REQUIRE_FALSE(m2.level_homogeneous);
        const auto law = m2.law_for(0, History());
        REQUIRE(law->survival(0.5) == Approx(0.75).margin(1e-12));
    }

    SECTION("a uniform kernel spreads mass evenly") {
        Json j = base_solve();
        j["model"]["kernel"] = Json::parse(R"({"kind": "uniform"})");
        const MppModel m3 = build_model(*parse_experiment_config(j).model);
        std::vector<double> w3(3, 0.0);
        m3.kernel_weights(0, History(), 0.2, std::span<double>(w3));
        for (double x : w3) REQUIRE(x == Approx(1.0 / 3.0).margin(1e-15));
    }
}

TEST_CASE("build_generator maps config kinds to drivers") {
    GeneratorConfig gc;
    const double w1[] = {1.0};
    const double zeta[] = {0.7};

    gc.kind = "zero";
    const GeneratorSpec gz = build_generator(gc);
    REQUIRE(gz.name == "zero");
    REQUIRE(gz.integrand(0.1, w1, zeta, 3.0) == 0.0);

    gc.kind = "martingale";
    const GeneratorSpec gm = build_generator(gc);
    REQUIRE(gm.name == "martingale");
    REQUIRE(gm.lipschitz_z == 1.0);
    REQUIRE(gm.lipschitz_y == 0.0);
    REQUIRE(gm.integrand(0.1, w1, zeta, 3.0) == Approx(0.7));

    gc.kind = "linear_decay";
    const GeneratorSpec gd = build_generator(gc);
    REQUIRE(gd.integrand(0.1, w1, zeta, 3.0) == Approx(-3.0));
    REQUIRE(gd.lipschitz_y == 1.0);

    gc.kind = "affine";
    gc.coef_y = -0.5;
    gc.coef_z = 2.0;
    gc.constant = 0.25;
    const GeneratorSpec ga = build_generator(gc);
    REQUIRE(ga.lipschitz_z == 2.0);
    REQUIRE(ga.lipschitz_y == 0.5);
    REQUIRE(ga.integrand(0.1, w1, zeta, 3.0) ==
            Approx(0.25 - 0.5 * 3.0 + 2.0 * 0.7).margin(1e-12));
    REQUIRE(ga.at_zero(0.1, 0, w1) == Approx(0.25).margin(1e-15));

    gc.kind = "quadratic";
    REQUIRE_THROWS_AS(parse_generator(Json::parse(R"({"kind": "quadratic"})"), "generator"),
                      ConfigError);
}

TEST_CASE("build_solver_options copies the numeric block") {
    NumericConfig nc;
    nc.n_grid = 321;
    nc.tol_picard = 1e-8;
    nc.max_iters = 17;
    const SolverOptions opts = build_solver_options(nc);
    REQUIRE(opts.n_grid == 321);
    REQUIRE(opts.tol_picard == 1e-8);
    REQUIRE(opts.max_iters == 17);
}
