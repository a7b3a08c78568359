#pragma once

// Config layer for the experiment runner: a strict JSON schema (unknown keys
// rejected, errors anchored to their JSON path), plus factories turning the
// parsed blocks into models, generators, and terminal conditions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "jumpflow/generator.hpp"
#include "jumpflow/model.hpp"
#include "jumpflow/solver.hpp"

namespace jumpflow {

using Json = nlohmann::json;

/// Raised for schema violations; the message carries the JSON path of the
/// offending key so failures are anchored for the user.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class ExperimentKind {
    solve,
    simulate,
    verify_example,
    estimates,
    pathology,
    control,
    truncation,
};

inline std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::solve: return "solve";
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::verify_example: return "verify-example";
        case ExperimentKind::estimates: return "estimates";
        case ExperimentKind::pathology: return "pathology";
        case ExperimentKind::control: return "control";
        case ExperimentKind::truncation: return "truncation";
    }
    return "unknown";
}

inline ExperimentKind experiment_kind_from(const std::string& s) {
    if (s == "solve") return ExperimentKind::solve;
    if (s == "simulate") return ExperimentKind::simulate;
    if (s == "verify-example") return ExperimentKind::verify_example;
    if (s == "estimates") return ExperimentKind::estimates;
    if (s == "pathology") return ExperimentKind::pathology;
    if (s == "control") return ExperimentKind::control;
    if (s == "truncation") return ExperimentKind::truncation;
    throw ConfigError("experiment: unknown kind \"" + s +
                      "\" (expected solve | simulate | verify-example | estimates | "
                      "pathology | control | truncation)");
}

namespace cfg {

inline std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

inline const Json& require_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    return j;
}

/// Strict key check: every present key must be known, every required key
/// must be present.
inline void expect_keys(const Json& j, const std::string& path,
                        const std::set<std::string>& allowed,
                        const std::set<std::string>& required) {
    require_object(j, path);
    for (const auto& item : j.items()) {
        if (allowed.find(item.key()) == allowed.end()) {
            throw ConfigError(join_path(path, item.key()) + ": unknown key");
        }
    }
    for (const std::string& key : required) {
        if (!j.contains(key)) {
            throw ConfigError(path + ": missing required key \"" + key + "\"");
        }
    }
}

inline double get_double(const Json& j, const std::string& path, const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(join_path(path, key) + ": expected a number");
    return v.get<double>();
}

inline double get_double_or(const Json& j, const std::string& path, const std::string& key,
                            double fallback) {
    return j.contains(key) ? get_double(j, path, key) : fallback;
}

inline double get_positive(const Json& j, const std::string& path, const std::string& key) {
    const double v = get_double(j, path, key);
    if (!(v > 0.0)) throw ConfigError(join_path(path, key) + ": must be positive");
    return v;
}

inline double get_positive_or(const Json& j, const std::string& path,
                              const std::string& key, double fallback) {
    return j.contains(key) ? get_positive(j, path, key) : fallback;
}

inline int get_int(const Json& j, const std::string& path, const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_number_integer()) {
        throw ConfigError(join_path(path, key) + ": expected an integer");
    }
    return v.get<int>();
}

inline int get_int_or(const Json& j, const std::string& path, const std::string& key,
                      int fallback) {
    return j.contains(key) ? get_int(j, path, key) : fallback;
}

inline std::string get_string(const Json& j, const std::string& path,
                              const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(join_path(path, key) + ": expected a string");
    return v.get<std::string>();
}

inline bool get_bool_or(const Json& j, const std::string& path, const std::string& key,
                        bool fallback) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(join_path(path, key) + ": expected a boolean");
    return v.get<bool>();
}

inline std::vector<double> get_double_array(const Json& j, const std::string& path,
                                            const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_array() || v.empty()) {
        throw ConfigError(join_path(path, key) + ": expected a nonempty array");
    }
    std::vector<double> out;
    for (const Json& e : v) {
        if (!e.is_number()) {
            throw ConfigError(join_path(path, key) + ": expected numeric entries");
        }
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

struct LawConfig {
    std::string kind;           ///< "exponential" | "uniform_tail"
    std::vector<double> rates;  ///< per level, last entry repeats
    double endpoint = 0.0;      ///< uniform_tail support endpoint
};

struct KernelConfig {
    std::string kind;                       ///< "uniform" | "per_level"
    std::vector<std::vector<double>> rows;  ///< per level, last row repeats
};

struct ModelConfig {
    double horizon = 1.0;
    std::vector<std::string> alphabet;
    int m_cap = 1;
    bool bounded = false;
    LawConfig law;
    KernelConfig kernel;
};

struct GeneratorConfig {
    std::string kind;  ///< "zero" | "martingale" | "linear_decay" | "affine"
    double coef_y = 0.0, coef_z = 0.0, constant = 0.0;
};

struct TerminalConfig {
    std::string kind;  ///< "zero"|"constant"|"count_min"|"neg_count_min"|"indicator_last_mark"
    double value = 0.0;
    int cap = 0;
    std::string mark;
};

struct NumericConfig {
    int n_grid = 2000;
    double tol_picard = 1e-10;
    int max_iters = 200;
    int n_mc = 10000;
    double tol = 1e-3;
    std::uint64_t seed = 0;
};

struct EstimatesConfig {
    double alpha = 2.0;
    double beta = 4.0;
    int identity_paths = 20;
    double identity_tol = 1e-6;
    double shift = 0.5;  ///< terminal perturbation for the stability check
    double rho = 0.0;    ///< 0 -> use the generator's Lipschitz sum
};

struct PathologyConfig {
    double p = 0.5;
    double atom_r = 1.0;
    std::vector<std::pair<double, double>> atom_cases;  ///< (a, b)
    std::vector<double> w_values;
    double residual_tol = 1e-6;
    int family_n = 20000;
};

struct ControlConfig {
    std::vector<double> actions;
    double cost_rate = 0.4;  ///< running cost l(t, u) = cost_rate * u
    int n_random_policies = 10;
};

struct TruncationConfig {
    std::vector<int> caps;
    double alpha = 2.0;
    double beta = 4.0;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::solve;
    std::optional<ModelConfig> model;
    std::optional<GeneratorConfig> generator;
    std::optional<TerminalConfig> terminal;
    NumericConfig numeric;
    std::optional<EstimatesConfig> estimates;
    std::optional<PathologyConfig> pathology;
    std::optional<ControlConfig> control;
    std::optional<TruncationConfig> truncation;
    std::string output_dir;  ///< optional default; the CLI --out overrides
    Json raw;                ///< echoed verbatim into the run manifest
};

// ---------------------------------------------------------------------------
// Block parsers
// ---------------------------------------------------------------------------

inline LawConfig parse_law(const Json& j, const std::string& path) {
    LawConfig law;
    cfg::expect_keys(j, path, {"kind", "rate", "rates", "endpoint"}, {"kind"});
    law.kind = cfg::get_string(j, path, "kind");
    if (law.kind == "exponential") {
        if (j.contains("rate") == j.contains("rates")) {
            throw ConfigError(path + ": exponential law needs exactly one of rate/rates");
        }
        law.rates = j.contains("rate")
                        ? std::vector<double>{cfg::get_positive(j, path, "rate")}
                        : cfg::get_double_array(j, path, "rates");
        for (double r : law.rates) {
            if (!(r > 0.0)) throw ConfigError(path + ".rates: must be positive");
        }
    } else if (law.kind == "uniform_tail") {
        law.endpoint = cfg::get_positive(j, path, "endpoint");
    } else {
        throw ConfigError(cfg::join_path(path, "kind") + ": unknown law \"" + law.kind +
                          "\" (expected exponential | uniform_tail)");
    }
    return law;
}

inline KernelConfig parse_kernel(const Json& j, const std::string& path,
                                 std::size_t n_marks) {
    KernelConfig k;
    cfg::expect_keys(j, path, {"kind", "weights"}, {"kind"});
    k.kind = cfg::get_string(j, path, "kind");
    if (k.kind == "uniform") {
        return k;
    }
    if (k.kind != "per_level") {
        throw ConfigError(cfg::join_path(path, "kind") + ": unknown kernel \"" + k.kind +
                          "\" (expected uniform | per_level)");
    }
    const Json& rows = j.at("weights");
    if (!rows.is_array() || rows.empty()) {
        throw ConfigError(path + ".weights: expected a nonempty array of rows");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Json& row = rows[i];
        const std::string row_path = path + ".weights[" + std::to_string(i) + "]";
        if (!row.is_array() || row.size() != n_marks) {
            throw ConfigError(row_path + ": expected " + std::to_string(n_marks) +
                              " weights (one per mark)");
        }
        std::vector<double> vals;
        double sum = 0.0;
        for (const Json& e : row) {
            if (!e.is_number()) throw ConfigError(row_path + ": expected numbers");
            const double v = e.get<double>();
            if (v < 0.0) throw ConfigError(row_path + ": weights must be nonnegative");
            vals.push_back(v);
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigError(row_path + ": weights must sum to 1");
        }
        k.rows.push_back(std::move(vals));
    }
    return k;
}

inline ModelConfig parse_model(const Json& j, const std::string& path) {
    ModelConfig m;
    cfg::expect_keys(j, path,
                     {"horizon", "alphabet", "m_cap", "bounded", "law", "kernel"},
                     {"horizon", "alphabet", "m_cap", "law", "kernel"});
    m.horizon = cfg::get_positive(j, path, "horizon");
    const Json& alpha = j.at("alphabet");
    if (!alpha.is_array() || alpha.empty()) {
        throw ConfigError(path + ".alphabet: expected a nonempty array of mark names");
    }
    for (const Json& e : alpha) {
        if (!e.is_string()) throw ConfigError(path + ".alphabet: expected strings");
        m.alphabet.push_back(e.get<std::string>());
    }
    m.m_cap = cfg::get_int(j, path, "m_cap");
    if (m.m_cap < 1) throw ConfigError(path + ".m_cap: must be >= 1");
    m.bounded = cfg::get_bool_or(j, path, "bounded", false);
    m.law = parse_law(j.at("law"), path + ".law");
    m.kernel = parse_kernel(j.at("kernel"), path + ".kernel", m.alphabet.size());
    return m;
}

inline GeneratorConfig parse_generator(const Json& j, const std::string& path) {
    GeneratorConfig g;
    cfg::expect_keys(j, path, {"kind", "coef_y", "coef_z", "constant"}, {"kind"});
    g.kind = cfg::get_string(j, path, "kind");
    if (g.kind == "zero" || g.kind == "martingale" || g.kind == "linear_decay") {
        return g;
    }
    if (g.kind != "affine") {
        throw ConfigError(cfg::join_path(path, "kind") + ": unknown generator \"" +
                          g.kind + "\" (expected zero | martingale | linear_decay | affine)");
    }
    g.coef_y = cfg::get_double_or(j, path, "coef_y", 0.0);
    g.coef_z = cfg::get_double_or(j, path, "coef_z", 0.0);
    g.constant = cfg::get_double_or(j, path, "constant", 0.0);
    return g;
}

inline TerminalConfig parse_terminal(const Json& j, const std::string& path) {
    TerminalConfig t;
    cfg::expect_keys(j, path, {"kind", "value", "cap", "mark"}, {"kind"});
    t.kind = cfg::get_string(j, path, "kind");
    if (t.kind == "zero") return t;
    if (t.kind == "constant") {
        t.value = cfg::get_double(j, path, "value");
        return t;
    }
    if (t.kind == "count_min" || t.kind == "neg_count_min") {
        t.cap = cfg::get_int(j, path, "cap");
        if (t.cap < 0) throw ConfigError(path + ".cap: must be >= 0");
        return t;
    }
    if (t.kind == "indicator_last_mark") {
        t.mark = cfg::get_string(j, path, "mark");
        return t;
    }
    throw ConfigError(cfg::join_path(path, "kind") + ": unknown terminal \"" + t.kind +
                      "\" (expected zero | constant | count_min | neg_count_min | "
                      "indicator_last_mark)");
}

inline NumericConfig parse_numeric(const Json& j, const std::string& path) {
    NumericConfig n;
    cfg::expect_keys(
        j, path, {"n_grid", "tol_picard", "max_iters", "n_mc", "tol", "seed"}, {"seed"});
    n.n_grid = cfg::get_int_or(j, path, "n_grid", 2000);
    if (n.n_grid < 1) throw ConfigError(path + ".n_grid: must be >= 1");
    n.tol_picard = cfg::get_positive_or(j, path, "tol_picard", 1e-10);
    n.max_iters = cfg::get_int_or(j, path, "max_iters", 200);
    if (n.max_iters < 1) throw ConfigError(path + ".max_iters: must be >= 1");
    n.n_mc = cfg::get_int_or(j, path, "n_mc", 10000);
    if (n.n_mc < 2) throw ConfigError(path + ".n_mc: must be >= 2");
    n.tol = cfg::get_positive_or(j, path, "tol", 1e-3);
    const Json& seed = j.at("seed");
    if (!seed.is_number_integer() || seed.get<std::int64_t>() < 0) {
        throw ConfigError(path + ".seed: expected a nonnegative integer");
    }
    n.seed = seed.get<std::uint64_t>();
    return n;
}

inline EstimatesConfig parse_estimates(const Json& j, const std::string& path) {
    EstimatesConfig e;
    cfg::expect_keys(j, path,
                     {"alpha", "beta", "identity_paths", "identity_tol", "shift", "rho"},
                     {"alpha", "beta"});
    e.alpha = cfg::get_positive(j, path, "alpha");
    e.beta = cfg::get_double(j, path, "beta");
    if (e.beta < 0.0) throw ConfigError(path + ".beta: must be >= 0");
    e.identity_paths = cfg::get_int_or(j, path, "identity_paths", 20);
    if (e.identity_paths < 1) throw ConfigError(path + ".identity_paths: must be >= 1");
    e.identity_tol = cfg::get_positive_or(j, path, "identity_tol", 1e-6);
    e.shift = cfg::get_double_or(j, path, "shift", 0.5);
    e.rho = cfg::get_double_or(j, path, "rho", 0.0);
    return e;
}

inline PathologyConfig parse_pathology(const Json& j, const std::string& path) {
    PathologyConfig p;
    cfg::expect_keys(
        j, path, {"p", "atom_r", "atom_cases", "w_values", "residual_tol", "family_n"},
        {"atom_cases", "w_values"});
    p.p = cfg::get_double_or(j, path, "p", 0.5);
    if (!(p.p > 0.0 && p.p < 1.0)) throw ConfigError(path + ".p: must lie in (0,1)");
    p.atom_r = cfg::get_positive_or(j, path, "atom_r", 1.0);
    const Json& cases = j.at("atom_cases");
    if (!cases.is_array() || cases.empty()) {
        throw ConfigError(path + ".atom_cases: expected a nonempty array of [a, b] pairs");
    }
    for (const Json& c : cases) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
            throw ConfigError(path + ".atom_cases: entries must be [a, b] number pairs");
        }
        p.atom_cases.emplace_back(c[0].get<double>(), c[1].get<double>());
    }
    p.w_values = cfg::get_double_array(j, path, "w_values");
    p.residual_tol = cfg::get_positive_or(j, path, "residual_tol", 1e-6);
    p.family_n = cfg::get_int_or(j, path, "family_n", 20000);
    if (p.family_n < 2) throw ConfigError(path + ".family_n: must be >= 2");
    return p;
}

inline ControlConfig parse_control(const Json& j, const std::string& path) {
    ControlConfig c;
    cfg::expect_keys(j, path, {"actions", "cost_rate", "n_random_policies"}, {"actions"});
    c.actions = cfg::get_double_array(j, path, "actions");
    for (double u : c.actions) {
        if (!(u >= 0.0)) throw ConfigError(path + ".actions: must be nonnegative");
    }
    c.cost_rate = cfg::get_double_or(j, path, "cost_rate", 0.4);
    c.n_random_policies = cfg::get_int_or(j, path, "n_random_policies", 10);
    if (c.n_random_policies < 0) {
        throw ConfigError(path + ".n_random_policies: must be >= 0");
    }
    return c;
}

inline TruncationConfig parse_truncation(const Json& j, const std::string& path) {
    TruncationConfig t;
    cfg::expect_keys(j, path, {"caps", "alpha", "beta"}, {"caps"});
    const Json& caps = j.at("caps");
    if (!caps.is_array() || caps.size() < 2) {
        throw ConfigError(path + ".caps: expected an array of at least two caps");
    }
    for (const Json& c : caps) {
        if (!c.is_number_integer() || c.get<int>() < 1) {
            throw ConfigError(path + ".caps: entries must be integers >= 1");
        }
        t.caps.push_back(c.get<int>());
    }
    for (std::size_t i = 0; i + 1 < t.caps.size(); ++i) {
        if (t.caps[i + 1] <= t.caps[i]) {
            throw ConfigError(path + ".caps: must be strictly increasing");
        }
    }
    t.alpha = cfg::get_positive_or(j, path, "alpha", 2.0);
    t.beta = cfg::get_double_or(j, path, "beta", 4.0);
    return t;
}

// ---------------------------------------------------------------------------
// Top-level parse
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_experiment_config(const Json& j) {
    ExperimentConfig out;
    out.raw = j;
    cfg::require_object(j, "(root)");
    if (!j.contains("experiment")) {
        throw ConfigError("(root): missing required key \"experiment\"");
    }
    out.kind = experiment_kind_from(cfg::get_string(j, "(root)", "experiment"));

    // Blocks referenced by each kind; anything else present is rejected, so a
    // config cannot silently carry settings its experiment ignores.
    std::set<std::string> allowed = {"experiment", "numeric", "output"};
    std::set<std::string> required = {"experiment", "numeric"};
    auto need = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys) {
            allowed.insert(k);
            required.insert(k);
        }
    };
    switch (out.kind) {
        case ExperimentKind::solve: need({"model", "generator", "terminal"}); break;
        case ExperimentKind::simulate: need({"model"}); break;
        case ExperimentKind::verify_example:
            need({"model", "generator", "terminal"});
            break;
        case ExperimentKind::estimates:
            need({"model", "generator", "terminal", "estimates"});
            break;
        case ExperimentKind::pathology: need({"pathology"}); break;
        case ExperimentKind::control: need({"model", "terminal", "control"}); break;
        case ExperimentKind::truncation:
            need({"model", "generator", "terminal", "truncation"});
            break;
    }
    cfg::expect_keys(j, "(root)", allowed, required);

    out.numeric = parse_numeric(j.at("numeric"), "numeric");
    if (j.contains("model")) out.model = parse_model(j.at("model"), "model");
    if (j.contains("generator")) {
        out.generator = parse_generator(j.at("generator"), "generator");
    }
    if (j.contains("terminal")) out.terminal = parse_terminal(j.at("terminal"), "terminal");
    if (j.contains("estimates")) {
        out.estimates = parse_estimates(j.at("estimates"), "estimates");
    }
    if (j.contains("pathology")) {
        out.pathology = parse_pathology(j.at("pathology"), "pathology");
    }
    if (j.contains("control")) out.control = parse_control(j.at("control"), "control");
    if (j.contains("truncation")) {
        out.truncation = parse_truncation(j.at("truncation"), "truncation");
    }
    if (j.contains("output")) {
        const Json& o = j.at("output");
        cfg::expect_keys(o, "output", {"dir"}, {"dir"});
        out.output_dir = cfg::get_string(o, "output", "dir");
    }

    if (out.kind == ExperimentKind::truncation &&
        out.truncation->caps.back() > out.model->m_cap) {
        throw ConfigError("truncation.caps: largest cap exceeds model.m_cap");
    }
    return out;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        // nlohmann anchors parse errors by byte offset; pass that through.
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

inline MppModel build_model(const ModelConfig& mc) {
    MppModel m;
    m.horizon = mc.horizon;
    m.alphabet = mc.alphabet;
    m.m_cap = mc.m_cap;
    m.bounded = mc.bounded;

    if (mc.law.kind == "exponential") {
        const std::vector<double> rates = mc.law.rates;
        m.law = [rates](int level, const History& d) -> std::unique_ptr<SurvivalLaw> {
            const std::size_t i =
                std::min(static_cast<std::size_t>(level), rates.size() - 1);
            return std::make_unique<ExponentialLaw>(d.dmax(), rates[i]);
        };
        m.level_homogeneous = true;  // increments depend on the level only
    } else {  // uniform_tail
        const double endpoint = mc.law.endpoint;
        if (endpoint <= mc.horizon) {
            throw ConfigError(
                "model.law.endpoint: must exceed the horizon (the hazard must stay "
                "finite on [0, T])");
        }
        m.law = [endpoint](int, const History& d) -> std::unique_ptr<SurvivalLaw> {
            return std::make_unique<UniformTailLaw>(d.dmax(), endpoint);
        };
        m.level_homogeneous = false;  // increments depend on the last jump time
    }

    if (mc.kernel.kind == "uniform") {
        m.kernel = [](int, const History&, double, std::span<double> w) {
            const double v = 1.0 / static_cast<double>(w.size());
            for (double& x : w) x = v;
        };
    } else {
        const std::vector<std::vector<double>> rows = mc.kernel.rows;
        m.kernel = [rows](int level, const History&, double, std::span<double> w) {
            const std::size_t i =
                std::min(static_cast<std::size_t>(level), rows.size() - 1);
            for (std::size_t x = 0; x < w.size(); ++x) w[x] = rows[i][x];
        };
    }
    return m;
}

inline GeneratorSpec build_generator(const GeneratorConfig& gc) {
    if (gc.kind == "zero") return GeneratorSpec::zero();
    if (gc.kind == "martingale") return GeneratorSpec::martingale();
    if (gc.kind == "linear_decay") return GeneratorSpec::linear_decay();
    const double cy = gc.coef_y, cz = gc.coef_z, c0 = gc.constant;
    return GeneratorSpec::type1(
        [cy, cz, c0](double, MarkId, double y, double z) { return c0 + cy * y + cz * z; },
        std::abs(cz), std::abs(cy), "affine");
}

inline TerminalSpec build_terminal(const TerminalConfig& tc,
                                   const std::vector<std::string>& alphabet) {
    if (tc.kind == "zero") return TerminalSpec::zero();
    if (tc.kind == "constant") return TerminalSpec::constant(tc.value);
    if (tc.kind == "count_min") {
        const int cap = tc.cap;
        return TerminalSpec::from_count(
            [cap](int n) { return static_cast<double>(std::min(n, cap)); }, "count_min");
    }
    if (tc.kind == "neg_count_min") {
        const int cap = tc.cap;
        return TerminalSpec::from_count(
            [cap](int n) { return -static_cast<double>(std::min(n, cap)); },
            "neg_count_min");
    }
    // indicator_last_mark
    const auto it = std::find(alphabet.begin(), alphabet.end(), tc.mark);
    if (it == alphabet.end()) {
        throw ConfigError("terminal.mark: \"" + tc.mark + "\" is not in model.alphabet");
    }
    const MarkId id = static_cast<MarkId>(it - alphabet.begin());
    return TerminalSpec::from_history(
        [id](int level, const History& d) {
            return (level >= 1 && d.last_mark() == id) ? 1.0 : 0.0;
        },
        "indicator_last_mark");
}

inline SolverOptions build_solver_options(const NumericConfig& nc) {
    SolverOptions opts;
    opts.n_grid = nc.n_grid;
    opts.tol_picard = nc.tol_picard;
    opts.max_iters = nc.max_iters;
    return opts;
}

}  // namespace jumpflow
