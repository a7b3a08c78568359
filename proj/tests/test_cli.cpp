// End-to-end tests driving the built command-line binary against the shipped
// configs: exit codes, seed precedence, output schemas, and reproducibility.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

using Json = nlohmann::json;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const fs::path& work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "jumpflow_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string config_path(const std::string& name) {
    return (fs::path(JUMPFLOW_CONFIG_DIR) / name).string();
}

/// Runs the CLI with `args` appended; `env_prefix` may set variables for the
/// child (e.g. "JUMPFLOW_SEED=123 ").
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    const fs::path out_file = work_root() / ("stdout." + std::to_string(counter));
    const fs::path err_file = work_root() / ("stderr." + std::to_string(counter));
    ++counter;
    const std::string cmd = env_prefix + std::string(JUMPFLOW_CLI_PATH) + " " + args +
                            " > " + out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.out = read_text(out_file);
    r.err = read_text(err_file);
    return r;
}

std::string first_line(const std::string& text) {
    const auto pos = text.find('\n');
    return pos == std::string::npos ? text : text.substr(0, pos);
}

Json load_manifest(const fs::path& dir) {
    return Json::parse(read_text(dir / "manifest.json"));
}

}  // namespace

TEST_CASE("every shipped config runs clean end to end") {
    struct Spec {
        std::string kind;
        std::string file;
        std::uint64_t seed;
        std::vector<std::string> tables;
        std::string header;  ///< expected header of tables.front()
    };
    const std::vector<Spec> specs = {
        {"solve", "solve.json", 11, {"solution.csv", "series.csv"}, "t,Y,Z_tick"},
        {"simulate",
         "simulate.json",
         7,
         {"compensator.csv", "counts.csv", "paths.csv", "series.csv"},
         "integrand,lhs,rhs,se,pass"},
        {"verify-example",
         "verify_example.json",
         42,
         {"verify_example.csv", "series.csv"},
         "path,regime,t,y_num,y_ref,abs_err"},
        {"estimates",
         "estimates.json",
         2024,
         {"estimates.csv"},
         "check,detail,lhs,rhs,se,slack,pass"},
        {"pathology",
         "pathology.json",
         1,
         {"atom.csv", "family.csv", "series.csv"},
         "case_id,a,b,p,kind,discriminant,gamma,rho,eta,delta,delta_alt,pass"},
        {"control",
         "control_desk.json",
         2026,
         {"control.csv"},
         "policy_id,j_hat,se,y0,mean_weight,weight_se,pass"},
        {"truncation",
         "truncation_poisson.json",
         99,
         {"truncation.csv"},
         "cap,y0,delta_proxy,delta_se,reference_mc,reference_se"},
    };

    for (const Spec& s : specs) {
        INFO("kind " << s.kind);
        const fs::path out_dir = work_root() / "runs" / s.kind;
        const RunResult r = run_cli(s.kind + " --config " + config_path(s.file) +
                                    " --out " + out_dir.string());
        INFO(r.out << r.err);
        REQUIRE(r.exit_code == 0);
        REQUIRE_THAT(r.out, ContainsSubstring("experiment: " + s.kind));
        REQUIRE_THAT(r.out, ContainsSubstring("[PASS]"));
        REQUIRE(r.out.find("[FAIL]") == std::string::npos);
        REQUIRE(r.err.empty());

        const Json manifest = load_manifest(out_dir);
        REQUIRE(manifest.at("experiment").get<std::string>() == s.kind);
        REQUIRE(manifest.at("seed").get<std::uint64_t>() == s.seed);
        REQUIRE(manifest.at("all_pass").get<bool>());
        REQUIRE(manifest.at("library").at("name").get<std::string>() == "jumpflow");
        REQUIRE_FALSE(manifest.at("assertions").empty());
        for (const Json& a : manifest.at("assertions")) {
            INFO(a.dump());
            REQUIRE(a.at("pass").get<bool>());
        }

        const auto outputs = manifest.at("outputs").get<std::vector<std::string>>();
        for (const std::string& table : s.tables) {
            INFO("table " << table);
            REQUIRE(fs::exists(out_dir / table));
            REQUIRE(std::find(outputs.begin(), outputs.end(), table) != outputs.end());
        }

        const std::string csv = read_text(out_dir / s.tables.front());
        REQUIRE(first_line(csv) == s.header);
        REQUIRE(std::count(csv.begin(), csv.end(), '\n') >= 2);  // header + data
    }

    SECTION("the control table ranks the synthesized policy first") {
        const std::string csv =
            read_text(work_root() / "runs" / "control" / "control.csv");
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line);  // header
        std::getline(lines, line);
        REQUIRE_THAT(line, ContainsSubstring("optimal,"));
        std::string last;
        while (std::getline(lines, line)) {
            if (!line.empty()) last = line;
        }
        REQUIRE(last.rfind("optimal_direct,", 0) == 0);
    }
}

TEST_CASE("reruns with the same seed are byte-identical") {
    const fs::path a = work_root() / "repeat_a";
    const fs::path b = work_root() / "repeat_b";
    const std::string base = " --config " + config_path("simulate.json") + " --seed 4242";
    REQUIRE(run_cli("simulate" + base + " --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli("simulate" + base + " --out " + b.string()).exit_code == 0);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) {
        names.push_back(e.path().filename().string());
    }
    REQUIRE_FALSE(names.empty());
    for (const std::string& name : names) {
        INFO("file " << name);
        REQUIRE(fs::exists(b / name));
        REQUIRE(read_text(a / name) == read_text(b / name));
    }
}

TEST_CASE("the master seed obeys flag > environment > config") {
    const std::string cfg = " --config " + config_path("simulate.json");

    const fs::path d_cfg = work_root() / "seed_cfg";
    REQUIRE(run_cli("simulate" + cfg + " --out " + d_cfg.string()).exit_code == 0);
    REQUIRE(load_manifest(d_cfg).at("seed").get<std::uint64_t>() == 7);

    const fs::path d_env = work_root() / "seed_env";
    REQUIRE(run_cli("simulate" + cfg + " --out " + d_env.string(),
                    "JUMPFLOW_SEED=123 ")
                .exit_code == 0);
    REQUIRE(load_manifest(d_env).at("seed").get<std::uint64_t>() == 123);

    const fs::path d_flag = work_root() / "seed_flag";
    REQUIRE(run_cli("simulate" + cfg + " --seed 77 --out " + d_flag.string(),
                    "JUMPFLOW_SEED=123 ")
                .exit_code == 0);
    REQUIRE(load_manifest(d_flag).at("seed").get<std::uint64_t>() == 77);

    // Different seeds must actually change the sampled paths.
    REQUIRE(read_text(d_cfg / "paths.csv") != read_text(d_env / "paths.csv"));
}

TEST_CASE("config errors exit with code 2 and name the problem") {
    SECTION("unparseable JSON") {
        const fs::path bad = work_root() / "bad.json";
        std::ofstream(bad) << "{ nope";
        const RunResult r = run_cli("solve --config " + bad.string());
        REQUIRE(r.exit_code == 2);
        REQUIRE_THAT(r.err, ContainsSubstring("config parse error"));
    }

    SECTION("missing required seed") {
        Json j = Json::parse(read_text(config_path("solve.json")));
        j["numeric"].erase("seed");
        const fs::path p = work_root() / "no_seed.json";
        std::ofstream(p) << j.dump(2);
        const RunResult r = run_cli("solve --config " + p.string());
        REQUIRE(r.exit_code == 2);
        REQUIRE_THAT(r.err, ContainsSubstring("numeric: missing required key \"seed\""));
    }

    SECTION("unknown key with its JSON path") {
        Json j = Json::parse(read_text(config_path("solve.json")));
        j["bogus"] = 1;
        const fs::path p = work_root() / "unknown_key.json";
        std::ofstream(p) << j.dump(2);
        const RunResult r = run_cli("solve --config " + p.string());
        REQUIRE(r.exit_code == 2);
        REQUIRE_THAT(r.err, ContainsSubstring("(root).bogus: unknown key"));
    }

    SECTION("experiment kind mismatch") {
        const RunResult r =
            run_cli("simulate --config " + config_path("solve.json"));
        REQUIRE(r.exit_code == 2);
        REQUIRE_THAT(r.err, ContainsSubstring("declares experiment 'solve'"));
        REQUIRE_THAT(r.err, ContainsSubstring("'simulate' command"));
    }

    SECTION("malformed JUMPFLOW_SEED") {
        const RunResult r = run_cli(
            "simulate --config " + config_path("simulate.json") + " --out " +
                (work_root() / "never").string(),
            "JUMPFLOW_SEED=abc ");
        REQUIRE(r.exit_code == 2);
        REQUIRE_THAT(r.err, ContainsSubstring("JUMPFLOW_SEED"));
    }
}

TEST_CASE("a missing config file exits with code 3") {
    const RunResult r = run_cli("solve --config /definitely/not/here.json");
    REQUIRE(r.exit_code == 3);
    REQUIRE_THAT(r.err, ContainsSubstring("cannot open config file"));
}

TEST_CASE("usage and help") {
    SECTION("no subcommand is a usage error") {
        const RunResult r = run_cli("");
        REQUIRE(r.exit_code != 0);
        REQUIRE_FALSE(r.err.empty());
    }
    SECTION("--help lists the experiment kinds") {
        const RunResult r = run_cli("--help");
        REQUIRE(r.exit_code == 0);
        for (const char* kind : {"solve", "simulate", "verify-example", "estimates",
                                 "pathology", "control", "truncation"}) {
            REQUIRE_THAT(r.out, ContainsSubstring(kind));
        }
    }
    SECTION("--config is required") {
        const RunResult r = run_cli("solve");
        REQUIRE(r.exit_code != 0);
        REQUIRE_THAT(r.err, ContainsSubstring("--config"));
    }
}
