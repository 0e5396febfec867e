// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stoclock/cli.hpp"

using namespace stoclock::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("stoclock_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_quiet(Invocation inv) {
    std::ostringstream out, err;
    return run(inv, out, err);
}

std::vector<std::string> csv_lines(const fs::path& p) {
    std::vector<std::string> lines;
    std::istringstream is(slurp(p));
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    return lines;
}

}  // namespace

TEST(Csv, RealsUseSeventeenDigitsAndDot) {
    EXPECT_EQ(format_real(0.1), "0.10000000000000001");
    EXPECT_EQ(format_real(1.0), "1");
    EXPECT_EQ(format_real(-2.5e-10), "-2.5000000000000002e-10");
    EXPECT_EQ(std::stod(format_real(0.05889151782819174)), 0.05889151782819174);
}

TEST(Csv, QuotingFollowsRfc4180) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(Csv, EmptyRowSetGivesHeaderOnly) {
    CsvTable t;
    t.columns = {"x", "u"};
    Provenance prov{"duality solve", build_config(json::object()).effective};
    const auto text = render_csv(t, prov);
    std::istringstream is(text);
    std::string first, second, third;
    std::getline(is, first);
    std::getline(is, second);
    EXPECT_EQ(first.rfind("# stoclock duality solve config_hash=", 0), 0u);
    EXPECT_NE(first.find("seed=20260101"), std::string::npos);
    EXPECT_EQ(second, "x,u");
    EXPECT_FALSE(std::getline(is, third));
    EXPECT_THROW(t.add({1.0}), std::logic_error);
}

TEST(Csv, ProvenanceHashTracksEveryField) {
    const auto base = build_config(json::object()).effective;
    const std::string h0 = Provenance{"x", base}.hash();
    EXPECT_EQ((Provenance{"x", build_config(json::object()).effective}.hash()), h0);
    for (const auto& section : {"market", "sim"}) {
        for (auto it = base[section].begin(); it != base[section].end(); ++it) {
            if (!it.value().is_number()) continue;
            json raw = base;
            raw[section][it.key()] = it.value().get<double>() + 0.125;
            const bool integral = it.value().is_number_integer();
            if (integral) raw[section][it.key()] = it.value().get<std::uint64_t>() + 1;
            raw.erase("output");
            const auto cfg = build_config(raw);
            EXPECT_NE((Provenance{"x", cfg.effective}.hash()), h0) << section << "." << it.key();
        }
    }
}

TEST(Config, DefaultsAreEchoed) {
    const auto cfg = build_config(json::object());
    EXPECT_DOUBLE_EQ(cfg.effective["sim"]["epsilon"].get<double>(), 0.5 * std::sqrt(1e-3));
    EXPECT_DOUBLE_EQ(cfg.effective["sim"]["lambda_star"].get<double>(), 1.0);
    EXPECT_EQ(cfg.effective["sim"]["calibration_paths"].get<std::size_t>(), 10000u);
    EXPECT_EQ(cfg.effective["market"]["sigma"].get<double>(), 1.0);
}

TEST(Config, MissingSigmaIsAFieldError) {
    json raw = {{"market", {{"mu", 0.2}, {"rho", 0.5}, {"alpha", 1.0}, {"beta", 0.5}}}};
    try {
        build_config(raw);
        FAIL();
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("market.sigma"), std::string::npos);
    }
}

TEST(Config, SchemaErrors) {
    EXPECT_THROW(build_config(json{{"markt", json::object()}}), config_error);
    EXPECT_THROW(build_config(json{{"sim", {{"dtt", 0.1}}}}), config_error);
    EXPECT_THROW(build_config(json{{"sim", {{"n_paths", -3}}}}), config_error);
    EXPECT_THROW(build_config(json{{"sim", {{"dt", "fast"}}}}), config_error);
    EXPECT_THROW(build_config(json{{"sim", {{"law", "other"}}}}), config_error);
    EXPECT_THROW(build_config(json{{"utility", {{"kind", "power"}, {"beta", 0.0}}}}), config_error);
    EXPECT_NO_THROW(build_config(json{{"utility", {{"kind", "power"}, {"gamma", 0.5}, {"beta", 0.0}}}}));
}

TEST(Config, MalformedJsonReportsLineAndColumn) {
    try {
        parse_json_text("{\n  \"sim\": {\"dt\": 0.1,,}\n}", "cfg.json");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("cfg.json:2:", 0), 0u) << e.what();
    }
}

TEST(Config, Overrides) {
    json raw = json::object();
    apply_override(raw, "sim.n_paths=50");
    apply_override(raw, "sim.law=printed_521");
    const auto cfg = build_config(raw);
    EXPECT_EQ(cfg.n_paths, 50u);
    EXPECT_EQ(cfg.law, stoclock::ConsumptionLaw::printed_521);
    // A section that appears at all must be complete.
    apply_override(raw, "market.sigma=0.8");
    EXPECT_THROW(build_config(raw), config_error);
    EXPECT_THROW(apply_override(raw, "novalue"), config_error);
}

TEST(Run, SpecialVerifyWritesSixRows) {
    const auto dir = scratch("special");
    Invocation inv{"special", "verify", "", {}, dir.string(), 1};
    EXPECT_EQ(run_quiet(inv), exit_ok);
    const auto lines = csv_lines(dir / "stoclock_special_verify.csv");
    ASSERT_EQ(lines.size(), 8u);
    EXPECT_EQ(lines[1], "identity,argument,value,reference,abs_error,tolerance,pass");
    for (std::size_t k = 2; k < lines.size(); ++k) EXPECT_NE(lines[k].find(",true"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "stoclock_special_verify_report.txt"));
}

TEST(Run, MissingSigmaExitsTwo) {
    const auto dir = scratch("sigma");
    const auto cfg = dir / "cfg.json";
    std::ofstream(cfg) << R"({"market": {"mu": 0.2, "rho": 0.5, "alpha": 1.0, "beta": 0.5}})";
    Invocation inv{"strategy", "simulate", cfg.string(), {}, dir.string(), 1};
    EXPECT_EQ(run_quiet(inv), exit_config_error);
    Invocation bad{"strategy", "simulate", (dir / "absent.json").string(), {}, dir.string(), 1};
    EXPECT_EQ(run_quiet(bad), exit_config_error);
}

TEST(Run, DualitySolveOnBinomialFixture) {
    const auto dir = scratch("binomial");
    Invocation inv{"duality", "solve", std::string(STOCLOCK_CONFIG_DIR) + "/binomial.json", {}, dir.string(), 1};
    EXPECT_EQ(run_quiet(inv), exit_ok);
    const auto lines = csv_lines(dir / "binomial_duality_solve.csv");
    ASSERT_GE(lines.size(), 3u);
    EXPECT_EQ(lines[1], "x,u,u_prime,y,v,v_prime,gap");
    std::istringstream row(lines[2]);
    std::string x, u;
    std::getline(row, x, ',');
    std::getline(row, u, ',');
    EXPECT_NEAR(std::stod(u), 0.0588915, 1e-7);
}

TEST(Run, DualityWithoutTreeIsConfigError) {
    const auto dir = scratch("notree");
    EXPECT_EQ(run_quiet({"duality", "solve", "", {}, dir.string(), 1}), exit_config_error);
}

TEST(Run, InfeasibleWealthIsDomainError) {
    const auto dir = scratch("infeasible");
    Invocation inv{"duality", "solve", std::string(STOCLOCK_CONFIG_DIR) + "/binomial.json", {"tree.x=[-0.5]", "tree.y=[]"},
                   dir.string(), 1};
    EXPECT_EQ(run_quiet(inv), exit_config_error);
}

TEST(Run, FailedCheckExitsOne) {
    const auto dir = scratch("fail");
    // Demanding a 200% drop in terminal wealth cannot be met by either law.
    Invocation inv{"strategy", "adjudicate", "", {"sim.n_paths=200", "sim.normalization=0.3536", "sim.required_drop=2.0"},
                   dir.string(), 1};
    EXPECT_EQ(run_quiet(inv), exit_check_failed);
}

TEST(Run, ByteIdenticalAcrossRerunsAndWorkers) {
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"clock", "validate"}, {"strategy", "compare"}, {"duality", "check"}};
    for (const auto& [group, action] : commands) {
        std::vector<std::string> overrides = {"sim.n_paths=150", "sim.normalization=0.3536"};
        std::string config;
        if (group == "duality") config = std::string(STOCLOCK_CONFIG_DIR) + "/trinomial.json";
        std::vector<std::string> outputs;
        for (unsigned workers : {1u, 4u, 1u}) {
            const auto dir = scratch(group + action + std::to_string(outputs.size()));
            Invocation inv{group, action, config, overrides, dir.string(), workers};
            const int code = run_quiet(inv);
            EXPECT_NE(code, exit_config_error);
            for (const auto& entry : fs::directory_iterator(dir))
                if (entry.path().extension() == ".csv") outputs.push_back(slurp(entry.path()));
        }
        ASSERT_EQ(outputs.size(), 3u) << group << " " << action;
        EXPECT_EQ(outputs[0], outputs[1]) << group << " " << action;
        EXPECT_EQ(outputs[0], outputs[2]) << group << " " << action;
    }
}

TEST(Run, OutputDirectoryFromEnvironment) {
    const auto dir = scratch("env");
    ::setenv("STOCLOCK_OUT_DIR", dir.string().c_str(), 1);
    EXPECT_EQ(run_quiet({"special", "verify", "", {}, "", 1}), exit_ok);
    ::unsetenv("STOCLOCK_OUT_DIR");
    EXPECT_TRUE(fs::exists(dir / "stoclock_special_verify.csv"));
}

TEST(Main, ParsesSubcommandsAndFlags) {
    const auto dir = scratch("main");
    const std::string out = dir.string();
    const std::string cfg = std::string(STOCLOCK_CONFIG_DIR) + "/binomial.json";
    const char* argv[] = {"stoclock_cli", "duality", "solve", "--config", cfg.c_str(), "--out-dir", out.c_str()};
    std::ostringstream o, e;
    EXPECT_EQ(stoclock::cli::main(7, argv, o, e), exit_ok);
    EXPECT_TRUE(fs::exists(dir / "binomial_duality_solve.csv"));
    const char* bad[] = {"stoclock_cli", "duality", "frobnicate"};
    EXPECT_EQ(stoclock::cli::main(3, bad, o, e), exit_config_error);
    const char* help[] = {"stoclock_cli", "--help"};
    EXPECT_EQ(stoclock::cli::main(2, help, o, e), exit_ok);
}

TEST(Binary, ExitCodes) {
    const auto dir = scratch("binary");
    const auto cfg = dir / "cfg.json";
    std::ofstream(cfg) << R"({"market": {"mu": 0.2, "rho": 0.5, "alpha": 1.0, "beta": 0.5}})";
    const std::string cli = STOCLOCK_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int raw = std::system((cli + " " + args + " --out-dir " + dir.string() + " > /dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    EXPECT_EQ(status("special verify"), 0);
    EXPECT_EQ(status("strategy simulate --config " + cfg.string()), 2);
    const std::string fixture = std::string(STOCLOCK_CONFIG_DIR) + "/binomial2_endowment.json";
    EXPECT_EQ(status("duality oracle --config " + fixture), 0);
}
