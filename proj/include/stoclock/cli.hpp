// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stoclock/clock_sim.hpp"
#include "stoclock/finite_duality.hpp"
#include "stoclock/special_fn.hpp"
#include "stoclock/strategy_sim.hpp"
#include "stoclock/utility.hpp"

namespace stoclock::cli {

using nlohmann::json;

/// Malformed or out-of-schema configuration; maps to exit code 2.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config_error = 2 };

// ---------------------------------------------------------------------------
// CSV

using Cell = std::variant<std::monostate, double, long long, std::string>;

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size()) throw std::logic_error("CsvTable: row width does not match the schema");
        rows.push_back(std::move(row));
    }
};

inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline std::string format_cell(const Cell& c) {
    if (std::holds_alternative<double>(c)) return format_real(std::get<double>(c));
    if (std::holds_alternative<long long>(c)) return std::to_string(std::get<long long>(c));
    if (std::holds_alternative<std::string>(c)) return csv_field(std::get<std::string>(c));
    return {};
}

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

struct Provenance {
    std::string command;
    json config;  // effective config with every default filled in

    std::string hash() const { return hex64(fnv1a(config.dump())); }
    std::uint64_t seed() const { return config.at("sim").at("seed").get<std::uint64_t>(); }

    std::string line() const {
        return "# stoclock " + command + " config_hash=" + hash() + " seed=" + std::to_string(seed()) + " config=" +
               config.dump();
    }
};

inline std::string render_csv(const CsvTable& table, const Provenance& prov) {
    std::string out = prov.line() + "\n";
    for (std::size_t k = 0; k < table.columns.size(); ++k) out += (k ? "," : "") + csv_field(table.columns[k]);
    out += "\n";
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out += (k ? "," : "") + format_cell(row[k]);
        out += "\n";
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw io_error("write failed for " + path.string());
}

inline void emit_csv(const CsvTable& table, const Provenance& prov, const std::filesystem::path& path) {
    write_file(path, render_csv(table, prov));
}

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

enum class Kind { number, integer, string, number_list, any };

struct Field {
    const char* name;
    Kind kind;
    bool required;  // when the enclosing section is present
    json fallback;
};

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::number: return "a number";
        case Kind::integer: return "a nonnegative integer";
        case Kind::string: return "a string";
        case Kind::number_list: return "an array of numbers";
        case Kind::any: return "a value";
    }
    return "?";
}

inline bool matches(const json& v, Kind k) {
    switch (k) {
        case Kind::number: return v.is_number();
        case Kind::integer: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
        case Kind::string: return v.is_string();
        case Kind::number_list:
            if (!v.is_array()) return false;
            for (const auto& e : v)
                if (!e.is_number()) return false;
            return true;
        case Kind::any: return true;
    }
    return false;
}

inline json section(const json& raw, const std::string& name, const std::vector<Field>& fields) {
    json out = json::object();
    const bool present = raw.contains(name);
    if (present && !raw.at(name).is_object()) throw config_error(name + ": expected an object");
    const json empty = json::object();
    const json& src = present ? raw.at(name) : empty;
    for (auto it = src.begin(); it != src.end(); ++it) {
        bool known = false;
        for (const auto& f : fields) known = known || it.key() == f.name;
        if (!known) throw config_error(name + "." + it.key() + ": unknown field");
    }
    for (const auto& f : fields) {
        const std::string path = name + "." + f.name;
        if (src.contains(f.name)) {
            const json& v = src.at(f.name);
            if (!matches(v, f.kind)) throw config_error(path + ": expected " + kind_name(f.kind) + ", got " + v.dump());
            out[f.name] = v;
        } else if (present && f.required) {
            throw config_error(path + ": required field missing");
        } else {
            out[f.name] = f.fallback;
        }
    }
    return out;
}

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace detail

/// Parses JSON text, reporting line:column on syntax errors.
inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw config_error(origin + ":" + detail::line_col(text, at) + ": malformed JSON: " + e.what());
    }
}

inline json read_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error(path + ": cannot read config file");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_json_text(ss.str(), path);
}

/// Applies "a.b.c=value" overrides; the value is read as JSON, falling back to a plain string.
inline void apply_override(json& raw, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("override '" + assignment + "': expected key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    std::string pointer = "/";
    for (char ch : key) pointer += ch == '.' ? '/' : ch;
    if (!raw.is_object()) throw config_error("config root must be a JSON object");
    raw[json::json_pointer(pointer)] = value;
}

struct RunConfig {
    MarketParams market;
    UtilityField utility;
    json effective;  // echoed in provenance

    // sim
    double dt = 1e-3;
    double t_max = 40.0;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 20260101;
    double epsilon = 0.0;
    double normalization = 0.0;
    double lambda_star = 1.0;
    double x0 = 1.0;
    ConsumptionLaw law = ConsumptionLaw::derived_psi_numerator;
    std::size_t calibration_paths = 10000;
    double required_drop = 0.30;

    // clock grids
    std::vector<double> lambdas, s_values, hitting_lambdas, hitting_r;

    std::optional<json> tree;
    std::string output_prefix = "stoclock";
};

inline ConsumptionLaw parse_law(const std::string& s) {
    if (s == "derived_psi_numerator") return ConsumptionLaw::derived_psi_numerator;
    if (s == "printed_521") return ConsumptionLaw::printed_521;
    throw config_error("sim.law: expected \"derived_psi_numerator\" or \"printed_521\", got \"" + s + "\"");
}

inline RunConfig build_config(const json& raw) {
    using detail::Field;
    using detail::Kind;
    if (!raw.is_object()) throw config_error("config root must be a JSON object");
    for (auto it = raw.begin(); it != raw.end(); ++it) {
        static const std::vector<std::string> known = {"market", "utility", "sim", "clock", "tree", "output"};
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw config_error(it.key() + ": unknown section");
    }
    RunConfig cfg;
    json eff;
    eff["market"] = detail::section(raw, "market",
                                    {{"mu", Kind::number, true, 0.2},
                                     {"sigma", Kind::number, true, 1.0},
                                     {"rho", Kind::number, true, 0.5},
                                     {"alpha", Kind::number, true, 1.0},
                                     {"beta", Kind::number, true, 0.5}});
    eff["utility"] = detail::section(raw, "utility",
                                     {{"kind", Kind::string, true, "log"},
                                      {"gamma", Kind::number, false, 0.5},
                                      {"beta", Kind::number, true, 0.0}});
    const auto& m = eff["market"];
    cfg.market = {m["mu"].get<double>(), m["sigma"].get<double>(), m["rho"].get<double>(), m["alpha"].get<double>(),
                  m["beta"].get<double>()};
    const auto& u = eff["utility"];
    const std::string kind = u["kind"].get<std::string>();
    if (kind == "log") {
        cfg.utility = UtilityField::log_utility(u["beta"].get<double>());
        eff["utility"].erase("gamma");
    } else if (kind == "power") {
        if (!raw.contains("utility") || !raw.at("utility").contains("gamma"))
            throw config_error("utility.gamma: required field missing for power utility");
        cfg.utility = UtilityField::power_utility(u["gamma"].get<double>(), u["beta"].get<double>());
    } else {
        throw config_error("utility.kind: expected \"log\" or \"power\", got \"" + kind + "\"");
    }

    eff["sim"] = detail::section(raw, "sim",
                                 {{"dt", Kind::number, false, 1e-3},
                                  {"t_max", Kind::number, false, 40.0},
                                  {"n_paths", Kind::integer, false, 10000},
                                  {"seed", Kind::integer, false, 20260101},
                                  {"epsilon", Kind::number, false, 0.0},
                                  {"normalization", Kind::number, false, 0.0},
                                  {"lambda_star", Kind::number, false, nullptr},
                                  {"x0", Kind::number, false, 1.0},
                                  {"law", Kind::string, false, "derived_psi_numerator"},
                                  {"calibration_paths", Kind::integer, false, nullptr},
                                  {"required_drop", Kind::number, false, 0.30}});
    auto& s = eff["sim"];
    cfg.dt = s["dt"].get<double>();
    cfg.t_max = s["t_max"].get<double>();
    cfg.n_paths = s["n_paths"].get<std::size_t>();
    cfg.seed = s["seed"].get<std::uint64_t>();
    if (!(cfg.dt > 0.0)) throw config_error("sim.dt: must be positive");
    if (cfg.n_paths < 2) throw config_error("sim.n_paths: at least 2 paths are needed for a std-error");
    cfg.epsilon = s["epsilon"].get<double>();
    if (cfg.epsilon < 0.0) throw config_error("sim.epsilon: must be nonnegative (0 selects sqrt(dt)/2)");
    if (cfg.epsilon == 0.0) cfg.epsilon = 0.5 * std::sqrt(cfg.dt);
    s["epsilon"] = cfg.epsilon;
    cfg.normalization = s["normalization"].get<double>();
    if (cfg.normalization < 0.0) throw config_error("sim.normalization: must be nonnegative (0 calibrates)");
    if (s["lambda_star"].is_null()) s["lambda_star"] = cfg.market.alpha;
    cfg.lambda_star = s["lambda_star"].get<double>();
    cfg.x0 = s["x0"].get<double>();
    cfg.law = parse_law(s["law"].get<std::string>());
    if (s["calibration_paths"].is_null()) s["calibration_paths"] = cfg.n_paths;
    cfg.calibration_paths = s["calibration_paths"].get<std::size_t>();
    cfg.required_drop = s["required_drop"].get<double>();

    eff["clock"] = detail::section(raw, "clock",
                                   {{"lambdas", Kind::number_list, false, json::array({0.5, 2.0})},
                                    {"s_values", Kind::number_list, false, json::array({0.25, 0.5, 1.0})},
                                    {"hitting_lambdas", Kind::number_list, false, json::array({1.0, 2.0})},
                                    {"hitting_r", Kind::number_list, false, json::array({0.5, 1.0})}});
    const auto& c = eff["clock"];
    cfg.lambdas = c["lambdas"].get<std::vector<double>>();
    cfg.s_values = c["s_values"].get<std::vector<double>>();
    cfg.hitting_lambdas = c["hitting_lambdas"].get<std::vector<double>>();
    cfg.hitting_r = c["hitting_r"].get<std::vector<double>>();
    if (cfg.s_values.empty()) throw config_error("clock.s_values: must not be empty");

    if (raw.contains("tree")) {
        eff["tree"] = detail::section(raw, "tree",
                                      {{"nodes", Kind::any, true, nullptr},
                                       {"clock", Kind::any, true, nullptr},
                                       {"endowment", Kind::number_list, false, nullptr},
                                       {"x", Kind::number_list, false, json::array({1.0})},
                                       {"y", Kind::number_list, false, json::array()},
                                       {"x_grid", Kind::number_list, false, json::array({0.5, 1.0, 1.5, 2.0, 3.0})},
                                       {"y_grid", Kind::number_list, false, json::array({0.3, 0.6, 1.0, 1.5, 2.5})},
                                       {"oracle_points", Kind::integer, false, 13},
                                       {"oracle_refinements", Kind::integer, false, 2}});
        cfg.tree = eff["tree"];
    }
    if (raw.contains("output")) {
        if (!raw.at("output").is_string()) throw config_error("output: expected a string path prefix");
        cfg.output_prefix = raw.at("output").get<std::string>();
    }
    eff["output"] = cfg.output_prefix;
    cfg.effective = eff;
    return cfg;
}

struct TreeSetup {
    ScenarioTree tree;
    ClockWeights clock;
    Endowment endowment;
};

inline TreeSetup build_tree(const json& t) {
    if (!t["nodes"].is_array() || t["nodes"].empty()) throw config_error("tree.nodes: expected a nonempty array");
    std::vector<NodeSpec> specs;
    for (std::size_t i = 0; i < t["nodes"].size(); ++i) {
        const auto& n = t["nodes"][i];
        const std::string where = "tree.nodes[" + std::to_string(i) + "]";
        if (!n.is_object()) throw config_error(where + ": expected an object");
        for (auto it = n.begin(); it != n.end(); ++it)
            if (it.key() != "parent" && it.key() != "p" && it.key() != "S") throw config_error(where + "." + it.key() + ": unknown field");
        if (!n.contains("S")) throw config_error(where + ".S: required field missing");
        NodeSpec s;
        s.parent = -1;
        if (i > 0) {
            if (!n.contains("parent") || !n["parent"].is_number_integer()) throw config_error(where + ".parent: required integer");
            if (!n.contains("p") || !n["p"].is_number()) throw config_error(where + ".p: required number");
            s.parent = n["parent"].get<int>();
            s.prob = n["p"].get<double>();
        } else if (n.contains("parent") && !n["parent"].is_null() && n["parent"] != -1) {
            throw config_error(where + ".parent: the root has parent -1 or null");
        }
        if (n["S"].is_number())
            s.price = {n["S"].get<double>()};
        else if (detail::matches(n["S"], detail::Kind::number_list))
            s.price = n["S"].get<std::vector<double>>();
        else
            throw config_error(where + ".S: expected a number or an array of numbers");
        specs.push_back(s);
    }
    TreeSetup out{ScenarioTree::from_nodes(specs), {}, {}};
    const auto& ck = t["clock"];
    if (!ck.is_object() || !ck.contains("kind") || !ck["kind"].is_string())
        throw config_error("tree.clock.kind: required string (uniform, terminal, mixed, stopping_times)");
    const std::string kind = ck["kind"].get<std::string>();
    std::vector<LeafStoppingTime> taus;
    ClockKind k;
    if (kind == "uniform")
        k = ClockKind::uniform;
    else if (kind == "terminal")
        k = ClockKind::terminal;
    else if (kind == "mixed")
        k = ClockKind::mixed;
    else if (kind == "stopping_times") {
        k = ClockKind::stopping_times;
        if (!ck.contains("stopping_times") || !ck["stopping_times"].is_array())
            throw config_error("tree.clock.stopping_times: required array of per-leaf stopping times");
        for (const auto& tau : ck["stopping_times"]) taus.push_back(tau.get<std::vector<int>>());
    } else {
        throw config_error("tree.clock.kind: unknown clock kind \"" + kind + "\"");
    }
    out.clock = make_clock(out.tree, k, taus);
    if (t["endowment"].is_null())
        out.endowment.assign(out.tree.size(), 0.0);
    else
        out.endowment = t["endowment"].get<std::vector<double>>();
    validate_endowment(out.tree, out.endowment);
    return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CommandResult {
    CsvTable table;
    std::vector<Check> checks;
    std::vector<std::string> notes;

    void check(std::string name, bool pass, std::string detail) { checks.push_back({std::move(name), pass, std::move(detail)}); }
};

inline std::string num(double v) { return format_real(v); }

inline CommandResult special_verify(const RunConfig& cfg) {
    CommandResult r;
    r.table.columns = {"identity", "argument", "value", "reference", "abs_error", "tolerance", "pass"};
    const double alpha = cfg.market.alpha;
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    auto row = [&](const std::string& id, const std::string& arg, double value, double ref, double err, double tol) {
        const bool ok = err <= tol;
        r.table.add({id, arg, value, ref, err, tol, ok ? std::string("true") : std::string("false")});
        r.check(id, ok, arg + ": worst error " + num(err) + " (tolerance " + num(tol) + ")");
    };
    {
        const std::vector<std::pair<double, double>> anchors = {{0.5, sqrt_pi}, {5.0, 24.0}, {1.5, 0.5 * sqrt_pi}};
        double worst = -1.0, wv = 0.0, wr = 0.0;
        std::string warg;
        for (auto [x, ref] : anchors) {
            const double v = stoclock::gamma(x);
            const double e = std::abs(v - ref) / ref;
            if (e > worst) {
                worst = e;
                wv = v;
                wr = ref;
                warg = "x=" + num(x);
            }
        }
        row("gamma_anchors", warg, wv, wr, worst, 1e-12);
    }
    {
        double worst = -1.0, wv = 0.0, wr = 0.0;
        std::string warg;
        for (double xi : {-0.25, -0.5, -1.0, -2.5}) {
            const double v = hermite_h(xi, 0.0) * stoclock::gamma((1.0 - xi) / 2.0);
            const double ref = std::pow(2.0, xi) * sqrt_pi;
            const double e = std::abs(v - ref) / ref;
            if (e > worst) {
                worst = e;
                wv = v;
                wr = ref;
                warg = "xi=" + num(xi);
            }
        }
        row("hermite_duplication", warg, wv, wr, worst, 1e-10);
    }
    {
        const double v = hermite_h(-1.0, 1.0);
        const double ref = 0.5 * sqrt_pi * std::exp(1.0) * std::erfc(1.0);
        row("hermite_erfc", "xi=-1 x=1", v, ref, std::abs(v - ref), 1e-8);
    }
    {
        double worst = -1.0, wv = 0.0;
        std::string warg;
        for (double ratio : {0.5, 1.0, 2.0, 5.0}) {
            const double v = j_hitting(ratio * alpha, 0.0, alpha);
            const double e = std::abs(v - 1.0);
            if (e > worst) {
                worst = e;
                wv = v;
                warg = "lambda/alpha=" + num(ratio);
            }
        }
        row("j_normalization", warg, wv, 1.0, worst, 1e-9);
    }
    {
        const double v = psi_laplace(alpha, alpha);
        const double ref = 4.0 * alpha / std::sqrt(2.0 * std::numbers::pi);
        row("psi_at_alpha", "alpha=" + num(alpha), v, ref, std::abs(v - ref) / ref, 1e-10);
    }
    {
        double worst = -1.0, wv = 0.0, wr = 0.0;
        std::string warg;
        const double h = 1e-5;
        for (double xi : {-0.5, -1.0, -1.5, -2.5})
            for (double x : {0.1, 0.5, 1.0, 2.0, 3.0}) {
                const double fd = (hermite_h(xi, x + h) - hermite_h(xi, x - h)) / (2.0 * h);
                const double v = hermite_dh(xi, x);
                const double e = std::abs(v - fd) / std::abs(v);
                if (e > worst) {
                    worst = e;
                    wv = v;
                    wr = fd;
                    warg = "xi=" + num(xi) + " x=" + num(x);
                }
            }
        row("hermite_derivative", warg, wv, wr, worst, 1e-5);
    }
    return r;
}

namespace detail {

inline OUConfig ou_config(const RunConfig& cfg) {
    OUConfig c;
    c.alpha = cfg.market.alpha;
    c.dt = cfg.dt;
    c.t_max = cfg.t_max;
    c.seed = cfg.seed;
    return c;
}

inline const std::vector<std::string>& clock_columns() {
    static const std::vector<std::string> cols = {"quantity", "lambda",    "s_or_r",  "estimate",
                                                  "std_error", "target", "n_paths", "truncated_fraction"};
    return cols;
}

inline void add_laplace_row(CommandResult& r, const std::string& quantity, double lambda, double s_or_r,
                            const LaplaceEstimate& e) {
    r.table.add({quantity, lambda, s_or_r, e.estimate.mean, e.estimate.std_error, e.target,
                 static_cast<long long>(e.estimate.n_paths), e.truncated_fraction});
}

inline CalibrationResult calibrate(const RunConfig& cfg, unsigned workers) {
    return calibrate_normalization(cfg.market.alpha, cfg.lambda_star, ou_config(cfg), cfg.calibration_paths, {},
                                   cfg.epsilon, workers);
}

inline void add_calibration_rows(CommandResult& r, const RunConfig& cfg, const CalibrationResult& cal) {
    r.table.add({std::string("normalization"), cfg.lambda_star, 1.0, cal.normalization, Cell{}, Cell{},
                 static_cast<long long>(cfg.calibration_paths), cal.at_target.truncated_fraction});
    add_laplace_row(r, "laplace_at_calibration", cfg.lambda_star, 1.0, cal.at_target);
}

}  // namespace detail

inline CommandResult clock_calibrate(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::clock_columns();
    const auto cal = detail::calibrate(cfg, workers);
    detail::add_calibration_rows(r, cfg, cal);
    const double gap = std::abs(cal.at_target.estimate.mean - cal.at_target.target);
    r.check("calibration_converged", gap <= 1e-3 && cal.at_target.valid,
            "c = " + num(cal.normalization) + " after " + std::to_string(cal.iterations) + " bisections, residual " + num(gap));
    r.notes.push_back("band half-width epsilon = " + num(cfg.epsilon));
    return r;
}

inline CommandResult clock_validate(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::clock_columns();
    double c = cfg.normalization;
    if (c <= 0.0) {
        const auto cal = detail::calibrate(cfg, workers);
        detail::add_calibration_rows(r, cfg, cal);
        c = cal.normalization;
    }
    OUConfig val = detail::ou_config(cfg);
    val.seed = cfg.seed + 1;
    const double s_max = *std::max_element(cfg.s_values.begin(), cfg.s_values.end());
    ClockEnsemble ensemble(val, cfg.n_paths, cfg.epsilon, occupation_target_for(std::max(1.0, s_max), c, cfg.epsilon), workers);
    for (double lambda : cfg.lambdas)
        for (double s : cfg.s_values) {
            const auto e = ensemble.laplace(lambda, s, c);
            detail::add_laplace_row(r, "laplace_tau", lambda, s, e);
            const double band = laplace_band(e, lambda, cfg.dt);
            r.check("laplace_tau lambda=" + num(lambda) + " s=" + num(s), e.valid && std::abs(e.estimate.mean - e.target) <= band,
                    "estimate " + num(e.estimate.mean) + " target " + num(e.target) + " band " + num(band));
        }
    {
        const auto e = ensemble.mean_tau(1.0, c);
        r.table.add({std::string("mean_tau"), Cell{}, 1.0, e.estimate.mean, e.estimate.std_error, e.target,
                     static_cast<long long>(e.estimate.n_paths), e.truncated_fraction});
        r.check("mean_tau s=1", e.valid && within_se(e.estimate, e.target),
                "estimate " + num(e.estimate.mean) + " target " + num(e.target) + " se " + num(e.estimate.std_error));
    }
    for (double lambda : cfg.hitting_lambdas)
        for (double rr : cfg.hitting_r) {
            const auto e = mc_laplace_hitting(cfg.market.alpha, lambda, rr, val, cfg.n_paths, workers);
            detail::add_laplace_row(r, "laplace_hitting", lambda, rr, e);
            const double band = laplace_band(e, lambda, cfg.dt);
            r.check("laplace_hitting lambda=" + num(lambda) + " r=" + num(rr),
                    e.valid && std::abs(e.estimate.mean - e.target) <= band,
                    "estimate " + num(e.estimate.mean) + " target " + num(e.target) + " band " + num(band));
        }
    r.notes.push_back("normalization c = " + num(c) + ", validation seed = " + std::to_string(val.seed));
    return r;
}

namespace detail {

inline const std::vector<std::string>& strategy_columns() {
    static const std::vector<std::string> cols = {"arm",    "n_paths", "utility_mean",       "utility_se",
                                                  "EZ_end", "EM_end",  "EX_end_abs", "truncated_fraction"};
    return cols;
}

inline void add_arm_row(CommandResult& r, const std::string& arm, const RunStats& st) {
    r.table.add({arm, static_cast<long long>(st.n_paths), st.utility.estimate.mean, st.utility.estimate.std_error,
                 st.z_ratio.mean, st.m_end.mean, st.x_end_abs.mean, st.truncated_fraction});
}

/// Calibrates on sim.seed when no normalization is given; strategy paths then run on sim.seed + 1.
inline StrategySimConfig strategy_sim(const RunConfig& cfg, unsigned workers, CommandResult& r) {
    StrategySimConfig sim;
    sim.dt = cfg.dt;
    sim.t_max = cfg.t_max;
    sim.epsilon = cfg.epsilon;
    sim.seed = cfg.seed + 1;
    sim.workers = workers;
    sim.normalization = cfg.normalization;
    if (sim.normalization <= 0.0) {
        const auto cal = calibrate(cfg, workers);
        sim.normalization = cal.normalization;
        r.notes.push_back("calibrated normalization c = " + num(cal.normalization) + " on seed " + std::to_string(cfg.seed));
    }
    return sim;
}

inline std::string se_text(const McEstimate& e) { return num(e.mean) + " (se " + num(e.std_error) + ")"; }

}  // namespace detail

inline CommandResult strategy_simulate(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::strategy_columns();
    const auto sim = detail::strategy_sim(cfg, workers, r);
    StrategyEngine engine(cfg.market, sim);
    Policy pol;
    pol.name = "optimal";
    pol.law = cfg.law;
    const auto st = collect(simulate_ensemble(engine, cfg.x0, pol, WealthScheme::euler,
                                              UtilityField::log_utility(cfg.market.beta), cfg.n_paths),
                            engine.dual_start(cfg.x0));
    detail::add_arm_row(r, "optimal", st);
    const double m_target = cfg.x0 * engine.dual_start(cfg.x0);
    r.check("EZ_ratio", within_se(st.z_ratio, 1.0), "E[Z]/Z0 = " + detail::se_text(st.z_ratio));
    r.check("EM_end", within_se(st.m_end, m_target), "E[M] = " + detail::se_text(st.m_end) + " target " + num(m_target));
    r.notes.push_back("law: " + describe(cfg.law));
    r.notes.push_back("negative wealth fraction " + num(st.negative_wealth_fraction));
    return r;
}

inline CommandResult strategy_adjudicate(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::strategy_columns();
    const auto sim = detail::strategy_sim(cfg, workers, r);
    const auto rep = adjudicate_consumption_law(cfg.market, cfg.x0, sim, cfg.n_paths, cfg.required_drop);
    for (const auto& lr : rep.laws) {
        detail::add_arm_row(r, to_string(lr.law) + "@dt", lr.coarse);
        detail::add_arm_row(r, to_string(lr.law) + "@dt/2", lr.fine);
        r.notes.push_back(to_string(lr.law) + ": budget " + detail::se_text(lr.coarse.budget_integral) + " / " +
                          detail::se_text(lr.fine.budget_integral) + " target " + num(lr.budget_target) +
                          (lr.budget_pass ? " pass" : " fail") + "; E|X| drop " + num(lr.residual_drop) +
                          (lr.residual_pass ? " pass" : " fail"));
    }
    r.check("exactly_one_law", rep.passing == 1,
            std::to_string(rep.passing) + " law(s) pass" +
                (rep.selected >= 0 ? ", selected " + to_string(rep.laws[static_cast<std::size_t>(rep.selected)].law) : ""));
    if (rep.selected >= 0) {
        const auto& w = rep.laws[static_cast<std::size_t>(rep.selected)].coarse;
        const double target = rep.laws[0].budget_target;
        r.check("EZ_ratio", within_se(w.z_ratio, 1.0), "E[Z]/Z0 = " + detail::se_text(w.z_ratio));
        r.check("EM_end", within_se(w.m_end, target), "E[M] = " + detail::se_text(w.m_end) + " target " + num(target));
        r.check("EX_drop", rep.laws[static_cast<std::size_t>(rep.selected)].residual_drop >= cfg.required_drop,
                "drop " + num(rep.laws[static_cast<std::size_t>(rep.selected)].residual_drop));
    }
    return r;
}

inline CommandResult strategy_compare(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::strategy_columns();
    const auto sim = detail::strategy_sim(cfg, workers, r);
    const auto rep = compare_strategies(cfg.market, cfg.x0, sim, cfg.n_paths, cfg.law);
    for (const auto& arm : rep.arms) detail::add_arm_row(r, arm.policy.name, arm.stats);
    const bool no_corr = cfg.market.rho == 0.0;
    for (std::size_t k = 1; k < rep.arms.size(); ++k) {
        const auto& arm = rep.arms[k];
        const bool hedge_arm = !arm.policy.hedge_in_pi;
        const std::string detail = "margin " + num(arm.margin) + " pooled se " + num(arm.pooled) + " paired se " + num(arm.paired_se);
        if (no_corr && hedge_arm)
            r.check("ties_" + arm.policy.name, std::abs(arm.margin) <= 2.0 * arm.pooled, detail);
        else
            r.check("dominates_" + arm.policy.name, arm.margin >= 2.0 * arm.pooled, detail);
    }
    return r;
}

inline CommandResult strategy_bound(const RunConfig& cfg, unsigned workers) {
    CommandResult r;
    r.table.columns = detail::strategy_columns();
    const auto sim = detail::strategy_sim(cfg, workers, r);
    StrategyEngine engine(cfg.market, sim);
    Policy pol;
    pol.law = cfg.law;
    const auto st = collect(simulate_ensemble(engine, 1.0, pol, WealthScheme::proportional,
                                              UtilityField::log_utility(cfg.market.beta), cfg.n_paths),
                            engine.dual_start(1.0));
    detail::add_arm_row(r, "optimal", st);
    const auto b = remark_bound_check(cfg.market, st.utility);
    r.check("utility_bound", b.pass, "u(1) estimate " + num(b.estimate) + " bound " + num(b.bound) + " margin " + num(b.margin));
    return r;
}

namespace detail {

inline const std::vector<std::string>& duality_columns() {
    static const std::vector<std::string> cols = {"x", "u", "u_prime", "y", "v", "v_prime", "gap"};
    return cols;
}

struct DualityContext {
    TreeSetup setup;
    std::unique_ptr<DualitySolver> solver;
};

inline DualityContext duality_context(const RunConfig& cfg) {
    if (!cfg.tree) throw config_error("tree: required section for duality commands");
    DualityContext ctx{build_tree(*cfg.tree), nullptr};
    ctx.solver = std::make_unique<DualitySolver>(ctx.setup.tree, ctx.setup.clock, cfg.utility, ctx.setup.endowment);
    return ctx;
}

inline void add_pair_row(CommandResult& r, double x, const PrimalSolution& p, const DualSolution& d) {
    r.table.add({x, p.u_value, p.y, d.y, d.v_value, d.v_prime, d.v_value + x * d.y - p.u_value});
}

}  // namespace detail

inline CommandResult duality_solve(const RunConfig& cfg) {
    CommandResult r;
    r.table.columns = detail::duality_columns();
    auto ctx = detail::duality_context(cfg);
    auto& solver = *ctx.solver;
    r.notes.push_back("L(E) = " + num(solver.lower_price()) + "; feasible for x > " + num(0.0 - solver.lower_price()));
    for (double x : (*cfg.tree)["x"].get<std::vector<double>>()) {
        const auto p = solver.solve_primal(x);
        const auto d = solver.solve_dual(p.y);
        detail::add_pair_row(r, x, p, d);
        const double gap = std::abs(d.v_value + x * d.y - p.u_value);
        r.check("duality_gap x=" + num(x), gap <= 1e-6, "gap " + num(gap) + ", budget violation " + num(p.budget_violation));
        std::string c_text;
        for (std::size_t i = 0; i < p.c.size(); ++i)
            if (solver.clock().weight[i] > 0.0) c_text += " c[" + std::to_string(i) + "]=" + num(p.c[i]);
        r.notes.push_back("x=" + num(x) + ":" + c_text);
        r.notes.push_back("x=" + num(x) + ": solid-factor certificate, nodes with e > I(Y): " +
                          std::to_string(d.solid_pressure_nodes) + ", with e < I(Y): " + std::to_string(d.solid_settled_nodes));
    }
    for (double y : (*cfg.tree)["y"].get<std::vector<double>>()) {
        const auto d = solver.solve_dual(y);
        const auto p = solver.solve_primal(d.x);
        detail::add_pair_row(r, d.x, p, d);
        const double gap = std::abs(d.v_value + d.x * d.y - p.u_value);
        r.check("duality_gap y=" + num(y), gap <= 1e-6, "gap " + num(gap));
    }
    return r;
}

inline CommandResult duality_check(const RunConfig& cfg) {
    CommandResult r;
    r.table.columns = detail::duality_columns();
    auto ctx = detail::duality_context(cfg);
    auto& solver = *ctx.solver;
    const auto xs = (*cfg.tree)["x_grid"].get<std::vector<double>>();
    const auto ys = (*cfg.tree)["y_grid"].get<std::vector<double>>();
    const double L = solver.lower_price();

    const auto conj = conjugacy_check(solver, xs, ys);
    r.check("conjugacy", std::max(conj.max_gap_u, conj.max_gap_v) <= 1e-5 && conj.min_fenchel_slack >= -1e-9,
            "max |u - min(v + xy)| " + num(conj.max_gap_u) + ", max |v - max(u - xy)| " + num(conj.max_gap_v) +
                ", min Fenchel slack " + num(conj.min_fenchel_slack));
    r.check("u_concave_nondecreasing", conj.u_concave_nondecreasing, "on x grid");
    r.check("v_convex_decreasing", conj.v_convex_decreasing, "on y grid");

    double recover = 0.0, fd_rel = 0.0;
    for (double x : xs) {
        const auto p = solver.solve_primal(x);
        const auto d = solver.solve_dual(p.y);
        detail::add_pair_row(r, x, p, d);
        const auto back = recover_primal_from_dual(solver, d);
        for (std::size_t i = 0; i < p.c.size(); ++i) recover = std::max(recover, std::abs(back.c[i] - p.c[i]));
        recover = std::max(recover, std::abs(back.u_value - p.u_value));
    }
    for (double y : ys) {
        const auto d = solver.solve_dual(y);
        const double h = 1e-4 * y;
        const double fd = (solver.value_v(y + h) - solver.value_v(y - h)) / (2.0 * h);
        fd_rel = std::max(fd_rel, std::abs(fd - d.v_prime) / std::max(std::abs(d.v_prime), 1e-12));
    }
    r.check("recover_primal_from_dual", recover <= 1e-6, "max deviation " + num(recover));
    r.check("v_prime_formula", fd_rel <= 1e-4, "max relative deviation from finite differences " + num(fd_rel));

    const auto bnd = boundary_behavior_check(solver);
    r.check("boundary_v_prime", bnd.approaching && bnd.final_distance <= 0.01,
            "-v'(" + num(bnd.y_large.back()) + ") = " + num(bnd.minus_v_prime.back()) + " vs -L = " + num(0.0 - L));
    r.check("boundary_u_prime", bnd.u_prime_increasing, "u' grows as x decreases to -L");

    bool threw = false;
    try {
        (void)solver.solve_primal(-L - 0.1);
    } catch (const infeasible_budget&) {
        threw = true;
    }
    r.check("infeasible_below_minus_L", threw, "x = " + num(-L - 0.1));
    r.notes.push_back("L(E) = " + num(L));
    return r;
}

inline CommandResult duality_oracle(const RunConfig& cfg) {
    CommandResult r;
    r.table.columns = {"x", "u_solver", "u_oracle", "abs_difference", "refinements", "feasible"};
    auto ctx = detail::duality_context(cfg);
    auto& solver = *ctx.solver;
    OracleSpec spec;
    spec.points = (*cfg.tree)["oracle_points"].get<int>();
    spec.refinements = (*cfg.tree)["oracle_refinements"].get<int>();
    if (spec.points < 3 || spec.points % 2 == 0) throw config_error("tree.oracle_points: must be odd and at least 3");
    for (double x : (*cfg.tree)["x"].get<std::vector<double>>()) {
        const auto o = brute_force_oracle(solver, x, spec);
        if (!o.feasible) {
            r.table.add({x, Cell{}, Cell{}, Cell{}, static_cast<long long>(spec.refinements), std::string("false")});
            bool threw = false;
            try {
                (void)solver.solve_primal(x);
            } catch (const infeasible_budget&) {
                threw = true;
            }
            r.check("empty_set x=" + num(x), threw, "oracle found no feasible consumption");
            continue;
        }
        const auto p = solver.solve_primal(x);
        const double diff = std::abs(p.u_value - o.value);
        r.table.add({x, p.u_value, o.value, diff, static_cast<long long>(spec.refinements), std::string("true")});
        bool monotone = true;
        for (std::size_t k = 1; k < o.level_values.size(); ++k) monotone = monotone && o.level_values[k] >= o.level_values[k - 1];
        r.check("oracle x=" + num(x), diff <= 1e-3 && p.u_value >= o.value - 1e-9, "difference " + num(diff));
        r.check("oracle_refinement x=" + num(x), monotone, "values improve monotonically under refinement");
    }
    return r;
}

// ---------------------------------------------------------------------------
// Runner

struct Invocation {
    std::string group;
    std::string action;
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    unsigned workers = 1;
};

inline std::string render_report(const std::string& command, const Provenance& prov, const CommandResult& res) {
    std::ostringstream os;
    os << "stoclock " << command << "\n";
    os << "config_hash " << prov.hash() << "\n";
    for (const auto& c : res.checks) os << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    for (const auto& n : res.notes) os << "note: " << n << "\n";
    return os.str();
}

inline std::filesystem::path output_dir(const Invocation& inv) {
    if (!inv.out_dir.empty()) return inv.out_dir;
    if (const char* env = std::getenv("STOCLOCK_OUT_DIR"); env && *env) return env;
    return ".";
}

/// Runs one subcommand; returns the exit code.
inline int run(const Invocation& inv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    const std::string command = inv.group + " " + inv.action;
    try {
        json raw = inv.config_path.empty() ? json::object() : read_config_file(inv.config_path);
        for (const auto& o : inv.overrides) apply_override(raw, o);
        const RunConfig cfg = build_config(raw);
        const unsigned workers = inv.workers;

        CommandResult res;
        if (command == "special verify")
            res = special_verify(cfg);
        else if (command == "clock calibrate")
            res = clock_calibrate(cfg, workers);
        else if (command == "clock validate")
            res = clock_validate(cfg, workers);
        else if (command == "strategy simulate")
            res = strategy_simulate(cfg, workers);
        else if (command == "strategy adjudicate")
            res = strategy_adjudicate(cfg, workers);
        else if (command == "strategy compare")
            res = strategy_compare(cfg, workers);
        else if (command == "strategy bound")
            res = strategy_bound(cfg, workers);
        else if (command == "duality solve")
            res = duality_solve(cfg);
        else if (command == "duality check")
            res = duality_check(cfg);
        else if (command == "duality oracle")
            res = duality_oracle(cfg);
        else
            throw config_error("unknown subcommand '" + command + "'");

        const Provenance prov{command, cfg.effective};
        const auto dir = output_dir(inv);
        const std::string stem = cfg.output_prefix + "_" + inv.group + "_" + inv.action;
        emit_csv(res.table, prov, dir / (stem + ".csv"));
        const std::string report = render_report(command, prov, res);
        write_file(dir / (stem + "_report.txt"), report);
        out << report;
        out << "wrote " << (dir / (stem + ".csv")).string() << "\n";
        bool ok = true;
        for (const auto& c : res.checks) ok = ok && c.pass;
        return ok ? exit_ok : exit_check_failed;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const nflvr_violation& e) {
        err << "domain error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const infeasible_budget& e) {
        err << "domain error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::domain_error& e) {
        err << "domain error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const io_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return exit_check_failed;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_check_failed;
    }
}

/// Command-line entry point.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"stoclock: stochastic-clock utility maximization experiments"};
    app.require_subcommand(1);
    Invocation inv;
    app.add_option("-c,--config", inv.config_path, "JSON config file");
    app.add_option("-s,--set", inv.overrides, "override a config field, e.g. --set market.sigma=0.8")->take_all();
    app.add_option("-o,--out-dir", inv.out_dir, "output directory (default $STOCLOCK_OUT_DIR or .)");
    app.add_option("-w,--workers", inv.workers, "Monte Carlo worker threads (results do not depend on it)")
        ->check(CLI::Range(1u, 256u));
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    auto* seed_opt = app.add_option("--seed", seed, "shorthand for --set sim.seed=N");
    auto* n_opt = app.add_option("-n,--n-paths", n_paths, "shorthand for --set sim.n_paths=N");
    app.fallthrough();

    const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
        {"special", {"verify"}},
        {"clock", {"calibrate", "validate"}},
        {"strategy", {"simulate", "adjudicate", "compare", "bound"}},
        {"duality", {"solve", "check", "oracle"}}};
    for (const auto& [group, actions] : groups) {
        auto* g = app.add_subcommand(group, group + " experiments");
        g->require_subcommand(1);
        g->fallthrough();
        for (const auto& action : actions) {
            auto* a = g->add_subcommand(action, group + " " + action);
            a->fallthrough();
            a->callback([&inv, group = group, action = action] {
                inv.group = group;
                inv.action = action;
            });
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config_error;
    }
    if (seed_opt->count()) inv.overrides.push_back("sim.seed=" + std::to_string(seed));
    if (n_opt->count()) inv.overrides.push_back("sim.n_paths=" + std::to_string(n_paths));
    return run(inv, out, err);
}

}  // namespace stoclock::cli
