#include "adasgd/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "adasgd/experiments.hpp"
#include "adasgd/parallel.hpp"

#ifndef ADASGD_VERSION
#define ADASGD_VERSION "0.0.0"
#endif

namespace adasgd::cli {

using nlohmann::json;
namespace ex = adasgd::experiments;
using optim::Algo;
using optim::OptimizerConfig;
using problems::GenSpec;

namespace {

const std::vector<std::pair<Subcommand, const char*>> kNames = {
    {Subcommand::angle, "angle"},
    {Subcommand::heatmap, "heatmap"},
    {Subcommand::minnorm, "minnorm"},
    {Subcommand::ridge_path, "ridge-path"},
    {Subcommand::regret, "regret"},
    {Subcommand::stability, "stability"},
    {Subcommand::theorem_range, "theorem-range"},
    {Subcommand::distance_bound, "distance-bound"},
    {Subcommand::align_mc, "align-mc"},
    {Subcommand::trajectory, "trajectory"},
};

json decades(int lo, int hi, int step) {
    json a = json::array();
    for (int e = lo; e <= hi; e += step) a.push_back(std::pow(10.0, e));
    return a;
}

}  // namespace

const char* to_string(Subcommand s) {
    for (const auto& [k, n] : kNames)
        if (k == s) return n;
    return "?";
}

Subcommand subcommand_from_string(const std::string& s) {
    for (const auto& [k, n] : kNames)
        if (s == n) return k;
    throw UsageError("unknown subcommand: " + s);
}

std::vector<Subcommand> all_subcommands() {
    std::vector<Subcommand> out;
    for (const auto& kv : kNames) out.push_back(kv.first);
    return out;
}

json defaults(Subcommand s) {
    switch (s) {
        case Subcommand::heatmap:
            return {{"lambda_max", decades(0, 6, 2)},
                    {"cond", decades(0, 6, 2)},
                    {"seeds", 5},
                    {"steps", 1500},
                    {"d", 30},
                    {"n", 90},
                    {"roster", {"sgd:0.01", "sgd:1/lmax", "adam:0.1", "adasgd:0.01"}},
                    {"gradient", "per-sample"}};
        case Subcommand::angle:
            return {{"cond", 1e4},
                    {"lambda_min", 1.0},
                    {"angles", {0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0}},
                    {"roster", {"sgd:1/lmax", "adasgd:0.0005", "adam:0.005"}},
                    {"steps", 3000},
                    {"seeds", 30},
                    {"n", 300},
                    {"gradient", "per-sample"}};
        case Subcommand::minnorm:
            return {{"n", 300},
                    {"d", 2},
                    {"lambda_max", 1.0},
                    {"lambda_min", 0.0},
                    {"angle", 30.0},
                    {"zero_tail", 0},
                    {"roster", {"sgd:1/lmax", "adasgd:0.01", "adam:0.01"}},
                    {"steps", 3000},
                    {"seeds", 5},
                    {"gradient", "per-sample"}};
        case Subcommand::ridge_path:
            return {{"pool_n", 300},
                    {"train_n", 10},
                    {"d", 2},
                    {"lambda_min", 1.0},
                    {"lambda_max", 10.0},
                    {"roster", {"sgd:0.1/lmax", "adam:0.1", "adasgd:0.01"}},
                    {"seeds", 50},
                    {"steps", 3000},
                    {"stride", 10},
                    {"alpha_log10_lo", -6.0},
                    {"alpha_log10_hi", 6.0},
                    {"alpha_count", 241},
                    {"recursion_steps", 1000},
                    {"recursion_sgd", "sgd:0.1/lmax"},
                    {"recursion_adasgd", "adasgd:0.001"}};
        case Subcommand::regret:
            return {{"kinds", {"linear-adversarial", "quadratic-tracking"}},
                    {"schedules", {"theorem", "corollary"}},
                    {"horizons", {100, 1000, 10000}},
                    {"seeds", 5},
                    {"d", 10},
                    {"box_halfwidth", 1.0},
                    {"g_bound", 1.0},
                    {"eta", 1.0}};
        case Subcommand::stability:
            return {{"n", 500},
                    {"d", 50},
                    {"swaps", 10},
                    {"pool_n", 1000},
                    {"lambda_max", 1e3},
                    {"lambda_min", 1.0},
                    {"seeds", 5},
                    {"degenerate_n", 40},
                    {"degenerate_d", 50},
                    {"degenerate_pool_n", 80},
                    {"degenerate_zero_tail", 20}};
        case Subcommand::theorem_range:
            return {{"d", 10},
                    {"cond", 1e4},
                    {"lambda_min", 1.0},
                    {"multipliers", {1e-3, 1.0, 1e3}},
                    {"max_steps", 50000},
                    {"regret_tol", 1e-8}};
        case Subcommand::distance_bound:
            return {{"dims", {2, 20}},
                    {"conds", {10.0, 1e3}},
                    {"etas", {1e-4, 1e-2, 1.0}},
                    {"beta2", 0.999},
                    {"lambda_min", 1.0},
                    {"steps", 50000},
                    {"bound_scale", 1.0}};
        case Subcommand::align_mc:
            return {{"dims", {2, 10, 50, 200}}, {"samples", 10000}};
        case Subcommand::trajectory:
            return {{"n", 300},
                    {"d", 100},
                    {"lambda_max", 1e4},
                    {"lambda_min", 1.0},
                    {"algo", "adam"},
                    {"eta", 0.1},
                    {"eta_over_lmax", false},
                    {"beta1", 0.9},
                    {"beta2", 0.999},
                    {"epsilon", 1e-8},
                    {"regret_decay", false},
                    {"steps", 3000},
                    {"gradient", "per-sample"}};
    }
    throw std::logic_error("unreachable");
}

std::vector<std::string> preset_names(Subcommand s) {
    std::vector<std::string> names{"desk"};
    if (s == Subcommand::heatmap) {
        names.push_back("paper-fig3");
        names.push_back("paper-fig2c");
    }
    if (s == Subcommand::angle) names.push_back("paper-fig2b");
    if (s == Subcommand::ridge_path) names.push_back("paper-fig4b");
    if (s == Subcommand::stability) names.push_back("paper-appc");
    return names;
}

json preset(const std::string& name, Subcommand s) {
    auto names = preset_names(s);
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw UsageError("preset " + name + " does not apply to " + to_string(s));
    if (name == "desk") return json::object();
    if (name == "paper-fig3")
        return {{"lambda_max", decades(0, 8, 1)},
                {"cond", decades(0, 8, 1)},
                {"seeds", 30},
                {"d", 100},
                {"n", 300},
                {"steps", 3000},
                {"roster", {"sgd:0.01", "sgd:1/lmax", "adam:0.1", "adasgd:0.01"}}};
    if (name == "paper-fig2c")
        return {{"lambda_max", decades(0, 8, 1)},
                {"cond", decades(0, 8, 1)},
                {"seeds", 30},
                {"d", 100},
                {"n", 300},
                {"steps", 3000},
                {"roster", {"adasgd:0.01", "adam:0.1"}}};
    if (name == "paper-fig2b")
        return {{"cond", 1e4},
                {"lambda_min", 1.0},
                {"roster", {"sgd:1/lmax", "adasgd:0.0005", "adam:0.005"}},
                {"seeds", 30},
                {"steps", 3000},
                {"n", 300}};
    if (name == "paper-fig4b")
        return {{"pool_n", 300}, {"train_n", 10}, {"d", 2}, {"lambda_min", 1.0}, {"lambda_max", 10.0}, {"seeds", 50}};
    if (name == "paper-appc") return {{"swaps", 10}};
    throw UsageError("unknown preset: " + name);
}

namespace {

std::string kind_of(const json& v) {
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

// checks `value` against the type of the default and normalizes numbers
json conform(const std::string& key, const json& def, const json& value) {
    auto fail = [&] { throw UsageError("override " + key + " expects " + kind_of(def) + ", got " + value.dump()); };
    if (def.is_boolean()) {
        if (!value.is_boolean()) fail();
        return value;
    }
    if (def.is_number_integer()) {
        if (value.is_number_integer()) {
            if (value.get<std::int64_t>() < 0) fail();
            return value;
        }
        if (value.is_number_float()) {
            double v = value.get<double>();
            if (v < 0 || v != std::floor(v)) fail();
            return static_cast<std::int64_t>(v);
        }
        fail();
    }
    if (def.is_number()) {
        if (!value.is_number()) fail();
        return value.get<double>();
    }
    if (def.is_string()) {
        if (!value.is_string()) fail();
        return value;
    }
    if (def.is_array()) {
        if (!value.is_array() || value.empty()) fail();
        json out = json::array();
        for (const auto& item : value) out.push_back(conform(key, def.front(), item));
        return out;
    }
    fail();
    return {};
}

json parse_scalar(const std::string& key, const json& def, const std::string& text) {
    auto fail = [&] { throw UsageError("malformed value for " + key + ": " + text); };
    if (def.is_boolean()) {
        if (text == "true") return true;
        if (text == "false") return false;
        fail();
    }
    if (def.is_number()) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) fail();
        return conform(key, def, json(v));
    }
    if (def.is_string()) {
        if (text.empty()) fail();
        return text;
    }
    fail();
    return {};
}

json parse_flag_value(const std::string& key, const json& def, const std::string& text) {
    if (!def.is_array()) return parse_scalar(key, def, text);
    json out = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_scalar(key, def.front(), item));
    if (out.empty()) throw UsageError("empty list for " + key);
    return out;
}

void apply(RunConfig& cfg, const json& def, const std::string& source, const std::string& key, const json& value) {
    if (!def.contains(key)) throw UsageError("unknown override key for " + std::string(to_string(cfg.subcommand)) + ": " + key);
    json v = conform(key, def.at(key), value);
    cfg.params[key] = v;
    if (source != "preset") cfg.overrides.push_back({source, key, v});
}

template <class T>
T get(const json& p, const char* key) {
    return p.at(key).get<T>();
}

std::vector<ex::RosterEntry> roster_of(const json& p) { return ex::parse_roster(get<std::vector<std::string>>(p, "roster")); }

ex::SweepGrid heatmap_params(const json& p) {
    ex::SweepGrid g;
    g.lambda_max = get<std::vector<double>>(p, "lambda_max");
    g.cond = get<std::vector<double>>(p, "cond");
    g.seeds = get<std::size_t>(p, "seeds");
    g.steps = get<std::size_t>(p, "steps");
    g.d = get<std::size_t>(p, "d");
    g.n = get<std::size_t>(p, "n");
    g.roster = roster_of(p);
    g.mode = ex::gradient_mode_from_string(get<std::string>(p, "gradient"));
    g.validate();
    return g;
}

ex::AngleSweepParams angle_params(const json& p) {
    ex::AngleSweepParams a;
    a.cond = get<double>(p, "cond");
    a.lambda_min = get<double>(p, "lambda_min");
    a.angles = get<std::vector<double>>(p, "angles");
    a.roster = roster_of(p);
    a.steps = get<std::size_t>(p, "steps");
    a.seeds = get<std::size_t>(p, "seeds");
    a.n = get<std::size_t>(p, "n");
    a.mode = ex::gradient_mode_from_string(get<std::string>(p, "gradient"));
    if (a.steps == 0 || a.seeds == 0 || a.n < 2) throw std::invalid_argument("angle: steps, seeds and n must be positive");
    for (double ang : a.angles)
        if (!(ang >= 0.0 && ang <= 90.0)) throw std::invalid_argument("angle: angles must lie in [0, 90]");
    if (!(a.cond >= 1.0) || !(a.lambda_min > 0.0)) throw std::invalid_argument("angle: need cond >= 1 and lambda_min > 0");
    return a;
}

ex::MinNormParams minnorm_params(const json& p) {
    ex::MinNormParams m;
    m.spec.n = get<std::size_t>(p, "n");
    m.spec.d = get<std::size_t>(p, "d");
    m.spec.lambda_max = get<double>(p, "lambda_max");
    m.spec.lambda_min = get<double>(p, "lambda_min");
    m.spec.zero_tail = get<std::size_t>(p, "zero_tail");
    if (m.spec.d == 2)
        m.spec.angle_2d = get<double>(p, "angle");
    else
        m.spec.angle_2d.reset();
    m.spec.validate();
    m.roster = roster_of(p);
    m.steps = get<std::size_t>(p, "steps");
    m.seeds = get<std::size_t>(p, "seeds");
    m.mode = ex::gradient_mode_from_string(get<std::string>(p, "gradient"));
    if (m.steps == 0 || m.seeds == 0) throw std::invalid_argument("minnorm: steps and seeds must be positive");
    if (m.spec.lambda_min != 0.0 && m.spec.zero_tail == 0 && m.spec.n >= m.spec.d)
        throw std::invalid_argument("minnorm: problem must be degenerate");
    return m;
}

ex::RidgePathParams ridge_params(const json& p) {
    ex::RidgePathParams r;
    r.pool_n = get<std::size_t>(p, "pool_n");
    r.train_n = get<std::size_t>(p, "train_n");
    r.d = get<std::size_t>(p, "d");
    r.lambda_min = get<double>(p, "lambda_min");
    r.lambda_max = get<double>(p, "lambda_max");
    r.roster = roster_of(p);
    r.seeds = get<std::size_t>(p, "seeds");
    r.steps = get<std::size_t>(p, "steps");
    r.snapshot_stride = get<std::size_t>(p, "stride");
    r.alpha_log10_lo = get<double>(p, "alpha_log10_lo");
    r.alpha_log10_hi = get<double>(p, "alpha_log10_hi");
    r.alpha_count = get<std::size_t>(p, "alpha_count");
    r.recursion_steps = get<std::size_t>(p, "recursion_steps");
    r.recursion_sgd = ex::parse_roster_entry(get<std::string>(p, "recursion_sgd"));
    r.recursion_adasgd = ex::parse_roster_entry(get<std::string>(p, "recursion_adasgd"));
    if (r.steps == 0 || r.snapshot_stride == 0 || r.recursion_steps == 0)
        throw std::invalid_argument("ridge-path: steps, stride and recursion_steps must be positive");
    if (!(r.lambda_min > 0.0) || r.lambda_min > r.lambda_max) throw std::invalid_argument("ridge-path: need 0 < lambda_min <= lambda_max");
    if (r.train_n > r.pool_n || r.train_n < r.d) throw std::invalid_argument("ridge-path: need d <= train_n <= pool_n");
    if (r.alpha_count < 2) throw std::invalid_argument("ridge-path: alpha_count must be >= 2");
    return r;
}

ex::RegretParams regret_params(const json& p) {
    ex::RegretParams r;
    r.kinds = get<std::vector<std::string>>(p, "kinds");
    r.schedules = get<std::vector<std::string>>(p, "schedules");
    r.horizons = get<std::vector<std::size_t>>(p, "horizons");
    r.seeds = get<std::size_t>(p, "seeds");
    r.d = get<std::size_t>(p, "d");
    r.box_halfwidth = get<double>(p, "box_halfwidth");
    r.g_bound = get<double>(p, "g_bound");
    r.eta = get<double>(p, "eta");
    for (const auto& k : r.kinds) problems::online_kind_from_string(k);
    for (const auto& s : r.schedules) ex::regret_schedule_from_string(s);
    for (auto h : r.horizons)
        if (h == 0) throw std::invalid_argument("regret: horizons must be positive");
    if (r.seeds == 0 || r.d == 0 || !(r.box_halfwidth > 0.0) || !(r.g_bound > 0.0) || !(r.eta > 0.0))
        throw std::invalid_argument("regret: seeds, d, box_halfwidth, g_bound and eta must be positive");
    return r;
}

struct StabilityRun {
    ex::StabilityParams invertible;
    ex::StabilityParams degenerate;
    std::size_t seeds = 0;
};

StabilityRun stability_params(const json& p) {
    StabilityRun s;
    s.invertible.n = get<std::size_t>(p, "n");
    s.invertible.d = get<std::size_t>(p, "d");
    s.invertible.swaps = get<std::size_t>(p, "swaps");
    s.invertible.pool_n = get<std::size_t>(p, "pool_n");
    s.invertible.lambda_max = get<double>(p, "lambda_max");
    s.invertible.lambda_min = get<double>(p, "lambda_min");
    s.degenerate = s.invertible;
    s.degenerate.n = get<std::size_t>(p, "degenerate_n");
    s.degenerate.d = get<std::size_t>(p, "degenerate_d");
    s.degenerate.pool_n = get<std::size_t>(p, "degenerate_pool_n");
    s.degenerate.zero_tail = get<std::size_t>(p, "degenerate_zero_tail");
    s.seeds = get<std::size_t>(p, "seeds");
    for (const auto* v : {&s.invertible, &s.degenerate}) {
        if (v->pool_n <= v->n || v->swaps == 0 || v->d == 0 || v->n == 0)
            throw std::invalid_argument("stability: need pool_n > n, swaps > 0 and positive sizes");
        if (v->zero_tail >= v->d) throw std::invalid_argument("stability: zero_tail must be below d");
        if (v->d > v->pool_n) throw std::invalid_argument("stability: pool_n must be >= d");
        if (!(v->lambda_min > 0.0) || v->lambda_min > v->lambda_max)
            throw std::invalid_argument("stability: need 0 < lambda_min <= lambda_max");
    }
    if (s.invertible.n < s.invertible.d) throw std::invalid_argument("stability: invertible variant needs n >= d");
    if (s.seeds == 0) throw std::invalid_argument("stability: seeds must be positive");
    return s;
}

ex::TheoremRangeParams theorem_params(const json& p) {
    ex::TheoremRangeParams t;
    t.d = get<std::size_t>(p, "d");
    t.cond = get<double>(p, "cond");
    t.lambda_min = get<double>(p, "lambda_min");
    t.multipliers = get<std::vector<double>>(p, "multipliers");
    t.max_steps = get<std::size_t>(p, "max_steps");
    t.regret_tol = get<double>(p, "regret_tol");
    if (t.d == 0 || t.max_steps < 2 || !(t.cond >= 1.0) || !(t.lambda_min > 0.0))
        throw std::invalid_argument("theorem-range: need d > 0, max_steps >= 2, cond >= 1, lambda_min > 0");
    for (double m : t.multipliers)
        if (!(m > 0.0)) throw std::invalid_argument("theorem-range: multipliers must be positive");
    return t;
}

ex::DistanceBoundParams distance_params(const json& p) {
    ex::DistanceBoundParams b;
    b.dims = get<std::vector<std::size_t>>(p, "dims");
    b.conds = get<std::vector<double>>(p, "conds");
    b.etas = get<std::vector<double>>(p, "etas");
    b.beta2 = get<double>(p, "beta2");
    b.lambda_min = get<double>(p, "lambda_min");
    b.steps = get<std::size_t>(p, "steps");
    b.bound_scale = get<double>(p, "bound_scale");
    for (auto d : b.dims)
        if (d == 0) throw std::invalid_argument("distance-bound: dims must be positive");
    for (double k : b.conds)
        if (!(k >= 1.0)) throw std::invalid_argument("distance-bound: conds must be >= 1");
    for (double e : b.etas)
        if (!(e > 0.0)) throw std::invalid_argument("distance-bound: etas must be positive");
    if (!(b.beta2 >= 0.0 && b.beta2 < 1.0) || b.steps == 0 || !(b.bound_scale > 0.0) || !(b.lambda_min > 0.0))
        throw std::invalid_argument("distance-bound: invalid beta2, steps, bound_scale or lambda_min");
    return b;
}

struct TrajectoryRun {
    GenSpec spec;
    Algo algo = Algo::adam;
    OptimizerConfig config;
    bool eta_over_lmax = false;
    std::size_t steps = 0;
    ex::GradientMode mode = ex::GradientMode::per_sample;
};

TrajectoryRun trajectory_params(const json& p) {
    TrajectoryRun t;
    t.spec.n = get<std::size_t>(p, "n");
    t.spec.d = get<std::size_t>(p, "d");
    t.spec.lambda_max = get<double>(p, "lambda_max");
    t.spec.lambda_min = get<double>(p, "lambda_min");
    t.spec.validate();
    t.algo = optim::algo_from_string(get<std::string>(p, "algo"));
    t.config.eta = get<double>(p, "eta");
    t.eta_over_lmax = get<bool>(p, "eta_over_lmax");
    t.config.beta1 = get<double>(p, "beta1");
    t.config.beta2 = get<double>(p, "beta2");
    t.config.epsilon = get<double>(p, "epsilon");
    t.config.regret_decay = get<bool>(p, "regret_decay");
    if (t.algo == Algo::adabound) t.config.adabound = optim::AdaBoundParams{};
    t.config.validate();
    t.steps = get<std::size_t>(p, "steps");
    t.mode = ex::gradient_mode_from_string(get<std::string>(p, "gradient"));
    if (t.steps == 0) throw std::invalid_argument("trajectory: steps must be positive");
    return t;
}

void validate_params(Subcommand s, const json& p) {
    switch (s) {
        case Subcommand::heatmap: heatmap_params(p); break;
        case Subcommand::angle: angle_params(p); break;
        case Subcommand::minnorm: minnorm_params(p); break;
        case Subcommand::ridge_path: ridge_params(p); break;
        case Subcommand::regret: regret_params(p); break;
        case Subcommand::stability: stability_params(p); break;
        case Subcommand::theorem_range: theorem_params(p); break;
        case Subcommand::distance_bound: distance_params(p); break;
        case Subcommand::align_mc:
            for (auto d : get<std::vector<std::size_t>>(p, "dims"))
                if (d < 2 || d > 512) throw std::invalid_argument("align-mc: dims must lie in [2, 512]");
            if (get<std::size_t>(p, "samples") == 0) throw std::invalid_argument("align-mc: samples must be positive");
            break;
        case Subcommand::trajectory: trajectory_params(p); break;
    }
}

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }
std::string num(double v) { return format_number(v); }

}  // namespace

json RunConfig::to_json() const {
    json ov = json::array();
    for (const auto& o : overrides) ov.push_back({{"source", o.source}, {"key", o.key}, {"value", o.value}});
    return {{"subcommand", cli::to_string(subcommand)},
            {"master_seed", master_seed},
            {"workers", workers},
            {"out_dir", out_dir.string()},
            {"preset", preset.empty() ? json(nullptr) : json(preset)},
            {"overrides", ov},
            {"params", params}};
}

RunConfig parse_config(const std::vector<std::string>& args) {
    CLI::App app{"adasgd experiment harness", "adasgd"};
    app.require_subcommand(1, 1);
    auto* run = app.add_subcommand("run", "Run one experiment");
    std::string name, preset_flag, out_flag, config_file;
    std::uint64_t seed_flag = 0;
    std::size_t workers_flag = 0;
    std::vector<std::string> sets;
    run->add_option("experiment", name, "Experiment to run")->required();
    auto* o_preset = run->add_option("--preset", preset_flag, "Named parameter bundle");
    auto* o_seed = run->add_option("--seed", seed_flag, "Master seed");
    auto* o_workers = run->add_option("--workers", workers_flag, "Worker threads");
    auto* o_out = run->add_option("--out", out_flag, "Output directory");
    run->add_option("--config", config_file, "JSON config file");
    run->add_option("--set", sets, "Override key=value (repeatable)")->take_all();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }
    if (o_workers->count() && workers_flag == 0) throw UsageError("--workers must be >= 1");

    RunConfig cfg;
    cfg.subcommand = subcommand_from_string(name);
    const json def = defaults(cfg.subcommand);
    cfg.params = def;

    json file;
    if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw UsageError("cannot read config file: " + config_file);
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw UsageError("malformed config file: " + std::string(e.what()));
        }
        if (!file.is_object()) throw UsageError("config file must hold a JSON object");
        static const char* known[] = {"subcommand", "master_seed", "workers", "out_dir", "preset", "overrides"};
        for (auto it = file.begin(); it != file.end(); ++it)
            if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known))
                throw UsageError("unknown config file key: " + it.key());
        if (file.contains("subcommand") && file.at("subcommand") != name)
            throw UsageError("config file is for subcommand " + file.at("subcommand").dump());
    }

    auto file_get = [&](const char* key, auto& out) {
        if (!file.contains(key)) return false;
        try {
            file.at(key).get_to(out);
        } catch (const json::exception&) {
            throw UsageError(std::string("malformed config file value for ") + key);
        }
        return true;
    };

    std::string preset_name;
    file_get("preset", preset_name);
    if (o_preset->count()) preset_name = preset_flag;
    if (!preset_name.empty()) {
        cfg.preset = preset_name;
        json bundle = preset(preset_name, cfg.subcommand);
        for (auto it = bundle.begin(); it != bundle.end(); ++it) apply(cfg, def, "preset", it.key(), it.value());
    }

    if (file.contains("overrides")) {
        const json& ov = file.at("overrides");
        if (!ov.is_object()) throw UsageError("config file overrides must be an object");
        for (auto it = ov.begin(); it != ov.end(); ++it) apply(cfg, def, "file", it.key(), it.value());
    }

    bool have_seed = false;
    std::string out_dir;
    std::size_t workers = default_workers();
    have_seed = file_get("master_seed", cfg.master_seed);
    file_get("out_dir", out_dir);
    file_get("workers", workers);
    if (o_seed->count()) {
        cfg.master_seed = seed_flag;
        have_seed = true;
    }
    if (o_out->count()) out_dir = out_flag;
    if (o_workers->count()) workers = workers_flag;

    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got " + s);
        std::string key = s.substr(0, eq);
        if (!def.contains(key)) throw UsageError("unknown override key for " + name + ": " + key);
        apply(cfg, def, "flag", key, parse_flag_value(key, def.at(key), s.substr(eq + 1)));
    }

    if (!have_seed) throw UsageError("master seed is required (--seed)");
    if (out_dir.empty()) throw UsageError("output directory is required (--out)");
    if (workers == 0) throw UsageError("workers must be >= 1");
    cfg.out_dir = out_dir;
    cfg.workers = workers;
    try {
        validate_params(cfg.subcommand, cfg.params);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const json::exception& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
    return std::string(buf, ptr);
}

std::string render_csv(const Table& table) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        if (fields.size() != table.header.size()) throw std::logic_error("render_csv: row width does not match header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            const auto& f = fields[i];
            if (f.find_first_of(",\"\n") != std::string::npos) {
                out += '"';
                for (char c : f) {
                    if (c == '"') out += '"';
                    out += c;
                }
                out += '"';
            } else {
                out += f;
            }
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place");
    }
}

}  // namespace

std::string emit_csv(const Table& table, const std::filesystem::path& path) {
    std::string content = render_csv(table);
    write_atomic(path, content);
    return sha256_hex(content);
}

Table run_experiment(const RunConfig& config, bool& checks_passed) {
    const json& p = config.params;
    const auto seed = config.master_seed;
    const auto workers = config.workers;
    Table t;
    switch (config.subcommand) {
        case Subcommand::heatmap: {
            t.header = {"optimizer", "lambda_max", "cond", "seed", "log10_loss"};
            for (const auto& r : ex::sweep_heatmap(heatmap_params(p), seed, workers))
                t.rows.push_back({r.optimizer, num(r.lambda_max), num(r.cond), str(r.seed), num(r.log10_loss)});
            break;
        }
        case Subcommand::angle: {
            t.header = {"optimizer", "angle_deg", "mean_loss", "seeds"};
            for (const auto& r : ex::sweep_angle(angle_params(p), seed, workers))
                t.rows.push_back({r.optimizer, num(r.angle), num(r.mean_loss), str(r.seeds)});
            break;
        }
        case Subcommand::minnorm: {
            t.header = {"optimizer", "seed", "max_null_component", "final_null_component", "dist_to_min_norm"};
            for (const auto& r : ex::minnorm_experiment(minnorm_params(p), seed, workers))
                t.rows.push_back({r.optimizer, str(r.seed), num(r.max_null_component), num(r.final_null_component),
                                  num(r.dist_to_min_norm)});
            break;
        }
        case Subcommand::ridge_path: {
            t.header = {"kind", "optimizer", "seed", "value"};
            for (const auto& r : ex::ridge_path_experiment(ridge_params(p), seed, workers))
                t.rows.push_back({r.kind, r.optimizer, str(r.seed), num(r.value)});
            break;
        }
        case Subcommand::regret: {
            t.header = {"kind", "schedule", "seed", "horizon", "regret", "bound", "ratio", "v_hat_first", "v_hat_last", "passed"};
            auto entries = ex::regret_experiment(regret_params(p), seed, workers);
            for (const auto& e : entries) {
                t.rows.push_back({e.kind, e.schedule, str(e.seed), str(e.horizon), num(e.regret), num(e.bound),
                                  num(e.regret / e.bound), num(e.v_hat_first), num(e.v_hat_last), str(e.passed)});
                if (!e.passed) checks_passed = false;
            }
            if (!ex::regret_rate_decreasing(entries)) checks_passed = false;
            break;
        }
        case Subcommand::stability: {
            t.header = {"variant", "seed", "eig_index", "eigenvalue", "mean_abs_change", "mean_loss_change", "spearman",
                        "null_change"};
            auto sp = stability_params(p);
            std::vector<ex::StabilityReport> reports(2 * sp.seeds);
            parallel_for(reports.size(), workers, [&](std::size_t task) {
                const std::size_t s = task / 2;
                const bool degenerate = task % 2;
                Rng rng(derive_seed(seed, {5, s, static_cast<std::uint64_t>(degenerate)}));
                reports[task] = ex::stability_swap(degenerate ? sp.degenerate : sp.invertible, rng);
            });
            for (std::size_t task = 0; task < reports.size(); ++task) {
                const auto& r = reports[task];
                const char* variant = task % 2 ? "degenerate" : "invertible";
                for (std::size_t j = 0; j < r.lambda.size(); ++j)
                    t.rows.push_back({variant, str(task / 2), str(j), num(r.lambda[j]), num(r.mean_abs_change[j]),
                                      num(r.mean_loss_change[j]), num(r.spearman), num(r.null_change)});
            }
            break;
        }
        case Subcommand::theorem_range: {
            t.header = {"multiplier", "eta", "converged", "final_regret", "steps", "eta_first_lmax", "eta_final_lmax",
                        "reductions", "eta_monotone", "constant_after_entry", "still_shrinking", "edge_case", "passed"};
            for (const auto& e : ex::check_theorem_convergence_range(theorem_params(p), seed)) {
                t.rows.push_back({num(e.multiplier), num(e.eta), str(e.converged), num(e.final_regret), str(e.steps),
                                  num(e.eta_first_lmax), num(e.eta_final_lmax), str(e.reductions), str(e.eta_monotone),
                                  str(e.constant_after_entry), str(e.still_shrinking), str(e.edge_case), str(e.passed)});
                if (!e.passed) checks_passed = false;
            }
            break;
        }
        case Subcommand::distance_bound: {
            t.header = {"d", "cond", "eta", "beta2", "distance", "bound", "ratio", "passed"};
            for (const auto& e : ex::check_distance_bound(distance_params(p), seed, workers)) {
                t.rows.push_back({str(e.d), num(e.cond), num(e.eta), num(e.beta2), num(e.distance), num(e.bound),
                                  num(e.ratio), str(e.passed)});
                if (!e.passed) checks_passed = false;
            }
            break;
        }
        case Subcommand::align_mc: {
            t.header = {"d", "rows", "median_deg", "frac_below_15"};
            for (const auto& r : ex::alignment_monte_carlo(get<std::vector<std::size_t>>(p, "dims"),
                                                           get<std::size_t>(p, "samples"), seed, workers))
                t.rows.push_back({str(r.d), str(r.rows), num(r.median_deg), num(r.frac_below_15)});
            break;
        }
        case Subcommand::trajectory: {
            t.header = {"t", "loss", "eta_t", "grad_norm"};
            auto tr = trajectory_params(p);
            Rng prng(derive_seed(seed, {11}));
            auto problem = problems::generate_least_squares(tr.spec, prng);
            if (tr.eta_over_lmax) tr.config.eta /= problem.lambda_max;
            Rng rng(derive_seed(seed, {11, 1}));
            ex::RunOptions opt;
            opt.mode = tr.mode;
            opt.snapshot_stride = 0;
            auto trace = ex::run_trajectory(problem, tr.algo, tr.config, tr.steps, rng, opt);
            t.rows.push_back({"0", num(trace.initial_loss), "nan", "nan"});
            for (const auto& s : trace.steps)
                t.rows.push_back({std::to_string(s.t), num(s.loss), num(s.eta_t), num(s.grad_norm)});
            if (trace.diverged)
                t.rows.push_back({std::to_string(trace.steps.size() + 1), num(std::pow(10.0, ex::kDivergedLog10)), "nan", "nan"});
            break;
        }
    }
    return t;
}

int dispatch(const RunConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec || !std::filesystem::is_directory(config.out_dir)) {
        std::cerr << "error: cannot create output directory " << config.out_dir << "\n";
        return kExitIo;
    }
    bool passed = true;
    Table table;
    try {
        table = run_experiment(config, passed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    const std::string csv_name = std::string(to_string(config.subcommand)) + ".csv";
    try {
        std::string checksum = emit_csv(table, config.out_dir / csv_name);
        json manifest = {{"config", config.to_json()},
                         {"master_seed", config.master_seed},
                         {"code_version", ADASGD_VERSION},
                         {"checks_passed", passed},
                         {"files", {{csv_name, checksum}}}};
        write_atomic(config.out_dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    if (!passed) {
        std::cerr << to_string(config.subcommand) << ": check failed; see " << (config.out_dir / csv_name).string() << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}

int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    RunConfig config;
    try {
        config = parse_config(args);
    } catch (const CLI::CallForHelp&) {
        std::cout << "usage: adasgd run <experiment> --seed N --out DIR [--preset NAME] [--workers N]\n"
                     "                  [--config FILE] [--set key=value ...]\n"
                     "experiments:";
        for (auto s : all_subcommands()) std::cout << ' ' << to_string(s);
        std::cout << "\n";
        return kExitOk;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        return dispatch(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace adasgd::cli
