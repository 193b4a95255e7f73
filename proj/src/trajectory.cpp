#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adasgd/experiments.hpp"

namespace adasgd::experiments {

const char* to_string(GradientMode m) {
    switch (m) {
        case GradientMode::deterministic: return "deterministic";
        case GradientMode::stochastic: return "stochastic";
        case GradientMode::per_sample: return "per-sample";
    }
    return "?";
}

GradientMode gradient_mode_from_string(const std::string& s) {
    for (GradientMode m : {GradientMode::deterministic, GradientMode::stochastic, GradientMode::per_sample})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown gradient mode: " + s);
}

double Trace::final_loss() const { return steps.empty() ? initial_loss : steps.back().loss; }

double Trace::final_log10_loss() const {
    if (diverged) return kDivergedLog10;
    return std::min(kDivergedLog10, std::log10(std::max(final_loss(), kLossFloor)));
}

Trace run_trajectory(const QuadraticProblem& p, Algo algo, const OptimizerConfig& config, std::size_t steps, Rng& rng,
                     const RunOptions& options) {
    if (steps == 0) throw std::invalid_argument("run_trajectory: steps must be >= 1");
    config.validate();
    const std::size_t d = p.d();

    Vector theta;
    if (options.theta0) {
        if (options.theta0->size() != d) throw std::invalid_argument("run_trajectory: theta0 dimension mismatch");
        theta = *options.theta0;
    } else {
        theta.resize(d);
        for (double& v : theta) v = standard_normal(rng);
    }

    Trace trace;
    trace.snapshot_stride = options.snapshot_stride;
    trace.initial_loss = problems::regret_in_loss(p, theta);
    trace.steps.reserve(steps);
    if (options.snapshot_stride > 0) trace.snapshots.push_back(theta);

    const double divergence_loss = std::pow(10.0, kDivergedLog10);
    auto state = optim::make_state(algo, d);

    for (std::uint64_t t = 1; t <= steps; ++t) {
        Vector g;
        switch (options.mode) {
            case GradientMode::deterministic: g = problems::full_gradient(p, theta); break;
            case GradientMode::stochastic: g = problems::stochastic_gradient(p, theta, rng); break;
            case GradientMode::per_sample: g = problems::sample_gradient(p, theta, uniform_index(rng, p.n())); break;
        }
        Vector next = optim::step(state, config, theta, g);
        if (state.diverged) {
            trace.diverged = true;
            break;
        }
        StepRecord rec{t, problems::regret_in_loss(p, next), state.last_eta_t, linalg::norm2(g)};
        if (!std::isfinite(rec.loss) || rec.loss >= divergence_loss) {
            trace.diverged = true;
            break;
        }
        trace.steps.push_back(rec);
        if (options.observer) options.observer(t, theta, next, rec);
        theta = std::move(next);
        if (options.snapshot_stride > 0 && t % options.snapshot_stride == 0) trace.snapshots.push_back(theta);
    }
    trace.final_theta = std::move(theta);
    return trace;
}

OptimizerConfig RosterEntry::resolve(const QuadraticProblem& p) const {
    OptimizerConfig c;
    c.eta = eta_over_lmax ? eta / p.lambda_max : eta;
    c.beta1 = beta1;
    if (algo == Algo::adabound) c.adabound = optim::AdaBoundParams{};
    return c;
}

namespace {

double parse_number(const std::string& s, const std::string& context) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("malformed number in " + context);
    }
    if (used != s.size()) throw std::invalid_argument("malformed number in " + context);
    return v;
}

}  // namespace

RosterEntry parse_roster_entry(const std::string& text) {
    auto first = text.find(':');
    if (first == std::string::npos) throw std::invalid_argument("roster entry must be algo:eta, got " + text);
    RosterEntry e;
    e.label = text;
    e.algo = optim::algo_from_string(text.substr(0, first));
    std::string rest = text.substr(first + 1);
    auto second = rest.find(':');
    std::string eta = rest.substr(0, second);
    if (second != std::string::npos) e.beta1 = parse_number(rest.substr(second + 1), text);
    const std::string suffix = "/lmax";
    if (eta.size() > suffix.size() && eta.compare(eta.size() - suffix.size(), suffix.size(), suffix) == 0) {
        e.eta_over_lmax = true;
        eta.resize(eta.size() - suffix.size());
    }
    e.eta = parse_number(eta, text);
    if (!(e.eta > 0.0)) throw std::invalid_argument("roster entry needs a positive learning rate: " + text);
    if (!(e.beta1 >= 0.0 && e.beta1 < 1.0)) throw std::invalid_argument("roster entry beta1 must lie in [0, 1): " + text);
    return e;
}

std::vector<RosterEntry> parse_roster(const std::vector<std::string>& texts) {
    std::vector<RosterEntry> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(parse_roster_entry(t));
    return out;
}

}  // namespace adasgd::experiments
