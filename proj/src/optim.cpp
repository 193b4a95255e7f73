#include "adasgd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adasgd::optim {

const char* to_string(Algo a) {
    switch (a) {
        case Algo::sgd: return "sgd";
        case Algo::adam: return "adam";
        case Algo::amsgrad: return "amsgrad";
        case Algo::adasgd: return "adasgd";
        case Algo::adasgdmax: return "adasgdmax";
        case Algo::adabound: return "adabound";
    }
    return "?";
}

Algo algo_from_string(const std::string& s) {
    for (Algo a : {Algo::sgd, Algo::adam, Algo::amsgrad, Algo::adasgd, Algo::adasgdmax, Algo::adabound})
        if (s == to_string(a)) return a;
    throw std::invalid_argument("unknown optimizer: " + s);
}

void OptimizerConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("OptimizerConfig: eta must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("OptimizerConfig: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("OptimizerConfig: beta2 must lie in [0, 1)");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("OptimizerConfig: epsilon must be non-negative");
    if (adabound && !(adabound->gamma > 0.0)) throw std::invalid_argument("OptimizerConfig: gamma must be positive");
    if (adabound && !(adabound->eta_sgd > 0.0)) throw std::invalid_argument("OptimizerConfig: eta_sgd must be positive");
}

bool OptimizerConfig::operator==(const OptimizerConfig& o) const {
    bool ab = adabound.has_value() == o.adabound.has_value() &&
              (!adabound || (adabound->eta_sgd == o.adabound->eta_sgd && adabound->gamma == o.adabound->gamma));
    return ab && eta == o.eta && beta1 == o.beta1 && beta2 == o.beta2 && epsilon == o.epsilon &&
           regret_decay == o.regret_decay;
}

OptimizerState make_state(Algo algo, std::size_t d) {
    OptimizerState s;
    s.algo = algo;
    s.m.assign(d, 0.0);
    if (algo == Algo::adam || algo == Algo::amsgrad || algo == Algo::adabound) {
        s.v.assign(d, 0.0);
        s.rates.assign(d, 0.0);
    }
    if (algo == Algo::amsgrad) s.v_hat.assign(d, 0.0);
    return s;
}

namespace {

void require(const OptimizerState& s, Algo algo, std::span<const double> theta, std::span<const double> g) {
    if (s.algo != algo) throw std::invalid_argument(std::string("optimizer state is not ") + to_string(algo));
    if (theta.size() != g.size() || theta.size() != s.m.size())
        throw std::invalid_argument("optimizer step: dimension mismatch");
}

// true when the step must not proceed; marks non-finite gradients
bool frozen(OptimizerState& s, std::span<const double> g) {
    if (s.diverged) return true;
    if (!linalg::all_finite(g)) {
        s.diverged = true;
        return true;
    }
    return false;
}

Vector finish(OptimizerState& s, Vector theta) {
    if (!linalg::all_finite(theta)) s.diverged = true;
    return theta;
}

void momentum_sum(OptimizerState& s, const OptimizerConfig& c, std::span<const double> g) {
    for (std::size_t j = 0; j < g.size(); ++j) s.m[j] = c.beta1 * s.m[j] + g[j];
}

void moments(OptimizerState& s, const OptimizerConfig& c, std::span<const double> g) {
    for (std::size_t j = 0; j < g.size(); ++j) {
        s.m[j] = c.beta1 * s.m[j] + (1.0 - c.beta1) * g[j];
        s.v[j] = c.beta2 * s.v[j] + (1.0 - c.beta2) * g[j] * g[j];
    }
}

double pow_t(double b, std::uint64_t t) { return std::pow(b, static_cast<double>(t)); }

Vector apply_rates(OptimizerState& s, std::span<const double> theta) {
    Vector out(theta.begin(), theta.end());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= s.rates[j] * s.m[j];
    return out;
}

// θ ← θ − η_t·m for the global-rate methods; η_t = 0/0 is skipped
Vector global_rate_update(OptimizerState& s, std::span<const double> theta, double second_moment, double eta,
                          double extra = 1.0) {
    Vector out(theta.begin(), theta.end());
    if (second_moment == 0.0) return out;
    const double d = static_cast<double>(theta.size());
    s.last_eta_t = eta / std::sqrt(extra * second_moment / d);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= s.last_eta_t * s.m[j];
    return out;
}

}  // namespace

Vector sgd_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g) {
    require(s, Algo::sgd, theta, g);
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    momentum_sum(s, c, g);
    s.last_eta_t = c.eta;
    Vector out(theta.begin(), theta.end());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= c.eta * s.m[j];
    return finish(s, std::move(out));
}

Vector adam_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g) {
    require(s, Algo::adam, theta, g);
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    moments(s, c, g);
    const double c1 = 1.0 - pow_t(c.beta1, s.t);
    const double c2 = std::sqrt(1.0 - pow_t(c.beta2, s.t));
    for (std::size_t j = 0; j < g.size(); ++j) {
        double den = std::sqrt(s.v[j]) + c.epsilon;
        s.rates[j] = den > 0.0 ? c.eta * c2 / den / c1 : 0.0;
    }
    return finish(s, apply_rates(s, theta));
}

Vector amsgrad_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                    std::span<const double> g) {
    require(s, Algo::amsgrad, theta, g);
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    moments(s, c, g);
    const double b2t = 1.0 - pow_t(c.beta2, s.t);
    const double c1 = 1.0 - pow_t(c.beta1, s.t);
    const double c2 = std::sqrt(b2t);
    for (std::size_t j = 0; j < g.size(); ++j) {
        s.v_hat[j] = std::max(s.v_hat[j], s.v[j] / b2t);
        // v̂ is held on the corrected scale; map it back so the ε placement matches adam_step
        double den = std::sqrt(s.v_hat[j] * b2t) + c.epsilon;
        s.rates[j] = den > 0.0 ? c.eta * c2 / den / c1 : 0.0;
    }
    return finish(s, apply_rates(s, theta));
}

Vector adasgd_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                   std::span<const double> g) {
    require(s, Algo::adasgd, theta, g);
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    momentum_sum(s, c, g);
    double g2 = linalg::dot(g, g);
    s.v_scalar = c.beta2 * s.v_scalar + (1.0 - c.beta2) * g2;
    double corrected = s.v_scalar / (1.0 - pow_t(c.beta2, s.t));
    return finish(s, global_rate_update(s, theta, corrected, c.eta));
}

Vector adasgdmax_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                      std::span<const double> g) {
    require(s, Algo::adasgdmax, theta, g);
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    momentum_sum(s, c, g);
    double g2 = linalg::dot(g, g);
    s.v_scalar = c.beta2 * s.v_scalar + (1.0 - c.beta2) * g2;
    double corrected = s.v_scalar / (1.0 - pow_t(c.beta2, s.t));
    s.v_hat_scalar = std::max(s.v_hat_scalar, corrected);
    double extra = c.regret_decay ? static_cast<double>(s.t) : 1.0;
    return finish(s, global_rate_update(s, theta, s.v_hat_scalar, c.eta, extra));
}

std::pair<double, double> adabound_bounds(const AdaBoundParams& p, double t) {
    if (!(p.gamma > 0.0)) throw std::invalid_argument("adabound: gamma must be positive");
    return {p.eta_sgd * (1.0 - 1.0 / (p.gamma * t + 1.0)), p.eta_sgd * (1.0 + 1.0 / (p.gamma * t))};
}

Vector adabound_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                     std::span<const double> g) {
    require(s, Algo::adabound, theta, g);
    if (!c.adabound) throw std::invalid_argument("adabound: missing eta_sgd/gamma");
    if (!(c.adabound->gamma > 0.0)) throw std::invalid_argument("adabound: gamma must be positive");
    if (frozen(s, g)) return Vector(theta.begin(), theta.end());
    ++s.t;
    moments(s, c, g);
    auto [lo, hi] = adabound_bounds(*c.adabound, static_cast<double>(s.t));
    const double c1 = 1.0 - pow_t(c.beta1, s.t);
    const double c2 = std::sqrt(1.0 - pow_t(c.beta2, s.t));
    for (std::size_t j = 0; j < g.size(); ++j) {
        double den = std::sqrt(s.v[j]) + c.epsilon;
        double rate = den > 0.0 ? c.eta * c2 / den : hi;
        s.rates[j] = std::clamp(rate, lo, hi) / c1;
    }
    return finish(s, apply_rates(s, theta));
}

Vector step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g) {
    switch (s.algo) {
        case Algo::sgd: return sgd_step(s, c, theta, g);
        case Algo::adam: return adam_step(s, c, theta, g);
        case Algo::amsgrad: return amsgrad_step(s, c, theta, g);
        case Algo::adasgd: return adasgd_step(s, c, theta, g);
        case Algo::adasgdmax: return adasgdmax_step(s, c, theta, g);
        case Algo::adabound: return adabound_step(s, c, theta, g);
    }
    throw std::logic_error("unreachable");
}

Vector constrained_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                        std::span<const double> g, std::span<const double> lo, std::span<const double> hi) {
    Vector next = step(s, c, theta, g);
    if (s.diverged) return next;
    return linalg::project_box(next, lo, hi);
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
    j = nlohmann::json{{"eta", c.eta},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"epsilon", c.epsilon},
                       {"regret_decay", c.regret_decay}};
    if (c.adabound) {
        j["eta_sgd"] = c.adabound->eta_sgd;
        j["gamma"] = c.adabound->gamma;
    }
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
    static const char* known[] = {"eta", "beta1", "beta2", "epsilon", "regret_decay", "eta_sgd", "gamma"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known))
            throw std::invalid_argument("optimizer config: unknown key " + it.key());
    c = OptimizerConfig{};
    if (j.contains("eta")) j.at("eta").get_to(c.eta);
    if (j.contains("beta1")) j.at("beta1").get_to(c.beta1);
    if (j.contains("beta2")) j.at("beta2").get_to(c.beta2);
    if (j.contains("epsilon")) j.at("epsilon").get_to(c.epsilon);
    if (j.contains("regret_decay")) j.at("regret_decay").get_to(c.regret_decay);
    if (j.contains("eta_sgd") || j.contains("gamma")) {
        AdaBoundParams p;
        if (j.contains("eta_sgd")) j.at("eta_sgd").get_to(p.eta_sgd);
        if (j.contains("gamma")) j.at("gamma").get_to(p.gamma);
        c.adabound = p;
    }
    c.validate();
}

}  // namespace adasgd::optim
