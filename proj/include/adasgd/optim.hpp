#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include <json.hpp>

#include "adasgd/linalg.hpp"

namespace adasgd::optim {

using linalg::Vector;

enum class Algo { sgd, adam, amsgrad, adasgd, adasgdmax, adabound };

const char* to_string(Algo a);
Algo algo_from_string(const std::string& s);

struct AdaBoundParams {
    double eta_sgd = 0.1;
    double gamma = 1e-3;
};

struct OptimizerConfig {
    double eta = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool regret_decay = false;  // adasgdmax: η_t gains a 1/√t factor
    std::optional<AdaBoundParams> adabound;

    void validate() const;
    bool operator==(const OptimizerConfig&) const;
};

struct OptimizerState {
    Algo algo = Algo::sgd;
    std::uint64_t t = 0;
    Vector m;
    Vector v;            // per-coordinate second moment (adam, amsgrad, adabound)
    Vector v_hat;        // running max of the corrected second moment (amsgrad)
    double v_scalar = 0.0;      // E(‖g‖²) (adasgd, adasgdmax)
    double v_hat_scalar = 0.0;  // adasgdmax
    double last_eta_t = std::numeric_limits<double>::quiet_NaN();
    Vector rates;  // per-coordinate multipliers applied to m at the last step (adam, amsgrad, adabound)
    bool diverged = false;
};

OptimizerState make_state(Algo algo, std::size_t d);

Vector sgd_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g);
Vector adam_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g);
Vector amsgrad_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g);
Vector adasgd_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g);
Vector adasgdmax_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                      std::span<const double> g);
Vector adabound_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                     std::span<const double> g);

/// Dispatch on state.algo.
Vector step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta, std::span<const double> g);

/// Inner step followed by projection onto [lo, hi].
Vector constrained_step(OptimizerState& s, const OptimizerConfig& c, std::span<const double> theta,
                        std::span<const double> g, std::span<const double> lo, std::span<const double> hi);

/// [η_l(t), η_u(t)] for AdaBound.
std::pair<double, double> adabound_bounds(const AdaBoundParams& p, double t);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

}  // namespace adasgd::optim
