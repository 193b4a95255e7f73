#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adasgd/linalg.hpp"
#include "adasgd/optim.hpp"
#include "adasgd/problems.hpp"
#include "adasgd/rng.hpp"

namespace adasgd::experiments {

using linalg::Matrix;
using linalg::Vector;
using optim::Algo;
using optim::OptimizerConfig;
using problems::GenSpec;
using problems::OnlineKind;
using problems::OnlineProblem;
using problems::QuadraticProblem;

/// Recorded log₁₀ loss of a diverged run.
inline constexpr double kDivergedLog10 = 50.0;
/// Floor applied before taking log₁₀ of a loss.
inline constexpr double kLossFloor = 1e-300;

enum class GradientMode {
    deterministic,  // Xᵀ(Xθ − y)
    stochastic,     // n·xᵢ(xᵢᵀθ − yᵢ)
    per_sample,     // xᵢ(xᵢᵀθ − yᵢ)
};

const char* to_string(GradientMode m);
GradientMode gradient_mode_from_string(const std::string& s);

struct StepRecord {
    std::uint64_t t = 0;
    double loss = 0.0;
    double eta_t = 0.0;  // NaN when undefined
    double grad_norm = 0.0;
};

struct Trace {
    std::vector<StepRecord> steps;
    std::vector<Vector> snapshots;  // θ₀ and every snapshot_stride-th iterate
    std::size_t snapshot_stride = 0;
    bool diverged = false;
    double initial_loss = 0.0;
    Vector final_theta;

    double final_loss() const;
    /// log₁₀ of the final loss, or 50 when diverged.
    double final_log10_loss() const;
};

/// Called after every update with (t, θ_{t−1}, θ_t, trace record for t).
using StepObserver = std::function<void(std::uint64_t, const Vector&, const Vector&, const StepRecord&)>;

struct RunOptions {
    GradientMode mode = GradientMode::per_sample;
    std::size_t snapshot_stride = 10;  // 0 disables snapshots
    std::optional<Vector> theta0;      // drawn from N(0, 1)^d when absent
    StepObserver observer;
};

Trace run_trajectory(const QuadraticProblem& p, Algo algo, const OptimizerConfig& config, std::size_t steps, Rng& rng,
                     const RunOptions& options = {});

/// One optimizer of a sweep, written as `algo:eta` where eta is a number or `k/lmax`.
struct RosterEntry {
    std::string label;
    Algo algo = Algo::sgd;
    double eta = 0.01;
    bool eta_over_lmax = false;  // η = eta/λmax of the problem at hand
    double beta1 = 0.9;

    OptimizerConfig resolve(const QuadraticProblem& p) const;
};

RosterEntry parse_roster_entry(const std::string& text);
std::vector<RosterEntry> parse_roster(const std::vector<std::string>& texts);

struct SweepGrid {
    std::vector<double> lambda_max{1.0, 1e2, 1e4, 1e6};
    std::vector<double> cond{1.0, 1e2, 1e4, 1e6};
    std::size_t seeds = 5;
    std::size_t steps = 1500;
    std::size_t d = 30;
    std::size_t n = 90;
    std::vector<RosterEntry> roster =
        parse_roster({"sgd:0.01", "sgd:1/lmax", "adam:0.1", "adasgd:0.01"});
    GradientMode mode = GradientMode::per_sample;

    void validate() const;
};

struct HeatmapRow {
    std::string optimizer;
    double lambda_max = 0.0;
    double cond = 0.0;
    std::size_t seed = 0;
    double log10_loss = 0.0;
};

struct HeatmapCell {
    std::string optimizer;
    double lambda_max = 0.0;
    double cond = 0.0;
    double log10_loss = 0.0;  // log₁₀ of the seed-averaged loss, 50 if any seed diverged
};

std::vector<HeatmapRow> sweep_heatmap(const SweepGrid& grid, std::uint64_t master_seed, std::size_t workers);
std::vector<HeatmapCell> aggregate_heatmap(const std::vector<HeatmapRow>& rows);

struct AngleSweepParams {
    double cond = 1e4;
    double lambda_min = 1.0;
    std::vector<double> angles{0, 5, 10, 15, 20, 25, 30, 35, 40, 45};
    std::vector<RosterEntry> roster = parse_roster({"sgd:1/lmax", "adasgd:0.0005", "adam:0.005"});
    std::size_t steps = 3000;
    std::size_t seeds = 30;
    std::size_t n = 300;
    GradientMode mode = GradientMode::per_sample;
};

struct AngleRow {
    std::string optimizer;
    double angle = 0.0;
    double mean_loss = 0.0;
    std::size_t seeds = 0;
};

std::vector<AngleRow> sweep_angle(const AngleSweepParams& params, std::uint64_t master_seed, std::size_t workers);

double alignment_angle(std::span<const double> v);

struct AlignmentRow {
    std::size_t d = 0;
    std::size_t rows = 0;
    double median_deg = 0.0;
    double frac_below_15 = 0.0;
};

std::vector<AlignmentRow> alignment_monte_carlo(const std::vector<std::size_t>& dims, std::size_t samples_per_dim,
                                                std::uint64_t master_seed, std::size_t workers);

struct MinNormRow {
    std::string optimizer;
    std::size_t seed = 0;
    double max_null_component = 0.0;
    double final_null_component = 0.0;
    double dist_to_min_norm = 0.0;
};

/// Runs one optimizer from θ₀ = 0 and tracks the null-space component at every step.
MinNormRow minnorm_run(const QuadraticProblem& p, const Matrix& null_basis, const Vector& min_norm,
                       const RosterEntry& entry, std::size_t steps, GradientMode mode, Rng& rng);

struct MinNormParams {
    GenSpec spec = [] {
        GenSpec s;
        s.n = 300;
        s.d = 2;
        s.lambda_max = 1.0;
        s.lambda_min = 0.0;
        s.angle_2d = 30.0;
        return s;
    }();
    std::vector<RosterEntry> roster = parse_roster({"sgd:1/lmax", "adasgd:0.01", "adam:0.01"});
    std::size_t steps = 3000;
    std::size_t seeds = 5;
    GradientMode mode = GradientMode::per_sample;
};

std::vector<MinNormRow> minnorm_experiment(const MinNormParams& params, std::uint64_t master_seed,
                                           std::size_t workers);

struct RidgePathParams {
    std::size_t pool_n = 300;
    std::size_t train_n = 10;
    std::size_t d = 2;
    double lambda_min = 1.0;
    double lambda_max = 10.0;
    std::vector<RosterEntry> roster = parse_roster({"sgd:0.1/lmax", "adam:0.1", "adasgd:0.01"});
    std::size_t seeds = 50;
    std::size_t steps = 3000;
    std::size_t snapshot_stride = 10;
    // α grid: 0, λmax_train·10^k for k on an even grid in [alpha_log10_lo, alpha_log10_hi], and α = ∞
    double alpha_log10_lo = -6.0;
    double alpha_log10_hi = 6.0;
    std::size_t alpha_count = 241;
    std::size_t recursion_steps = 1000;
    RosterEntry recursion_sgd = parse_roster_entry("sgd:0.1/lmax");
    RosterEntry recursion_adasgd = parse_roster_entry("adasgd:0.001");
};

struct RidgeRow {
    std::string kind;  // path_deterministic, path_stochastic, recursion_residual
    std::string optimizer;
    std::size_t seed = 0;
    double value = 0.0;
};

/// Mean over snapshots of the distance to the nearest point on the ridge path.
double path_discrepancy(const QuadraticProblem& p, const std::vector<Vector>& snapshots,
                        const std::vector<double>& alphas);
/// Largest per-step ‖Q(θ_{t+1}−θ*) − (I−η_tΛ)Q(θ_t−θ*)‖∞ over a deterministic run with β₁ = 0.
double recursion_residual(const QuadraticProblem& p, const RosterEntry& entry, std::size_t steps, Rng& rng);

std::vector<RidgeRow> ridge_path_experiment(const RidgePathParams& params, std::uint64_t master_seed,
                                            std::size_t workers);
/// Mean of `value` over rows matching kind and optimizer.
double mean_value(const std::vector<RidgeRow>& rows, const std::string& kind, const std::string& optimizer);

struct StabilityParams {
    std::size_t n = 500;
    std::size_t d = 50;
    std::size_t swaps = 10;
    std::size_t pool_n = 1000;
    double lambda_max = 1e3;
    double lambda_min = 1.0;
    std::size_t zero_tail = 0;
};

struct StabilityReport {
    Vector lambda;             // eigenvalues of the training XᵀX, descending
    Vector mean_abs_change;    // mean |Q(θ−θ⁻ⁱ)|ⱼ
    Vector mean_loss_change;   // mean λⱼ(Q(θ⁻ⁱ−θ))ⱼ²
    std::size_t swaps = 0;
    double spearman = 0.0;     // rank correlation of λⱼ against mean_abs_change
    double null_change = 0.0;  // largest mean_abs_change along zero-eigenvalue directions, relative to ‖θ‖₂
};

/// Accumulates the effect of replacing row `row` with (new_row, new_y) into a report.
void accumulate_swap(StabilityReport& report, const QuadraticProblem& train, const Vector& theta, std::size_t row,
                     std::span<const double> new_row, double new_y);
void finalize_report(StabilityReport& report, double theta_norm);
StabilityReport stability_swap(const StabilityParams& params, Rng& rng);

double spearman(std::span<const double> a, std::span<const double> b);

/// Mean of ‖P(θ_{t+1}−θ_t)‖/‖θ_{t+1}−θ_t‖ where P projects onto the k eigenvectors of largest |λ|.
double dependence_ratio(const Trace& trace, const Matrix& q, std::span<const double> lambda, std::size_t k = 10);

struct DependenceParams {
    std::size_t d = 100;
    std::size_t n = 300;
    double lambda_max = 1e4;
    double lambda_min = 1.0;
    std::size_t seeds = 3;
    std::size_t steps = 3000;
    std::size_t k = 10;
    std::vector<RosterEntry> roster = parse_roster({"sgd:1/lmax", "adasgd:0.01", "adam:0.1"});
    GradientMode mode = GradientMode::per_sample;
};

struct DependenceRow {
    std::string optimizer;
    std::size_t seed = 0;
    double ratio = 0.0;
};

std::vector<DependenceRow> dependence_experiment(const DependenceParams& params, std::uint64_t master_seed,
                                                 std::size_t workers);

struct TheoremRangeParams {
    std::size_t d = 10;
    double cond = 1e4;
    double lambda_min = 1.0;
    std::vector<double> multipliers{1e-3, 1.0, 1e3};
    std::size_t max_steps = 50000;
    double regret_tol = 1e-8;
};

struct TheoremRangeEntry {
    double multiplier = 0.0;
    double eta = 0.0;
    double final_regret = 0.0;
    std::size_t steps = 0;
    double eta_first_lmax = 0.0;  // η₁·λmax
    double eta_final_lmax = 0.0;  // η_T·λmax
    std::size_t reductions = 0;
    bool converged = false;
    bool still_shrinking = false;
    bool eta_monotone = false;
    bool constant_after_entry = false;
    bool edge_case = false;  // limit of η_t sits at 2/λmax
    bool passed = false;
};

/// Runs AdaSGDMax (β₁ = 0, full gradients) from θ₀ with η = multiplier/λmax for each multiplier.
std::vector<TheoremRangeEntry> check_theorem_convergence_range(const QuadraticProblem& p, const Vector& theta0,
                                                               const std::vector<double>& multipliers,
                                                               std::size_t max_steps, double regret_tol);
std::vector<TheoremRangeEntry> check_theorem_convergence_range(const TheoremRangeParams& params,
                                                               std::uint64_t master_seed);

struct DistanceBoundParams {
    std::vector<std::size_t> dims{2, 20};
    std::vector<double> conds{10.0, 1e3};
    std::vector<double> etas{1e-4, 1e-2, 1.0};
    double beta2 = 0.999;
    double lambda_min = 1.0;
    std::size_t steps = 50000;
    double bound_scale = 1.0;  // values below 1 shrink the bound for self-tests
};

struct DistanceEntry {
    std::size_t d = 0;
    double cond = 0.0;
    double eta = 0.0;
    double beta2 = 0.0;
    double distance = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
    bool passed = false;
};

double distance_bound(std::size_t d, double eta, double cond, double beta2);
DistanceEntry distance_run(const QuadraticProblem& p, double eta, double beta2, std::size_t steps, Rng& rng,
                           double bound_scale = 1.0);
std::vector<DistanceEntry> check_distance_bound(const DistanceBoundParams& params, std::uint64_t master_seed,
                                                std::size_t workers);

enum class RegretSchedule { theorem, corollary };
const char* to_string(RegretSchedule s);
RegretSchedule regret_schedule_from_string(const std::string& s);

struct RegretEntry {
    std::string kind;
    std::string schedule;
    std::size_t seed = 0;
    std::size_t horizon = 0;
    double regret = 0.0;
    double bound = 0.0;
    double v_hat_first = 0.0;
    double v_hat_last = 0.0;
    bool passed = false;
};

/// Plays AdaSGDMax (β₁ = 0, box projection) on the whole stream and evaluates regret and bound at each horizon.
std::vector<RegretEntry> check_regret_bound(const OnlineProblem& p, double eta, RegretSchedule schedule,
                                            const std::vector<std::size_t>& horizons);

double regret_bound_theorem(std::size_t d, double diameter, double grad_bound, double eta, double v_hat_first,
                            double v_hat_last, std::size_t horizon);
double regret_bound_corollary(std::size_t d, double diameter, double grad_bound, double eta, double v_hat_first,
                              double v_hat_last, std::size_t horizon);

struct RegretParams {
    std::vector<std::string> kinds{"linear-adversarial", "quadratic-tracking"};
    std::vector<std::string> schedules{"theorem", "corollary"};
    std::vector<std::size_t> horizons{100, 1000, 10000};
    std::size_t seeds = 5;
    std::size_t d = 10;
    double box_halfwidth = 1.0;
    double g_bound = 1.0;
    double eta = 1.0;
};

std::vector<RegretEntry> regret_experiment(const RegretParams& params, std::uint64_t master_seed,
                                           std::size_t workers);
/// R_T/T strictly decreasing over horizons within every (kind, schedule, seed) group.
bool regret_rate_decreasing(const std::vector<RegretEntry>& entries);

}  // namespace adasgd::experiments
