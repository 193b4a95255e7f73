#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "adasgd/experiments.hpp"
#include "adasgd/parallel.hpp"

namespace adasgd::experiments {

namespace {

enum Tag : std::uint64_t { kTheorem = 7, kDistance = 8, kRegret = 9 };

constexpr double kRelTol = 1e-12;

QuadraticProblem deterministic_problem(std::size_t d, double cond, double lambda_min, Rng& rng) {
    GenSpec spec;
    spec.n = 2 * d;
    spec.d = d;
    spec.lambda_max = cond * lambda_min;
    spec.lambda_min = lambda_min;
    return problems::generate_least_squares(spec, rng);
}

}  // namespace

std::vector<TheoremRangeEntry> check_theorem_convergence_range(const QuadraticProblem& p, const Vector& theta0,
                                                               const std::vector<double>& multipliers,
                                                               std::size_t max_steps, double regret_tol) {
    if (!p.theta_star) throw std::invalid_argument("check_theorem_convergence_range: problem must be invertible");
    if (max_steps < 2) throw std::invalid_argument("check_theorem_convergence_range: need at least two steps");
    const double threshold = 2.0 / p.lambda_max;
    std::vector<TheoremRangeEntry> out;
    for (double mult : multipliers) {
        TheoremRangeEntry e;
        e.multiplier = mult;
        e.eta = mult / p.lambda_max;
        OptimizerConfig config;
        config.eta = e.eta;
        config.beta1 = 0.0;
        auto state = optim::make_state(Algo::adasgdmax, p.d());
        Vector theta = theta0;
        double prev = std::numeric_limits<double>::quiet_NaN(), entry = prev, half = prev;
        e.eta_monotone = true;
        e.constant_after_entry = true;
        bool entered = false;
        std::size_t t = 0;
        for (t = 1; t <= max_steps; ++t) {
            theta = optim::adasgdmax_step(state, config, theta, problems::full_gradient(p, theta));
            if (state.diverged) break;
            const double eta_t = state.last_eta_t;
            if (std::isnan(eta_t)) continue;
            if (t == 1) e.eta_first_lmax = eta_t * p.lambda_max;
            if (!std::isnan(prev)) {
                if (eta_t > prev * (1.0 + kRelTol)) e.eta_monotone = false;
                if (eta_t < prev * (1.0 - kRelTol)) ++e.reductions;
            }
            if (entered && std::abs(eta_t - entry) > kRelTol * entry) e.constant_after_entry = false;
            if (!entered && eta_t < threshold) {
                entered = true;
                entry = eta_t;
            }
            if (t == max_steps / 2) half = eta_t;
            prev = eta_t;
        }
        e.steps = std::min(t, max_steps);
        e.final_regret = state.diverged ? std::numeric_limits<double>::infinity() : problems::regret_in_loss(p, theta);
        e.eta_final_lmax = prev * p.lambda_max;
        e.converged = e.final_regret < regret_tol;
        e.still_shrinking = !std::isnan(half) && prev < half * (1.0 - kRelTol);
        e.edge_case = !e.converged && std::abs(e.eta_final_lmax - 2.0) < 1e-6;
        e.passed = e.edge_case || ((e.converged || e.still_shrinking) && e.eta_monotone && e.constant_after_entry);
        out.push_back(e);
    }
    return out;
}

std::vector<TheoremRangeEntry> check_theorem_convergence_range(const TheoremRangeParams& params,
                                                               std::uint64_t master_seed) {
    Rng rng(derive_seed(master_seed, {kTheorem}));
    auto p = deterministic_problem(params.d, params.cond, params.lambda_min, rng);
    Vector theta0(params.d);
    for (double& v : theta0) v = standard_normal(rng);
    return check_theorem_convergence_range(p, theta0, params.multipliers, params.max_steps, params.regret_tol);
}

double distance_bound(std::size_t d, double eta, double cond, double beta2) {
    return std::sqrt(static_cast<double>(d)) * eta * cond / (2.0 * (1.0 - beta2));
}

DistanceEntry distance_run(const QuadraticProblem& p, double eta, double beta2, std::size_t steps, Rng& rng,
                           double bound_scale) {
    if (!p.theta_star) throw std::invalid_argument("distance_run: problem must be invertible");
    OptimizerConfig config;
    config.eta = eta;
    config.beta1 = 0.0;
    config.beta2 = beta2;
    RunOptions opt;
    opt.mode = GradientMode::deterministic;
    opt.snapshot_stride = 0;
    auto trace = run_trajectory(p, Algo::adasgd, config, steps, rng, opt);
    DistanceEntry e;
    e.d = p.d();
    e.cond = p.cond;
    e.eta = eta;
    e.beta2 = beta2;
    e.distance = trace.diverged ? std::numeric_limits<double>::infinity()
                                : linalg::norm2(linalg::subtract(trace.final_theta, *p.theta_star));
    e.bound = bound_scale * distance_bound(p.d(), eta, p.cond, beta2);
    e.ratio = e.distance / e.bound;
    e.passed = e.distance <= e.bound;
    return e;
}

std::vector<DistanceEntry> check_distance_bound(const DistanceBoundParams& params, std::uint64_t master_seed,
                                                std::size_t workers) {
    const std::size_t nd = params.dims.size(), nk = params.conds.size(), ne = params.etas.size();
    std::vector<DistanceEntry> out(nd * nk * ne);
    parallel_for(out.size(), workers, [&](std::size_t task) {
        const std::size_t ie = task % ne, ik = (task / ne) % nk, id = task / (ne * nk);
        Rng prng(derive_seed(master_seed, {kDistance, id, ik}));
        auto p = deterministic_problem(params.dims[id], params.conds[ik], params.lambda_min, prng);
        Rng rng(derive_seed(master_seed, {kDistance, id, ik, 1000}));  // shared θ₀ across the η axis
        out[task] = distance_run(p, params.etas[ie], params.beta2, params.steps, rng, params.bound_scale);
    });
    return out;
}

const char* to_string(RegretSchedule s) { return s == RegretSchedule::theorem ? "theorem" : "corollary"; }

RegretSchedule regret_schedule_from_string(const std::string& s) {
    if (s == "theorem") return RegretSchedule::theorem;
    if (s == "corollary") return RegretSchedule::corollary;
    throw std::invalid_argument("unknown regret schedule: " + s);
}

double regret_bound_theorem(std::size_t d, double diameter, double grad_bound, double eta, double v_hat_first,
                            double v_hat_last, std::size_t horizon) {
    if (!(v_hat_first > 0.0)) return std::numeric_limits<double>::infinity();
    const double dd = static_cast<double>(d), T = static_cast<double>(horizon);
    return diameter * diameter * std::sqrt(dd * v_hat_last * T) / (2.0 * eta) +
           std::pow(dd, 1.5) * grad_bound * grad_bound * eta * (2.0 * std::sqrt(T) - 1.0) / (2.0 * std::sqrt(v_hat_first));
}

double regret_bound_corollary(std::size_t d, double diameter, double grad_bound, double eta, double v_hat_first,
                              double v_hat_last, std::size_t horizon) {
    if (!(v_hat_first > 0.0)) return std::numeric_limits<double>::infinity();
    const double dd = static_cast<double>(d), T = static_cast<double>(horizon);
    return dd * diameter * grad_bound * std::sqrt(v_hat_last * T) / (2.0 * eta) +
           dd * diameter * grad_bound * eta * (2.0 * std::sqrt(T) - 1.0) / (2.0 * std::sqrt(v_hat_first));
}

std::vector<RegretEntry> check_regret_bound(const OnlineProblem& p, double eta, RegretSchedule schedule,
                                            const std::vector<std::size_t>& horizons) {
    if (horizons.empty()) throw std::invalid_argument("check_regret_bound: no horizons");
    std::vector<std::size_t> hs = horizons;
    std::sort(hs.begin(), hs.end());
    if (hs.front() == 0 || hs.back() > p.horizon()) throw std::invalid_argument("check_regret_bound: horizon out of range");

    const double d = static_cast<double>(p.dim);
    OptimizerConfig config;
    config.beta1 = 0.0;
    config.regret_decay = true;
    // ηD∞/(G∞√(t v̂)) is the theorem schedule with η' = ηD∞/(G∞√d)
    config.eta = schedule == RegretSchedule::theorem ? eta : eta * p.diameter_inf / (p.grad_bound_inf * std::sqrt(d));

    auto state = optim::make_state(Algo::adasgdmax, p.dim);
    Vector theta(p.dim);
    for (std::size_t j = 0; j < p.dim; ++j) theta[j] = 0.5 * (p.box_lo[j] + p.box_hi[j]);
    std::vector<Vector> played;
    played.reserve(hs.back());
    std::vector<double> v_hat(hs.back() + 1, 0.0);
    for (std::size_t t = 0; t < hs.back(); ++t) {
        played.push_back(theta);
        theta = optim::constrained_step(state, config, theta, p.losses[t].gradient(theta), p.box_lo, p.box_hi);
        if (state.diverged) throw std::runtime_error("check_regret_bound: learner produced non-finite iterate");
        v_hat[t + 1] = state.v_hat_scalar;
    }

    std::vector<RegretEntry> out;
    for (std::size_t T : hs) {
        RegretEntry e;
        e.kind = problems::to_string(p.kind);
        e.schedule = to_string(schedule);
        e.horizon = T;
        std::vector<Vector> prefix(played.begin(), played.begin() + static_cast<std::ptrdiff_t>(T));
        e.regret = problems::regret(problems::truncated(p, T), prefix);
        e.v_hat_first = v_hat[1];
        e.v_hat_last = v_hat[T];
        e.bound = schedule == RegretSchedule::theorem
                      ? regret_bound_theorem(p.dim, p.diameter_inf, p.grad_bound_inf, eta, e.v_hat_first, e.v_hat_last, T)
                      : regret_bound_corollary(p.dim, p.diameter_inf, p.grad_bound_inf, eta, e.v_hat_first, e.v_hat_last, T);
        e.passed = e.regret <= e.bound;
        out.push_back(e);
    }
    return out;
}

std::vector<RegretEntry> regret_experiment(const RegretParams& params, std::uint64_t master_seed,
                                           std::size_t workers) {
    std::vector<OnlineKind> kinds;
    for (const auto& k : params.kinds) kinds.push_back(problems::online_kind_from_string(k));
    std::vector<RegretSchedule> schedules;
    for (const auto& s : params.schedules) schedules.push_back(regret_schedule_from_string(s));
    if (kinds.empty() || schedules.empty() || params.seeds == 0 || params.horizons.empty())
        throw std::invalid_argument("regret_experiment: empty grid");
    const std::size_t t_max = *std::max_element(params.horizons.begin(), params.horizons.end());
    const std::size_t nk = kinds.size(), nsch = schedules.size(), ns = params.seeds;
    std::vector<std::vector<RegretEntry>> blocks(nk * nsch * ns);
    parallel_for(blocks.size(), workers, [&](std::size_t task) {
        const std::size_t s = task % ns, isch = (task / ns) % nsch, ik = task / (ns * nsch);
        Rng rng(derive_seed(master_seed, {kRegret, ik, s}));
        auto p = problems::make_online_problem(kinds[ik], t_max, params.d, params.box_halfwidth, params.g_bound, rng);
        auto entries = check_regret_bound(p, params.eta, schedules[isch], params.horizons);
        for (auto& e : entries) e.seed = s;
        blocks[task] = std::move(entries);
    });
    std::vector<RegretEntry> out;
    for (auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
    return out;
}

bool regret_rate_decreasing(const std::vector<RegretEntry>& entries) {
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const auto& a = entries[i - 1];
        const auto& b = entries[i];
        if (a.kind != b.kind || a.schedule != b.schedule || a.seed != b.seed || b.horizon <= a.horizon) continue;
        if (!(b.regret / static_cast<double>(b.horizon) < a.regret / static_cast<double>(a.horizon))) return false;
    }
    return true;
}

}  // namespace adasgd::experiments
