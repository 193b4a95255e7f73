#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include "adasgd/experiments.hpp"
#include "adasgd/parallel.hpp"

namespace adasgd::experiments {

namespace {

enum Tag : std::uint64_t { kHeatmap = 1, kAngle = 2, kMinNorm = 3, kRidge = 4, kAlign = 10 };

Vector standard_normal_vector(std::size_t d, Rng& rng) {
    Vector v(d);
    for (double& x : v) x = standard_normal(rng);
    return v;
}

}  // namespace

void SweepGrid::validate() const {
    if (lambda_max.empty() || cond.empty() || roster.empty()) throw std::invalid_argument("SweepGrid: empty axis or roster");
    if (seeds == 0 || steps == 0 || d == 0 || n == 0) throw std::invalid_argument("SweepGrid: counts must be positive");
    for (double l : lambda_max)
        if (!(l > 0.0)) throw std::invalid_argument("SweepGrid: lambda_max values must be positive");
    for (double k : cond)
        if (!(k >= 1.0)) throw std::invalid_argument("SweepGrid: cond values must be >= 1");
    if (n < d) throw std::invalid_argument("SweepGrid: n must be >= d");
}

std::vector<HeatmapRow> sweep_heatmap(const SweepGrid& grid, std::uint64_t master_seed, std::size_t workers) {
    grid.validate();
    const std::size_t nl = grid.lambda_max.size(), nk = grid.cond.size(), ns = grid.seeds, no = grid.roster.size();
    // one task per generated problem; every optimizer runs on it from the same θ₀
    std::vector<double> values(nl * nk * ns * no);
    parallel_for(nl * nk * ns, workers, [&](std::size_t task) {
        const std::size_t s = task % ns, ik = (task / ns) % nk, il = task / (ns * nk);
        GenSpec spec;
        spec.n = grid.n;
        spec.d = grid.d;
        spec.lambda_max = grid.lambda_max[il];
        spec.lambda_min = grid.lambda_max[il] / grid.cond[ik];
        Rng prng(derive_seed(master_seed, {kHeatmap, il, ik, s}));
        auto p = problems::generate_least_squares(spec, prng);
        Vector theta0 = standard_normal_vector(grid.d, prng);
        for (std::size_t k = 0; k < no; ++k) {
            const auto& e = grid.roster[k];
            Rng rng(derive_seed(master_seed, {kHeatmap, il, ik, s, 1000 + k}));
            RunOptions opt;
            opt.mode = grid.mode;
            opt.snapshot_stride = 0;
            opt.theta0 = theta0;
            auto trace = run_trajectory(p, e.algo, e.resolve(p), grid.steps, rng, opt);
            values[((k * nl + il) * nk + ik) * ns + s] = trace.final_log10_loss();
        }
    });

    std::vector<HeatmapRow> rows;
    rows.reserve(values.size());
    for (std::size_t k = 0; k < no; ++k)
        for (std::size_t il = 0; il < nl; ++il)
            for (std::size_t ik = 0; ik < nk; ++ik)
                for (std::size_t s = 0; s < ns; ++s)
                    rows.push_back({grid.roster[k].label, grid.lambda_max[il], grid.cond[ik], s,
                                    values[((k * nl + il) * nk + ik) * ns + s]});
    return rows;
}

std::vector<HeatmapCell> aggregate_heatmap(const std::vector<HeatmapRow>& rows) {
    std::vector<HeatmapCell> cells;
    std::vector<std::vector<double>> members;
    for (const auto& r : rows) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const HeatmapCell& c) {
            return c.optimizer == r.optimizer && c.lambda_max == r.lambda_max && c.cond == r.cond;
        });
        if (it == cells.end()) {
            cells.push_back({r.optimizer, r.lambda_max, r.cond, 0.0});
            members.emplace_back();
            it = cells.end() - 1;
        }
        members[static_cast<std::size_t>(it - cells.begin())].push_back(r.log10_loss);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& m = members[i];
        if (std::any_of(m.begin(), m.end(), [](double v) { return v >= kDivergedLog10; })) {
            cells[i].log10_loss = kDivergedLog10;
            continue;
        }
        double mean = 0.0;
        for (double v : m) mean += std::pow(10.0, v);
        mean /= static_cast<double>(m.size());
        cells[i].log10_loss = std::min(kDivergedLog10, std::log10(std::max(mean, kLossFloor)));
    }
    return cells;
}

std::vector<AngleRow> sweep_angle(const AngleSweepParams& params, std::uint64_t master_seed, std::size_t workers) {
    if (params.roster.empty() || params.seeds == 0 || params.angles.empty())
        throw std::invalid_argument("sweep_angle: empty roster, angles or seeds");
    const std::size_t na = params.angles.size(), ns = params.seeds, no = params.roster.size();
    std::vector<double> finals(na * ns * no);
    parallel_for(na * ns, workers, [&](std::size_t task) {
        const std::size_t s = task % ns, ia = task / ns;
        Rng prng(derive_seed(master_seed, {kAngle, ia, s}));
        auto p = problems::make_rotated_2d(params.cond, params.lambda_min, params.angles[ia], prng, params.n);
        Vector theta0 = standard_normal_vector(2, prng);
        for (std::size_t k = 0; k < no; ++k) {
            const auto& e = params.roster[k];
            Rng rng(derive_seed(master_seed, {kAngle, ia, s, 1000 + k}));
            RunOptions opt;
            opt.mode = params.mode;
            opt.snapshot_stride = 0;
            opt.theta0 = theta0;
            auto trace = run_trajectory(p, e.algo, e.resolve(p), params.steps, rng, opt);
            finals[(k * na + ia) * ns + s] =
                trace.diverged ? std::numeric_limits<double>::infinity() : trace.final_loss();
        }
    });
    std::vector<AngleRow> rows;
    for (std::size_t k = 0; k < no; ++k)
        for (std::size_t ia = 0; ia < na; ++ia) {
            double sum = 0.0;
            for (std::size_t s = 0; s < ns; ++s) sum += finals[(k * na + ia) * ns + s];
            rows.push_back({params.roster[k].label, params.angles[ia], sum / static_cast<double>(ns), ns});
        }
    return rows;
}

double alignment_angle(std::span<const double> v) {
    if (std::abs(linalg::norm2(v) - 1.0) > 1e-9) throw std::invalid_argument("alignment_angle: vector must have unit norm");
    return std::acos(std::min(1.0, linalg::norm_inf(v))) * 180.0 / std::numbers::pi;
}

std::vector<AlignmentRow> alignment_monte_carlo(const std::vector<std::size_t>& dims, std::size_t samples_per_dim,
                                                std::uint64_t master_seed, std::size_t workers) {
    for (auto d : dims)
        if (d < 2) throw std::invalid_argument("alignment_monte_carlo: dimensions must be >= 2");
    if (samples_per_dim == 0) throw std::invalid_argument("alignment_monte_carlo: need at least one sample");
    std::vector<AlignmentRow> rows(dims.size());
    parallel_for(dims.size(), workers, [&](std::size_t i) {
        const std::size_t d = dims[i];
        Rng rng(derive_seed(master_seed, {kAlign, i, d}));
        std::vector<double> angles;
        angles.reserve(samples_per_dim + d);
        while (angles.size() < samples_per_dim) {
            auto q = linalg::haar_orthogonal(d, rng);
            for (std::size_t r = 0; r < d && angles.size() < samples_per_dim; ++r) {
                auto row = q.row(r);
                Vector unit(row.begin(), row.end());
                double nrm = linalg::norm2(unit);
                for (double& x : unit) x /= nrm;
                angles.push_back(alignment_angle(unit));
            }
        }
        const std::size_t below = static_cast<std::size_t>(
            std::count_if(angles.begin(), angles.end(), [](double a) { return a < 15.0; }));
        std::sort(angles.begin(), angles.end());
        const std::size_t m = angles.size();
        double median = m % 2 ? angles[m / 2] : 0.5 * (angles[m / 2 - 1] + angles[m / 2]);
        rows[i] = {d, m, median, static_cast<double>(below) / static_cast<double>(m)};
    });
    return rows;
}

MinNormRow minnorm_run(const QuadraticProblem& p, const Matrix& null_basis, const Vector& min_norm,
                       const RosterEntry& entry, std::size_t steps, GradientMode mode, Rng& rng) {
    auto null_component = [&](const Vector& theta) {
        return null_basis.rows() == 0 ? 0.0 : linalg::norm2(linalg::matvec(null_basis, theta));
    };
    MinNormRow row;
    row.optimizer = entry.label;
    RunOptions opt;
    opt.mode = mode;
    opt.snapshot_stride = 0;
    opt.theta0 = Vector(p.d(), 0.0);
    opt.observer = [&](std::uint64_t, const Vector&, const Vector& theta, const StepRecord&) {
        row.max_null_component = std::max(row.max_null_component, null_component(theta));
    };
    auto trace = run_trajectory(p, entry.algo, entry.resolve(p), steps, rng, opt);
    if (trace.diverged) {
        row.max_null_component = row.final_null_component = row.dist_to_min_norm =
            std::numeric_limits<double>::infinity();
        return row;
    }
    row.final_null_component = null_component(trace.final_theta);
    row.dist_to_min_norm = linalg::norm2(linalg::subtract(trace.final_theta, min_norm));
    return row;
}

std::vector<MinNormRow> minnorm_experiment(const MinNormParams& params, std::uint64_t master_seed,
                                           std::size_t workers) {
    if (params.roster.empty() || params.seeds == 0) throw std::invalid_argument("minnorm_experiment: empty roster or seeds");
    if (params.spec.lambda_min != 0.0 && params.spec.zero_tail == 0 && params.spec.n >= params.spec.d)
        throw std::invalid_argument("minnorm_experiment: problem must be degenerate");
    const std::size_t ns = params.seeds, no = params.roster.size();
    std::vector<MinNormRow> rows(ns * no);
    parallel_for(ns, workers, [&](std::size_t s) {
        Rng prng(derive_seed(master_seed, {kMinNorm, s}));
        auto p = problems::generate_least_squares(params.spec, prng);
        auto basis = problems::null_space_basis(p);
        auto mn = problems::min_norm_solution(p);
        for (std::size_t k = 0; k < no; ++k) {
            Rng rng(derive_seed(master_seed, {kMinNorm, s, 1000 + k}));
            auto row = minnorm_run(p, basis, mn, params.roster[k], params.steps, params.mode, rng);
            row.seed = s;
            rows[k * ns + s] = std::move(row);
        }
    });
    return rows;
}

double path_discrepancy(const QuadraticProblem& p, const std::vector<Vector>& snapshots,
                        const std::vector<double>& alphas) {
    if (snapshots.empty()) throw std::invalid_argument("path_discrepancy: no snapshots");
    std::vector<Vector> path;
    path.reserve(alphas.size());
    for (double a : alphas) path.push_back(std::isinf(a) ? Vector(p.d(), 0.0) : problems::ridge_solution(p, a));
    double total = 0.0;
    for (const auto& th : snapshots) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& r : path) best = std::min(best, linalg::norm2(linalg::subtract(th, r)));
        total += best;
    }
    return total / static_cast<double>(snapshots.size());
}

double recursion_residual(const QuadraticProblem& p, const RosterEntry& entry, std::size_t steps, Rng& rng) {
    if (!p.theta_star) throw std::invalid_argument("recursion_residual: problem has no unique minimizer");
    auto config = entry.resolve(p);
    config.beta1 = 0.0;
    double worst = 0.0;
    RunOptions opt;
    opt.mode = GradientMode::deterministic;
    opt.snapshot_stride = 0;
    opt.theta0 = Vector(p.d(), 0.0);
    opt.observer = [&](std::uint64_t, const Vector& prev, const Vector& next, const StepRecord& rec) {
        Vector zp = linalg::matvec(p.q, linalg::subtract(prev, *p.theta_star));
        Vector zn = linalg::matvec(p.q, linalg::subtract(next, *p.theta_star));
        for (std::size_t j = 0; j < zp.size(); ++j)
            worst = std::max(worst, std::abs(zn[j] - (1.0 - rec.eta_t * p.lambda[j]) * zp[j]));
    };
    auto trace = run_trajectory(p, entry.algo, config, steps, rng, opt);
    return trace.diverged ? std::numeric_limits<double>::infinity() : worst;
}

std::vector<RidgeRow> ridge_path_experiment(const RidgePathParams& params, std::uint64_t master_seed,
                                            std::size_t workers) {
    if (params.train_n > params.pool_n || params.train_n < params.d)
        throw std::invalid_argument("ridge_path_experiment: need d <= train_n <= pool_n");
    if (params.roster.empty() || params.seeds == 0 || params.alpha_count < 2)
        throw std::invalid_argument("ridge_path_experiment: empty roster, seeds or alpha grid");
    const std::size_t ns = params.seeds, no = params.roster.size();
    const std::size_t per_seed = 2 * no + 2;
    std::vector<RidgeRow> slots(ns * per_seed);

    parallel_for(ns, workers, [&](std::size_t s) {
        Rng prng(derive_seed(master_seed, {kRidge, s}));
        GenSpec spec;
        spec.n = params.pool_n;
        spec.d = params.d;
        spec.lambda_max = params.lambda_max;
        spec.lambda_min = params.lambda_min;
        auto pool = problems::generate_least_squares(spec, prng);
        std::vector<std::size_t> idx(params.pool_n);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), prng);
        Matrix x(params.train_n, params.d);
        Vector y(params.train_n);
        for (std::size_t r = 0; r < params.train_n; ++r) {
            auto src = pool.x.row(idx[r]);
            std::copy(src.begin(), src.end(), x.row(r).begin());
            y[r] = pool.y[idx[r]];
        }
        auto train = problems::make_problem(std::move(x), std::move(y));

        std::vector<double> alphas{0.0};
        for (std::size_t i = 0; i < params.alpha_count; ++i) {
            double f = static_cast<double>(i) / static_cast<double>(params.alpha_count - 1);
            alphas.push_back(train.lambda_max *
                             std::pow(10.0, params.alpha_log10_lo + f * (params.alpha_log10_hi - params.alpha_log10_lo)));
        }
        alphas.push_back(std::numeric_limits<double>::infinity());

        for (std::size_t k = 0; k < no; ++k) {
            const auto& e = params.roster[k];
            for (int stochastic = 0; stochastic < 2; ++stochastic) {
                Rng rng(derive_seed(master_seed, {kRidge, s, 1000 + k, static_cast<std::uint64_t>(stochastic)}));
                RunOptions opt;
                opt.mode = stochastic ? GradientMode::per_sample : GradientMode::deterministic;
                opt.snapshot_stride = params.snapshot_stride;
                opt.theta0 = Vector(params.d, 0.0);
                auto trace = run_trajectory(train, e.algo, e.resolve(train), params.steps, rng, opt);
                double disc = trace.diverged ? std::numeric_limits<double>::infinity()
                                             : path_discrepancy(train, trace.snapshots, alphas);
                slots[s * per_seed + 2 * k + static_cast<std::size_t>(stochastic)] = {
                    stochastic ? "path_stochastic" : "path_deterministic", e.label, s, disc};
            }
        }
        Rng rng(derive_seed(master_seed, {kRidge, s, 2000}));
        slots[s * per_seed + 2 * no] = {"recursion_residual", params.recursion_sgd.label, s,
                                        recursion_residual(train, params.recursion_sgd, params.recursion_steps, rng)};
        slots[s * per_seed + 2 * no + 1] = {
            "recursion_residual", params.recursion_adasgd.label, s,
            recursion_residual(train, params.recursion_adasgd, params.recursion_steps, rng)};
    });

    // group rows by kind, then optimizer, then seed
    std::vector<RidgeRow> rows;
    rows.reserve(slots.size());
    for (const char* kind : {"path_deterministic", "path_stochastic", "recursion_residual"}) {
        std::vector<std::string> labels;
        for (const auto& r : slots)
            if (r.kind == kind && std::find(labels.begin(), labels.end(), r.optimizer) == labels.end())
                labels.push_back(r.optimizer);
        for (const auto& l : labels)
            for (const auto& r : slots)
                if (r.kind == kind && r.optimizer == l) rows.push_back(r);
    }
    return rows;
}

double mean_value(const std::vector<RidgeRow>& rows, const std::string& kind, const std::string& optimizer) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows)
        if (r.kind == kind && r.optimizer == optimizer) {
            sum += r.value;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("mean_value: no matching rows");
    return sum / static_cast<double>(count);
}

}  // namespace adasgd::experiments
