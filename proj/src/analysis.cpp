#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "adasgd/experiments.hpp"
#include "adasgd/parallel.hpp"

namespace adasgd::experiments {

namespace {

enum Tag : std::uint64_t { kDependence = 6 };

Vector average_ranks(std::span<const double> a) {
    std::vector<std::size_t> idx(a.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
    Vector ranks(a.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && a[idx[j + 1]] == a[idx[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
    Vector ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void accumulate_swap(StabilityReport& report, const QuadraticProblem& train, const Vector& theta, std::size_t row,
                     std::span<const double> new_row, double new_y) {
    if (row >= train.n() || new_row.size() != train.d()) throw std::invalid_argument("accumulate_swap: bad swap");
    const std::size_t d = train.d();
    if (report.lambda.empty()) {
        report.lambda = train.lambda;
        report.mean_abs_change.assign(d, 0.0);
        report.mean_loss_change.assign(d, 0.0);
    }
    Matrix x = train.x;
    Vector y = train.y;
    std::copy(new_row.begin(), new_row.end(), x.row(row).begin());
    y[row] = new_y;
    auto swapped = problems::make_problem(std::move(x), std::move(y));
    Vector theta_swap = problems::min_norm_solution(swapped);
    Vector z = linalg::matvec(train.q, linalg::subtract(theta, theta_swap));
    for (std::size_t j = 0; j < d; ++j) {
        report.mean_abs_change[j] += std::abs(z[j]);
        report.mean_loss_change[j] += std::max(train.lambda[j], 0.0) * z[j] * z[j];
    }
    ++report.swaps;
}

void finalize_report(StabilityReport& report, double theta_norm) {
    if (report.swaps == 0) return;
    const double s = static_cast<double>(report.swaps);
    for (double& v : report.mean_abs_change) v /= s;
    for (double& v : report.mean_loss_change) v /= s;
    report.spearman = spearman(report.lambda, report.mean_abs_change);
    const double cutoff = problems::kRankCutoff * std::max(report.lambda.front(), 0.0);
    report.null_change = 0.0;
    for (std::size_t j = 0; j < report.lambda.size(); ++j)
        if (report.lambda[j] <= cutoff)
            report.null_change = std::max(report.null_change, report.mean_abs_change[j] / std::max(theta_norm, 1e-300));
}

StabilityReport stability_swap(const StabilityParams& params, Rng& rng) {
    if (params.pool_n <= params.n) throw std::invalid_argument("stability_swap: pool must be larger than the training set");
    if (params.swaps == 0) throw std::invalid_argument("stability_swap: need at least one swap");
    GenSpec spec;
    spec.n = params.pool_n;
    spec.d = params.d;
    spec.lambda_max = params.lambda_max;
    spec.lambda_min = params.lambda_min;
    spec.zero_tail = params.zero_tail;
    auto pool = problems::generate_least_squares(spec, rng);
    // work in the pool's eigen-coordinates: X Qᵀ = VΣ, whose zero-eigenvalue columns vanish identically
    {
        Matrix rotated(pool.n(), pool.d());
        for (std::size_t i = 0; i < pool.n(); ++i)
            for (std::size_t r = 0; r < pool.d(); ++r)
                if (pool.lambda[r] != 0.0) rotated(i, r) = linalg::dot(pool.x.row(i), pool.q.row(r));
        pool.x = std::move(rotated);
    }

    std::vector<std::size_t> idx(params.pool_n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix x(params.n, params.d);
    Vector y(params.n);
    for (std::size_t r = 0; r < params.n; ++r) {
        auto src = pool.x.row(idx[r]);
        std::copy(src.begin(), src.end(), x.row(r).begin());
        y[r] = pool.y[idx[r]];
    }
    auto train = problems::make_problem(std::move(x), std::move(y));
    Vector theta = problems::min_norm_solution(train);

    StabilityReport report;
    const std::size_t outside = params.pool_n - params.n;
    for (std::size_t s = 0; s < params.swaps; ++s) {
        std::size_t row = uniform_index(rng, params.n);
        std::size_t src = idx[params.n + uniform_index(rng, outside)];
        accumulate_swap(report, train, theta, row, pool.x.row(src), pool.y[src]);
    }
    finalize_report(report, linalg::norm2(theta));
    return report;
}

double dependence_ratio(const Trace& trace, const Matrix& q, std::span<const double> lambda, std::size_t k) {
    if (trace.snapshot_stride != 1) throw std::invalid_argument("dependence_ratio: snapshots must be taken every step");
    if (trace.snapshots.size() < 2) throw std::invalid_argument("dependence_ratio: need at least two snapshots");
    const std::size_t d = lambda.size();
    if (k == 0 || k > d || q.rows() != d || q.cols() != d) throw std::invalid_argument("dependence_ratio: bad eigenbasis or k");
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t i, std::size_t j) { return std::abs(lambda[i]) > std::abs(lambda[j]); });

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 1; t < trace.snapshots.size(); ++t) {
        Vector delta = linalg::subtract(trace.snapshots[t], trace.snapshots[t - 1]);
        double nd = linalg::norm2(delta);
        if (nd == 0.0) continue;
        double proj = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            double c = linalg::dot(q.row(idx[r]), delta);
            proj += c * c;
        }
        total += std::sqrt(proj) / nd;
        ++count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<DependenceRow> dependence_experiment(const DependenceParams& params, std::uint64_t master_seed,
                                                 std::size_t workers) {
    if (params.roster.empty() || params.seeds == 0) throw std::invalid_argument("dependence_experiment: empty roster or seeds");
    const std::size_t ns = params.seeds, no = params.roster.size();
    std::vector<DependenceRow> rows(ns * no);
    parallel_for(ns * no, workers, [&](std::size_t task) {
        const std::size_t s = task % ns, k = task / ns;
        Rng prng(derive_seed(master_seed, {kDependence, s}));
        GenSpec spec;
        spec.n = params.n;
        spec.d = params.d;
        spec.lambda_max = params.lambda_max;
        spec.lambda_min = params.lambda_min;
        auto p = problems::generate_least_squares(spec, prng);
        Vector theta0(params.d);
        for (double& v : theta0) v = standard_normal(prng);
        const auto& e = params.roster[k];
        Rng rng(derive_seed(master_seed, {kDependence, s, 1000 + k}));
        RunOptions opt;
        opt.mode = params.mode;
        opt.snapshot_stride = 1;
        opt.theta0 = theta0;
        auto trace = run_trajectory(p, e.algo, e.resolve(p), params.steps, rng, opt);
        rows[k * ns + s] = {e.label, s, dependence_ratio(trace, p.q, p.lambda, params.k)};
    });
    return rows;
}

}  // namespace adasgd::experiments
