#include "adasgd/problems.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace adasgd::problems {

using linalg::dot;

void GenSpec::validate() const {
    if (d == 0 || n == 0) throw std::invalid_argument("GenSpec: n and d must be positive");
    if (!(lambda_max > 0.0)) throw std::invalid_argument("GenSpec: lambda_max must be positive");
    if (!(lambda_min >= 0.0) || lambda_min > lambda_max) throw std::invalid_argument("GenSpec: need 0 <= lambda_min <= lambda_max");
    if (!(y_std >= 0.0)) throw std::invalid_argument("GenSpec: y_std must be non-negative");
    if (angle_2d && d != 2) throw std::invalid_argument("GenSpec: angle_2d requires d = 2");
    if (zero_tail >= d) throw std::invalid_argument("GenSpec: zero_tail must leave a nonzero eigenvalue");
    if (n < d && lambda_min > 0.0) throw std::invalid_argument("GenSpec: n < d requires lambda_min = 0");
}

namespace {

Vector log_spaced(double hi, double lo, std::size_t count) {
    Vector out(count);
    if (count == 1) {
        out[0] = hi;
        return out;
    }
    const double a = std::log(hi), b = std::log(lo);
    for (std::size_t i = 0; i < count; ++i) {
        double f = static_cast<double>(i) / static_cast<double>(count - 1);
        out[i] = std::exp(a + f * (b - a));
    }
    out.front() = hi;
    out.back() = lo;
    return out;
}

Matrix rotation_rows(double angle_deg) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    return Matrix(2, 2, {c, s, -s, c});
}

// θ* = Qᵀ Λ⁻¹ Q Xᵀy
Vector solve_spectral(const Matrix& q, const Vector& lambda, const Vector& xty) {
    Vector z = linalg::matvec(q, xty);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] /= lambda[j];
    return linalg::tmatvec(q, z);
}

void finish(QuadraticProblem& p) {
    p.xtx = linalg::gram(p.x);
    p.xty = linalg::tmatvec(p.x, p.y);
    p.lambda_max = p.lambda.front();
    const double cutoff = kRankCutoff * p.lambda_max;
    const double last = p.lambda.back();
    p.lambda_min = last > cutoff ? last : 0.0;
    if (p.lambda_min > 0.0) {
        p.cond = p.lambda_max / p.lambda_min;
        p.theta_star = solve_spectral(p.q, p.lambda, p.xty);
    } else {
        p.cond = std::numeric_limits<double>::infinity();
        p.theta_star.reset();
    }
}

}  // namespace

Vector spectrum(const GenSpec& spec) {
    spec.validate();
    const std::size_t d = spec.d;
    std::size_t zeros = spec.zero_tail;
    if (spec.n < d) zeros = std::max(zeros, d - spec.n);
    if (spec.lambda_min == 0.0 && zeros == 0) zeros = 1;
    const std::size_t nonzero = d - zeros;
    const double lo = spec.lambda_min > 0.0 ? spec.lambda_min : kZeroSpectrumFloor * spec.lambda_max;
    Vector out = log_spaced(spec.lambda_max, lo, nonzero);
    out.resize(d, 0.0);
    return out;
}

QuadraticProblem generate_least_squares(const GenSpec& spec, Rng& rng) {
    Vector lambda = spectrum(spec);
    const std::size_t n = spec.n, d = spec.d, k = std::min(n, d);

    QuadraticProblem p;
    p.q = spec.angle_2d ? rotation_rows(*spec.angle_2d) : linalg::haar_orthogonal(d, rng);
    Matrix v = linalg::haar_orthonormal_columns(n, k, rng);

    // X = V Σ Q with only the first k singular directions nonzero
    p.x = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = p.x.row(i);
        for (std::size_t r = 0; r < k; ++r) {
            double coef = v(i, r) * std::sqrt(lambda[r]);
            if (coef == 0.0) continue;
            auto qr = p.q.row(r);
            for (std::size_t j = 0; j < d; ++j) xi[j] += coef * qr[j];
        }
    }
    p.y.resize(n);
    for (double& yi : p.y) yi = spec.y_std * standard_normal(rng);
    p.lambda = std::move(lambda);
    finish(p);
    return p;
}

QuadraticProblem make_rotated_2d(double cond, double lambda_min, double angle_deg, Rng& rng, std::size_t n,
                                 double y_std) {
    if (!(cond >= 1.0)) throw std::invalid_argument("make_rotated_2d: cond must be >= 1");
    if (!(angle_deg >= 0.0 && angle_deg <= 90.0)) throw std::invalid_argument("make_rotated_2d: angle must lie in [0, 90]");
    GenSpec spec;
    spec.n = n;
    spec.d = 2;
    spec.lambda_max = cond * lambda_min;
    spec.lambda_min = lambda_min;
    spec.y_std = y_std;
    spec.angle_2d = angle_deg;
    return generate_least_squares(spec, rng);
}

QuadraticProblem make_problem(Matrix x, Vector y) {
    if (x.rows() != y.size()) throw std::invalid_argument("make_problem: row count does not match y");
    QuadraticProblem p;
    p.x = std::move(x);
    p.y = std::move(y);
    auto eig = linalg::jacobi_eigh(linalg::gram(p.x));
    p.q = std::move(eig.q);
    p.lambda = std::move(eig.lambda);
    finish(p);
    return p;
}

QuadraticProblem regenerate(const ProblemRecipe& recipe) {
    Rng rng(recipe.seed);
    return generate_least_squares(recipe.spec, rng);
}

double full_loss(const QuadraticProblem& p, std::span<const double> theta) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) {
        double r = dot(p.x.row(i), theta) - p.y[i];
        s += r * r;
    }
    return 0.5 * s;
}

double regret_in_loss(const QuadraticProblem& p, std::span<const double> theta) {
    if (!p.theta_star) return full_loss(p, theta);
    Vector e = linalg::subtract(theta, *p.theta_star);
    Vector z = linalg::matvec(p.q, e);
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) s += p.lambda[j] * z[j] * z[j];
    return 0.5 * s;
}

Vector full_gradient(const QuadraticProblem& p, std::span<const double> theta) {
    Vector g = linalg::matvec(p.xtx, theta);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= p.xty[j];
    return g;
}

Vector sample_gradient(const QuadraticProblem& p, std::span<const double> theta, std::size_t i) {
    if (i >= p.n()) throw std::out_of_range("sample_gradient: row index out of range");
    auto xi = p.x.row(i);
    double r = dot(xi, theta) - p.y[i];
    Vector g(xi.begin(), xi.end());
    for (double& v : g) v *= r;
    return g;
}

Vector stochastic_gradient_at(const QuadraticProblem& p, std::span<const double> theta, std::size_t i) {
    Vector g = sample_gradient(p, theta, i);
    const double n = static_cast<double>(p.n());
    for (double& v : g) v *= n;
    return g;
}

Vector stochastic_gradient(const QuadraticProblem& p, std::span<const double> theta, Rng& rng) {
    return stochastic_gradient_at(p, theta, uniform_index(rng, p.n()));
}

Vector min_norm_solution(const QuadraticProblem& p) {
    auto eig = linalg::jacobi_eigh(p.xtx);
    const double cutoff = kRankCutoff * std::max(eig.lambda.front(), 0.0);
    Vector z = linalg::matvec(eig.q, p.xty);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = eig.lambda[j] > cutoff ? z[j] / eig.lambda[j] : 0.0;
    return linalg::tmatvec(eig.q, z);
}

Matrix null_space_basis(const QuadraticProblem& p) {
    auto eig = linalg::jacobi_eigh(p.xtx);
    const double cutoff = kRankCutoff * std::max(eig.lambda.front(), 0.0);
    std::vector<double> rows;
    std::size_t count = 0;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        if (eig.lambda[j] > cutoff) continue;
        auto r = eig.q.row(j);
        rows.insert(rows.end(), r.begin(), r.end());
        ++count;
    }
    return Matrix(count, p.d(), std::move(rows));
}

Vector ridge_solution(const QuadraticProblem& p, double alpha) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("ridge_solution: alpha must be >= 0");
    if (!p.theta_star) throw std::invalid_argument("ridge_solution: problem has no unique minimizer");
    if (alpha == 0.0) return *p.theta_star;
    Vector z = linalg::matvec(p.q, *p.theta_star);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] *= p.lambda[j] / (p.lambda[j] + alpha);
    return linalg::tmatvec(p.q, z);
}

double logistic_weight(double v) {
    double e = std::exp(-std::abs(v));
    return e / ((1.0 + e) * (1.0 + e));
}

double exponential_weight(double v) { return std::exp(-v); }

namespace {

void check_labels(const Matrix& x, std::span<const double> labels, std::span<const double> theta) {
    if (labels.size() != x.rows() || theta.size() != x.cols()) throw std::invalid_argument("oracle: shape mismatch");
    for (double l : labels)
        if (l != 1.0 && l != -1.0) throw std::invalid_argument("oracle: labels must be -1 or +1");
}

template <class LossFn, class SlopeFn, class CurvFn>
OracleEval margin_oracle(const Matrix& x, std::span<const double> labels, std::span<const double> theta, LossFn loss,
                         SlopeFn slope, CurvFn curvature) {
    check_labels(x, labels, theta);
    const std::size_t n = x.rows(), d = x.cols();
    OracleEval out{0.0, Vector(d, 0.0), Matrix(d, d)};
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        double v = labels[i] * dot(xi, theta);
        out.loss += loss(v);
        double gs = slope(v) * labels[i];
        double w = curvature(v);
        for (std::size_t a = 0; a < d; ++a) {
            out.grad[a] += gs * xi[a];
            for (std::size_t b = 0; b < d; ++b) out.hess(a, b) += w * xi[a] * xi[b];
        }
    }
    return out;
}

}  // namespace

OracleEval logistic_oracle(const Matrix& x, std::span<const double> labels, std::span<const double> theta) {
    auto loss = [](double v) { return v >= 0.0 ? std::log1p(std::exp(-v)) : -v + std::log1p(std::exp(v)); };
    auto slope = [](double v) { return v >= 0.0 ? -std::exp(-v) / (1.0 + std::exp(-v)) : -1.0 / (1.0 + std::exp(v)); };
    return margin_oracle(x, labels, theta, loss, slope, logistic_weight);
}

OracleEval exponential_oracle(const Matrix& x, std::span<const double> labels, std::span<const double> theta) {
    auto loss = [](double v) { return std::exp(-v); };
    auto slope = [](double v) { return -std::exp(-v); };
    return margin_oracle(x, labels, theta, loss, slope, exponential_weight);
}

double OnlineLoss::value(std::span<const double> theta) const {
    if (kind == OnlineKind::linear_adversarial) return dot(a, theta);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (theta[j] - a[j]) * (theta[j] - a[j]);
    return 0.5 * scale * s;
}

Vector OnlineLoss::gradient(std::span<const double> theta) const {
    if (kind == OnlineKind::linear_adversarial) return a;
    Vector g(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) g[j] = scale * (theta[j] - a[j]);
    return g;
}

OnlineProblem make_online_problem(OnlineKind kind, std::size_t t_max, std::size_t d, double box_halfwidth,
                                  double g_bound, Rng& rng) {
    if (t_max == 0 || d == 0) throw std::invalid_argument("make_online_problem: t_max and d must be positive");
    if (!(box_halfwidth > 0.0) || !(g_bound > 0.0)) throw std::invalid_argument("make_online_problem: bounds must be positive");
    OnlineProblem p;
    p.kind = kind;
    p.dim = d;
    p.box_lo.assign(d, -box_halfwidth);
    p.box_hi.assign(d, box_halfwidth);
    p.diameter_inf = 2.0 * box_halfwidth;
    p.grad_bound_inf = g_bound;
    p.losses.reserve(t_max);
    // |scale·(θⱼ − cⱼ)| ≤ scale·D∞ = G∞ everywhere in the box
    const double scale = g_bound / p.diameter_inf;
    for (std::size_t t = 0; t < t_max; ++t) {
        OnlineLoss f;
        f.kind = kind;
        f.a.resize(d);
        if (kind == OnlineKind::linear_adversarial) {
            for (double& v : f.a) v = uniform(rng, -g_bound, g_bound);
        } else {
            for (double& v : f.a) v = uniform(rng, -box_halfwidth, box_halfwidth);
            f.scale = scale;
        }
        p.losses.push_back(std::move(f));
    }
    return p;
}

OnlineProblem truncated(const OnlineProblem& p, std::size_t t) {
    if (t == 0 || t > p.horizon()) throw std::invalid_argument("truncated: horizon out of range");
    OnlineProblem out = p;
    out.losses.resize(t);
    return out;
}

Vector comparator(const OnlineProblem& p) {
    Vector sum(p.dim, 0.0);
    for (const auto& f : p.losses)
        for (std::size_t j = 0; j < p.dim; ++j) sum[j] += f.a[j];
    Vector best(p.dim);
    if (p.kind == OnlineKind::linear_adversarial) {
        for (std::size_t j = 0; j < p.dim; ++j) best[j] = sum[j] > 0.0 ? p.box_lo[j] : p.box_hi[j];
        return best;
    }
    const double t = static_cast<double>(p.horizon());
    for (std::size_t j = 0; j < p.dim; ++j) best[j] = sum[j] / t;
    return linalg::project_box(best, p.box_lo, p.box_hi);
}

double regret(const OnlineProblem& p, const std::vector<Vector>& played) {
    if (played.size() != p.horizon()) throw std::invalid_argument("regret: played sequence length must equal the horizon");
    const Vector best = comparator(p);
    double r = 0.0;
    for (std::size_t t = 0; t < played.size(); ++t) {
        const Vector& th = played[t];
        if (th.size() != p.dim) throw std::invalid_argument("regret: dimension mismatch");
        for (std::size_t j = 0; j < p.dim; ++j)
            if (th[j] < p.box_lo[j] - 1e-9 || th[j] > p.box_hi[j] + 1e-9)
                throw std::invalid_argument("regret: played point outside the constraint set");
        r += p.losses[t].value(th) - p.losses[t].value(best);
    }
    return r;
}

const char* to_string(OnlineKind kind) {
    return kind == OnlineKind::linear_adversarial ? "linear-adversarial" : "quadratic-tracking";
}

OnlineKind online_kind_from_string(const std::string& s) {
    if (s == "linear-adversarial") return OnlineKind::linear_adversarial;
    if (s == "quadratic-tracking") return OnlineKind::quadratic_tracking;
    throw std::invalid_argument("unknown online problem kind: " + s);
}

void to_json(nlohmann::json& j, const GenSpec& s) {
    j = nlohmann::json{{"n", s.n},
                       {"d", s.d},
                       {"lambda_max", s.lambda_max},
                       {"lambda_min", s.lambda_min},
                       {"y_std", s.y_std},
                       {"zero_tail", s.zero_tail}};
    j["angle_2d"] = s.angle_2d ? nlohmann::json(*s.angle_2d) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, GenSpec& s) {
    s = GenSpec{};
    j.at("n").get_to(s.n);
    j.at("d").get_to(s.d);
    j.at("lambda_max").get_to(s.lambda_max);
    j.at("lambda_min").get_to(s.lambda_min);
    if (j.contains("y_std")) j.at("y_std").get_to(s.y_std);
    if (j.contains("zero_tail")) j.at("zero_tail").get_to(s.zero_tail);
    if (j.contains("angle_2d") && !j.at("angle_2d").is_null()) s.angle_2d = j.at("angle_2d").get<double>();
    s.validate();
}

void to_json(nlohmann::json& j, const ProblemRecipe& r) { j = nlohmann::json{{"spec", r.spec}, {"seed", r.seed}}; }

void from_json(const nlohmann::json& j, ProblemRecipe& r) {
    j.at("spec").get_to(r.spec);
    j.at("seed").get_to(r.seed);
}

}  // namespace adasgd::problems
