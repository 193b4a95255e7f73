#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adasgd/linalg.hpp"
#include "adasgd/rng.hpp"

namespace adasgd::problems {

using linalg::Matrix;
using linalg::Vector;

/// Eigenvalues below this fraction of λmax are treated as zero.
inline constexpr double kRankCutoff = 1e-10;
/// Smallest nonzero eigenvalue (relative to λmax) when a zero eigenvalue is requested.
inline constexpr double kZeroSpectrumFloor = 1e-12;

struct GenSpec {
    std::size_t n = 300;
    std::size_t d = 100;
    double lambda_max = 1.0;
    double lambda_min = 1.0;
    double y_std = std::sqrt(30.0);
    std::optional<double> angle_2d;  // degrees; makes Q the rotation by this angle (d = 2 only)
    std::size_t zero_tail = 0;       // trailing eigenvalues forced to exactly zero

    void validate() const;
};

/// Eigenvalues of XᵀX requested by a spec, descending.
Vector spectrum(const GenSpec& spec);

struct QuadraticProblem {
    Matrix x;       // n×d
    Vector y;       // n
    Matrix q;       // d×d, rows are eigenvectors of XᵀX
    Vector lambda;  // descending
    std::optional<Vector> theta_star;
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    double cond = std::numeric_limits<double>::infinity();
    Matrix xtx;  // cached XᵀX
    Vector xty;  // cached Xᵀy

    std::size_t n() const { return x.rows(); }
    std::size_t d() const { return x.cols(); }
};

QuadraticProblem generate_least_squares(const GenSpec& spec, Rng& rng);

/// 2-D problem with Λ = diag(cond·lambda_min, lambda_min) whose leading eigenvector sits at angle_deg.
QuadraticProblem make_rotated_2d(double cond, double lambda_min, double angle_deg, Rng& rng, std::size_t n = 300,
                                 double y_std = std::sqrt(30.0));

/// Problem built from raw data; the spectral factors come from an eigensolve of XᵀX.
QuadraticProblem make_problem(Matrix x, Vector y);

/// {spec, seed} record from which a problem is regenerated bit-for-bit.
struct ProblemRecipe {
    GenSpec spec;
    std::uint64_t seed = 0;
};
QuadraticProblem regenerate(const ProblemRecipe& recipe);

double full_loss(const QuadraticProblem& p, std::span<const double> theta);
/// L(θ) − L(θ*) evaluated as ½ Σ λⱼ (Q(θ−θ*))ⱼ²; falls back to the raw loss when θ* is absent.
double regret_in_loss(const QuadraticProblem& p, std::span<const double> theta);
Vector full_gradient(const QuadraticProblem& p, std::span<const double> theta);
/// xᵢ(xᵢᵀθ − yᵢ) for one row.
Vector sample_gradient(const QuadraticProblem& p, std::span<const double> theta, std::size_t i);
/// n·xᵢ(xᵢᵀθ − yᵢ) for a forced row.
Vector stochastic_gradient_at(const QuadraticProblem& p, std::span<const double> theta, std::size_t i);
/// n·xᵢ(xᵢᵀθ − yᵢ) with i drawn uniformly.
Vector stochastic_gradient(const QuadraticProblem& p, std::span<const double> theta, Rng& rng);

Vector min_norm_solution(const QuadraticProblem& p);
/// Rows spanning the null space of X (eigenvectors of XᵀX below the rank cutoff).
Matrix null_space_basis(const QuadraticProblem& p);
Vector ridge_solution(const QuadraticProblem& p, double alpha);

struct OracleEval {
    double loss = 0.0;
    Vector grad;
    Matrix hess;
};

double logistic_weight(double v);
double exponential_weight(double v);
OracleEval logistic_oracle(const Matrix& x, std::span<const double> labels, std::span<const double> theta);
OracleEval exponential_oracle(const Matrix& x, std::span<const double> labels, std::span<const double> theta);

enum class OnlineKind { linear_adversarial, quadratic_tracking };

struct OnlineLoss {
    OnlineKind kind = OnlineKind::linear_adversarial;
    Vector a;            // g_t for linear, c_t for quadratic
    double scale = 1.0;  // curvature of the quadratic

    double value(std::span<const double> theta) const;
    Vector gradient(std::span<const double> theta) const;
};

struct OnlineProblem {
    OnlineKind kind = OnlineKind::linear_adversarial;
    std::size_t dim = 0;
    Vector box_lo;
    Vector box_hi;
    double diameter_inf = 0.0;
    double grad_bound_inf = 0.0;
    std::vector<OnlineLoss> losses;

    std::size_t horizon() const { return losses.size(); }
};

OnlineProblem make_online_problem(OnlineKind kind, std::size_t t_max, std::size_t d, double box_halfwidth,
                                  double g_bound, Rng& rng);
/// First t rounds of a stream.
OnlineProblem truncated(const OnlineProblem& p, std::size_t t);
/// Best fixed point in the box for the whole stream.
Vector comparator(const OnlineProblem& p);
double regret(const OnlineProblem& p, const std::vector<Vector>& played);

const char* to_string(OnlineKind kind);
OnlineKind online_kind_from_string(const std::string& s);

void to_json(nlohmann::json& j, const GenSpec& s);
void from_json(const nlohmann::json& j, GenSpec& s);
void to_json(nlohmann::json& j, const ProblemRecipe& r);
void from_json(const nlohmann::json& j, ProblemRecipe& r);

}  // namespace adasgd::problems
