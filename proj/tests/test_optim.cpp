#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adasgd/optim.hpp"

using namespace adasgd;
using namespace adasgd::optim;
using linalg::max_abs_diff;

namespace {

OptimizerConfig config(double eta, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    OptimizerConfig c;
    c.eta = eta;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.epsilon = eps;
    return c;
}

std::vector<Vector> run(Algo algo, const OptimizerConfig& c, Vector theta, const std::vector<Vector>& grads) {
    auto s = make_state(algo, theta.size());
    std::vector<Vector> out{theta};
    for (const auto& g : grads) {
        theta = step(s, c, theta, g);
        out.push_back(theta);
    }
    return out;
}

std::vector<Vector> random_stream(std::size_t steps, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vector> gs(steps, Vector(d));
    for (auto& g : gs)
        for (double& v : g) v = standard_normal(rng);
    return gs;
}

double max_rel_traj_diff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    double worst = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t)
        for (std::size_t j = 0; j < a[t].size(); ++j)
            worst = std::max(worst, std::abs(a[t][j] - b[t][j]) / std::max(1e-300, std::abs(b[t][j])));
    return worst;
}

}  // namespace

TEST_CASE("sgd: zero gradient keeps theta") {
    auto s = make_state(Algo::sgd, 2);
    CHECK(sgd_step(s, config(0.1), Vector{1, 2}, Vector{0, 0}) == Vector{1, 2});
    CHECK(s.t == 1);
}

TEST_CASE("sgd: two momentum steps") {
    auto traj = run(Algo::sgd, config(0.1), Vector{1, 1}, {{2, -2}, {1, 0}});
    CHECK(traj[2][0] == doctest::Approx(0.52).epsilon(1e-14));
    CHECK(traj[2][1] == doctest::Approx(1.38).epsilon(1e-14));
    auto s = make_state(Algo::sgd, 2);
    sgd_step(s, config(0.1), Vector{1, 1}, Vector{2, -2});
    sgd_step(s, config(0.1), Vector{0.8, 1.2}, Vector{1, 0});
    CHECK(s.m[0] == doctest::Approx(2.8).epsilon(1e-15));
    CHECK(s.m[1] == doctest::Approx(-1.8).epsilon(1e-15));
}

TEST_CASE("sgd: beta1 = 0 is plain gradient descent") {
    auto s = make_state(Algo::sgd, 3);
    Vector th{1, -2, 3}, g{0.5, 0.25, -1};
    Vector out = sgd_step(s, config(0.2, 0.0), th, g);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out[j] == th[j] - 0.2 * g[j]);
}

TEST_CASE("adam: first step is sign descent") {
    auto s = make_state(Algo::adam, 2);
    Vector out = adam_step(s, config(0.1), Vector{0, 0}, Vector{3, -4});
    // ε sits next to the uncorrected √v, so the step is off by about η·ε/(√(1−β₂)|g|)
    const double slack = 1e-8 / std::sqrt(1 - 0.999);
    CHECK(std::abs(out[0] + 0.1) < 0.1 * slack / 3);
    CHECK(std::abs(out[1] - 0.1) < 0.1 * slack / 4);
    Rng rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        Vector g(5);
        for (double& v : g) v = standard_normal(rng) * 100;
        auto st = make_state(Algo::adam, 5);
        Vector o = adam_step(st, config(0.3), Vector(5, 0.0), g);
        for (std::size_t j = 0; j < 5; ++j) {
            double want = g[j] > 0 ? -0.3 : 0.3;
            CHECK(std::abs(o[j] - want) <= slack / std::abs(g[j]) * 0.3 + 1e-15);
        }
    }
}

TEST_CASE("adam: three unit steps follow the scalar recurrence") {
    const double eta = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto traj = run(Algo::adam, config(eta), Vector{0}, {{1}, {1}, {1}});
    double m = 0, v = 0, th = 0;
    for (int t = 1; t <= 3; ++t) {
        m = b1 * m + (1 - b1);
        v = b2 * v + (1 - b2);
        th -= eta * m / (std::sqrt(v) + eps) * std::sqrt(1 - std::pow(b2, t)) / (1 - std::pow(b1, t));
        CHECK(std::abs(traj[t][0] - th) < 1e-12);
    }
}

TEST_CASE("amsgrad: constant stream coincides with adam") {
    std::vector<Vector> gs(20, Vector{0.7, -2.0});
    auto a = run(Algo::adam, config(0.05), Vector{1, 1}, gs);
    auto b = run(Algo::amsgrad, config(0.05), Vector{1, 1}, gs);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(max_abs_diff(a[t], b[t]) < 1e-12);
}

TEST_CASE("amsgrad: second moment is held after a large gradient") {
    auto c = config(0.1, 0.0);
    auto s = make_state(Algo::amsgrad, 1);
    Vector th = amsgrad_step(s, c, Vector{0}, Vector{10});
    const double held = s.v_hat[0];
    CHECK(held == doctest::Approx(100.0).epsilon(1e-12));
    amsgrad_step(s, c, th, Vector{0.1});
    CHECK(s.v_hat[0] == held);
    // denominator at t=2 reflects the 10-scale gradient
    const double b2t = 1 - 0.999 * 0.999;
    double want = 0.1 * std::sqrt(b2t) / (std::sqrt(held * b2t) + 1e-8);
    CHECK(s.rates[0] == doctest::Approx(want).epsilon(1e-12));
    auto s2 = make_state(Algo::amsgrad, 1);
    Vector o = amsgrad_step(s2, config(0.1), Vector{0}, Vector{-5});
    CHECK(std::abs(o[0] - 0.1) < 1e-8);
}

TEST_CASE("adasgd: first step") {
    auto s = make_state(Algo::adasgd, 2);
    Vector out = adasgd_step(s, config(0.1), Vector{0, 0}, Vector{3, -4});
    CHECK(std::abs(out[0] + 0.084853) < 1e-6);
    CHECK(std::abs(out[1] - 0.113137) < 1e-6);
    CHECK(std::abs(out[0] + 0.1 * std::sqrt(2.0) * 3 / 5) < 1e-9);
    CHECK(std::abs(out[1] - 0.1 * std::sqrt(2.0) * 4 / 5) < 1e-9);
}

TEST_CASE("adasgd and adam agree in magnitude on the first one-dimensional step") {
    for (double g : {0.003, 1.0, -7.5, 1e4}) {
        auto a = make_state(Algo::adam, 1), b = make_state(Algo::adasgd, 1);
        Vector sa = adam_step(a, config(0.2), Vector{0}, Vector{g});
        Vector sb = adasgd_step(b, config(0.2), Vector{0}, Vector{g});
        CHECK(std::abs(std::abs(sa[0]) - std::abs(sb[0])) < 1.01 * 0.2 * 1e-8 / (std::sqrt(1 - 0.999) * std::abs(g)));
    }
}

TEST_CASE("adasgd: three steps follow the scalar recurrence") {
    const double eta = 0.05, b1 = 0.9, b2 = 0.999;
    std::vector<Vector> gs{{1, 2}, {-0.5, 0.3}, {4, -1}};
    auto traj = run(Algo::adasgd, config(eta), Vector{0.2, -0.1}, gs);
    Vector m{0, 0}, th{0.2, -0.1};
    double v = 0;
    for (int t = 1; t <= 3; ++t) {
        const auto& g = gs[t - 1];
        v = b2 * v + (1 - b2) * (g[0] * g[0] + g[1] * g[1]);
        double eta_t = eta * std::sqrt(1 - std::pow(b2, t)) / std::sqrt(v / 2);
        for (int j = 0; j < 2; ++j) {
            m[j] = b1 * m[j] + g[j];
            th[j] -= eta_t * m[j];
        }
        CHECK(max_abs_diff(traj[t], th) < 1e-12);
    }
}

TEST_CASE("adasgdmax: first step equals adasgd exactly") {
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        Vector g(4), th(4);
        for (double& v : g) v = standard_normal(rng);
        for (double& v : th) v = standard_normal(rng);
        auto a = make_state(Algo::adasgd, 4), b = make_state(Algo::adasgdmax, 4);
        CHECK(adasgd_step(a, config(0.3), th, g) == adasgdmax_step(b, config(0.3), th, g));
        CHECK(b.v_hat_scalar == doctest::Approx(linalg::dot(g, g)).epsilon(1e-12));
    }
}

TEST_CASE("adasgdmax: max holds after a shrinking gradient") {
    auto c = config(0.1, 0.0);
    auto s = make_state(Algo::adasgdmax, 1);
    Vector th = adasgdmax_step(s, c, Vector{0}, Vector{10});
    double eta1 = s.last_eta_t;
    adasgdmax_step(s, c, th, Vector{0.1});
    CHECK(s.last_eta_t == eta1);
}

TEST_CASE("adasgdmax: regret decay with unit gradients gives eta/sqrt(t)") {
    auto c = config(0.4, 0.0);
    c.regret_decay = true;
    auto s = make_state(Algo::adasgdmax, 1);
    Vector th{0};
    for (int t = 1; t <= 50; ++t) {
        th = adasgdmax_step(s, c, th, Vector{1});
        CHECK(std::abs(s.last_eta_t - 0.4 / std::sqrt(t)) < 1e-12);
    }
}

TEST_CASE("adasgdmax: v_hat non-decreasing and eta_t non-increasing") {
    auto c = config(0.1, 0.0);
    auto s = make_state(Algo::adasgdmax, 6);
    Vector th(6, 0.0);
    double prev_v = 0.0, prev_eta = std::numeric_limits<double>::infinity();
    for (const auto& g : random_stream(500, 6, 3)) {
        th = adasgdmax_step(s, c, th, g);
        CHECK(s.v_hat_scalar >= prev_v);
        CHECK(s.last_eta_t <= prev_eta);
        prev_v = s.v_hat_scalar;
        prev_eta = s.last_eta_t;
    }
}

TEST_CASE("amsgrad: v_hat non-decreasing per coordinate") {
    auto s = make_state(Algo::amsgrad, 4);
    Vector th(4, 0.0), prev(4, 0.0);
    for (const auto& g : random_stream(300, 4, 4)) {
        th = amsgrad_step(s, config(0.01), th, g);
        for (std::size_t j = 0; j < 4; ++j) CHECK(s.v_hat[j] >= prev[j]);
        prev = s.v_hat;
    }
}

TEST_CASE("adaptive per-coordinate rates are strictly positive") {
    for (Algo a : {Algo::adam, Algo::amsgrad, Algo::adabound}) {
        auto c = config(0.01);
        if (a == Algo::adabound) c.adabound = AdaBoundParams{};
        auto s = make_state(a, 5);
        Vector th(5, 0.0);
        for (const auto& g : random_stream(200, 5, 5)) {
            th = step(s, c, th, g);
            for (double r : s.rates) CHECK(r > 0.0);
        }
    }
}

TEST_CASE("adabound bounds") {
    AdaBoundParams p{0.1, 1e-3};
    auto [lo, hi] = adabound_bounds(p, 1);
    CHECK(lo == doctest::Approx(0.1 * (1 - 1 / 1.001)).epsilon(1e-12));
    CHECK(hi == doctest::Approx(100.1).epsilon(1e-12));
    CHECK(lo == doctest::Approx(9.99e-5).epsilon(1e-3));
    auto [lo9, hi9] = adabound_bounds(p, 1e9);
    CHECK(std::abs(lo9 - 0.1) < 1e-5 * 0.1);
    CHECK(std::abs(hi9 - 0.1) < 1e-5 * 0.1);
    CHECK_THROWS_AS(adabound_bounds({0.1, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("adabound: late steps use the sgd rate") {
    auto c = config(0.001);
    c.adabound = AdaBoundParams{0.1, 1e-3};
    auto s = make_state(Algo::adabound, 2);
    s.t = 999999999;
    s.m = {0.2, -0.3};
    s.v = {1e-4, 4.0};
    Vector th{1, 1};
    Vector out = adabound_step(s, c, th, Vector{0.5, 0.5});
    const double c1 = 1 - std::pow(0.9, 1e9);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(s.rates[j] - 0.1 / c1) < 1e-5 * 0.1);
        CHECK(std::abs(out[j] - (th[j] - 0.1 * s.m[j])) < 1e-5);
    }
}

TEST_CASE("adabound: unclipped regime is adam") {
    auto ca = config(0.1);
    auto cb = ca;
    cb.adabound = AdaBoundParams{0.1, 1e-3};
    std::vector<Vector> gs{{1.0, -0.5}, {0.8, -0.6}, {1.2, -0.4}};
    auto a = run(Algo::adam, ca, Vector{0, 0}, gs);
    auto b = run(Algo::adabound, cb, Vector{0, 0}, gs);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == b[t]);
    auto s = make_state(Algo::adabound, 1);
    CHECK_THROWS_AS(adabound_step(s, ca, Vector{0}, Vector{1}), std::invalid_argument);
    auto bad = cb;
    bad.adabound->gamma = 0.0;
    CHECK_THROWS_AS(adabound_step(s, bad, Vector{0}, Vector{1}), std::invalid_argument);
}

TEST_CASE("zero-gradient guard") {
    for (Algo a : {Algo::adasgd, Algo::adasgdmax}) {
        auto s = make_state(a, 3);
        Vector out = step(s, config(0.1), Vector{1, 2, 3}, Vector{0, 0, 0});
        CHECK(out == Vector{1, 2, 3});
        CHECK(s.t == 1);
        CHECK(std::isnan(s.last_eta_t));
        CHECK_FALSE(s.diverged);
    }
}

TEST_CASE("non-finite gradients freeze the state") {
    for (Algo a : {Algo::sgd, Algo::adam, Algo::amsgrad, Algo::adasgd, Algo::adasgdmax, Algo::adabound}) {
        auto c = config(0.1);
        if (a == Algo::adabound) c.adabound = AdaBoundParams{};
        auto s = make_state(a, 2);
        Vector th = step(s, c, Vector{1, 1}, Vector{0.5, 0.5});
        Vector frozen = step(s, c, th, Vector{NAN, 0});
        CHECK(s.diverged);
        CHECK(frozen == th);
        const auto t = s.t;
        step(s, c, th, Vector{1, 1});
        CHECK(s.t == t);
    }
    auto s = make_state(Algo::sgd, 1);
    step(s, config(1e308, 0.0), Vector{1e308}, Vector{-10});
    CHECK(s.diverged);
}

TEST_CASE("scale coupling") {
    const auto eps0 = config(0.01, 0.9, 0.999, 0.0);
    auto base = random_stream(100, 2, 6);
    auto uniform = base, aniso = base;
    for (auto& g : uniform)
        for (double& v : g) v *= 1000.0;
    for (auto& g : aniso) {
        g[0] *= 1000.0;
        g[1] *= 0.01;
    }
    Vector th0{0.3, -0.7};
    auto adam_base = run(Algo::adam, eps0, th0, base);
    CHECK(max_rel_traj_diff(run(Algo::adam, eps0, th0, uniform), adam_base) < 1e-6);
    CHECK(max_rel_traj_diff(run(Algo::adam, eps0, th0, aniso), adam_base) < 1e-6);
    auto ada_base = run(Algo::adasgd, eps0, th0, base);
    CHECK(max_rel_traj_diff(run(Algo::adasgd, eps0, th0, uniform), ada_base) < 1e-6);
    CHECK(max_rel_traj_diff(run(Algo::adasgd, eps0, th0, aniso), ada_base) > 1e-2);
}

TEST_CASE("constrained_step") {
    auto c = config(1.0, 0.0);
    auto s = make_state(Algo::sgd, 1);
    CHECK(constrained_step(s, c, Vector{0.9}, Vector{-0.6}, Vector{-1}, Vector{1}) == Vector{1.0});
    auto s2 = make_state(Algo::sgd, 2);
    Vector inner = constrained_step(s2, config(0.1, 0.0), Vector{0, 0}, Vector{1, -1}, Vector{-1, -1}, Vector{1, 1});
    CHECK(inner[0] == -0.1);
    CHECK(inner[1] == 0.1);
    auto s3 = make_state(Algo::adasgdmax, 3);
    auto cr = config(1.0, 0.0);
    cr.regret_decay = true;
    Vector th{0, 0, 0};
    for (const auto& g : random_stream(200, 3, 7)) {
        th = constrained_step(s3, cr, th, g, Vector(3, -0.5), Vector(3, 0.5));
        for (double v : th) CHECK(std::abs(v) <= 0.5 + 1e-9);
    }
}

TEST_CASE("determinism: identical inputs give identical trajectories") {
    auto gs = random_stream(200, 3, 8);
    for (Algo a : {Algo::sgd, Algo::adam, Algo::amsgrad, Algo::adasgd, Algo::adasgdmax}) {
        auto x = run(a, config(0.01), Vector{1, 2, 3}, gs);
        auto y = run(a, config(0.01), Vector{1, 2, 3}, gs);
        CHECK(x == y);
    }
}

TEST_CASE("state checks") {
    auto s = make_state(Algo::adam, 2);
    CHECK_THROWS_AS(sgd_step(s, config(0.1), Vector{0, 0}, Vector{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(adam_step(s, config(0.1), Vector{0, 0}, Vector{1}), std::invalid_argument);
    CHECK(s.t == 0);
    CHECK(s.m == Vector{0, 0});
    CHECK(s.v == Vector{0, 0});
}

TEST_CASE("config validation and names") {
    CHECK_THROWS_AS(config(0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(config(0.1, 1.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(config(0.1, 0.9, -0.1).validate(), std::invalid_argument);
    CHECK_NOTHROW(config(0.1, 0.9, 0.999, 0.0).validate());
    CHECK_THROWS_AS(config(0.1, 0.9, 0.999, -1).validate(), std::invalid_argument);
    for (Algo a : {Algo::sgd, Algo::adam, Algo::amsgrad, Algo::adasgd, Algo::adasgdmax, Algo::adabound})
        CHECK(algo_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(algo_from_string("swats"), std::invalid_argument);
}

TEST_CASE("config JSON round trip") {
    auto c = config(0.02, 0.5, 0.99, 1e-6);
    c.regret_decay = true;
    c.adabound = AdaBoundParams{0.2, 1e-2};
    nlohmann::json j = c;
    CHECK(j.at("eta") == 0.02);
    CHECK(j.at("eta_sgd") == 0.2);
    CHECK(j.at("gamma") == 1e-2);
    CHECK(j.get<OptimizerConfig>() == c);
    auto plain = config(0.1);
    CHECK(nlohmann::json(plain).get<OptimizerConfig>() == plain);
    CHECK_THROWS_AS(nlohmann::json({{"eta", 0.1}, {"lr", 1}}).get<OptimizerConfig>(), std::invalid_argument);
    CHECK_THROWS_AS(nlohmann::json({{"eta", -0.1}}).get<OptimizerConfig>(), std::invalid_argument);
}
