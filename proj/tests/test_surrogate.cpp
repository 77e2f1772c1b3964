#include "siss/surrogate.hpp"

#include <doctest.h>

#include <random>

using namespace siss;

namespace {

GridSpec grid(const Vec& lo, const Vec& hi, const Vec& steps)
{
    GridSpec g;
    g.region = HyperBox(lo, hi);
    g.steps = steps;
    return g;
}

Vec v2(double a, double b)
{
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("unit square with half steps has nine points")
{
    const auto pts = make_grid(grid(v2(0, 0), v2(1, 1), v2(0.5, 0.5)));
    REQUIRE(pts.size() == 9);
    CHECK(pts.front() == v2(0, 0));
    CHECK(pts.back() == v2(1, 1));
    CHECK(pts[1] == v2(0.5, 0));
}

TEST_CASE("degenerate dimension holds a single coordinate")
{
    const GridSpec g = grid(v2(0, -1), v2(0, 1), v2(0.1, 0.5));
    const auto pts = make_grid(g);
    CHECK(pts.size() == 5);
    for (const Vec& p : pts)
        CHECK(p[0] == 0.0);
    CHECK(g.step_norm() == doctest::Approx(0.5));
}

TEST_CASE("grid covers the region within half the step norm")
{
    const GridSpec g = grid(v2(-1, -1), v2(1, 1), v2(0.4, 0.4));
    const auto pts = make_grid(g);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const Vec x = v2(u(rng), u(rng));
        double best = 1e300;
        for (const Vec& p : pts)
            best = std::min(best, (p - x).norm());
        worst = std::max(worst, best);
    }
    CHECK(worst <= 0.5 * g.step_norm() + 1e-12);
    CHECK(0.5 * g.step_norm() == doctest::Approx(0.2828).epsilon(1e-3));
}

TEST_CASE("grid validation and caps")
{
    CHECK_THROWS_AS(make_grid(grid(v2(0, 0), v2(1, 1), v2(0, 0.5))), ConfigError);
    CHECK_THROWS_AS(make_grid(grid(v2(0, 0), v2(1, 1), v2(2, 0.5))), ConfigError);
    GridSpec big = grid(v2(0, 0), v2(1, 1), v2(1e-4, 1e-4));
    CHECK_THROWS_AS(make_grid(big), ResourceError);
}

TEST_CASE("anchored surrogate vanishes at the origin")
{
    const MlpNetwork phi = MlpNetwork::random({2, 6, 1}, 3);
    Mat a(1, 2);
    a << 0.5, 0.1;
    const SurrogateNet net(a, Vec::Zero(1), phi, true);
    CHECK(net.predict(Vec::Zero(2)).norm() == 0.0);
    const Vec x = v2(0.3, -0.7);
    CHECK(net.predict(x)[0] == doctest::Approx(a.row(0).dot(x) + phi.forward(x)[0] - phi.forward(Vec::Zero(2))[0]));

    Vec up = Vec::Constant(1, 1.0);
    const Vec g = net.vjp(x, up);
    const double h = 1e-6;
    for (int d = 0; d < 2; ++d) {
        Vec p = x, m = x;
        p[d] += h;
        m[d] -= h;
        CHECK(g[d] == doctest::Approx((net.predict(p)[0] - net.predict(m)[0]) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("fitting an exactly linear map reaches tiny error")
{
    const GridSpec g = grid(v2(-1, -1), v2(1, 1), v2(0.05, 0.05));
    const StepFunction truth = [](const Vec& z) { return Vec::Constant(1, 0.5 * z[0] + z[1]); };
    FitConfig cfg;
    cfg.hidden = {8};
    cfg.epochs = 5;
    cfg.seed = 4;
    const SurrogateModel m = fit_dynamics(truth, g, cfg, 1.2);
    CHECK(m.epsilon_hat < 1e-3);
    CHECK(m.lipschitz_true == 1.2);
    CHECK(m.lipschitz_surrogate >= std::sqrt(1.25) - 1e-6);
}

TEST_CASE("stored epsilon-hat is recomputable after serialization")
{
    const GridSpec g = grid(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), Vec::Constant(1, 0.01));
    const StepFunction truth = [](const Vec& z) { return Vec::Constant(1, std::sin(2.0 * z[0])); };
    FitConfig cfg;
    cfg.hidden = {16};
    cfg.epochs = 10;
    cfg.seed = 2;
    const SurrogateModel m = fit_dynamics(truth, g, cfg, 2.0);
    const SurrogateModel back = SurrogateModel::from_json(m.to_json());
    const double again = scan_max_residual(back.grid, truth, [&](const Vec& z) { return back.predict(z); });
    CHECK(again == m.epsilon_hat);
}

TEST_CASE("constant target: validation error history does not increase")
{
    const GridSpec g = grid(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), Vec::Constant(1, 0.02));
    const StepFunction truth = [](const Vec&) { return Vec::Constant(1, 0.3); };
    FitConfig cfg;
    cfg.hidden = {8};
    cfg.epochs = 15;
    cfg.anchored = false;
    std::vector<double> history;
    const SurrogateModel m = fit_dynamics(truth, g, cfg, 0.0, &history);
    REQUIRE(history.size() == 15);
    for (std::size_t k = 1; k < history.size(); ++k)
        CHECK(history[k] <= history[k - 1]);
    CHECK(m.epsilon_hat < 1e-9);
}

TEST_CASE("non-finite truth is a data error")
{
    const GridSpec g = grid(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), Vec::Constant(1, 0.5));
    const StepFunction truth = [](const Vec& z) { return Vec::Constant(1, z[0] > 0.9 ? NAN : 0.0); };
    CHECK_THROWS_AS(fit_dynamics(truth, g, FitConfig{}, 1.0), DataError);
}

TEST_CASE("robust epsilon arithmetic")
{
    CHECK(robust_epsilon(0.01, 2.0, 2.5, 0.1, false) == doctest::Approx(0.235));
    CHECK(robust_epsilon(0.01, 2.0, 2.5, 0.1, true, 1.0) == doctest::Approx(0.46));
    CHECK(robust_epsilon(0.01, 2.0, 2.5, 0.0, false) == doctest::Approx(0.01));
    CHECK_THROWS_AS(robust_epsilon(0.01, -1.0, 2.5, 0.1, false), ConfigError);
    CHECK_THROWS(robust_epsilon(0.01, 2.0, 2.5, 0.1, true));
    // Monotone in every argument.
    CHECK(robust_epsilon(0.02, 2.0, 2.5, 0.1, true, 1.0) > robust_epsilon(0.01, 2.0, 2.5, 0.1, true, 1.0));
    CHECK(robust_epsilon(0.01, 2.0, 2.5, 0.1, true, 2.0) > robust_epsilon(0.01, 2.0, 2.5, 0.1, true, 1.0));
}

TEST_CASE("robust delta and its floor")
{
    CHECK(robust_delta(0.2, 3.0, 0.0).delta == doctest::Approx(0.6));
    CHECK(robust_delta(0.2, 3.0, 0.1).delta == doctest::Approx(0.66));
    const RobustMargin f = robust_delta(0.0, 3.0, 0.05);
    CHECK(f.delta == 1e-6);
    CHECK(f.floored);
    const RobustMargin back = RobustMargin::from_json(robust_delta(0.2, 3.0, 0.1).to_json());
    CHECK(back.delta == doctest::Approx(0.66));
    CHECK(back.delta >= back.lipschitz_v * back.epsilon);
}
