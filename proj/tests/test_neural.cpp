#include "siss/neural.hpp"

#include <doctest.h>

#include <random>

using namespace siss;

namespace {

MlpNetwork single(const Mat& w, const Vec& b) { return MlpNetwork({DenseLayer{w, b}}); }

// Independent forward pass written against raw loops.
Vec reference_forward(const MlpNetwork& net, const Vec& x)
{
    std::vector<double> a(x.data(), x.data() + x.size());
    const auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Mat& w = layers[l].weight;
        std::vector<double> out(static_cast<std::size_t>(w.rows()));
        for (int r = 0; r < w.rows(); ++r) {
            double s = layers[l].bias[r];
            for (int c = 0; c < w.cols(); ++c)
                s += w(r, c) * a[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(r)] = (l + 1 < layers.size() && s < 0.0) ? 0.0 : s;
        }
        a = out;
    }
    return Eigen::Map<Vec>(a.data(), static_cast<int>(a.size()));
}

bool near_kink(const MlpNetwork& net, const Vec& x, double margin)
{
    MlpNetwork::Trace t;
    net.forward(x, t);
    for (std::size_t l = 0; l + 1 < t.pre.size(); ++l)
        if (t.pre[l].cwiseAbs().minCoeff() < margin)
            return true;
    return false;
}

Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec v(n);
    for (int k = 0; k < n; ++k)
        v[k] = u(rng);
    return v;
}

}  // namespace

TEST_CASE("identity layer forwards its input")
{
    const MlpNetwork net = single(Mat::Identity(2, 2), Vec::Zero(2));
    Vec x(2);
    x << 3, -2;
    CHECK(net.forward(x) == x);
}

TEST_CASE("hand-evaluated hidden layer")
{
    Mat w1(2, 1), w2(1, 2);
    w1 << 1, -1;
    w2 << 1, 1;
    const MlpNetwork net({DenseLayer{w1, Vec::Zero(2)}, DenseLayer{w2, Vec::Zero(1)}});
    CHECK(net.forward(Vec::Constant(1, 2.0))[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS(net.forward(Vec::Zero(2)), StructuralError);
}

TEST_CASE("forward matches a loop-based oracle")
{
    std::mt19937_64 rng(3);
    const MlpNetwork net = MlpNetwork::random({2, 16, 1}, 11);
    for (int k = 0; k < 100; ++k) {
        const Vec x = random_vec(2, rng, 3.0);
        CHECK(std::abs(net.forward(x)[0] - reference_forward(net, x)[0]) < 1e-12);
    }
}

TEST_CASE("linear net gradient equals the input")
{
    const MlpNetwork net = single(Mat::Constant(1, 3, 0.7), Vec::Zero(1));
    Vec x(3);
    x << 1, -2, 0.5;
    const GradientRecord g = net.backward(x, Vec::Ones(1));
    CHECK((g.weight[0].row(0).transpose() - x).norm() == 0.0);
    CHECK(g.bias[0][0] == 1.0);
    const GradientRecord z = net.backward(x, Vec::Zero(1));
    CHECK(z.flatten().norm() == 0.0);
}

TEST_CASE("backward matches central finite differences")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        MlpNetwork net = MlpNetwork::random({2, 8, 1}, 100 + trial);
        Vec x = random_vec(2, rng);
        while (near_kink(net, x, 1e-3))
            x = random_vec(2, rng);
        const Vec analytic = net.backward(x, Vec::Ones(1)).flatten();
        const Vec p = net.flatten();
        const double h = 1e-5;
        for (int k = 0; k < p.size(); ++k) {
            Vec pp = p, pm = p;
            pp[k] += h;
            pm[k] -= h;
            MlpNetwork a = net, b = net;
            a.unflatten(pp);
            b.unflatten(pm);
            const double fd = (a.forward(x)[0] - b.forward(x)[0]) / (2 * h);
            CHECK(std::abs(fd - analytic[k]) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("input gradient from the trace")
{
    const MlpNetwork net = MlpNetwork::random({3, 6, 2}, 9);
    Vec x(3);
    x << 0.2, -0.4, 0.9;
    MlpNetwork::Trace t;
    net.forward(x, t);
    Vec up(2);
    up << 1.0, -0.5;
    const Vec gx = net.backward(t, up, nullptr);
    const double h = 1e-6;
    for (int d = 0; d < 3; ++d) {
        Vec a = x, b = x;
        a[d] += h;
        b[d] -= h;
        const double fd = up.dot(net.forward(a) - net.forward(b)) / (2 * h);
        CHECK(gx[d] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("clamp and its two-ReLU encoding")
{
    const Vec lo = Vec::Constant(1, -3.0), hi = Vec::Constant(1, 3.0);
    CHECK(clamp(Vec::Constant(1, 5.0), lo, hi)[0] == 3.0);
    CHECK(clamp(Vec::Zero(1), lo, hi)[0] == 0.0);
    CHECK_THROWS_AS(clamp(Vec::Zero(1), hi, lo), ConfigError);
    std::mt19937_64 rng(8);
    for (int k = 0; k < 1000; ++k) {
        const Vec y = random_vec(1, rng, 6.0);
        CHECK(std::abs(clamp_relu_form(y, lo, hi)[0] - clamp(y, lo, hi)[0]) <= 1e-12);
    }
}

TEST_CASE("lipschitz bounds on scaled and diagonal nets")
{
    const MlpNetwork two = single(2.0 * Mat::Identity(3, 3), Vec::Zero(3));
    CHECK(lipschitz_upper_bound(two, NormKind::Inf) == doctest::Approx(2.0));
    CHECK(lipschitz_upper_bound(two, NormKind::Two) == doctest::Approx(2.0));
    const MlpNetwork chain({DenseLayer{3.0 * Mat::Identity(2, 2), Vec::Zero(2)},
                            DenseLayer{0.5 * Mat::Identity(2, 2), Vec::Zero(2)}});
    CHECK(lipschitz_upper_bound(chain, NormKind::Inf) == doctest::Approx(1.5));
    CHECK(lipschitz_upper_bound(chain, NormKind::Two) == doctest::Approx(1.5));
}

TEST_CASE("lipschitz bound dominates sampled slopes")
{
    const MlpNetwork net = MlpNetwork::random({2, 16, 1}, 21);
    const double l2 = lipschitz_upper_bound(net, NormKind::Two);
    const double linf = lipschitz_upper_bound(net, NormKind::Inf);
    std::mt19937_64 rng(4);
    double worst2 = 0.0, worst_inf = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const Vec a = random_vec(2, rng, 2.0), b = random_vec(2, rng, 2.0);
        const double df = std::abs(net.forward(a)[0] - net.forward(b)[0]);
        worst2 = std::max(worst2, df / (a - b).norm());
        worst_inf = std::max(worst_inf, df / (a - b).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst2 <= l2);
    CHECK(worst_inf <= linf);
}

TEST_CASE("spectral norm is an upper bound on the largest singular value")
{
    Mat m(2, 2);
    m << 1, 2, 3, 4;
    const double exact = Eigen::JacobiSVD<Mat>(m).singularValues()[0];
    CHECK(spectral_norm(m) >= exact);
    CHECK(spectral_norm(m) <= exact * (1 + 1e-6));
}

TEST_CASE("icnn projection clips later layers only")
{
    MlpNetwork net = MlpNetwork::random({2, 4, 4, 1}, 2);
    net.layers()[1].weight(0, 0) = -0.3;
    const MlpNetwork p = icnn_project(net);
    CHECK(p.convex_mode());
    CHECK(p.layers()[1].weight(0, 0) == 0.0);
    CHECK(p.layers()[0].weight == net.layers()[0].weight);
    for (std::size_t l = 1; l < p.layers().size(); ++l)
        CHECK(p.layers()[l].weight.minCoeff() >= 0.0);
    const MlpNetwork again = icnn_project(p);
    CHECK(again.flatten() == p.flatten());

    std::mt19937_64 rng(12);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const Vec a = random_vec(2, rng, 3.0), b = random_vec(2, rng, 3.0);
        worst = std::max(worst, p.forward(0.5 * (a + b))[0] - 0.5 * (p.forward(a)[0] + p.forward(b)[0]));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("json round trip keeps parameters and metadata")
{
    const MlpNetwork net = MlpNetwork::random({3, 5, 2}, 77, true);
    const MlpNetwork back = MlpNetwork::from_json(net.to_json());
    CHECK(back.flatten() == net.flatten());
    CHECK(back.convex_mode());
    CHECK(back.seed() == 77);
    CHECK(back.widths() == std::vector<int>{3, 5, 2});
}

TEST_CASE("adam moves against the gradient")
{
    Adam adam(2, 0.1);
    Vec p = Vec::Zero(2);
    Vec g(2);
    g << 1.0, -2.0;
    adam.step(p, g);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
    Vec wrong = Vec::Zero(3);
    CHECK_THROWS_AS(adam.step(wrong, Vec::Zero(3)), StructuralError);
}
