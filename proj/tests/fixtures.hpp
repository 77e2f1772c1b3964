#pragma once

#include "siss/certificate.hpp"

#include <algorithm>
#include <cmath>

namespace siss::fixtures {

inline MlpNetwork zero_phi(int dim)
{
    return MlpNetwork({DenseLayer{Mat::Zero(1, dim), Vec::Zero(1)}});
}

inline LyapunovNet abs_v(double scale = 1.0) { return LyapunovNet(zero_phi(1), Mat::Constant(1, 1, scale)); }

/// One scalar agent x' = a x + bd d with an exact surrogate, V(x) = |x|, gamma_ii
/// realized from slack eps.
inline CertificateBundle scalar_bundle(double a, double eps, double bd = 0.0)
{
    CertificateBundle b;
    b.neighbors = {{}};
    b.state_dims = {1};
    b.disturbance_dims = {1};
    b.state_regions = {HyperBox::symmetric(Vec::Ones(1))};
    b.disturbance_regions = {HyperBox::symmetric(Vec::Ones(1))};
    b.lyapunov = {abs_v()};
    b.net_class = {0};
    b.coupling.gamma_pure = Mat::Ones(1, 1);
    b.coupling.epsilon_sg = eps;
    b.coupling.mask = {{1}};
    b.realize();
    b.margins = {RobustMargin{}};
    b.controllers = {std::nullopt};
    Mat lin(1, 2);
    lin << a, bd;
    SurrogateModel m;
    m.net = SurrogateNet(lin, Vec::Zero(1), MlpNetwork(), true);
    m.grid.region = HyperBox::symmetric(Vec::Ones(2));
    m.grid.steps = Vec::Constant(2, 0.5);
    b.surrogates = {m};
    b.surrogate_of = {0};
    b.status.assign(1, AgentStatus{});
    return b;
}

/// Scalar ring x_i' = a x_i + c x_{i-1} + bd d_i with exact surrogates and V_i(x) = |x|.
/// With `closed` false agent 0 has no predecessor and uses its own surrogate.
inline CertificateBundle ring_bundle(int n, double a, double c, double bd, bool closed = true)
{
    CertificateBundle b;
    Mat lin(1, 3);
    lin << a, c, bd;
    SurrogateModel m;
    m.net = SurrogateNet(lin, Vec::Zero(1), MlpNetwork(), true);
    m.grid.region = HyperBox::symmetric(Vec::Ones(3));
    m.grid.steps = Vec::Constant(3, 0.5);
    b.surrogates = {m};
    if (!closed) {
        SurrogateModel head;
        Mat own(1, 2);
        own << a, bd;
        head.net = SurrogateNet(own, Vec::Zero(1), MlpNetwork(), true);
        head.grid.region = HyperBox::symmetric(Vec::Ones(2));
        head.grid.steps = Vec::Constant(2, 0.5);
        b.surrogates.push_back(head);
    }
    b.coupling.gamma_pure = Mat::Zero(n, n);
    b.coupling.mask.assign(n, std::vector<int>(n, 0));
    for (int i = 0; i < n; ++i) {
        const int j = (i + n - 1) % n;
        const bool head = !closed && i == 0;
        b.neighbors.push_back(head ? std::vector<int>{} : std::vector<int>{j});
        b.state_dims.push_back(1);
        b.disturbance_dims.push_back(1);
        b.state_regions.push_back(HyperBox::symmetric(Vec::Ones(1)));
        b.disturbance_regions.push_back(HyperBox::symmetric(Vec::Ones(1)));
        b.lyapunov.push_back(abs_v());
        b.net_class.push_back(head ? 1 : 0);
        b.margins.emplace_back();
        b.controllers.emplace_back();
        b.surrogate_of.push_back(head ? 1 : 0);
        b.coupling.mask[i][i] = 1;
        b.coupling.gamma_pure(i, i) = 1.0;
        if (!head) {
            b.coupling.mask[i][j] = 1;
            b.coupling.gamma_pure(i, j) = 1.0;
        }
    }
    b.coupling.epsilon_sg = 0.05;
    b.realize();
    b.status.assign(n, AgentStatus{});
    return b;
}

/// Largest exact residual over a lattice with the given step.
inline double grid_max(const LocalQuery& q, double step)
{
    const HyperBox& box = q.domain;
    std::vector<long long> counts(static_cast<std::size_t>(box.dim()));
    long long total = 1;
    for (int d = 0; d < box.dim(); ++d) {
        counts[static_cast<std::size_t>(d)] = static_cast<long long>(std::floor(box.width()[d] / step + 1e-9)) + 1;
        total *= counts[static_cast<std::size_t>(d)];
    }
    double worst = -1e300;
    Vec z(box.dim());
    for (long long k = 0; k < total; ++k) {
        long long idx = k;
        for (int d = 0; d < box.dim(); ++d) {
            const long long n = counts[static_cast<std::size_t>(d)];
            z[d] = std::min(box.upper()[d], box.lower()[d] + static_cast<double>(idx % n) * step);
            idx /= n;
        }
        worst = std::max(worst, q.residual(z));
    }
    return worst;
}

}  // namespace siss::fixtures
