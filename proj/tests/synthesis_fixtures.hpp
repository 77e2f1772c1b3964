#pragma once

#include "siss/synthesis.hpp"

#include <random>

namespace siss::fixtures {

using nlohmann::json;

inline json controlled_config(const std::string& topology)
{
    json j = json::parse(R"({
      "kind": "linear", "T": 0.1, "roles": ["a", "a", "a"],
      "params": {"roles": {"a": {
        "a_self": [[0.9, 0.1], [0.0, 0.8]], "a_nbr": [[0.05, 0.0], [0.0, 0.05]],
        "b_u": [[0.0], [0.1]], "b_d": [[0.1], [0.0]]}}},
      "regions": {"state_halfwidths": [1, 1], "disturbance_halfwidths": [0.5]},
      "grid": {"state_steps": [0.5, 0.5], "disturbance_steps": [0.5]},
      "lipschitz_true": {"a": 1.1},
      "reference_policy": {"a": {"gain": [[-0.5, -0.3, 0.1, 0.0]], "u_min": [-1], "u_max": [1]}}
    })");
    j["topology"] = topology;
    return j;
}

inline FitConfig small_fit()
{
    FitConfig f;
    f.hidden = {6};
    f.epochs = 2;
    f.seed = 3;
    return f;
}

inline TrainingConfig small_training()
{
    TrainingConfig t;
    t.lyapunov_hidden = {6, 6};
    t.controller_hidden = {5};
    t.dataset_size = 300;
    t.seed = 9;
    return t;
}

inline Batch random_batch(const CertificateBundle& b, int per_agent, std::mt19937_64& rng)
{
    Batch batch(b.n_agents());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < b.n_agents(); ++i) {
        const HyperBox z = b.local_domain(i);
        for (int k = 0; k < per_agent; ++k) {
            Vec p(z.dim());
            for (int d = 0; d < z.dim(); ++d)
                p[d] = z.lower()[d] + u(rng) * z.width()[d];
            batch[i].locals.push_back(p);
            batch[i].states.push_back(p.head(b.state_dims[i]));
        }
    }
    return batch;
}

/// Largest relative deviation between the analytic gradient and central differences.
inline double gradient_error(CertificateBundle b, const Scenario& s, const Batch& batch, const TrainingConfig& cfg)
{
    const ParameterMap map(b);
    map.scatter(map.gather(b), b);  // tied entries take one shared value
    const PolicyReference ref{&s};
    BundleGradient g = BundleGradient::zeros(b);
    total_loss(b, ref, batch, cfg, &g);
    const Vec analytic = map.gather_gradient(g);
    const Vec p0 = map.gather(b);
    Vec fd(p0.size());
    const double h = 1e-6;
    for (int k = 0; k < p0.size(); ++k) {
        Vec p = p0;
        p[k] += h;
        map.scatter(p, b);
        const double up = total_loss(b, ref, batch, cfg).total;
        p[k] -= 2 * h;
        map.scatter(p, b);
        const double down = total_loss(b, ref, batch, cfg).total;
        fd[k] = (up - down) / (2 * h);
    }
    map.scatter(p0, b);
    return (analytic - fd).lpNorm<Eigen::Infinity>() / std::max(1e-3, fd.lpNorm<Eigen::Infinity>());
}

}  // namespace siss::fixtures
