#include "siss/surrogate.hpp"

#include "siss/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace siss {

using nlohmann::json;

// ---------------------------------------------------------------- grid

void GridSpec::validate() const
{
    if (steps.size() != region.dim())
        throw StructuralError("grid step vector does not match the region dimension");
    for (int d = 0; d < steps.size(); ++d) {
        const double w = region.width()[d];
        if (!(steps[d] > 0.0))
            throw ConfigError("grid steps must be positive");
        if (w > 0.0 && steps[d] > w)
            throw ConfigError("grid step exceeds the region width in dimension " + std::to_string(d));
    }
    if (cap <= 0)
        throw ConfigError("grid cap must be positive");
}

long long GridSpec::points_in_dim(int d) const
{
    const double w = region.width()[d];
    if (w <= 0.0)
        return 1;
    return static_cast<long long>(std::floor(w / steps[d] + 1e-9)) + 1;
}

long long GridSpec::point_count() const
{
    long double total = 1.0L;
    for (int d = 0; d < dim(); ++d)
        total *= static_cast<long double>(points_in_dim(d));
    if (total > 9.0e18L)
        return std::numeric_limits<long long>::max();
    return static_cast<long long>(total);
}

double GridSpec::step_norm() const
{
    double s = 0.0;
    for (int d = 0; d < dim(); ++d)
        if (region.width()[d] > 0.0)
            s += steps[d] * steps[d];
    return std::sqrt(s);
}

Vec GridSpec::point(long long idx) const
{
    Vec p(dim());
    for (int d = 0; d < dim(); ++d) {
        const long long n = points_in_dim(d);
        const long long k = idx % n;
        idx /= n;
        if (n == 1) {
            p[d] = region.center()[d];
            continue;
        }
        // Centre the lattice so both edges are within half a step of a point.
        const double used = static_cast<double>(n - 1) * steps[d];
        const double offset = 0.5 * (region.width()[d] - used);
        p[d] = std::min(region.upper()[d], region.lower()[d] + offset + static_cast<double>(k) * steps[d]);
    }
    return p;
}

json GridSpec::to_json() const
{
    return {{"lower", vec_to_json(region.lower())},
            {"upper", vec_to_json(region.upper())},
            {"steps", vec_to_json(steps)},
            {"cap", cap}};
}

GridSpec GridSpec::from_json(const json& j)
{
    GridSpec g;
    g.region = HyperBox(vec_from_json(j.at("lower")), vec_from_json(j.at("upper")));
    g.steps = vec_from_json(j.at("steps"));
    g.cap = j.value("cap", g.cap);
    return g;
}

std::vector<Vec> make_grid(const GridSpec& spec)
{
    spec.validate();
    const long long n = spec.point_count();
    if (n > spec.cap)
        throw ResourceError("grid would contain " + std::to_string(n) + " points (cap " + std::to_string(spec.cap) +
                            "); use coarser steps");
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (long long k = 0; k < n; ++k)
        pts.push_back(spec.point(k));
    return pts;
}

// ---------------------------------------------------------------- surrogate network

SurrogateNet::SurrogateNet(Mat linear, Vec offset, MlpNetwork residual, bool anchored)
    : linear_(std::move(linear)), offset_(std::move(offset)), residual_(std::move(residual)), anchored_(anchored)
{
    if (offset_.size() != linear_.rows())
        throw StructuralError("surrogate offset does not match the output dimension");
    if (!residual_.empty() &&
        (residual_.input_dim() != linear_.cols() || residual_.output_dim() != linear_.rows()))
        throw StructuralError("surrogate residual network has the wrong shape");
}

Vec SurrogateNet::output_shift() const
{
    if (residual_.empty())
        return offset_;
    if (anchored_)
        return -residual_.forward(Vec::Zero(input_dim()));
    return offset_;
}

Vec SurrogateNet::predict(const Vec& v) const { return predict(v, output_shift()); }

Vec SurrogateNet::predict(const Vec& v, const Vec& shift) const
{
    if (v.size() != input_dim())
        throw StructuralError("surrogate input has the wrong dimension");
    Vec y = linear_ * v + shift;
    if (!residual_.empty())
        y += residual_.forward(v);
    return y;
}

Vec SurrogateNet::vjp(const Vec& v, const Vec& upstream) const
{
    Vec g = linear_.transpose() * upstream;
    if (!residual_.empty()) {
        MlpNetwork::Trace t;
        residual_.forward(v, t);
        g += residual_.backward(t, upstream, nullptr);
    }
    return g;
}

double SurrogateNet::lipschitz_bound() const
{
    double L = spectral_norm(linear_);
    if (!residual_.empty())
        L += lipschitz_upper_bound(residual_, NormKind::Two);
    return L;
}

json SurrogateNet::to_json() const
{
    return {{"linear", mat_to_json(linear_)},
            {"offset", vec_to_json(offset_)},
            {"anchored", anchored_},
            {"input_dim", input_dim()},
            {"residual", residual_.to_json()}};
}

SurrogateNet SurrogateNet::from_json(const json& j)
{
    Mat lin = mat_from_json(j.at("linear"));
    Vec off = vec_from_json(j.at("offset"));
    if (lin.rows() == 0)
        lin = Mat::Zero(off.size(), j.value("input_dim", 0));
    return SurrogateNet(lin, off, MlpNetwork::from_json(j.at("residual")), j.value("anchored", true));
}

json SurrogateModel::to_json() const
{
    return {{"net", net.to_json()},
            {"epsilon_hat", epsilon_hat},
            {"lipschitz_true", lipschitz_true},
            {"lipschitz_surrogate", lipschitz_surrogate},
            {"grid", grid.to_json()},
            {"key", key}};
}

SurrogateModel SurrogateModel::from_json(const json& j)
{
    SurrogateModel m;
    m.net = SurrogateNet::from_json(j.at("net"));
    m.epsilon_hat = j.at("epsilon_hat").get<double>();
    m.lipschitz_true = j.at("lipschitz_true").get<double>();
    m.lipschitz_surrogate = j.at("lipschitz_surrogate").get<double>();
    m.grid = GridSpec::from_json(j.at("grid"));
    m.key = j.value("key", std::string());
    return m;
}

// ---------------------------------------------------------------- fitting

double scan_max_residual(const GridSpec& grid, const StepFunction& truth, const StepFunction& model, int threads)
{
    grid.validate();
    const long long n = grid.point_count();
    if (n > grid.cap)
        throw ResourceError("grid would contain " + std::to_string(n) + " points (cap " + std::to_string(grid.cap) +
                            "); use coarser steps");
    if (threads <= 0)
        threads = default_threads();
    std::vector<double> worst(static_cast<std::size_t>(threads), 0.0);
    std::vector<int> bad(static_cast<std::size_t>(threads), 0);
    parallel_chunks(n, threads, [&](long long b, long long e, int t) {
        double w = 0.0;
        try {
            for (long long k = b; k < e; ++k) {
                const Vec p = grid.point(k);
                const Vec y = truth(p);
                if (!y.allFinite()) {
                    bad[t] = 1;
                    return;
                }
                w = std::max(w, (y - model(p)).norm());
            }
        } catch (const std::exception&) {
            bad[t] = 1;
            return;
        }
        worst[t] = w;
    });
    if (std::any_of(bad.begin(), bad.end(), [](int b) { return b != 0; }))
        throw DataError("true dynamics returned a non-finite value on the grid");
    return *std::max_element(worst.begin(), worst.end());
}

SurrogateModel fit_dynamics(const StepFunction& true_step, const GridSpec& spec, const FitConfig& cfg,
                            double lipschitz_true, std::vector<double>* history)
{
    spec.validate();
    if (lipschitz_true < 0.0)
        throw ConfigError("Lipschitz constants must be non-negative");
    if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0))
        throw ConfigError("invalid surrogate training configuration");
    const long long total = spec.point_count();
    if (total > spec.cap)
        throw ResourceError("grid would contain " + std::to_string(total) + " points (cap " +
                            std::to_string(spec.cap) + "); use coarser steps");

    std::mt19937_64 rng(cfg.seed);
    std::vector<long long> idx;
    if (total <= cfg.max_train_points) {
        idx.resize(static_cast<std::size_t>(total));
        std::iota(idx.begin(), idx.end(), 0LL);
    } else {
        std::uniform_int_distribution<long long> pick(0, total - 1);
        for (long long k = 0; k < cfg.max_train_points; ++k)
            idx.push_back(pick(rng));
    }
    std::shuffle(idx.begin(), idx.end(), rng);

    const int m = spec.dim();
    std::vector<Vec> X, Y;
    X.reserve(idx.size());
    Y.reserve(idx.size());
    for (long long k : idx) {
        Vec p = spec.point(k);
        Vec y = true_step(p);
        if (!y.allFinite())
            throw DataError("true dynamics returned a non-finite value at a grid point");
        X.push_back(std::move(p));
        Y.push_back(std::move(y));
    }
    const int out = static_cast<int>(Y.front().size());
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.train_fraction * X.size())));

    // Linear part by least squares on the training split.
    const int cols = cfg.anchored ? m : m + 1;
    Mat D(static_cast<int>(n_train), cols), T(static_cast<int>(n_train), out);
    for (std::size_t r = 0; r < n_train; ++r) {
        D.row(static_cast<int>(r)).head(m) = X[r].transpose();
        if (!cfg.anchored)
            D(static_cast<int>(r), m) = 1.0;
        T.row(static_cast<int>(r)) = Y[r].transpose();
    }
    const Mat coef = D.colPivHouseholderQr().solve(T);  // cols x out
    Mat A = coef.topRows(m).transpose();
    Vec b = cfg.anchored ? Vec::Zero(out) : Vec(coef.row(m).transpose());

    MlpNetwork residual;
    if (!cfg.hidden.empty()) {
        std::vector<int> widths{m};
        widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
        widths.push_back(out);
        residual = MlpNetwork::random(widths, cfg.seed ^ 0x5eedULL);
        residual.layers().back().weight.setZero();
        residual.layers().back().bias.setZero();
    }
    SurrogateNet net(A, b, residual, cfg.anchored);

    auto max_residual = [&](std::size_t from, std::size_t to) {
        double w = 0.0;
        for (std::size_t r = from; r < to; ++r)
            w = std::max(w, (Y[r] - net.predict(X[r])).norm());
        return w;
    };

    if (!residual.empty() && cfg.epochs > 0) {
        const bool has_val = n_train < X.size();
        const std::size_t v0 = has_val ? n_train : 0, v1 = X.size();
        Adam adam(net.residual().parameter_count(), cfg.learning_rate);
        Vec params = net.residual().flatten();
        Vec best_params = params;
        double best = max_residual(v0, v1);
        std::vector<std::size_t> order(n_train);
        std::iota(order.begin(), order.end(), 0);
        const Vec zero = Vec::Zero(m);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            if (epoch > 0 && cfg.decay_every > 0 && epoch % cfg.decay_every == 0)
                adam.set_learning_rate(adam.learning_rate() * cfg.decay);
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
                const std::size_t e = std::min(order.size(), s + cfg.batch_size);
                const double w = 2.0 / static_cast<double>(e - s);
                GradientRecord g = net.residual().zero_gradient();
                Vec sum_err = Vec::Zero(out);
                const Vec shift = net.output_shift();
                for (std::size_t q = s; q < e; ++q) {
                    const std::size_t r = order[q];
                    MlpNetwork::Trace t;
                    const Vec phi = net.residual().forward(X[r], t);
                    const Vec err = A * X[r] + phi + shift - Y[r];
                    net.residual().backward(t, err, &g, w);
                    sum_err += err;
                }
                if (cfg.anchored) {
                    MlpNetwork::Trace t0;
                    net.residual().forward(zero, t0);
                    net.residual().backward(t0, sum_err, &g, -w);
                }
                adam.step(params, g.flatten());
                net.residual().unflatten(params);
            }
            const double val = max_residual(v0, v1);
            if (val < best) {
                best = val;
                best_params = params;
            }
            if (history)
                history->push_back(best);
        }
        net.residual().unflatten(best_params);
    }

    SurrogateModel model;
    model.net = net;
    model.grid = spec;
    model.lipschitz_true = lipschitz_true;
    model.lipschitz_surrogate = net.lipschitz_bound();
    const Vec shift = model.net.output_shift();
    model.epsilon_hat = scan_max_residual(
        spec, true_step, [&](const Vec& p) { return model.net.predict(p, shift); }, cfg.threads);
    return model;
}

// ---------------------------------------------------------------- margins

json RobustMargin::to_json() const
{
    json j{{"epsilon", epsilon}, {"delta", delta}, {"lipschitz_v", lipschitz_v}, {"floored", floored}};
    j["lipschitz_pi"] = lipschitz_pi ? json(*lipschitz_pi) : json(nullptr);
    return j;
}

RobustMargin RobustMargin::from_json(const json& j)
{
    RobustMargin m;
    m.epsilon = j.at("epsilon").get<double>();
    m.delta = j.at("delta").get<double>();
    m.lipschitz_v = j.at("lipschitz_v").get<double>();
    m.floored = j.value("floored", false);
    if (j.contains("lipschitz_pi") && !j["lipschitz_pi"].is_null())
        m.lipschitz_pi = j["lipschitz_pi"].get<double>();
    return m;
}

double robust_epsilon(double epsilon_hat, double lf, double lft, double step_norm, bool controlled,
                      std::optional<double> lpi)
{
    if (lf < 0.0 || lft < 0.0 || (lpi && *lpi < 0.0))
        throw ConfigError("Lipschitz constants must be non-negative");
    if (epsilon_hat < 0.0 || step_norm < 0.0)
        throw ConfigError("approximation error and grid step must be non-negative");
    double grid_term = 0.5 * (lf + lft) * step_norm;
    if (controlled) {
        if (!lpi)
            throw ConfigError("controlled margin needs the controller Lipschitz constant");
        grid_term *= 1.0 + *lpi;
    }
    return epsilon_hat + grid_term;
}

double robust_epsilon(const SurrogateModel& model, bool controlled, std::optional<double> lipschitz_pi)
{
    return robust_epsilon(model.epsilon_hat, model.lipschitz_true, model.lipschitz_surrogate,
                          model.grid.step_norm(), controlled, lipschitz_pi);
}

RobustMargin robust_delta(double epsilon, double lipschitz_v, double slack, double floor)
{
    if (slack < 0.0)
        throw ConfigError("delta slack must be non-negative");
    if (epsilon < 0.0 || lipschitz_v < 0.0)
        throw ConfigError("epsilon and L_V must be non-negative");
    RobustMargin m;
    m.epsilon = epsilon;
    m.lipschitz_v = lipschitz_v;
    m.delta = lipschitz_v * epsilon * (1.0 + slack);
    if (!(m.delta > 0.0)) {
        m.delta = floor;
        m.floored = true;
    }
    return m;
}

}  // namespace siss
