#include "siss/synthesis.hpp"

#include "siss/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <tuple>

namespace siss {

using nlohmann::json;

// ---------------------------------------------------------------- config

void TrainingConfig::validate() const
{
    if (w_p < 0.0 || w_d < 0.0 || w_o < 0.0 || eps_p < 0.0 || eps_d < 0.0)
        throw ConfigError("loss weights and margins must be non-negative");
    if (epochs_per_round < 1 || max_rounds < 1 || batch_size < 1 || cex_variants < 1 || dataset_size < 1)
        throw ConfigError("epoch, round, batch, variant and dataset counts must be at least 1");
    if (!(learning_rate > 0.0) || !(decay > 0.0) || decay_every < 1)
        throw ConfigError("learning-rate schedule must be positive");
    if (!(cex_sigma_fraction >= 0.0))
        throw ConfigError("counterexample noise must be non-negative");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw ConfigError("train fraction must lie in (0, 1]");
    if (!(epsilon_sg > 0.0 && epsilon_sg < 1.0))
        throw ConfigError("small-gain slack must lie in (0, 1)");
    if (psi < 0.0 || core_fraction < 0.0 || core_fraction >= 1.0 || delta_slack < 0.0)
        throw ConfigError("psi, core fraction and delta slack are out of range");
    envelope.validate();
}

json TrainingConfig::to_json() const
{
    return {{"w_p", w_p},
            {"w_d", w_d},
            {"w_o", w_o},
            {"eps_p", eps_p},
            {"eps_d", eps_d},
            {"epochs_per_round", epochs_per_round},
            {"max_rounds", max_rounds},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"decay", decay},
            {"decay_every", decay_every},
            {"cex_sigma_fraction", cex_sigma_fraction},
            {"cex_variants", cex_variants},
            {"dataset_size", dataset_size},
            {"train_fraction", train_fraction},
            {"seed", seed},
            {"lyapunov_hidden", lyapunov_hidden},
            {"polyhedral_scale", polyhedral_scale},
            {"convex", convex},
            {"controller_hidden", controller_hidden},
            {"epsilon_sg", epsilon_sg},
            {"psi", psi},
            {"core_fraction", core_fraction},
            {"c1", envelope.c1},
            {"c2", envelope.c2},
            {"delta_slack", delta_slack},
            {"share_weights", share_weights},
            {"budget",
             {{"max_boxes", budget.max_boxes},
              {"max_depth", budget.max_depth},
              {"max_seconds", budget.max_seconds},
              {"lp_max_unstable", budget.lp_max_unstable},
              {"lp_max_leaves", budget.lp_max_leaves},
              {"tolerance", budget.tolerance}}}};
}

TrainingConfig TrainingConfig::from_json(const json& j)
{
    TrainingConfig c;
    c.w_p = j.value("w_p", c.w_p);
    c.w_d = j.value("w_d", c.w_d);
    c.w_o = j.value("w_o", c.w_o);
    c.eps_p = j.value("eps_p", c.eps_p);
    c.eps_d = j.value("eps_d", c.eps_d);
    c.epochs_per_round = j.value("epochs_per_round", c.epochs_per_round);
    c.max_rounds = j.value("max_rounds", c.max_rounds);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay = j.value("decay", c.decay);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.cex_sigma_fraction = j.value("cex_sigma_fraction", c.cex_sigma_fraction);
    c.cex_variants = j.value("cex_variants", c.cex_variants);
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.seed = j.value("seed", c.seed);
    c.lyapunov_hidden = j.value("lyapunov_hidden", c.lyapunov_hidden);
    c.polyhedral_scale = j.value("polyhedral_scale", c.polyhedral_scale);
    c.convex = j.value("convex", c.convex);
    c.controller_hidden = j.value("controller_hidden", c.controller_hidden);
    c.epsilon_sg = j.value("epsilon_sg", c.epsilon_sg);
    c.psi = j.value("psi", c.psi);
    c.core_fraction = j.value("core_fraction", c.core_fraction);
    c.envelope.c1 = j.value("c1", c.envelope.c1);
    c.envelope.c2 = j.value("c2", c.envelope.c2);
    c.delta_slack = j.value("delta_slack", c.delta_slack);
    c.share_weights = j.value("share_weights", c.share_weights);
    c.threads = j.value("threads", c.threads);
    if (j.contains("budget")) {
        const json& b = j["budget"];
        c.budget.max_boxes = b.value("max_boxes", c.budget.max_boxes);
        c.budget.max_depth = b.value("max_depth", c.budget.max_depth);
        c.budget.max_seconds = b.value("max_seconds", c.budget.max_seconds);
        c.budget.lp_max_unstable = b.value("lp_max_unstable", c.budget.lp_max_unstable);
        c.budget.lp_max_leaves = b.value("lp_max_leaves", c.budget.lp_max_leaves);
        c.budget.tolerance = b.value("tolerance", c.budget.tolerance);
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- surrogates

HyperBox input_box(const Scenario& s, AgentId i)
{
    const auto it = s.reference.find(s.role(i));
    if (it == s.reference.end())
        throw StructuralError("agent " + std::to_string(i) + " has no input bounds");
    return HyperBox(it->second.u_min, it->second.u_max);
}

std::string surrogate_key(const Scenario& s, AgentId i)
{
    json rec = agent_parameter_record(s, i);
    const HyperBox d = local_domain(s, i);
    rec["domain"] = {vec_to_json(d.lower()), vec_to_json(d.upper())};
    rec["layout"] = local_layout(s, i).neighbor_dims;
    if (s.controlled(i)) {
        const HyperBox u = input_box(s, i);
        rec["inputs"] = {vec_to_json(u.lower()), vec_to_json(u.upper())};
    }
    return fnv1a_hex(rec.dump());
}

StepFunction agent_true_step(const Scenario& s, AgentId i)
{
    const int m = local_layout(s, i).total;
    if (s.controlled(i))
        return [&s, i, m](const Vec& v) { return local_step_packed(s, i, v.head(m), v.tail(v.size() - m)); };
    return [&s, i](const Vec& z) { return local_step_packed(s, i, z, Vec()); };
}

GridSpec agent_state_grid(const Scenario& s, AgentId i)
{
    const LocalLayout lay = local_layout(s, i);
    GridSpec g;
    g.region = local_domain(s, i);
    g.steps = Vec(lay.total);
    int off = 0;
    g.steps.segment(off, lay.state_dim) = s.grid.state_steps;
    off += lay.state_dim;
    for (int d : lay.neighbor_dims) {
        g.steps.segment(off, d) = s.grid.state_steps;
        off += d;
    }
    g.steps.segment(off, lay.disturbance_dim) = s.grid.disturbance_steps;
    g.cap = s.grid.max_points;
    g.validate();
    return g;
}

GridSpec agent_fit_grid(const Scenario& s, AgentId i)
{
    GridSpec g = agent_state_grid(s, i);
    if (!s.controlled(i))
        return g;
    const HyperBox u = input_box(s, i);
    g.region = g.region.product(u);
    Vec steps(g.steps.size() + u.dim());
    steps << g.steps, (u.width() / 8.0).cwiseMax(1e-6);
    g.steps = steps;
    // The fit lattice only shapes training data; coarsen it until it fits the cap.
    const Vec width = g.region.width();
    while (g.point_count() > g.cap) {
        const Vec before = g.steps;
        for (int d = 0; d < g.steps.size(); ++d)
            if (width[d] > 0.0)
                g.steps[d] = std::min(g.steps[d] * 1.25, width[d]);
        if (g.steps == before)
            break;
    }
    g.validate();
    return g;
}

SurrogateSet fit_surrogates(const Scenario& s, const FitConfig& config)
{
    SurrogateSet set;
    std::map<std::string, int> by_key;
    for (AgentId i = 0; i < s.n_agents(); ++i) {
        const std::string key = surrogate_key(s, i);
        auto it = by_key.find(key);
        if (it == by_key.end()) {
            FitConfig fc = config;
            fc.seed = config.seed + 7919ULL * set.models.size();
            SurrogateModel m = fit_dynamics(agent_true_step(s, i), agent_fit_grid(s, i), fc, s.lipschitz_of(i));
            m.key = key;
            it = by_key.emplace(key, static_cast<int>(set.models.size())).first;
            set.models.push_back(std::move(m));
        }
        set.model_of.push_back(it->second);
    }
    return set;
}

// ---------------------------------------------------------------- bundle

std::vector<int> network_classes(const Scenario& s, const SurrogateSet& surrogates, bool share)
{
    std::vector<int> cls(s.n_agents());
    if (!share) {
        for (int i = 0; i < s.n_agents(); ++i)
            cls[i] = i;
        return cls;
    }
    std::vector<std::string> keys;
    for (int i = 0; i < s.n_agents(); ++i)
        keys.push_back(surrogates.models.at(surrogates.model_of.at(i)).key);
    const SignedGraph g{s.graph, dynamics_signatures(s, &keys)};
    return equivalence_classes(g).class_of;
}

CertificateBundle initial_bundle(const Scenario& s, const SurrogateSet& surrogates, const TrainingConfig& config)
{
    config.validate();
    const int n = s.n_agents();
    if (static_cast<int>(surrogates.model_of.size()) != n)
        throw StructuralError("surrogate assignment does not cover every agent");
    CertificateBundle b;
    const auto regions = scenario_regions(s);
    for (AgentId i = 0; i < n; ++i) {
        b.neighbors.push_back(s.graph.neighbors(i));
        b.state_dims.push_back(s.state_dim(i));
        b.disturbance_dims.push_back(s.disturbance_dim(i));
        b.state_regions.push_back(regions[i].state);
        b.disturbance_regions.push_back(regions[i].disturbance);
    }
    b.net_class = network_classes(s, surrogates, config.share_weights);

    std::map<int, int> first_of_class;
    for (AgentId i = 0; i < n; ++i) {
        const auto [it, fresh] = first_of_class.emplace(b.net_class[i], i);
        if (!fresh) {
            b.lyapunov.push_back(b.lyapunov[it->second]);
            b.controllers.push_back(b.controllers[it->second]);
            continue;
        }
        const std::uint64_t seed = config.seed * 1000003ULL + 31ULL * static_cast<std::uint64_t>(b.net_class[i]);
        const int dim = s.state_dim(i);
        std::vector<int> widths{dim};
        widths.insert(widths.end(), config.lyapunov_hidden.begin(), config.lyapunov_hidden.end());
        widths.push_back(1);
        MlpNetwork phi = MlpNetwork::random(widths, seed, config.convex);
        phi.layers().back().weight *= 0.1;
        if (config.convex)
            phi = icnn_project(phi);
        b.lyapunov.emplace_back(std::move(phi), config.polyhedral_scale * Mat::Identity(dim, dim));

        if (!s.controlled(i)) {
            b.controllers.push_back(std::nullopt);
            continue;
        }
        const LocalLayout lay = local_layout(s, i);
        const int yin = lay.controller_input_dim();
        const auto& ref = s.reference.at(s.role(i));
        Controller c;
        c.lo = ref.u_min;
        c.hi = ref.u_max;
        c.linear = Mat::Zero(s.input_dim(i), yin);
        const int cols = std::min<int>(static_cast<int>(ref.gain.cols()), yin);
        c.linear.leftCols(cols) = ref.gain.leftCols(cols);
        if (!config.controller_hidden.empty()) {
            std::vector<int> cw{yin};
            cw.insert(cw.end(), config.controller_hidden.begin(), config.controller_hidden.end());
            cw.push_back(s.input_dim(i));
            c.net = MlpNetwork::random(cw, seed + 17ULL);
            c.net.layers().back().weight.setZero();
            c.net.layers().back().bias.setZero();
        }
        b.controllers.push_back(std::move(c));
    }

    const auto mask = s.graph.mask_with_self();
    b.coupling.mask = mask;
    b.coupling.epsilon_sg = config.epsilon_sg;
    b.coupling.gamma_pure = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            b.coupling.gamma_pure(i, j) = mask[i][j] ? 1.0 : 0.0;
    b.realize();
    b.psi = config.psi;
    b.envelope = config.envelope;
    b.core_fraction = config.core_fraction;
    b.surrogates = surrogates.models;
    b.surrogate_of = surrogates.model_of;
    b.status.assign(n, AgentStatus{});
    b.config_hash = fnv1a_hex(s.hash + config.to_json().dump());
    b.margins.assign(n, RobustMargin{});
    update_margins(b, s, config);
    return b;
}

void update_margins(CertificateBundle& b, const Scenario& s, const TrainingConfig& config)
{
    const int n = b.n_agents();
    b.margins.resize(n);
    std::map<std::pair<int, int>, RobustMargin> cache;
    for (AgentId i = 0; i < n; ++i) {
        const auto key = std::make_pair(b.net_class[i], b.surrogate_of[i]);
        if (auto it = cache.find(key); it != cache.end()) {
            b.margins[i] = it->second;
            continue;
        }
        const SurrogateModel& model = b.surrogates[b.surrogate_of[i]];
        const double lv = b.lyapunov[i].lipschitz_bound();
        RobustMargin m;
        if (const auto& c = b.controllers[i]) {
            const double lpi = c->lipschitz_bound();
            const GridSpec grid = agent_state_grid(s, i);
            const int yin = c->input_dim();
            const StepFunction truth = agent_true_step(s, i);
            auto closed = [&](const StepFunction& f) {
                return [&, f](const Vec& z) {
                    Vec v(z.size() + c->output_dim());
                    v << z, c->act(z.head(yin));
                    return f(v);
                };
            };
            const Vec shift = model.net.output_shift();
            const StepFunction surrogate = [&](const Vec& v) { return model.net.predict(v, shift); };
            const double eps_hat = scan_max_residual(grid, closed(truth), closed(surrogate), config.threads);
            const double eps = robust_epsilon(eps_hat, model.lipschitz_true, model.lipschitz_surrogate,
                                              grid.step_norm(), true, lpi);
            m = robust_delta(eps, lv, config.delta_slack);
            m.lipschitz_pi = lpi;
        } else {
            m = robust_delta(robust_epsilon(model, false), lv, config.delta_slack);
        }
        cache.emplace(key, m);
        b.margins[i] = m;
    }
}

// ---------------------------------------------------------------- losses

BundleGradient BundleGradient::zeros(const CertificateBundle& b)
{
    BundleGradient g;
    const int n = b.n_agents();
    for (int i = 0; i < n; ++i) {
        g.lyapunov.push_back(zero_gradient(b.lyapunov[i]));
        if (const auto& c = b.controllers[i]) {
            g.pi.push_back(c->net.zero_gradient());
            g.pi_linear.push_back(Mat::Zero(c->linear.rows(), c->linear.cols()));
        } else {
            g.pi.push_back(std::nullopt);
            g.pi_linear.emplace_back();
        }
    }
    g.gamma_pure = Mat::Zero(n, n);
    return g;
}

void BundleGradient::add(const BundleGradient& other, double scale)
{
    for (std::size_t i = 0; i < lyapunov.size(); ++i) {
        lyapunov[i].phi.add(other.lyapunov[i].phi, scale);
        lyapunov[i].r += scale * other.lyapunov[i].r;
        lyapunov[i].zero_weight += scale * other.lyapunov[i].zero_weight;
        if (pi[i]) {
            pi[i]->add(*other.pi[i], scale);
            pi_linear[i] += scale * other.pi_linear[i];
        }
    }
    gamma_pure += scale * other.gamma_pure;
}

namespace {

int controlled_count(const CertificateBundle& b)
{
    return static_cast<int>(std::count_if(b.controllers.begin(), b.controllers.end(),
                                          [](const auto& c) { return c.has_value(); }));
}

void finish_all(const CertificateBundle& b, BundleGradient& g)
{
    for (int i = 0; i < b.n_agents(); ++i)
        finish_gradient(b.lyapunov[i], g.lyapunov[i]);
}

/// Pushes an upstream gradient on the clamped controller output back to its parameters.
void controller_backward(const Controller& c, const Vec& y, const Vec& upstream, GradientRecord& net_grad,
                         Mat& linear_grad)
{
    Vec raw = c.linear * y;
    MlpNetwork::Trace trace;
    if (!c.net.empty())
        raw += c.net.forward(y, trace);
    Vec g = upstream;
    for (int k = 0; k < g.size(); ++k)
        if (!(raw[k] > c.lo[k] && raw[k] < c.hi[k]))
            g[k] = 0.0;
    linear_grad.noalias() += g * y.transpose();
    if (!c.net.empty())
        c.net.backward(trace, g, &net_grad);
}

}  // namespace

double loss_positivity(const CertificateBundle& b, const Batch& batch, double eps_p, BundleGradient* grad)
{
    const int n = b.n_agents();
    if (static_cast<int>(batch.size()) != n)
        throw StructuralError("batch does not cover every agent");
    BundleGradient local = grad ? BundleGradient::zeros(b) : BundleGradient{};
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& xs = batch[i].states;
        if (xs.empty())
            continue;
        const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(xs.size()));
        for (const Vec& x : xs) {
            const double v = b.lyapunov[i].value(x);
            const double nx = x.norm();
            const double lower = b.envelope.c1 * nx - v + eps_p;
            const double upper = v - b.envelope.c2 * nx + eps_p;
            double dv = 0.0;
            if (lower > 0.0) {
                loss += w * lower;
                dv -= w;
            }
            if (upper > 0.0) {
                loss += w * upper;
                dv += w;
            }
            if (grad && dv != 0.0)
                accumulate_gradient(b.lyapunov[i], x, dv, local.lyapunov[i]);
        }
    }
    if (grad) {
        finish_all(b, local);
        grad->add(local);
    }
    return loss;
}

double loss_decrement(const CertificateBundle& b, const Batch& batch, double eps_d, BundleGradient* grad)
{
    const int n = b.n_agents();
    if (static_cast<int>(batch.size()) != n)
        throw StructuralError("batch does not cover every agent");
    BundleGradient local = grad ? BundleGradient::zeros(b) : BundleGradient{};
    Mat gamma_up = Mat::Zero(n, n);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& zs = batch[i].locals;
        if (zs.empty())
            continue;
        const LocalQuery q = make_query(b, i, Condition::Decrement);
        const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(zs.size()));
        const Controller* c = q.controller();
        const SurrogateNet& sur = q.surrogate().net;
        const Vec shift = sur.output_shift();
        for (const Vec& z : zs) {
            const Vec y = z.head(q.disturbance_offset);
            Vec v = z;
            if (c) {
                v.resize(z.size() + c->output_dim());
                v << z, c->act(y);
            }
            const Vec next = sur.predict(v, shift);
            const Vec x_i = z.head(q.state_dim);
            double r = b.lyapunov[i].value(next) - q.gamma_self() * b.lyapunov[i].value(x_i);
            for (std::size_t k = 0; k < q.neighbor_offsets.size(); ++k) {
                const int j = b.neighbors[i][k];
                r -= q.gamma_neighbor(static_cast<int>(k)) *
                     b.lyapunov[j].value(z.segment(q.neighbor_offsets[k], q.neighbor_dims[k]));
            }
            r += -b.psi * z.segment(q.disturbance_offset, q.disturbance_dim).norm() + q.delta_at(z) + eps_d;
            if (r <= 0.0)
                continue;
            loss += w * r;
            if (!grad)
                continue;
            const Vec g_next = accumulate_gradient(b.lyapunov[i], next, w, local.lyapunov[i]);
            accumulate_gradient(b.lyapunov[i], x_i, -w * q.gamma_self(), local.lyapunov[i]);
            gamma_up(i, i) -= w * b.lyapunov[i].value(x_i);
            for (std::size_t k = 0; k < q.neighbor_offsets.size(); ++k) {
                const int j = b.neighbors[i][k];
                const Vec xj = z.segment(q.neighbor_offsets[k], q.neighbor_dims[k]);
                accumulate_gradient(b.lyapunov[j], xj, -w * q.gamma_neighbor(static_cast<int>(k)), local.lyapunov[j]);
                gamma_up(i, j) -= w * b.lyapunov[j].value(xj);
            }
            if (c) {
                const Vec dv = sur.vjp(v, g_next);
                controller_backward(*c, y, dv.tail(c->output_dim()), *local.pi[i], local.pi_linear[i]);
            }
        }
    }
    if (grad) {
        finish_all(b, local);
        local.gamma_pure += realize_coupling_gradient(b.coupling, gamma_up);
        grad->add(local);
    }
    return loss;
}

double loss_imitation(const CertificateBundle& b, const PolicyReference& ref, const Batch& batch,
                      BundleGradient* grad)
{
    const int nc = controlled_count(b);
    if (nc == 0)
        throw StructuralError("imitation loss needs a controlled bundle");
    if (static_cast<int>(batch.size()) != b.n_agents())
        throw StructuralError("batch does not cover every agent");
    double loss = 0.0;
    for (int i = 0; i < b.n_agents(); ++i) {
        const auto& c = b.controllers[i];
        const auto& zs = batch[i].locals;
        if (!c || zs.empty())
            continue;
        const double w = 1.0 / (static_cast<double>(nc) * static_cast<double>(zs.size()));
        for (const Vec& z : zs) {
            const Vec y = z.head(c->input_dim());
            const Vec diff = c->act(y) - ref(i, y);
            const double len = diff.norm();
            loss += w * len;
            if (grad && len > 0.0)
                controller_backward(*c, y, w * diff / len, *grad->pi[i], grad->pi_linear[i]);
        }
    }
    return loss;
}

LossBreakdown total_loss(const CertificateBundle& b, const PolicyReference& ref, const Batch& batch,
                         const TrainingConfig& config, BundleGradient* grad)
{
    LossBreakdown out;
    std::optional<BundleGradient> part;
    if (grad)
        part = BundleGradient::zeros(b);
    auto fold = [&](double weight) {
        if (!grad)
            return;
        grad->add(*part, weight);
        part = BundleGradient::zeros(b);
    };
    out.positivity = loss_positivity(b, batch, config.eps_p, grad ? &*part : nullptr);
    fold(config.w_p);
    out.decrement = loss_decrement(b, batch, config.eps_d, grad ? &*part : nullptr);
    fold(config.w_d);
    out.total = config.w_p * out.positivity + config.w_d * out.decrement;
    if (b.controlled()) {
        out.imitation = loss_imitation(b, ref, batch, grad ? &*part : nullptr);
        fold(config.w_o);
        out.total += config.w_o * out.imitation;
    }
    return out;
}

// ---------------------------------------------------------------- parameters

ParameterMap::ParameterMap(const CertificateBundle& b)
{
    const int n = b.n_agents();
    std::map<int, int> slot_of;
    for (int i = 0; i < n; ++i) {
        auto [it, fresh] = slot_of.emplace(b.net_class[i], static_cast<int>(classes_.size()));
        if (fresh)
            classes_.emplace_back();
        classes_[it->second].members.push_back(i);
    }
    for (auto& c : classes_) {
        const int rep = c.members.front();
        c.phi_offset = size_;
        c.phi_size = static_cast<long long>(b.lyapunov[rep].phi().parameter_count());
        size_ += c.phi_size;
        c.r_offset = size_;
        c.r_size = b.lyapunov[rep].r().size();
        size_ += c.r_size;
        if (const auto& ctl = b.controllers[rep]) {
            c.pi_offset = size_;
            c.pi_size = static_cast<long long>(ctl->net.parameter_count());
            size_ += c.pi_size;
            c.k_offset = size_;
            c.k_size = ctl->linear.size();
            size_ += c.k_size;
        }
    }

    // Coupling gains are tied by (class of i, class of j, occurrence among i's neighbors).
    gamma_index_.assign(n, std::vector<int>(n, -1));
    std::map<std::tuple<int, int, int>, int> tied;
    auto index_of = [&](std::tuple<int, int, int> key) {
        auto [it, fresh] = tied.emplace(key, gamma_count_);
        if (fresh)
            ++gamma_count_;
        return it->second;
    };
    for (int i = 0; i < n; ++i) {
        gamma_index_[i][i] = index_of({b.net_class[i], -1, 0});
        std::map<int, int> seen;
        for (int j : b.neighbors[i]) {
            const int cj = b.net_class[j];
            gamma_index_[i][j] = index_of({b.net_class[i], cj, seen[cj]++});
        }
    }
    gamma_offset_ = size_;
    size_ += gamma_count_;
}

Vec ParameterMap::gather(const CertificateBundle& b) const
{
    Vec p(size_);
    for (const auto& c : classes_) {
        const int rep = c.members.front();
        p.segment(c.phi_offset, c.phi_size) = b.lyapunov[rep].phi().flatten();
        p.segment(c.r_offset, c.r_size) = b.lyapunov[rep].r().reshaped();
        if (c.pi_offset >= 0) {
            p.segment(c.pi_offset, c.pi_size) = b.controllers[rep]->net.flatten();
            p.segment(c.k_offset, c.k_size) = b.controllers[rep]->linear.reshaped();
        }
    }
    const int n = b.n_agents();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (gamma_index_[i][j] >= 0)
                p[gamma_offset_ + gamma_index_[i][j]] = b.coupling.gamma_pure(i, j);
    return p;
}

void ParameterMap::scatter(const Vec& p, CertificateBundle& b) const
{
    if (p.size() != size_)
        throw StructuralError("parameter vector has the wrong length");
    for (const auto& c : classes_) {
        for (int i : c.members) {
            LyapunovNet& v = b.lyapunov[i];
            v.phi().unflatten(p.segment(c.phi_offset, c.phi_size));
            v.r() = p.segment(c.r_offset, c.r_size).reshaped(v.r().rows(), v.r().cols());
            v.refresh();
            if (c.pi_offset >= 0) {
                Controller& ctl = *b.controllers[i];
                ctl.net.unflatten(p.segment(c.pi_offset, c.pi_size));
                ctl.linear = p.segment(c.k_offset, c.k_size).reshaped(ctl.linear.rows(), ctl.linear.cols());
            }
        }
    }
    const int n = b.n_agents();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (gamma_index_[i][j] >= 0)
                b.coupling.gamma_pure(i, j) = p[gamma_offset_ + gamma_index_[i][j]];
    b.realize();
}

Vec ParameterMap::gather_gradient(const BundleGradient& g) const
{
    Vec out = Vec::Zero(size_);
    for (const auto& c : classes_) {
        for (int i : c.members) {
            out.segment(c.phi_offset, c.phi_size) += g.lyapunov[i].phi.flatten();
            out.segment(c.r_offset, c.r_size) += g.lyapunov[i].r.reshaped();
            if (c.pi_offset >= 0) {
                out.segment(c.pi_offset, c.pi_size) += g.pi[i]->flatten();
                out.segment(c.k_offset, c.k_size) += g.pi_linear[i].reshaped();
            }
        }
    }
    const int n = static_cast<int>(gamma_index_.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (gamma_index_[i][j] >= 0)
                out[gamma_offset_ + gamma_index_[i][j]] += g.gamma_pure(i, j);
    return out;
}

// ---------------------------------------------------------------- data

std::vector<Vec> augment_counterexamples(const Vec& point, const HyperBox& region, const TrainingConfig& config,
                                         std::mt19937_64& rng)
{
    if (point.size() != region.dim())
        throw StructuralError("counterexample does not match its region");
    std::vector<Vec> out{region.clip(point)};
    const Vec sigma = 0.5 * region.width() * config.cex_sigma_fraction;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < config.cex_variants; ++k) {
        Vec p = point;
        for (int d = 0; d < p.size(); ++d)
            p[d] += sigma[d] * normal(rng);
        out.push_back(region.clip(p));
    }
    return out;
}

std::size_t Dataset::size() const
{
    std::size_t s = 0;
    for (const auto* part : {&train, &validation})
        for (const auto& a : *part)
            s += a.states.size() + a.locals.size();
    return s;
}

namespace {

Vec uniform_in(const HyperBox& box, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec p(box.dim());
    for (int d = 0; d < box.dim(); ++d)
        p[d] = box.lower()[d] + u(rng) * (box.upper()[d] - box.lower()[d]);
    return p;
}

}  // namespace

Dataset sample_dataset(const CertificateBundle& b, const TrainingConfig& config)
{
    const int n = b.n_agents();
    std::mt19937_64 rng(config.seed ^ 0x5eed5eedULL);
    const long long per_agent = std::max<long long>(1, config.dataset_size / n);
    const long long n_train = std::max<long long>(1, std::llround(config.train_fraction * per_agent));
    Dataset data;
    data.train.resize(n);
    data.validation.resize(n);
    for (int i = 0; i < n; ++i) {
        const HyperBox z = b.local_domain(i);
        for (long long k = 0; k < per_agent; ++k) {
            const Vec p = uniform_in(z, rng);
            AgentBatch& dst = k < n_train ? data.train[i] : data.validation[i];
            dst.locals.push_back(p);
            dst.states.push_back(p.head(b.state_dims[i]));
        }
    }
    return data;
}

// ---------------------------------------------------------------- training

LossBreakdown train_epochs(CertificateBundle& b, const Scenario& s, Dataset& data, const TrainingConfig& config,
                           int epochs, std::mt19937_64& rng, Adam& adam, const ParameterMap& map)
{
    const int n = b.n_agents();
    const PolicyReference ref{&s};
    Vec params = map.gather(b);
    LossBreakdown last;
    const std::size_t B = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        adam.set_learning_rate(config.learning_rate * std::pow(config.decay, epoch / config.decay_every));
        std::vector<std::vector<std::size_t>> sp(n), lp(n);
        std::size_t longest = 0;
        for (int i = 0; i < n; ++i) {
            sp[i].resize(data.train[i].states.size());
            lp[i].resize(data.train[i].locals.size());
            std::iota(sp[i].begin(), sp[i].end(), 0);
            std::iota(lp[i].begin(), lp[i].end(), 0);
            std::shuffle(sp[i].begin(), sp[i].end(), rng);
            std::shuffle(lp[i].begin(), lp[i].end(), rng);
            longest = std::max({longest, sp[i].size(), lp[i].size()});
        }
        const std::size_t batches = std::max<std::size_t>(1, (longest + B - 1) / B);
        LossBreakdown sum;
        for (std::size_t k = 0; k < batches; ++k) {
            Batch batch(n);
            for (int i = 0; i < n; ++i) {
                for (std::size_t t = 0; t < B && !sp[i].empty(); ++t)
                    batch[i].states.push_back(data.train[i].states[sp[i][(k * B + t) % sp[i].size()]]);
                for (std::size_t t = 0; t < B && !lp[i].empty(); ++t)
                    batch[i].locals.push_back(data.train[i].locals[lp[i][(k * B + t) % lp[i].size()]]);
            }
            BundleGradient g = BundleGradient::zeros(b);
            const LossBreakdown l = total_loss(b, ref, batch, config, &g);
            sum.positivity += l.positivity;
            sum.decrement += l.decrement;
            sum.imitation += l.imitation;
            sum.total += l.total;
            adam.step(params, map.gather_gradient(g));
            map.scatter(params, b);
            if (config.convex) {
                for (auto& v : b.lyapunov) {
                    v.phi() = icnn_project(v.phi());
                    v.refresh();
                }
                params = map.gather(b);
            }
        }
        const double inv = 1.0 / static_cast<double>(batches);
        last = {sum.positivity * inv, sum.decrement * inv, sum.imitation * inv, sum.total * inv};
    }
    return last;
}

CegisResult cegis(const Scenario& s, CertificateBundle bundle, const TrainingConfig& config, std::ostream* log)
{
    config.validate();
    std::mt19937_64 rng(config.seed);
    Dataset data = sample_dataset(bundle, config);
    const ParameterMap map(bundle);
    Adam adam(map.size(), config.learning_rate);
    const PolicyReference ref{&s};
    CegisResult res;
    if (log)
        *log << cegis_csv_header() << '\n';

    for (int round = 0;; ++round) {
        update_margins(bundle, s, config);
        const auto t0 = std::chrono::steady_clock::now();
        SystemVerification ver = verify_system(bundle, config.budget, nullptr, config.threads);
        RoundRecord rec;
        rec.round = round;
        rec.verify_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.counterexamples = static_cast<int>(ver.counterexamples.size());
        rec.loss = total_loss(bundle, ref, data.validation, config);
        rec.dataset_size = data.size();
        res.rounds.push_back(rec);
        if (log) {
            *log << rec.round << ',' << rec.loss.positivity << ',' << rec.loss.decrement << ',' << rec.loss.imitation
                 << ',' << rec.loss.total << ',' << rec.counterexamples << ',' << rec.verify_seconds << ','
                 << rec.dataset_size << '\n';
            log->flush();
        }
        res.last_verification = std::move(ver);
        if (res.last_verification.verified) {
            res.verified = true;
            break;
        }
        if (round >= config.max_rounds)
            break;
        for (const auto& cex : res.last_verification.counterexamples) {
            const int i = cex.agent;
            if (cex.kind == Condition::Decrement) {
                for (Vec& p : augment_counterexamples(cex.point, bundle.local_domain(i), config, rng))
                    data.train[i].locals.push_back(std::move(p));
            } else {
                for (Vec& p : augment_counterexamples(cex.point, bundle.state_regions[i], config, rng))
                    data.train[i].states.push_back(std::move(p));
            }
        }
        train_epochs(bundle, s, data, config, config.epochs_per_round, rng, adam, map);
        ++res.training_rounds;
    }
    bundle.verified = res.verified;
    res.bundle = std::move(bundle);
    return res;
}

}  // namespace siss
