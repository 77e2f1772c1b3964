#include "siss/certificate.hpp"

#include <cmath>

namespace siss {

using nlohmann::json;

void ClassKEnvelope::validate() const
{
    if (!(c1 > 0.0) || !(c2 > c1))
        throw ConfigError("class-K envelope needs 0 < c1 < c2");
}

// ---------------------------------------------------------------- Lyapunov net

LyapunovNet::LyapunovNet(MlpNetwork phi, Mat r) : phi_(std::move(phi)), r_(std::move(r))
{
    if (phi_.output_dim() != 1)
        throw StructuralError("Lyapunov network must have a scalar output");
    if (r_.size() == 0)
        r_ = Mat::Zero(0, phi_.input_dim());
    if (r_.cols() != phi_.input_dim())
        throw StructuralError("Lyapunov polyhedral term has the wrong width");
    refresh();
}

void LyapunovNet::refresh() { equilibrium_value_ = phi_.forward(Vec::Zero(phi_.input_dim()))[0]; }

double LyapunovNet::value(const Vec& x) const
{
    if (x.size() != dim())
        throw StructuralError("Lyapunov input has dimension " + std::to_string(x.size()) + ", expected " +
                              std::to_string(dim()));
    double v = phi_.forward(x)[0] - equilibrium_value_;
    if (r_.rows() > 0)
        v += (r_ * x).cwiseAbs().sum();
    return v;
}

double LyapunovNet::lipschitz_bound() const
{
    double L = lipschitz_upper_bound(phi_, NormKind::Two);
    for (int k = 0; k < r_.rows(); ++k)
        L += r_.row(k).norm();
    return L;
}

json LyapunovNet::to_json() const
{
    return {{"phi", phi_.to_json()}, {"r", mat_to_json(r_)}, {"equilibrium_value", equilibrium_value_}};
}

LyapunovNet LyapunovNet::from_json(const json& j)
{
    MlpNetwork phi = MlpNetwork::from_json(j.at("phi"));
    Mat r = mat_from_json(j.at("r"));
    if (r.rows() == 0)
        r = Mat::Zero(0, phi.input_dim());
    LyapunovNet v(std::move(phi), std::move(r));
    return v;
}

LyapunovGradient zero_gradient(const LyapunovNet& v)
{
    return {v.phi().zero_gradient(), Mat::Zero(v.r().rows(), v.r().cols()), 0.0};
}

Vec accumulate_gradient(const LyapunovNet& v, const Vec& x, double weight, LyapunovGradient& g)
{
    MlpNetwork::Trace t;
    v.phi().forward(x, t);
    Vec dx = v.phi().backward(t, Vec::Constant(1, weight), &g.phi);
    g.zero_weight += weight;
    if (v.r().rows() > 0) {
        const Vec rx = v.r() * x;
        const Vec sgn = rx.unaryExpr([](double s) { return s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0); });
        g.r.noalias() += weight * sgn * x.transpose();
        dx += weight * v.r().transpose() * sgn;
    }
    return dx;
}

void finish_gradient(const LyapunovNet& v, LyapunovGradient& g)
{
    if (g.zero_weight == 0.0)
        return;
    MlpNetwork::Trace t;
    v.phi().forward(Vec::Zero(v.dim()), t);
    v.phi().backward(t, Vec::Constant(1, -g.zero_weight), &g.phi);
    g.zero_weight = 0.0;
}

// ---------------------------------------------------------------- coupling

RealizedCoupling realize_coupling(const CouplingMatrix& raw)
{
    const int n = static_cast<int>(raw.gamma_pure.rows());
    if (raw.gamma_pure.cols() != n || static_cast<int>(raw.mask.size()) != n)
        throw StructuralError("coupling matrix and mask sizes differ");
    if (!(raw.epsilon_sg > 0.0 && raw.epsilon_sg < 1.0))
        throw ConfigError("small-gain slack must lie in (0, 1)");
    RealizedCoupling out{Mat::Zero(n, n), std::vector<bool>(n, false)};
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            const double p = raw.mask[i][j] ? std::max(0.0, raw.gamma_pure(i, j)) : 0.0;
            out.gamma(i, j) = p;
            s += p;
        }
        if (s > 0.0)
            out.gamma.row(i) *= (1.0 - raw.epsilon_sg) / s;
        else
            out.flagged[i] = true;
    }
    return out;
}

Mat realize_coupling_gradient(const CouplingMatrix& raw, const Mat& upstream)
{
    const int n = static_cast<int>(raw.gamma_pure.rows());
    Mat g = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        Vec p(n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            p[j] = raw.mask[i][j] ? std::max(0.0, raw.gamma_pure(i, j)) : 0.0;
            s += p[j];
        }
        if (s <= 0.0)
            continue;
        const double k = 1.0 - raw.epsilon_sg;
        const double mean = upstream.row(i).dot(p) / s;
        for (int j = 0; j < n; ++j)
            if (raw.mask[i][j] && raw.gamma_pure(i, j) > 0.0)
                g(i, j) = k / s * (upstream(i, j) - mean);
    }
    return g;
}

// ---------------------------------------------------------------- controller

Vec Controller::raw(const Vec& y) const
{
    if (y.size() != input_dim())
        throw StructuralError("controller input has the wrong dimension");
    Vec u = linear * y;
    if (!net.empty())
        u += net.forward(y);
    return u;
}

Vec Controller::act(const Vec& y) const { return clamp(raw(y), lo, hi); }

double Controller::lipschitz_bound() const
{
    double L = spectral_norm(linear);
    if (!net.empty())
        L += lipschitz_upper_bound(net, NormKind::Two);
    return L;
}

json Controller::to_json() const
{
    return {{"net", net.to_json()},
            {"linear", mat_to_json(linear)},
            {"input_dim", input_dim()},
            {"lo", vec_to_json(lo)},
            {"hi", vec_to_json(hi)}};
}

Controller Controller::from_json(const json& j)
{
    Controller c;
    c.net = MlpNetwork::from_json(j.at("net"));
    c.linear = mat_from_json(j.at("linear"));
    c.lo = vec_from_json(j.at("lo"));
    c.hi = vec_from_json(j.at("hi"));
    if (c.linear.rows() == 0)
        c.linear = Mat::Zero(c.lo.size(), j.value("input_dim", 0));
    return c;
}

// ---------------------------------------------------------------- bundle

std::string to_string(Condition c)
{
    switch (c) {
    case Condition::PositivityLower: return "positivity_lower";
    case Condition::PositivityUpper: return "positivity_upper";
    case Condition::Decrement: return "decrement";
    }
    return "unknown";
}

bool AgentStatus::verified() const
{
    return positivity_lower == "verified" && positivity_upper == "verified" && decrement == "verified";
}

bool CertificateBundle::controlled() const
{
    for (const auto& c : controllers)
        if (c)
            return true;
    return false;
}

void CertificateBundle::realize()
{
    const auto r = realize_coupling(coupling);
    gamma = r.gamma;
    gamma_flagged = r.flagged;
}

double CertificateBundle::max_row_sum() const
{
    double m = 0.0;
    for (int i = 0; i < gamma.rows(); ++i)
        m = std::max(m, gamma.row(i).sum());
    return m;
}

HyperBox CertificateBundle::local_domain(int i) const
{
    HyperBox z = state_regions.at(i);
    for (int j : neighbors.at(i))
        z = z.product(state_regions.at(j));
    return z.product(disturbance_regions.at(i));
}

json CertificateBundle::to_json() const
{
    json j;
    j["format"] = "siss-certificate-bundle/1";
    j["config_hash"] = config_hash;
    j["neighbors"] = neighbors;
    j["state_dims"] = state_dims;
    j["disturbance_dims"] = disturbance_dims;
    json regions = json::array();
    for (int i = 0; i < n_agents(); ++i)
        regions.push_back({{"state_lower", vec_to_json(state_regions[i].lower())},
                           {"state_upper", vec_to_json(state_regions[i].upper())},
                           {"disturbance_lower", vec_to_json(disturbance_regions[i].lower())},
                           {"disturbance_upper", vec_to_json(disturbance_regions[i].upper())}});
    j["regions"] = regions;
    json nets = json::array();
    for (const auto& v : lyapunov)
        nets.push_back(v.to_json());
    j["lyapunov"] = nets;
    j["net_class"] = net_class;
    j["coupling"] = {{"gamma_pure", mat_to_json(coupling.gamma_pure)},
                     {"epsilon_sg", coupling.epsilon_sg},
                     {"mask", coupling.mask},
                     {"gamma", mat_to_json(gamma)},
                     {"flagged", gamma_flagged}};
    j["psi"] = psi;
    j["envelope"] = {{"c1", envelope.c1}, {"c2", envelope.c2}};
    json margins_j = json::array();
    for (const auto& m : margins)
        margins_j.push_back(m.to_json());
    j["margins"] = margins_j;
    j["core_fraction"] = core_fraction;
    json ctrl = json::array();
    for (const auto& c : controllers)
        ctrl.push_back(c ? c->to_json() : json(nullptr));
    j["controllers"] = ctrl;
    json sur = json::array();
    for (const auto& s : surrogates)
        sur.push_back(s.to_json());
    j["surrogates"] = sur;
    j["surrogate_of"] = surrogate_of;
    json st = json::array();
    for (const auto& s : status)
        st.push_back({{"positivity_lower", s.positivity_lower},
                      {"positivity_upper", s.positivity_upper},
                      {"decrement", s.decrement}});
    j["status"] = st;
    j["verified"] = verified;
    return j;
}

CertificateBundle CertificateBundle::from_json(const json& j)
{
    CertificateBundle b;
    b.config_hash = j.value("config_hash", std::string());
    b.neighbors = j.at("neighbors").get<std::vector<std::vector<int>>>();
    b.state_dims = j.at("state_dims").get<std::vector<int>>();
    b.disturbance_dims = j.at("disturbance_dims").get<std::vector<int>>();
    for (const auto& r : j.at("regions")) {
        b.state_regions.emplace_back(vec_from_json(r.at("state_lower")), vec_from_json(r.at("state_upper")));
        b.disturbance_regions.emplace_back(vec_from_json(r.at("disturbance_lower")),
                                           vec_from_json(r.at("disturbance_upper")));
    }
    for (const auto& v : j.at("lyapunov"))
        b.lyapunov.push_back(LyapunovNet::from_json(v));
    b.net_class = j.at("net_class").get<std::vector<int>>();
    const json& c = j.at("coupling");
    b.coupling.gamma_pure = mat_from_json(c.at("gamma_pure"));
    b.coupling.epsilon_sg = c.at("epsilon_sg").get<double>();
    b.coupling.mask = c.at("mask").get<std::vector<std::vector<int>>>();
    b.gamma = mat_from_json(c.at("gamma"));
    b.gamma_flagged = c.at("flagged").get<std::vector<bool>>();
    b.psi = j.at("psi").get<double>();
    b.envelope.c1 = j.at("envelope").at("c1").get<double>();
    b.envelope.c2 = j.at("envelope").at("c2").get<double>();
    for (const auto& m : j.at("margins"))
        b.margins.push_back(RobustMargin::from_json(m));
    b.core_fraction = j.value("core_fraction", 0.0);
    for (const auto& ctl : j.at("controllers"))
        b.controllers.push_back(ctl.is_null() ? std::nullopt : std::optional<Controller>(Controller::from_json(ctl)));
    for (const auto& s : j.at("surrogates"))
        b.surrogates.push_back(SurrogateModel::from_json(s));
    b.surrogate_of = j.at("surrogate_of").get<std::vector<int>>();
    for (const auto& s : j.at("status"))
        b.status.push_back({s.at("positivity_lower").get<std::string>(), s.at("positivity_upper").get<std::string>(),
                            s.at("decrement").get<std::string>()});
    b.verified = j.value("verified", false);

    const int n = b.n_agents();
    if (static_cast<int>(b.lyapunov.size()) != n || static_cast<int>(b.margins.size()) != n ||
        static_cast<int>(b.controllers.size()) != n || static_cast<int>(b.surrogate_of.size()) != n ||
        b.gamma.rows() != n || b.gamma.cols() != n)
        throw StructuralError("certificate bundle has inconsistent per-agent arrays");
    for (int s : b.surrogate_of)
        if (s < 0 || s >= static_cast<int>(b.surrogates.size()))
            throw StructuralError("certificate bundle references a missing surrogate");
    return b;
}

std::string CertificateBundle::digest() const { return fnv1a_hex(to_json().dump()); }

// ---------------------------------------------------------------- residuals

double lyapunov_value(const LyapunovNet& v, const Vec& x) { return v.value(x); }

std::pair<double, double> positivity_residuals(const LyapunovNet& v, const ClassKEnvelope& env, const Vec& x)
{
    const double V = v.value(x);
    const double n = x.norm();
    return {env.c1 * n - V, V - env.c2 * n};
}

double decrement_residual(const CertificateBundle& b, int i, const Vec& x_i, const std::vector<Vec>& nbrs,
                          const Vec& d, const Vec& next, double delta)
{
    const auto& E = b.neighbors.at(i);
    if (nbrs.size() != E.size())
        throw StructuralError("decrement_residual: expected " + std::to_string(E.size()) + " neighbor states");
    double r = b.lyapunov[i].value(next) - b.gamma(i, i) * b.lyapunov[i].value(x_i);
    for (std::size_t k = 0; k < E.size(); ++k)
        r -= b.gamma(i, E[k]) * b.lyapunov[E[k]].value(nbrs[k]);
    return r - b.psi * d.norm() + delta;
}

LocalQuery make_query(const CertificateBundle& b, int agent, Condition condition)
{
    LocalQuery q;
    q.agent = agent;
    q.condition = condition;
    q.bundle = &b;
    q.state_dim = b.state_dims.at(agent);
    int off = q.state_dim;
    for (int j : b.neighbors.at(agent)) {
        q.neighbor_offsets.push_back(off);
        q.neighbor_dims.push_back(b.state_dims.at(j));
        off += b.state_dims.at(j);
    }
    q.disturbance_offset = off;
    q.disturbance_dim = b.disturbance_dims.at(agent);
    if (condition == Condition::Decrement) {
        q.domain = b.local_domain(agent);
        q.delta = b.margins.at(agent).delta;
        if (b.core_fraction > 0.0) {
            const Vec c = q.domain.center();
            const Vec h = 0.5 * b.core_fraction * q.domain.width();
            q.core = HyperBox(c - h, c + h);
        }
    } else {
        q.domain = b.state_regions.at(agent);
    }
    return q;
}

const LyapunovNet& LocalQuery::v_self() const { return bundle->lyapunov[agent]; }
const LyapunovNet& LocalQuery::v_neighbor(int k) const { return bundle->lyapunov[bundle->neighbors[agent][k]]; }
double LocalQuery::gamma_self() const { return bundle->gamma(agent, agent); }
double LocalQuery::gamma_neighbor(int k) const { return bundle->gamma(agent, bundle->neighbors[agent][k]); }
const SurrogateModel& LocalQuery::surrogate() const { return bundle->surrogates[bundle->surrogate_of[agent]]; }
const Controller* LocalQuery::controller() const
{
    const auto& c = bundle->controllers[agent];
    return c ? &*c : nullptr;
}

double LocalQuery::delta_at(const Vec& z) const
{
    if (core && core->contains(z))
        return 0.0;
    return delta;
}

Vec LocalQuery::next_state(const Vec& z) const
{
    const auto& s = surrogate().net;
    if (const Controller* c = controller()) {
        const Vec y = z.head(disturbance_offset);
        Vec v(z.size() + c->output_dim());
        v << z, c->act(y);
        return s.predict(v);
    }
    return s.predict(z);
}

double LocalQuery::residual(const Vec& z) const
{
    if (z.size() != domain.dim())
        throw StructuralError("query point has the wrong dimension");
    switch (condition) {
    case Condition::PositivityLower: return positivity_residuals(v_self(), bundle->envelope, z).first;
    case Condition::PositivityUpper: return positivity_residuals(v_self(), bundle->envelope, z).second;
    case Condition::Decrement: {
        std::vector<Vec> nbrs;
        for (std::size_t k = 0; k < neighbor_offsets.size(); ++k)
            nbrs.push_back(z.segment(neighbor_offsets[k], neighbor_dims[k]));
        return decrement_residual(*bundle, agent, z.head(state_dim), nbrs,
                                  z.segment(disturbance_offset, disturbance_dim), next_state(z), delta_at(z));
    }
    }
    return 0.0;
}

std::string LocalQuery::digest() const
{
    json j;
    j["condition"] = to_string(condition);
    j["lower"] = vec_to_json(domain.lower());
    j["upper"] = vec_to_json(domain.upper());
    j["v"] = v_self().to_json();
    j["env"] = {bundle->envelope.c1, bundle->envelope.c2};
    if (condition == Condition::Decrement) {
        json nb = json::array();
        for (std::size_t k = 0; k < neighbor_offsets.size(); ++k)
            nb.push_back({{"v", v_neighbor(static_cast<int>(k)).to_json()},
                          {"gamma", gamma_neighbor(static_cast<int>(k))}});
        j["neighbors"] = nb;
        j["gamma_self"] = gamma_self();
        j["psi"] = bundle->psi;
        j["delta"] = delta;
        j["core"] = bundle->core_fraction;
        j["surrogate"] = surrogate().net.to_json();
        j["controller"] = controller() ? controller()->to_json() : json(nullptr);
    }
    return fnv1a_hex(j.dump());
}

}  // namespace siss
