#include "siss/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace siss {

using nlohmann::json;

// ---------------------------------------------------------------- SystemGraph

SystemGraph SystemGraph::from_adjacency(const std::vector<std::vector<int>>& adjacency)
{
    const std::size_t n = adjacency.size();
    SystemGraph g;
    for (std::size_t i = 0; i < n; ++i) {
        if (adjacency[i].size() != n)
            throw StructuralError("adjacency matrix is not square");
        for (std::size_t j = 0; j < n; ++j) {
            const int v = adjacency[i][j];
            if (v != 0 && v != 1)
                throw StructuralError("adjacency matrix entries must be 0 or 1");
            if (i == j && v != 0)
                throw StructuralError("adjacency matrix must have a zero diagonal");
        }
    }
    g.adjacency_ = adjacency;
    g.neighbors_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (adjacency[i][j])
                g.neighbors_[i].push_back(static_cast<AgentId>(j));
    return g;
}

SystemGraph SystemGraph::chain(int n)
{
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (int i = 1; i < n; ++i)
        a[i][i - 1] = 1;
    return from_adjacency(a);
}

SystemGraph SystemGraph::ring(int n)
{
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (int i = 0; i < n; ++i)
        if (n > 1)
            a[i][(i + n - 1) % n] = 1;
    return from_adjacency(a);
}

SystemGraph SystemGraph::star(int leaves)
{
    const int n = leaves + 1;
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (int i = 1; i < n; ++i)
        a[i][0] = 1;
    return from_adjacency(a);
}

std::vector<std::vector<int>> SystemGraph::mask_with_self() const
{
    auto m = adjacency_;
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i][i] = 1;
    return m;
}

SystemGraph SystemGraph::with_appended(const std::vector<AgentId>& deps) const
{
    const int n = size();
    std::vector<std::vector<int>> a(n + 1, std::vector<int>(n + 1, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a[i][j] = adjacency_[i][j];
    for (AgentId j : deps) {
        if (j < 0 || j >= n)
            throw StructuralError("appended agent depends on unknown agent");
        a[n][j] = 1;
    }
    return from_adjacency(a);
}

// ---------------------------------------------------------------- parameters

std::string to_string(ScenarioKind kind)
{
    switch (kind) {
    case ScenarioKind::Platoon: return "platoon";
    case ScenarioKind::Drone: return "drone";
    case ScenarioKind::Microgrid: return "microgrid";
    case ScenarioKind::Linear: return "linear";
    }
    return "unknown";
}

double FvdParams::optimal_velocity(double spacing) const
{
    return 0.5 * v_max * (std::tanh(spacing - s_c) + std::tanh(s_c));
}

double FvdParams::acceleration(double spacing, double velocity, double pred_velocity) const
{
    return kappa * (optimal_velocity(spacing) - velocity) + lambda * (pred_velocity - velocity);
}

double MicrogridParams::alpha(AgentId i, AgentId j) const
{
    return std::abs(susceptance(i, j)) * voltage.at(i) * voltage.at(j);
}

int Scenario::state_dim(AgentId i) const
{
    switch (kind) {
    case ScenarioKind::Platoon: return 2;
    case ScenarioKind::Drone: return 6;
    case ScenarioKind::Microgrid: return 3;
    case ScenarioKind::Linear: return static_cast<int>(linear.at(role(i)).a_self.rows());
    }
    return 0;
}

int Scenario::input_dim(AgentId i) const
{
    switch (kind) {
    case ScenarioKind::Platoon: return role(i) == "cav" ? 1 : 0;
    case ScenarioKind::Drone: return 3;
    case ScenarioKind::Microgrid: return 1;
    case ScenarioKind::Linear: return static_cast<int>(linear.at(role(i)).b_u.cols());
    }
    return 0;
}

int Scenario::disturbance_dim(AgentId i) const
{
    switch (kind) {
    case ScenarioKind::Platoon: return 1;
    case ScenarioKind::Drone: return 3;
    case ScenarioKind::Microgrid: return 1;
    case ScenarioKind::Linear: return static_cast<int>(linear.at(role(i)).b_d.cols());
    }
    return 0;
}

double Scenario::lipschitz_of(AgentId i) const
{
    auto it = lipschitz_true.find(role(i));
    if (it == lipschitz_true.end())
        throw ConfigError("no true-dynamics Lipschitz constant configured for role '" + role(i) + "'");
    return it->second;
}

// ---------------------------------------------------------------- parsing

namespace {

Vec cfg_vec(const json& j)
{
    if (j.is_number())
        return Vec::Constant(1, j.get<double>());
    Vec v(static_cast<int>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k)
        v[static_cast<int>(k)] = j[k].get<double>();
    return v;
}

Mat cfg_mat(const json& j, int default_rows = 0)
{
    if (j.is_null())
        return Mat::Zero(default_rows, 0);
    if (j.is_number())
        return Mat::Constant(1, 1, j.get<double>());
    const int rows = static_cast<int>(j.size());
    const int cols = rows ? static_cast<int>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw ConfigError("ragged matrix in scenario config");
        for (int c = 0; c < cols; ++c)
            m(r, c) = j[r][c].get<double>();
    }
    return m;
}

std::vector<double> per_node(const json& j, int n, const char* name)
{
    if (j.is_number())
        return std::vector<double>(n, j.get<double>());
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ConfigError(std::string("microgrid parameter '") + name + "' must be a scalar or one value per node");
    return j.get<std::vector<double>>();
}

double solve_fvd_equilibrium(const FvdParams& p)
{
    if (!(p.v_eq > 0.0 && p.v_eq < p.v_max))
        throw ConfigError("FVD equilibrium velocity must lie in (0, v_max)");
    double lo = p.s_c - 60.0;
    double hi = p.s_c + 60.0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (p.optimal_velocity(mid) < p.v_eq)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

ScenarioKind parse_kind(const std::string& k)
{
    if (k == "platoon") return ScenarioKind::Platoon;
    if (k == "drone") return ScenarioKind::Drone;
    if (k == "microgrid") return ScenarioKind::Microgrid;
    if (k == "linear") return ScenarioKind::Linear;
    throw ConfigError("unknown scenario kind '" + k + "'");
}

}  // namespace

Scenario parse_scenario(const json& config)
{
    Scenario s;
    s.raw = config;
    s.hash = fnv1a_hex(config.dump());
    s.kind = parse_kind(config.at("kind").get<std::string>());
    s.T = config.at("T").get<double>();
    if (!(s.T > 0.0))
        throw ConfigError("sampling period T must be positive");
    s.roles = config.at("roles").get<std::vector<std::string>>();
    const int n = static_cast<int>(s.roles.size());
    if (n == 0)
        throw ConfigError("scenario has no agents");

    if (config.contains("adjacency")) {
        s.graph = SystemGraph::from_adjacency(config["adjacency"].get<std::vector<std::vector<int>>>());
        if (s.graph.size() != n)
            throw ConfigError("adjacency size does not match the number of roles");
    } else {
        const std::string topo = config.value("topology", std::string("chain"));
        if (topo == "chain")
            s.graph = SystemGraph::chain(n);
        else if (topo == "ring")
            s.graph = SystemGraph::ring(n);
        else if (topo == "line") {
            std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
            for (int i = 0; i + 1 < n; ++i)
                a[i][i + 1] = a[i + 1][i] = 1;
            s.graph = SystemGraph::from_adjacency(a);
        } else
            throw ConfigError("unknown topology '" + topo + "'");
    }

    const json params = config.value("params", json::object());
    switch (s.kind) {
    case ScenarioKind::Platoon: {
        s.fvd.v_max = params.value("v_max", s.fvd.v_max);
        s.fvd.s_c = params.value("s_c", s.fvd.s_c);
        s.fvd.kappa = params.value("kappa", s.fvd.kappa);
        s.fvd.lambda = params.value("lambda", s.fvd.lambda);
        s.fvd.v_eq = params.value("v_eq", s.fvd.v_eq);
        s.fvd.s_eq = solve_fvd_equilibrium(s.fvd);
        for (const auto& r : s.roles)
            if (r != "cav" && r != "hdv")
                throw ConfigError("platoon roles must be 'cav' or 'hdv'");
        break;
    }
    case ScenarioKind::Drone:
        s.drone.drag = params.value("drag", s.drone.drag);
        break;
    case ScenarioKind::Microgrid: {
        s.microgrid.tau = per_node(params.at("tau"), n, "tau");
        s.microgrid.eta = per_node(params.at("eta"), n, "eta");
        s.microgrid.voltage = per_node(params.value("voltage", json(1.0)), n, "voltage");
        if (params.contains("susceptance")) {
            s.microgrid.susceptance = cfg_mat(params["susceptance"]);
        } else {
            const double b = params.at("line_susceptance").get<double>();
            s.microgrid.susceptance = Mat::Zero(n, n);
            for (int i = 0; i < n; ++i)
                for (AgentId j : s.graph.neighbors(i))
                    s.microgrid.susceptance(i, j) = b;
        }
        if (s.microgrid.susceptance.rows() != n || s.microgrid.susceptance.cols() != n)
            throw ConfigError("susceptance matrix has the wrong size");
        for (int i = 0; i < n; ++i) {
            if (!(s.microgrid.tau[i] > 0.0))
                throw ConfigError("microgrid time constants must be positive");
            if (!(s.microgrid.eta[i] > 0.0))
                throw ConfigError("microgrid droop gains must be positive");
        }
        break;
    }
    case ScenarioKind::Linear: {
        for (const auto& [role, dyn] : params.at("roles").items()) {
            LinearDynamics d;
            d.a_self = cfg_mat(dyn.at("a_self"));
            const int nx = static_cast<int>(d.a_self.rows());
            if (d.a_self.cols() != nx)
                throw ConfigError("a_self must be square");
            d.a_nbr = dyn.contains("a_nbr") ? cfg_mat(dyn["a_nbr"]) : Mat::Zero(nx, nx);
            d.b_u = dyn.contains("b_u") ? cfg_mat(dyn["b_u"]) : Mat::Zero(nx, 0);
            d.b_d = dyn.contains("b_d") ? cfg_mat(dyn["b_d"]) : Mat::Zero(nx, 0);
            s.linear[role] = d;
        }
        for (const auto& r : s.roles)
            if (!s.linear.count(r))
                throw ConfigError("no linear dynamics for role '" + r + "'");
        break;
    }
    }

    const json regions = config.at("regions");
    s.regions.state_halfwidths = cfg_vec(regions.at("state_halfwidths"));
    s.regions.disturbance_halfwidths = cfg_vec(regions.at("disturbance_halfwidths"));
    if (regions.contains("disturbed_agents"))
        s.regions.disturbed_agents = regions["disturbed_agents"].get<std::vector<AgentId>>();
    if ((s.regions.state_halfwidths.array() <= 0.0).any())
        throw ConfigError("state half-widths must be positive");
    if ((s.regions.disturbance_halfwidths.array() < 0.0).any())
        throw ConfigError("disturbance half-widths must be non-negative");
    for (int i = 0; i < n; ++i) {
        if (s.regions.state_halfwidths.size() != s.state_dim(i))
            throw ConfigError("state_halfwidths length does not match the state dimension");
        if (s.regions.disturbance_halfwidths.size() != s.disturbance_dim(i))
            throw ConfigError("disturbance_halfwidths length does not match the disturbance dimension");
    }

    if (config.contains("grid")) {
        const json g = config["grid"];
        s.grid.state_steps = cfg_vec(g.at("state_steps"));
        s.grid.disturbance_steps = cfg_vec(g.at("disturbance_steps"));
        s.grid.max_points = g.value("max_points", s.grid.max_points);
    } else {
        s.grid.state_steps = s.regions.state_halfwidths / 5.0;
        s.grid.disturbance_steps = (s.regions.disturbance_halfwidths / 5.0).cwiseMax(1e-3);
    }

    if (config.contains("lipschitz_true"))
        for (const auto& [role, v] : config["lipschitz_true"].items())
            s.lipschitz_true[role] = v.get<double>();
    for (const auto& [role, v] : s.lipschitz_true)
        if (v < 0.0)
            throw ConfigError("Lipschitz constants must be non-negative");

    if (config.contains("reference_policy")) {
        for (const auto& [role, p] : config["reference_policy"].items()) {
            ReferenceGains g;
            g.gain = cfg_mat(p.at("gain"));
            g.u_min = cfg_vec(p.at("u_min"));
            g.u_max = cfg_vec(p.at("u_max"));
            if ((g.u_min.array() > g.u_max.array()).any())
                throw ConfigError("reference policy u_min exceeds u_max");
            s.reference[role] = g;
        }
    }
    for (int i = 0; i < n; ++i) {
        if (s.controlled(i)) {
            auto it = s.reference.find(s.role(i));
            if (it == s.reference.end())
                throw ConfigError("controlled role '" + s.role(i) + "' has no reference policy");
            if (it->second.gain.rows() != s.input_dim(i) || it->second.u_min.size() != s.input_dim(i))
                throw ConfigError("reference policy dimensions do not match the input dimension");
        }
    }
    return s;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open scenario file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed scenario JSON: ") + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
}

// ---------------------------------------------------------------- dynamics

LocalLayout local_layout(const Scenario& s, AgentId i)
{
    LocalLayout l;
    l.state_dim = s.state_dim(i);
    int off = l.state_dim;
    for (AgentId j : s.graph.neighbors(i)) {
        l.neighbor_offsets.push_back(off);
        l.neighbor_dims.push_back(s.state_dim(j));
        off += s.state_dim(j);
    }
    l.disturbance_offset = off;
    l.disturbance_dim = s.disturbance_dim(i);
    l.total = off + l.disturbance_dim;
    return l;
}

namespace {

void check_finite(const Vec& v, const char* what)
{
    if (!v.allFinite())
        throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

Vec local_step(const Scenario& s, AgentId i, const Vec& x, const std::vector<Vec>& nbrs, const Vec& u,
               const Vec& d)
{
    const auto& E = s.graph.neighbors(i);
    if (nbrs.size() != E.size())
        throw StructuralError("neighbor state count does not match E_i");
    if (x.size() != s.state_dim(i) || u.size() != s.input_dim(i) || d.size() != s.disturbance_dim(i))
        throw StructuralError("local_step: dimension mismatch for agent " + std::to_string(i));
    check_finite(x, "state");
    check_finite(u, "input");
    check_finite(d, "disturbance");
    for (const auto& xn : nbrs)
        check_finite(xn, "neighbor state");

    const double T = s.T;
    Vec next(x.size());
    switch (s.kind) {
    case ScenarioKind::Platoon: {
        const double v_pred = nbrs.empty() ? 0.0 : nbrs.front()[1];
        const double v_in = v_pred + d[0];
        next[0] = x[0] + T * (v_in - x[1]);
        if (s.role(i) == "cav") {
            next[1] = x[1] + T * u[0];
        } else {
            const auto& p = s.fvd;
            next[1] = x[1] + T * p.acceleration(p.s_eq + x[0], p.v_eq + x[1], p.v_eq + v_in);
        }
        break;
    }
    case ScenarioKind::Drone: {
        // Deviation from the nominal formation slot; a follower without a
        // predecessor tracks the (exogenous) leader, whose deviation is zero.
        for (int a = 0; a < 3; ++a) {
            next[a] = x[a] + T * x[3 + a];
            next[3 + a] = x[3 + a] + T * (u[a] + d[a] - s.drone.drag * x[3 + a]);
        }
        break;
    }
    case ScenarioKind::Microgrid: {
        const auto& p = s.microgrid;
        double power = 0.0;
        for (std::size_t k = 0; k < E.size(); ++k)
            power += p.alpha(i, E[k]) * std::sin(x[0] - nbrs[k][0]);
        next[0] = x[0] + T * x[1];
        next[1] = x[1] + (T / p.tau[i]) * (-x[1] - p.eta[i] * (power - d[0]) + x[2]);
        next[2] = x[2] + T * u[0];
        break;
    }
    case ScenarioKind::Linear: {
        const auto& L = s.linear.at(s.role(i));
        next = L.a_self * x;
        for (const auto& xn : nbrs)
            next += L.a_nbr * xn;
        if (u.size())
            next += L.b_u * u;
        if (d.size())
            next += L.b_d * d;
        break;
    }
    }
    check_finite(next, "next state");
    return next;
}

Vec local_step_packed(const Scenario& s, AgentId i, const Vec& z, const Vec& u)
{
    const LocalLayout l = local_layout(s, i);
    if (z.size() != l.total)
        throw StructuralError("packed local vector has the wrong length");
    std::vector<Vec> nbrs;
    for (std::size_t k = 0; k < l.neighbor_offsets.size(); ++k)
        nbrs.push_back(z.segment(l.neighbor_offsets[k], l.neighbor_dims[k]));
    return local_step(s, i, z.head(l.state_dim), nbrs, u, z.segment(l.disturbance_offset, l.disturbance_dim));
}

std::vector<Vec> step_true(const Scenario& s, const std::vector<Vec>& states, const std::vector<Vec>& inputs,
                           const std::vector<Vec>& disturbances)
{
    const int n = s.n_agents();
    if (static_cast<int>(states.size()) != n || static_cast<int>(inputs.size()) != n ||
        static_cast<int>(disturbances.size()) != n)
        throw StructuralError("step_true: every agent needs a state, input and disturbance entry");
    std::vector<Vec> next(n);
    for (int i = 0; i < n; ++i) {
        std::vector<Vec> nbrs;
        for (AgentId j : s.graph.neighbors(i))
            nbrs.push_back(states[j]);
        next[i] = local_step(s, i, states[i], nbrs, inputs[i], disturbances[i]);
    }
    return next;
}

std::vector<AgentRegions> scenario_regions(const Scenario& s)
{
    std::vector<AgentRegions> out;
    const auto& dis = s.regions.disturbed_agents;
    for (int i = 0; i < s.n_agents(); ++i) {
        const bool disturbed = dis.empty() || std::find(dis.begin(), dis.end(), i) != dis.end();
        Vec dw = disturbed ? s.regions.disturbance_halfwidths : Vec::Zero(s.disturbance_dim(i));
        out.push_back({HyperBox::symmetric(s.regions.state_halfwidths), HyperBox::symmetric(dw)});
    }
    return out;
}

HyperBox local_domain(const Scenario& s, AgentId i)
{
    const auto regions = scenario_regions(s);
    HyperBox z = regions[i].state;
    for (AgentId j : s.graph.neighbors(i))
        z = z.product(regions[j].state);
    return z.product(regions[i].disturbance);
}

Vec reference_policy(const Scenario& s, AgentId i, const Vec& input)
{
    const auto it = s.reference.find(s.role(i));
    if (it == s.reference.end())
        throw StructuralError("agent " + std::to_string(i) + " has no reference policy");
    const auto& g = it->second;
    const int cols = std::min<int>(static_cast<int>(g.gain.cols()), static_cast<int>(input.size()));
    Vec u = g.gain.leftCols(cols) * input.head(cols);
    return u.cwiseMax(g.u_min).cwiseMin(g.u_max);
}

json agent_parameter_record(const Scenario& s, AgentId i)
{
    json rec;
    rec["kind"] = to_string(s.kind);
    rec["role"] = s.role(i);
    rec["T"] = s.T;
    switch (s.kind) {
    case ScenarioKind::Platoon:
        rec["fvd"] = {s.fvd.v_max, s.fvd.s_c, s.fvd.kappa, s.fvd.lambda, s.fvd.v_eq};
        break;
    case ScenarioKind::Drone:
        rec["drag"] = s.drone.drag;
        break;
    case ScenarioKind::Microgrid: {
        rec["tau"] = s.microgrid.tau[i];
        rec["eta"] = s.microgrid.eta[i];
        std::vector<double> alphas;
        for (AgentId j : s.graph.neighbors(i))
            alphas.push_back(s.microgrid.alpha(i, j));
        std::sort(alphas.begin(), alphas.end());
        rec["alpha"] = alphas;
        break;
    }
    case ScenarioKind::Linear: {
        const auto& L = s.linear.at(s.role(i));
        auto dump = [](const Mat& m) {
            std::vector<double> v(m.data(), m.data() + m.size());
            return json{m.rows(), m.cols(), v};
        };
        rec["a_self"] = dump(L.a_self);
        rec["a_nbr"] = dump(L.a_nbr);
        rec["b_u"] = dump(L.b_u);
        rec["b_d"] = dump(L.b_d);
        break;
    }
    }
    if (s.reference.count(s.role(i))) {
        const auto& g = s.reference.at(s.role(i));
        rec["reference"] = {std::vector<double>(g.gain.data(), g.gain.data() + g.gain.size()),
                            std::vector<double>(g.u_min.data(), g.u_min.data() + g.u_min.size()),
                            std::vector<double>(g.u_max.data(), g.u_max.data() + g.u_max.size())};
    }
    return rec;
}

}  // namespace siss
