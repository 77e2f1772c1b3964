#pragma once

// Interconnected system topology and the exact (ground-truth) scenario dynamics.
// Every state is stored as a deviation from the scenario equilibrium, so the
// equilibrium of each agent is the zero vector.

#include "siss/errors.hpp"
#include "siss/hyper_box.hpp"
#include "siss/types.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace siss {

/// Directed interconnection graph. Row i of the adjacency lists the agents whose
/// state agent i's dynamics depend on (E_i). Self-loops are not edges.
class SystemGraph {
public:
    SystemGraph() = default;

    static SystemGraph from_adjacency(const std::vector<std::vector<int>>& adjacency);
    /// i depends on i-1; agent 0 has no neighbor.
    static SystemGraph chain(int n);
    /// i depends on i-1, agent 0 depends on n-1.
    static SystemGraph ring(int n);
    /// Hub 0; each leaf depends on the hub, the hub depends on nothing.
    static SystemGraph star(int leaves);

    int size() const { return static_cast<int>(adjacency_.size()); }
    const std::vector<AgentId>& neighbors(AgentId i) const { return neighbors_.at(i); }
    bool has_edge(AgentId i, AgentId j) const { return adjacency_.at(i).at(j) != 0; }
    const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }

    /// Adjacency with ones on the diagonal (the coupling mask).
    std::vector<std::vector<int>> mask_with_self() const;

    /// Appends one agent whose neighbor set is `deps`; existing rows are unchanged.
    SystemGraph with_appended(const std::vector<AgentId>& deps) const;

private:
    std::vector<std::vector<int>> adjacency_;
    std::vector<std::vector<AgentId>> neighbors_;
};

enum class ScenarioKind { Platoon, Drone, Microgrid, Linear };

std::string to_string(ScenarioKind kind);

/// Full velocity difference car-following model:
/// a = kappa (V(s) - v) + lambda (v_pred - v),  V(s) = v_max/2 (tanh(s - s_c) + tanh(s_c)).
struct FvdParams {
    double v_max = 20.0;
    double s_c = 2.0;
    double kappa = 1.0;
    double lambda = 0.5;
    double v_eq = 15.0;
    double s_eq = 0.0;  // solved at load time

    double optimal_velocity(double spacing) const;
    double acceleration(double spacing, double velocity, double pred_velocity) const;
};

struct DroneParams {
    double drag = 0.1;
};

struct MicrogridParams {
    std::vector<double> tau;
    std::vector<double> eta;
    std::vector<double> voltage;
    Mat susceptance;  // |B_ij|
    double alpha(AgentId i, AgentId j) const;
};

/// x' = A_self x + sum_j A_nbr x_j + B_u u + B_d d, optionally a sum over a parameter basis.
struct LinearDynamics {
    Mat a_self;
    Mat a_nbr;
    Mat b_u;
    Mat b_d;
};

/// Linear feedback u = clamp(K [x_i; x_nbrs], u_min, u_max). Columns of K beyond the
/// agent's local state length are ignored (e.g. a platoon head without predecessor).
struct ReferenceGains {
    Mat gain;
    Vec u_min;
    Vec u_max;
};

struct RegionSpec {
    Vec state_halfwidths;
    Vec disturbance_halfwidths;
    std::vector<AgentId> disturbed_agents;  // empty = every agent
};

struct GridConfig {
    Vec state_steps;
    Vec disturbance_steps;
    long long max_points = 2'000'000;
};

struct Scenario {
    ScenarioKind kind = ScenarioKind::Linear;
    double T = 0.1;
    std::vector<std::string> roles;
    SystemGraph graph;

    FvdParams fvd;
    DroneParams drone;
    MicrogridParams microgrid;
    std::map<std::string, LinearDynamics> linear;

    RegionSpec regions;
    GridConfig grid;
    std::map<std::string, double> lipschitz_true;
    std::map<std::string, ReferenceGains> reference;

    nlohmann::json raw;
    std::string hash;

    int n_agents() const { return graph.size(); }
    const std::string& role(AgentId i) const { return roles.at(i); }
    int state_dim(AgentId i) const;
    int input_dim(AgentId i) const;
    int disturbance_dim(AgentId i) const;
    bool controlled(AgentId i) const { return input_dim(i) > 0; }
    double lipschitz_of(AgentId i) const;
};

Scenario parse_scenario(const nlohmann::json& config);
Scenario load_scenario(const std::string& path);

/// Offsets of the local variable z_i = (x_i, x_j for j in E_i ascending, d_i).
struct LocalLayout {
    int state_dim = 0;
    std::vector<int> neighbor_offsets;
    std::vector<int> neighbor_dims;
    int disturbance_offset = 0;
    int disturbance_dim = 0;
    int total = 0;
    /// Length of (x_i, x_nbrs), the controller input.
    int controller_input_dim() const { return disturbance_offset; }
};

LocalLayout local_layout(const Scenario& s, AgentId i);

/// One exact step of agent i in error coordinates.
Vec local_step(const Scenario& s, AgentId i, const Vec& x_i, const std::vector<Vec>& neighbor_states,
               const Vec& u, const Vec& d);

/// Same, taking the packed local vector z (see LocalLayout) and an input vector.
Vec local_step_packed(const Scenario& s, AgentId i, const Vec& z, const Vec& u);

/// One exact step of the whole system. All vectors are indexed by agent id.
std::vector<Vec> step_true(const Scenario& s, const std::vector<Vec>& states, const std::vector<Vec>& inputs,
                           const std::vector<Vec>& disturbances);

struct AgentRegions {
    HyperBox state;
    HyperBox disturbance;
};

std::vector<AgentRegions> scenario_regions(const Scenario& s);

/// Z_i = R_i x prod_j R_j x W_i, in LocalLayout order.
HyperBox local_domain(const Scenario& s, AgentId i);

/// Reference (pre-trained) policy pi_ori evaluated on (x_i, x_nbrs).
Vec reference_policy(const Scenario& s, AgentId i, const Vec& controller_input);

/// Role-level parameter record used by dynamics signatures.
nlohmann::json agent_parameter_record(const Scenario& s, AgentId i);

}  // namespace siss
