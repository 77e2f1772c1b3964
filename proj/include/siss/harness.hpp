#pragma once

#include "siss/certificate.hpp"
#include "siss/synthesis.hpp"
#include "siss/system_model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace siss {

struct DisturbanceSpec {
    enum class Kind { Zero, Sinusoid, Pulse };
    Kind kind = Kind::Zero;
    double amplitude = 0.0;
    double frequency = 0.0;       // Hz, sinusoid only
    std::vector<AgentId> targets;  // empty = agent 0
    int duration_steps = 0;        // 0 = whole horizon (sinusoid); pulse length otherwise
    int component = 0;             // disturbance component that receives the signal

    void validate() const;
    /// "zero", "sin:<f>Hz:<amplitude>[:<steps>]" or "pulse:<amplitude>:<steps>".
    static DisturbanceSpec parse(const std::string& text);
    Vec value(const Scenario& s, AgentId i, int step) const;
};

enum class PolicySource { Bundle, Reference, None };
PolicySource parse_policy_source(const std::string& text);

struct TrajectoryLog {
    std::vector<std::vector<Vec>> states;        // steps + 1 rows, one vector per agent
    std::vector<std::vector<Vec>> disturbances;  // steps rows
    std::vector<std::vector<Vec>> inputs;        // steps rows
    std::string scenario_hash;
    std::string bundle_hash;
    std::uint64_t seed = 0;

    int steps() const { return static_cast<int>(disturbances.size()); }
    void write_csv(std::ostream& os) const;
};

struct SimulationOptions {
    PolicySource policy = PolicySource::Bundle;
    int steps = 1500;
    /// Step the bundle's surrogates instead of the true dynamics.
    bool surrogate_rollout = false;
    std::uint64_t seed = 0;
};

/// Closed-loop rollout from `initial` (zero states when empty). Throws NumericError
/// with the step index when a state becomes non-finite or exceeds 1e6 in magnitude.
TrajectoryLog simulate(const Scenario& s, const CertificateBundle* bundle, const DisturbanceSpec& dist,
                       const SimulationOptions& options, const std::vector<Vec>& initial = {});

/// max_i |v_i|_L2 / |v_{i-1}|_L2 of state component `signal` along a chain; ratios with a
/// predecessor norm below 1e-12 count as 0.
double error_gain(const TrajectoryLog& log, const SystemGraph& graph, int signal);

struct AuditResult {
    double max_violation = 0.0;  // largest positive excess, 0 when none
    int steps_checked = 0;
    int steps_skipped = 0;  // some local point left its region
};

/// Checks V(k+1) <= (1 - eps_sg) V(k) + psi max_i |d_i,k|_2 + slack with V = max_i V_i;
/// slack is 0 on surrogate rollouts and max_i L_Vi eps_i on true ones.
AuditResult composite_lyapunov_audit(const TrajectoryLog& log, const CertificateBundle& bundle,
                                     bool surrogate_rollout);

/// Scenario of a parameter-affine family at parameter `chi`: each listed role's linear
/// dynamics become offset + sum_k chi_k basis_k (config key "parameter_affine").
Scenario scenario_at(const Scenario& base, const Vec& chi);

/// Copy of `base` whose surrogates are the exact linear dynamics of `s`, so the only
/// margin left is the floor on delta.
CertificateBundle exact_linear_bundle(const Scenario& s, const CertificateBundle& base, double slack);

/// Settings of the "fit" and "training" sections of a scenario file; SISS_SEED, when
/// set, replaces the seed.
FitConfig fit_config_of(const nlohmann::json& cfg);
TrainingConfig training_config_of(const nlohmann::json& cfg);

/// Entry point of the command-line tool; returns the process exit status.
int cli_dispatch(int argc, char** argv);

}  // namespace siss
