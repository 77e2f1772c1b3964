#pragma once

#include "siss/hyper_box.hpp"
#include "siss/neural.hpp"
#include "siss/surrogate.hpp"

#include <optional>
#include <string>
#include <vector>

namespace siss {

/// alpha_1(s) = c1 s, alpha_2(s) = c2 s.
struct ClassKEnvelope {
    double c1 = 0.05;
    double c2 = 50.0;
    void validate() const;
};

/// V(x) = phi(x) - phi(0) + |R x|_1. The polyhedral term gives V a kink at the origin;
/// with R empty this is exactly phi(x) - equilibrium_value.
class LyapunovNet {
public:
    LyapunovNet() = default;
    LyapunovNet(MlpNetwork phi, Mat r);

    int dim() const { return phi_.input_dim(); }
    const MlpNetwork& phi() const { return phi_; }
    MlpNetwork& phi() { return phi_; }
    const Mat& r() const { return r_; }
    Mat& r() { return r_; }
    bool convex_mode() const { return phi_.convex_mode(); }
    double equilibrium_value() const { return equilibrium_value_; }

    /// Recomputes the cached phi(0); call after changing phi.
    void refresh();

    double value(const Vec& x) const;
    /// L_phi (2-norm) + sum_k |r_k|_2.
    double lipschitz_bound() const;

    nlohmann::json to_json() const;
    static LyapunovNet from_json(const nlohmann::json& j);

private:
    MlpNetwork phi_;
    Mat r_;
    double equilibrium_value_ = 0.0;
};

/// Gradient of V(x) w.r.t. phi's parameters and R, accumulated with a weight.
struct LyapunovGradient {
    GradientRecord phi;
    Mat r;
    double zero_weight = 0.0;  // pending weight of the -phi(0) term
};

LyapunovGradient zero_gradient(const LyapunovNet& v);
/// Adds weight * dV(x)/dparams into g and returns weight * dV/dx.
Vec accumulate_gradient(const LyapunovNet& v, const Vec& x, double weight, LyapunovGradient& g);
/// Applies the accumulated -phi(0) contribution (one backward pass for a whole batch).
void finish_gradient(const LyapunovNet& v, LyapunovGradient& g);

struct CouplingMatrix {
    Mat gamma_pure;
    double epsilon_sg = 0.05;
    std::vector<std::vector<int>> mask;  // adjacency with unit diagonal
};

struct RealizedCoupling {
    Mat gamma;
    std::vector<bool> flagged;  // all-zero rows
};

RealizedCoupling realize_coupling(const CouplingMatrix& raw);
/// Gradient w.r.t. gamma_pure of sum(upstream .* realize(gamma_pure)).
Mat realize_coupling_gradient(const CouplingMatrix& raw, const Mat& upstream);

/// Controller u = clamp(K y + phi(y), lo, hi) on y = (x_i, x_nbrs).
struct Controller {
    MlpNetwork net;
    Mat linear;
    Vec lo, hi;

    int input_dim() const { return static_cast<int>(linear.cols()); }
    int output_dim() const { return static_cast<int>(linear.rows()); }
    Vec raw(const Vec& y) const;
    Vec act(const Vec& y) const;
    double lipschitz_bound() const;

    nlohmann::json to_json() const;
    static Controller from_json(const nlohmann::json& j);
};

enum class Condition { PositivityLower, PositivityUpper, Decrement };
std::string to_string(Condition c);

struct AgentStatus {
    std::string positivity_lower = "unknown";
    std::string positivity_upper = "unknown";
    std::string decrement = "unknown";
    bool verified() const;
};

struct CertificateBundle {
    std::vector<std::vector<int>> neighbors;
    std::vector<int> state_dims;
    std::vector<int> disturbance_dims;
    std::vector<HyperBox> state_regions;
    std::vector<HyperBox> disturbance_regions;

    std::vector<LyapunovNet> lyapunov;
    std::vector<int> net_class;  // agents with equal class share weights
    CouplingMatrix coupling;
    Mat gamma;
    std::vector<bool> gamma_flagged;
    double psi = 1.0;
    ClassKEnvelope envelope;
    std::vector<RobustMargin> margins;
    double core_fraction = 0.0;

    std::vector<std::optional<Controller>> controllers;
    std::vector<SurrogateModel> surrogates;
    std::vector<int> surrogate_of;

    std::vector<AgentStatus> status;
    bool verified = false;
    std::string config_hash;

    int n_agents() const { return static_cast<int>(neighbors.size()); }
    bool controlled() const;
    /// Re-derives gamma / gamma_flagged from coupling.
    void realize();
    /// Largest row sum of the stored gamma over E_i and i.
    double max_row_sum() const;
    /// Z_i = R_i x prod R_j x W_i.
    HyperBox local_domain(int i) const;
    int local_dim(int i) const { return local_domain(i).dim(); }

    nlohmann::json to_json() const;
    static CertificateBundle from_json(const nlohmann::json& j);
    std::string digest() const;
};

double lyapunov_value(const LyapunovNet& v, const Vec& x);
/// (alpha_1(|x|) - V(x), V(x) - alpha_2(|x|)).
std::pair<double, double> positivity_residuals(const LyapunovNet& v, const ClassKEnvelope& env, const Vec& x);

/// V_i(next) - sum_j gamma_ij V_j(x_j) - psi |d|_2 + delta, with x_j for j in E_i ascending.
double decrement_residual(const CertificateBundle& b, int i, const Vec& x_i, const std::vector<Vec>& neighbor_states,
                          const Vec& d, const Vec& next_state, double delta);

/// Everything needed to evaluate one agent condition at a packed point z.
struct LocalQuery {
    int agent = 0;
    Condition condition = Condition::Decrement;
    HyperBox domain;
    const CertificateBundle* bundle = nullptr;

    int state_dim = 0;
    std::vector<int> neighbor_offsets;
    std::vector<int> neighbor_dims;
    int disturbance_offset = 0;
    int disturbance_dim = 0;

    double delta = 0.0;
    std::optional<HyperBox> core;

    const LyapunovNet& v_self() const;
    const LyapunovNet& v_neighbor(int k) const;
    double gamma_self() const;
    double gamma_neighbor(int k) const;
    const SurrogateModel& surrogate() const;
    const Controller* controller() const;

    /// delta outside the core box, 0 inside it.
    double delta_at(const Vec& z) const;
    /// Surrogate successor (closed loop when a controller is present).
    Vec next_state(const Vec& z) const;
    /// Exact residual; the condition holds at z iff this is <= 0.
    double residual(const Vec& z) const;
    std::string digest() const;
};

LocalQuery make_query(const CertificateBundle& b, int agent, Condition condition);

}  // namespace siss
