#pragma once

#include "siss/certificate.hpp"
#include "siss/scalability.hpp"
#include "siss/surrogate.hpp"
#include "siss/system_model.hpp"
#include "siss/verifier.hpp"

#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace siss {

struct TrainingConfig {
    double w_p = 1.0;
    double w_d = 1.0;
    double w_o = 0.5;
    double eps_p = 0.01;
    double eps_d = 0.01;
    int epochs_per_round = 100;
    int max_rounds = 100;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double decay = 0.95;
    int decay_every = 10;
    double cex_sigma_fraction = 0.01;  // of each region half-width
    int cex_variants = 20;
    long long dataset_size = 30000;  // total, split evenly over agents
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    // Certificate structure.
    std::vector<int> lyapunov_hidden{16, 16};
    double polyhedral_scale = 1.0;  // initial R = scale * I
    bool convex = false;
    std::vector<int> controller_hidden{16};
    double epsilon_sg = 0.05;
    double psi = 1.0;
    double core_fraction = 0.0;
    ClassKEnvelope envelope;
    double delta_slack = 0.05;
    bool share_weights = true;

    VerifyBudget budget;
    int threads = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainingConfig from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------- surrogates

struct SurrogateSet {
    std::vector<SurrogateModel> models;
    std::vector<int> model_of;  // per agent
};

/// Agents with equal keys share one surrogate (same dynamics and local domain).
std::string surrogate_key(const Scenario& s, AgentId i);
/// v -> f_i(v) with v = z or (z, u).
StepFunction agent_true_step(const Scenario& s, AgentId i);
/// Box of admissible inputs for a controlled agent.
HyperBox input_box(const Scenario& s, AgentId i);
/// Lattice over Z_i from the scenario grid steps.
GridSpec agent_state_grid(const Scenario& s, AgentId i);
/// Lattice the surrogate is fitted on: Z_i, or Z_i x U_i in controlled mode.
GridSpec agent_fit_grid(const Scenario& s, AgentId i);

SurrogateSet fit_surrogates(const Scenario& s, const FitConfig& config);

// ---------------------------------------------------------------- bundle

/// Agent classes that share networks: equivalence classes when sharing is on.
std::vector<int> network_classes(const Scenario& s, const SurrogateSet& surrogates, bool share);

CertificateBundle initial_bundle(const Scenario& s, const SurrogateSet& surrogates, const TrainingConfig& config);

/// Recomputes epsilon, L_V (and L_pi) and delta for every agent. Controlled agents use
/// the closed-loop approximation error over their state lattice.
void update_margins(CertificateBundle& b, const Scenario& s, const TrainingConfig& config);

// ---------------------------------------------------------------- losses

/// Per-agent training points: states x_i in R_i and local points z_i in Z_i.
struct AgentBatch {
    std::vector<Vec> states;
    std::vector<Vec> locals;
};
using Batch = std::vector<AgentBatch>;

/// Gradient of a loss w.r.t. every trainable quantity of the bundle.
struct BundleGradient {
    std::vector<LyapunovGradient> lyapunov;          // per agent
    std::vector<std::optional<GradientRecord>> pi;   // per agent
    std::vector<Mat> pi_linear;                      // per agent (empty when uncontrolled)
    Mat gamma_pure;

    static BundleGradient zeros(const CertificateBundle& b);
    void add(const BundleGradient& other, double scale = 1.0);
};

struct PolicyReference {
    const Scenario* scenario = nullptr;
    Vec operator()(AgentId i, const Vec& y) const { return reference_policy(*scenario, i, y); }
};

double loss_positivity(const CertificateBundle& b, const Batch& batch, double eps_p, BundleGradient* grad = nullptr);
double loss_decrement(const CertificateBundle& b, const Batch& batch, double eps_d, BundleGradient* grad = nullptr);
double loss_imitation(const CertificateBundle& b, const PolicyReference& ref, const Batch& batch,
                      BundleGradient* grad = nullptr);

struct LossBreakdown {
    double positivity = 0.0;
    double decrement = 0.0;
    double imitation = 0.0;
    double total = 0.0;
};

/// w_p L_p + w_d L_d (+ w_o L_o in controlled mode).
LossBreakdown total_loss(const CertificateBundle& b, const PolicyReference& ref, const Batch& batch,
                         const TrainingConfig& config, BundleGradient* grad = nullptr);

// ---------------------------------------------------------------- parameters

/// Flat view of the trainable parameters, one copy per network class and one entry
/// per tied coupling gain.
class ParameterMap {
public:
    explicit ParameterMap(const CertificateBundle& b);

    std::size_t size() const { return static_cast<std::size_t>(size_); }
    Vec gather(const CertificateBundle& b) const;
    /// Writes the parameters into every class member, then re-realizes the coupling.
    void scatter(const Vec& params, CertificateBundle& b) const;
    Vec gather_gradient(const BundleGradient& g) const;
    /// Tied coupling parameter index per (i, j) mask entry, -1 off the mask.
    int gamma_index(int i, int j) const { return gamma_index_[i][j]; }

private:
    struct ClassSlot {
        std::vector<int> members;
        long long phi_offset = 0, r_offset = 0, pi_offset = -1, k_offset = -1;
        long long phi_size = 0, r_size = 0, pi_size = 0, k_size = 0;
    };
    std::vector<ClassSlot> classes_;
    std::vector<std::vector<int>> gamma_index_;
    long long gamma_offset_ = 0;
    int gamma_count_ = 0;
    long long size_ = 0;
};

// ---------------------------------------------------------------- CEGIS

/// cex_variants Gaussian perturbations (sigma = fraction of the half-widths) clipped
/// into `region`, plus the original point.
std::vector<Vec> augment_counterexamples(const Vec& point, const HyperBox& region, const TrainingConfig& config,
                                         std::mt19937_64& rng);

struct Dataset {
    std::vector<AgentBatch> train;
    std::vector<AgentBatch> validation;
    std::size_t size() const;
};

Dataset sample_dataset(const CertificateBundle& b, const TrainingConfig& config);

struct RoundRecord {
    int round = 0;
    LossBreakdown loss;
    int counterexamples = 0;
    double verify_seconds = 0.0;
    std::size_t dataset_size = 0;
};

struct CegisResult {
    CertificateBundle bundle;
    std::vector<RoundRecord> rounds;
    SystemVerification last_verification;
    int training_rounds = 0;
    bool verified = false;
};

/// Trains for `epochs` epochs on the dataset; returns the mean loss of the last epoch.
LossBreakdown train_epochs(CertificateBundle& b, const Scenario& s, Dataset& data, const TrainingConfig& config,
                           int epochs, std::mt19937_64& rng, Adam& adam, const ParameterMap& map);

/// Algorithm: verify, stop if verified, else add counterexamples and train.
/// `log`, when given, receives one CSV line per round.
CegisResult cegis(const Scenario& s, CertificateBundle bundle, const TrainingConfig& config,
                  std::ostream* log = nullptr);

inline const char* cegis_csv_header()
{
    return "round,loss_positivity,loss_decrement,loss_imitation,loss_total,counterexamples,verify_seconds,dataset";
}

}  // namespace siss
