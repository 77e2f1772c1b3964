#pragma once

// Reuse machinery: substructure embeddings, structural equivalence classes,
// modular decomposition, the minimum verification network and certified
// parameter polytopes.

#include "siss/system_model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace siss {

/// Content hash per agent over role, parameter record and (optionally) surrogate identity.
std::vector<std::string> dynamics_signatures(const Scenario& s, const std::vector<std::string>* surrogate_keys = nullptr);

/// A graph together with per-agent dynamics signatures.
struct SignedGraph {
    SystemGraph graph;
    std::vector<std::string> signatures;
};

struct EmbeddingMap {
    std::vector<AgentId> tau;  // small agent -> large agent
};

struct EmbeddingSearch {
    long long node_cap = 1'000'000;
    long long nodes = 0;
    bool capped = false;
};

/// First embedding in lexicographic order of (tau(0), tau(1), ...), or none. `accept`
/// may reject complete assignments (the search then continues).
std::optional<EmbeddingMap> find_embedding(const SignedGraph& small, const SignedGraph& large,
                                           EmbeddingSearch* search = nullptr,
                                           const std::function<bool(const EmbeddingMap&)>& accept = nullptr);

/// tau injective, signatures equal and tau(E~_j) = E_tau(j) for every j.
bool embedding_valid(const SignedGraph& small, const SignedGraph& large, const EmbeddingMap& map);

struct EquivalencePartition {
    std::vector<std::vector<AgentId>> classes;  // sorted, ordered by smallest member
    std::vector<AgentId> representative;        // smallest member per class
    std::vector<int> class_of;
};

/// Color refinement seeded with the signatures; refines on in- and out-neighbor colors.
EquivalencePartition equivalence_classes(const SignedGraph& g);

/// Every subsystem agent depends only on subsystem agents.
bool decomposable(const SystemGraph& g, const std::vector<AgentId>& subsystem);

struct VerifiedTemplate {
    std::string name;
    SignedGraph system;
};

struct ReductionStep {
    std::string rule;  // "substructure", "equivalence", "decomposition"
    std::vector<AgentId> pruned;
    std::string detail;
};

struct Reduction {
    std::vector<AgentId> representatives;
    std::vector<ReductionStep> audit;
    EquivalencePartition partition;

    nlohmann::json to_json() const;
};

Reduction minimum_verification_network(const SignedGraph& system, const std::vector<VerifiedTemplate>& library,
                                       const std::vector<AgentId>& verified_subsystem);

/// x in conv(points), decided by a feasibility LP.
bool in_convex_hull(const std::vector<Vec>& points, const Vec& x, double tol = 1e-9);
/// Indices of points that are not convex combinations of the others (duplicates keep the first).
std::vector<int> hull_vertices(const std::vector<Vec>& points);

struct CertifiedPolytope {
    std::vector<Vec> vertices;
    std::vector<Vec> rejected;  // hull vertices whose verification failed
    Mat H;
    Vec h;
    bool has_h = false;
    bool degenerate = false;

    int dim() const;
    nlohmann::json to_json() const;
    static CertifiedPolytope from_json(const nlohmann::json& j);
};

/// Facets of conv(vertices) for dimension <= 3 with unit-norm rows.
std::pair<Mat, Vec> facet_enumeration(const std::vector<Vec>& vertices);

CertifiedPolytope certify_polytope(const std::vector<Vec>& points, const std::function<bool(const Vec&)>& verify_at);

/// H chi <= h + 1e-9, or the LP test when no H-representation is stored.
bool hull_membership(const CertifiedPolytope& poly, const Vec& chi);

}  // namespace siss
