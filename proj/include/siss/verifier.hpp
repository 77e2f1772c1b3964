#pragma once

#include "siss/certificate.hpp"
#include "siss/pwl.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace siss {

/// Affine lower/upper forms of a scalar over a box, and their concrete extremes.
struct LinearBounds {
    Vec lower_coef;
    double lower_const = 0.0;
    Vec upper_coef;
    double upper_const = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

HyperBox interval_propagate(const MlpNetwork& net, const HyperBox& box);
std::vector<LinearBounds> linear_relax_propagate(const MlpNetwork& net, const HyperBox& box);

/// Exact (min, max) of |x|_2 over the box.
std::pair<double, double> bound_norm(const HyperBox& box);

struct VerifyBudget {
    long long max_boxes = 50'000;
    int max_depth = 40;
    double max_seconds = 300.0;
    int lp_max_unstable = 40;
    int lp_max_leaves = 64;
    /// Residuals at or below this value count as satisfied.
    double tolerance = 1e-9;
};

enum class VerifyStatus { Verified, Falsified, Unknown };
std::string to_string(VerifyStatus s);
VerifyStatus status_from_string(const std::string& s);

struct Counterexample {
    int agent = 0;
    Condition kind = Condition::Decrement;
    Vec point;
    double violation = 0.0;
};

struct VerifyStats {
    long long boxes = 0;
    int max_depth = 0;
    long long lp_calls = 0;
    double seconds = 0.0;
};

struct VerifyResult {
    int agent = 0;
    Condition condition = Condition::Decrement;
    VerifyStatus status = VerifyStatus::Unknown;
    std::optional<Counterexample> counterexample;
    VerifyStats stats;
    bool transferred = false;  // copied from an identical representative query
};

/// The residual as a two-output PWL network: out0 uses |.|_1 surrogates for the norm,
/// out1 omits the norm, which is added back as coef * (min or max of |z_slice|_2).
struct QueryEncoding {
    PwlNet net;
    double norm_coef = 0.0;
    int norm_offset = 0;
    int norm_len = 0;
};

PwlNet lyapunov_pwl(const LyapunovNet& v);
/// z -> f~(z) or f~(z, clamp(pi(y))).
PwlNet successor_pwl(const LocalQuery& q);
QueryEncoding encode_query(const LocalQuery& q);

/// Sound upper bound of the residual over the box, excluding delta.
double encoding_upper_bound(const QueryEncoding& enc, const PwlBounds& bounds, const HyperBox& box);

VerifyResult verify_query(const LocalQuery& q, const VerifyBudget& budget);

struct SystemVerification {
    std::vector<VerifyResult> results;  // agent-major, three conditions each
    int queries_executed = 0;
    bool verified = false;
    std::vector<Counterexample> counterexamples;
};

/// Verifies every agent (or only `representatives`, transferring verdicts to agents whose
/// queries are identical) and writes statuses into the bundle.
SystemVerification verify_system(CertificateBundle& bundle, const VerifyBudget& budget,
                                 const std::vector<int>* representatives = nullptr, int threads = 0,
                                 const std::vector<int>* trusted = nullptr);

nlohmann::json to_json(const VerifyResult& r);
nlohmann::json to_json(const SystemVerification& s);

}  // namespace siss
