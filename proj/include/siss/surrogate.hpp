#pragma once

#include "siss/hyper_box.hpp"
#include "siss/neural.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace siss {

/// Rectangular lattice over a box. Degenerate (zero-width) dimensions hold a single
/// coordinate and contribute nothing to the covering radius.
struct GridSpec {
    HyperBox region;
    Vec steps;
    long long cap = 2'000'000;

    void validate() const;
    int dim() const { return region.dim(); }
    long long points_in_dim(int d) const;
    long long point_count() const;
    /// |Delta|_2 over the non-degenerate dimensions.
    double step_norm() const;
    /// The idx-th lattice point (mixed radix, first dimension fastest).
    Vec point(long long idx) const;

    nlohmann::json to_json() const;
    static GridSpec from_json(const nlohmann::json& j);
};

/// Materializes the lattice; ResourceError above the cap.
std::vector<Vec> make_grid(const GridSpec& spec);

using StepFunction = std::function<Vec(const Vec&)>;

/// f~(v) = A v + phi(v) - phi(0) when anchored (so f~(0) = 0), else A v + b + phi(v).
class SurrogateNet {
public:
    SurrogateNet() = default;
    SurrogateNet(Mat linear, Vec offset, MlpNetwork residual, bool anchored);

    int input_dim() const { return static_cast<int>(linear_.cols()); }
    int output_dim() const { return static_cast<int>(linear_.rows()); }
    const Mat& linear() const { return linear_; }
    const Vec& offset() const { return offset_; }
    const MlpNetwork& residual() const { return residual_; }
    MlpNetwork& residual() { return residual_; }
    bool anchored() const { return anchored_; }
    /// Constant term added after A v + phi(v) (b, or -phi(0) when anchored).
    Vec output_shift() const;

    Vec predict(const Vec& v) const;
    /// Same, with a precomputed output_shift().
    Vec predict(const Vec& v, const Vec& shift) const;
    /// J(v)^T upstream.
    Vec vjp(const Vec& v, const Vec& upstream) const;
    double lipschitz_bound() const;

    nlohmann::json to_json() const;
    static SurrogateNet from_json(const nlohmann::json& j);

private:
    Mat linear_;
    Vec offset_;
    MlpNetwork residual_;
    bool anchored_ = true;
};

struct SurrogateModel {
    SurrogateNet net;
    double epsilon_hat = 0.0;
    double lipschitz_true = 0.0;
    double lipschitz_surrogate = 0.0;
    GridSpec grid;
    std::string key;

    Vec predict(const Vec& v) const { return net.predict(v); }
    nlohmann::json to_json() const;
    static SurrogateModel from_json(const nlohmann::json& j);
};

struct FitConfig {
    std::vector<int> hidden{64, 64, 64};
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double decay = 0.95;
    int decay_every = 10;
    long long max_train_points = 20000;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool anchored = true;
    int threads = 0;
};

/// Maximum 2-norm residual |true(p) - model(p)| over every grid point.
double scan_max_residual(const GridSpec& grid, const StepFunction& truth, const StepFunction& model,
                         int threads = 0);

/// Least-squares linear part, then Adam on the residual network. `history`, when given,
/// receives the validation max-residual of the retained checkpoint after every epoch.
SurrogateModel fit_dynamics(const StepFunction& true_step, const GridSpec& spec, const FitConfig& config,
                            double lipschitz_true, std::vector<double>* history = nullptr);

struct RobustMargin {
    double epsilon = 0.0;
    double delta = 0.0;
    double lipschitz_v = 0.0;
    std::optional<double> lipschitz_pi;
    bool floored = false;

    nlohmann::json to_json() const;
    static RobustMargin from_json(const nlohmann::json& j);
};

/// eps_hat + (L_f + L_f~)/2 * |Delta|_2, times (1 + L_pi) in the controlled case.
double robust_epsilon(double epsilon_hat, double lipschitz_true, double lipschitz_surrogate, double step_norm,
                      bool controlled, std::optional<double> lipschitz_pi = std::nullopt);
double robust_epsilon(const SurrogateModel& model, bool controlled, std::optional<double> lipschitz_pi = std::nullopt);

/// delta = L_V * eps * (1 + slack), or `floor` (flagged) when that product is zero.
RobustMargin robust_delta(double epsilon, double lipschitz_v, double slack = 0.05, double floor = 1e-6);

}  // namespace siss
