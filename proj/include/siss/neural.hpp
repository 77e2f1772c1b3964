#pragma once

#include "siss/errors.hpp"
#include "siss/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace siss {

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;
};

/// Parameter gradients with the same shapes as the owning network.
struct GradientRecord {
    std::vector<Mat> weight;
    std::vector<Vec> bias;

    void add(const GradientRecord& other, double scale = 1.0);
    void scale(double s);
    Vec flatten() const;
};

/// Feedforward network: ReLU on hidden layers, identity on the output layer.
class MlpNetwork {
public:
    MlpNetwork() = default;
    explicit MlpNetwork(std::vector<DenseLayer> layers, bool convex_mode = false);

    /// widths = {in, h1, ..., out}; weights and biases ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)).
    static MlpNetwork random(const std::vector<int>& widths, std::uint64_t seed, bool convex_mode = false);

    int input_dim() const;
    int output_dim() const;
    int depth() const { return static_cast<int>(layers_.size()); }
    std::vector<int> widths() const;
    bool empty() const { return layers_.empty(); }

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    bool convex_mode() const { return convex_mode_; }
    void set_convex_mode(bool on) { convex_mode_ = on; }
    std::uint64_t seed() const { return seed_; }

    /// Intermediate values of one forward pass (pre-activations per layer, inputs per layer).
    struct Trace {
        std::vector<Vec> inputs;
        std::vector<Vec> pre;
    };

    Vec forward(const Vec& x) const;
    Vec forward(const Vec& x, Trace& trace) const;

    /// Accumulates scale * d(upstream . y)/d(params) into `grad` (may be null) and
    /// returns d(upstream . y)/dx.
    Vec backward(const Trace& trace, const Vec& upstream, GradientRecord* grad, double scale = 1.0) const;

    GradientRecord backward(const Vec& x, const Vec& upstream) const;
    GradientRecord zero_gradient() const;

    std::size_t parameter_count() const;
    Vec flatten() const;
    void unflatten(const Vec& params);

    nlohmann::json to_json() const;
    static MlpNetwork from_json(const nlohmann::json& j);

private:
    std::vector<DenseLayer> layers_;
    bool convex_mode_ = false;
    std::uint64_t seed_ = 0;
};

/// Elementwise min(max(y, lo), hi).
Vec clamp(const Vec& y, const Vec& lo, const Vec& hi);
/// lo + ReLU(y - lo) - ReLU(y - hi), the form used inside verification networks.
Vec clamp_relu_form(const Vec& y, const Vec& lo, const Vec& hi);

enum class NormKind { Two, Inf };

/// Largest singular value of m, inflated by a relative 1e-9 so it is a safe upper bound.
double spectral_norm(const Mat& m);
double operator_norm(const Mat& m, NormKind norm);

/// Product of layer operator norms.
double lipschitz_upper_bound(const MlpNetwork& net, NormKind norm);

/// Clips every weight after the first layer at zero and switches convex mode on.
MlpNetwork icnn_project(const MlpNetwork& net);

/// Adam on a flat parameter vector.
class Adam {
public:
    Adam() = default;
    explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(Vec& params, const Vec& grad);
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    std::size_t size() const { return static_cast<std::size_t>(m_.size()); }

private:
    Vec m_, v_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long long t_ = 0;
};

nlohmann::json vec_to_json(const Vec& v);
Vec vec_from_json(const nlohmann::json& j);
nlohmann::json mat_to_json(const Mat& m);
Mat mat_from_json(const nlohmann::json& j);

}  // namespace siss
