#pragma once

// Layered piecewise-linear networks used to encode whole verification residuals:
// every unit is either a ReLU or a linear pass-through, so surrogate, controller
// clamp, Lyapunov nets and norm surrogates compose into one network.

#include "siss/hyper_box.hpp"
#include "siss/neural.hpp"

#include <vector>

namespace siss {

struct PwlLayer {
    Mat weight;
    Vec bias;
    std::vector<char> relu;  // 1 = ReLU unit, 0 = linear unit
};

class PwlNet {
public:
    PwlNet() = default;
    explicit PwlNet(int input_dim) : input_dim_(input_dim) {}

    static PwlNet identity(int n) { return PwlNet(n); }
    static PwlNet affine(const Mat& w, const Vec& b);
    /// Selects coordinates [offset, offset + length) of an n-vector.
    static PwlNet select(int n, int offset, int length);
    static PwlNet from_mlp(const MlpNetwork& net);
    /// (|y_1|, ..., |y_n|) as ReLU(y) + ReLU(-y).
    static PwlNet abs(int n);

    int input_dim() const { return input_dim_; }
    int output_dim() const;
    int depth() const { return static_cast<int>(layers_.size()); }
    int neuron_count() const;
    const std::vector<PwlLayer>& layers() const { return layers_; }

    /// outer(this(x)); merges the boundary when this network ends in linear units.
    PwlNet then(const PwlNet& outer) const;
    /// Same input, outputs concatenated [a(x); b(x)].
    static PwlNet stack(const PwlNet& a, const PwlNet& b);
    static PwlNet stack(const std::vector<PwlNet>& parts);
    /// Appends identity layers until depth() == d.
    PwlNet padded(int d) const;

    Vec forward(const Vec& x) const;

    void push_layer(PwlLayer layer);

private:
    int input_dim_ = 0;
    std::vector<PwlLayer> layers_;
};

/// Sound bounds of every pre-activation and of the outputs over a box.
struct PwlBounds {
    std::vector<Vec> pre_lower;
    std::vector<Vec> pre_upper;
    Vec out_lower;
    Vec out_upper;
    // Affine output forms valid over the box: lower_coef * x + lower_const <= out <= ...
    Mat lower_coef;
    Vec lower_const;
    Mat upper_coef;
    Vec upper_const;
};

/// Plain interval arithmetic.
PwlBounds interval_bounds(const PwlNet& net, const HyperBox& box);

/// Forward symbolic (triangle) relaxation for intermediate bounds, then a backward
/// pass for the outputs; each bound is intersected with interval arithmetic.
PwlBounds relaxed_bounds(const PwlNet& net, const HyperBox& box);

/// max / min of an affine form over a box.
double affine_max(const Vec& coef, double c, const HyperBox& box);
double affine_min(const Vec& coef, double c, const HyperBox& box);

}  // namespace siss
