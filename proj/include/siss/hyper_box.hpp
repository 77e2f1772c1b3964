#pragma once

#include "siss/errors.hpp"
#include "siss/types.hpp"

#include <utility>

namespace siss {

/// Axis-aligned box [lower, upper]. Degenerate (zero-width) dimensions are allowed.
class HyperBox {
public:
    HyperBox() = default;
    HyperBox(Vec lower, Vec upper);

    static HyperBox symmetric(const Vec& halfwidths);
    static HyperBox point(const Vec& p) { return HyperBox(p, p); }

    int dim() const { return static_cast<int>(lower_.size()); }
    const Vec& lower() const { return lower_; }
    const Vec& upper() const { return upper_; }
    Vec width() const { return upper_ - lower_; }
    Vec center() const { return 0.5 * (lower_ + upper_); }
    bool is_point() const { return (upper_ - lower_).maxCoeff() <= 0.0; }

    bool contains(const Vec& x, double tol = 0.0) const;
    bool contains(const HyperBox& other) const;
    Vec clip(const Vec& x) const;

    /// Splits dimension d at its midpoint (or at `at` when it lies strictly inside).
    std::pair<HyperBox, HyperBox> split(int d) const;
    std::pair<HyperBox, HyperBox> split_at(int d, double at) const;

    /// Cartesian product, this box first.
    HyperBox product(const HyperBox& other) const;
    HyperBox slice(int offset, int length) const;

private:
    Vec lower_;
    Vec upper_;
};

}  // namespace siss
