#include "siss/hyper_box.hpp"
#include "siss/types.hpp"

#include <algorithm>
#include <cstdio>

namespace siss {

std::uint64_t fnv1a(std::string_view data)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a_hex(std::string_view data)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(data)));
    return buf;
}

HyperBox::HyperBox(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper))
{
    if (lower_.size() != upper_.size())
        throw StructuralError("HyperBox: bound dimensions differ");
    for (int d = 0; d < lower_.size(); ++d) {
        if (!(lower_[d] <= upper_[d]))
            throw ConfigError("HyperBox: lower bound exceeds upper bound in dimension " + std::to_string(d));
    }
}

HyperBox HyperBox::symmetric(const Vec& halfwidths)
{
    return HyperBox(-halfwidths, halfwidths);
}

bool HyperBox::contains(const Vec& x, double tol) const
{
    if (x.size() != lower_.size())
        return false;
    for (int d = 0; d < x.size(); ++d) {
        if (x[d] < lower_[d] - tol || x[d] > upper_[d] + tol)
            return false;
    }
    return true;
}

bool HyperBox::contains(const HyperBox& other) const
{
    return contains(other.lower()) && contains(other.upper());
}

Vec HyperBox::clip(const Vec& x) const
{
    return x.cwiseMax(lower_).cwiseMin(upper_);
}

std::pair<HyperBox, HyperBox> HyperBox::split(int d) const
{
    return split_at(d, 0.5 * (lower_[d] + upper_[d]));
}

std::pair<HyperBox, HyperBox> HyperBox::split_at(int d, double at) const
{
    at = std::clamp(at, lower_[d], upper_[d]);
    Vec mid_hi = upper_;
    Vec mid_lo = lower_;
    mid_hi[d] = at;
    mid_lo[d] = at;
    return {HyperBox(lower_, mid_hi), HyperBox(mid_lo, upper_)};
}

HyperBox HyperBox::product(const HyperBox& other) const
{
    Vec lo(dim() + other.dim());
    Vec hi(dim() + other.dim());
    lo << lower_, other.lower();
    hi << upper_, other.upper();
    return HyperBox(lo, hi);
}

HyperBox HyperBox::slice(int offset, int length) const
{
    if (offset < 0 || length < 0 || offset + length > dim())
        throw StructuralError("HyperBox::slice out of range");
    return HyperBox(lower_.segment(offset, length), upper_.segment(offset, length));
}

}  // namespace siss
