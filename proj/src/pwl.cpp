#include "siss/pwl.hpp"

#include <algorithm>

namespace siss {

namespace {

PwlLayer identity_layer(int n) { return {Mat::Identity(n, n), Vec::Zero(n), std::vector<char>(n, 0)}; }

bool all_linear(const PwlLayer& l)
{
    return std::none_of(l.relu.begin(), l.relu.end(), [](char r) { return r != 0; });
}

}  // namespace

PwlNet PwlNet::affine(const Mat& w, const Vec& b)
{
    PwlNet n(static_cast<int>(w.cols()));
    n.push_layer({w, b, std::vector<char>(w.rows(), 0)});
    return n;
}

PwlNet PwlNet::select(int n, int offset, int length)
{
    Mat w = Mat::Zero(length, n);
    for (int k = 0; k < length; ++k)
        w(k, offset + k) = 1.0;
    return affine(w, Vec::Zero(length));
}

PwlNet PwlNet::from_mlp(const MlpNetwork& net)
{
    PwlNet out(net.input_dim());
    const auto& ls = net.layers();
    for (std::size_t l = 0; l < ls.size(); ++l)
        out.push_layer({ls[l].weight, ls[l].bias, std::vector<char>(ls[l].bias.size(), l + 1 < ls.size() ? 1 : 0)});
    return out;
}

PwlNet PwlNet::abs(int n)
{
    PwlNet out(n);
    Mat w(2 * n, n);
    w << Mat::Identity(n, n), -Mat::Identity(n, n);
    out.push_layer({w, Vec::Zero(2 * n), std::vector<char>(2 * n, 1)});
    Mat s(n, 2 * n);
    s << Mat::Identity(n, n), Mat::Identity(n, n);
    out.push_layer({s, Vec::Zero(n), std::vector<char>(n, 0)});
    return out;
}

void PwlNet::push_layer(PwlLayer layer)
{
    const int in = layers_.empty() ? input_dim_ : static_cast<int>(layers_.back().weight.rows());
    if (layer.weight.cols() != in || layer.bias.size() != layer.weight.rows() ||
        static_cast<int>(layer.relu.size()) != layer.weight.rows())
        throw StructuralError("PwlNet: layer shape does not chain");
    layers_.push_back(std::move(layer));
}

int PwlNet::output_dim() const
{
    return layers_.empty() ? input_dim_ : static_cast<int>(layers_.back().weight.rows());
}

int PwlNet::neuron_count() const
{
    int n = 0;
    for (const auto& l : layers_)
        n += static_cast<int>(l.bias.size());
    return n;
}

PwlNet PwlNet::then(const PwlNet& outer) const
{
    if (outer.input_dim() != output_dim())
        throw StructuralError("PwlNet::then: dimension mismatch");
    if (outer.layers_.empty())
        return *this;
    PwlNet out(input_dim_);
    if (layers_.empty()) {
        out.layers_ = outer.layers_;
        return out;
    }
    out.layers_ = layers_;
    std::size_t start = 0;
    if (all_linear(out.layers_.back())) {
        PwlLayer last = out.layers_.back();
        out.layers_.pop_back();
        const PwlLayer& first = outer.layers_.front();
        out.layers_.push_back({first.weight * last.weight, first.weight * last.bias + first.bias, first.relu});
        start = 1;
    }
    for (std::size_t l = start; l < outer.layers_.size(); ++l)
        out.layers_.push_back(outer.layers_[l]);
    return out;
}

PwlNet PwlNet::padded(int d) const
{
    PwlNet out = *this;
    while (out.depth() < d)
        out.push_layer(identity_layer(out.output_dim()));
    return out;
}

PwlNet PwlNet::stack(const PwlNet& a0, const PwlNet& b0)
{
    if (a0.input_dim() != b0.input_dim())
        throw StructuralError("PwlNet::stack: input dimensions differ");
    const int d = std::max({a0.depth(), b0.depth(), 1});
    const PwlNet a = a0.padded(d), b = b0.padded(d);
    PwlNet out(a.input_dim());
    for (int l = 0; l < d; ++l) {
        const PwlLayer& la = a.layers_[l];
        const PwlLayer& lb = b.layers_[l];
        const int ra = static_cast<int>(la.weight.rows()), rb = static_cast<int>(lb.weight.rows());
        PwlLayer m;
        if (l == 0) {
            m.weight.resize(ra + rb, a.input_dim());
            m.weight << la.weight, lb.weight;
        } else {
            const int ca = static_cast<int>(la.weight.cols()), cb = static_cast<int>(lb.weight.cols());
            m.weight = Mat::Zero(ra + rb, ca + cb);
            m.weight.topLeftCorner(ra, ca) = la.weight;
            m.weight.bottomRightCorner(rb, cb) = lb.weight;
        }
        m.bias.resize(ra + rb);
        m.bias << la.bias, lb.bias;
        m.relu = la.relu;
        m.relu.insert(m.relu.end(), lb.relu.begin(), lb.relu.end());
        out.layers_.push_back(std::move(m));
    }
    return out;
}

PwlNet PwlNet::stack(const std::vector<PwlNet>& parts)
{
    if (parts.empty())
        throw StructuralError("PwlNet::stack: nothing to stack");
    PwlNet out = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k)
        out = stack(out, parts[k]);
    return out;
}

Vec PwlNet::forward(const Vec& x) const
{
    if (x.size() != input_dim_)
        throw StructuralError("PwlNet::forward: input dimension mismatch");
    Vec h = x;
    for (const auto& l : layers_) {
        h = l.weight * h + l.bias;
        for (int k = 0; k < h.size(); ++k)
            if (l.relu[k] && h[k] < 0.0)
                h[k] = 0.0;
    }
    return h;
}

double affine_max(const Vec& coef, double c, const HyperBox& box)
{
    return c + coef.cwiseMax(0.0).dot(box.upper()) + coef.cwiseMin(0.0).dot(box.lower());
}

double affine_min(const Vec& coef, double c, const HyperBox& box)
{
    return c + coef.cwiseMax(0.0).dot(box.lower()) + coef.cwiseMin(0.0).dot(box.upper());
}

PwlBounds interval_bounds(const PwlNet& net, const HyperBox& box)
{
    if (box.dim() != net.input_dim())
        throw StructuralError("interval_bounds: box dimension mismatch");
    PwlBounds out;
    Vec lo = box.lower(), hi = box.upper();
    for (const auto& l : net.layers()) {
        const Mat wp = l.weight.cwiseMax(0.0), wn = l.weight.cwiseMin(0.0);
        Vec plo = wp * lo + wn * hi + l.bias;
        Vec phi = wp * hi + wn * lo + l.bias;
        out.pre_lower.push_back(plo);
        out.pre_upper.push_back(phi);
        for (int k = 0; k < plo.size(); ++k)
            if (l.relu[k]) {
                plo[k] = std::max(0.0, plo[k]);
                phi[k] = std::max(0.0, phi[k]);
            }
        lo = plo;
        hi = phi;
    }
    out.out_lower = lo;
    out.out_upper = hi;
    const int m = net.input_dim(), o = static_cast<int>(lo.size());
    out.lower_coef = Mat::Zero(o, m);
    out.upper_coef = Mat::Zero(o, m);
    out.lower_const = lo;
    out.upper_const = hi;
    return out;
}

namespace {

struct Relaxation {
    // relu(y) <= s y + t ; relu(y) >= a y, for every unit (linear units: s = a = 1, t = 0).
    Vec s, t, a;
};

}  // namespace

PwlBounds relaxed_bounds(const PwlNet& net, const HyperBox& box)
{
    if (box.dim() != net.input_dim())
        throw StructuralError("relaxed_bounds: box dimension mismatch");
    const int m = net.input_dim();
    PwlBounds out;
    std::vector<Relaxation> relax;

    // Post-activation forms and intervals.
    Mat Al = Mat::Identity(m, m), Au = Mat::Identity(m, m);
    Vec cl = Vec::Zero(m), cu = Vec::Zero(m);
    Vec lo = box.lower(), hi = box.upper();

    for (const auto& layer : net.layers()) {
        const Mat wp = layer.weight.cwiseMax(0.0), wn = layer.weight.cwiseMin(0.0);
        const int n = static_cast<int>(layer.bias.size());
        Mat PAu = wp * Au + wn * Al, PAl = wp * Al + wn * Au;
        Vec pcu = wp * cu + wn * cl + layer.bias, pcl = wp * cl + wn * cu + layer.bias;
        Vec ilo = wp * lo + wn * hi + layer.bias, ihi = wp * hi + wn * lo + layer.bias;
        Vec plo(n), phi(n);
        for (int k = 0; k < n; ++k) {
            const Vec au = PAu.row(k).transpose(), al = PAl.row(k).transpose();
            phi[k] = std::min(ihi[k], affine_max(au, pcu[k], box));
            plo[k] = std::max(ilo[k], affine_min(al, pcl[k], box));
            if (plo[k] > phi[k])  // rounding: keep a valid interval
                plo[k] = phi[k] = 0.5 * (plo[k] + phi[k]);
        }
        out.pre_lower.push_back(plo);
        out.pre_upper.push_back(phi);

        Relaxation r{Vec::Ones(n), Vec::Zero(n), Vec::Ones(n)};
        Vec nlo = plo, nhi = phi;
        for (int k = 0; k < n; ++k) {
            if (!layer.relu[k])
                continue;
            const double l = plo[k], u = phi[k];
            if (l >= 0.0)
                continue;
            if (u <= 0.0) {
                r.s[k] = r.a[k] = 0.0;
                PAu.row(k).setZero();
                PAl.row(k).setZero();
                pcu[k] = pcl[k] = 0.0;
                nlo[k] = nhi[k] = 0.0;
                continue;
            }
            const double s = u / (u - l);
            r.s[k] = s;
            r.t[k] = -s * l;
            r.a[k] = (u >= -l) ? 1.0 : 0.0;
            PAu.row(k) *= s;
            pcu[k] = s * pcu[k] - s * l;
            PAl.row(k) *= r.a[k];
            pcl[k] *= r.a[k];
            nlo[k] = 0.0;
        }
        relax.push_back(r);
        Au = PAu;
        Al = PAl;
        cu = pcu;
        cl = pcl;
        lo = nlo;
        hi = nhi;
    }

    const int o = net.output_dim();
    out.out_lower = lo;
    out.out_upper = hi;
    out.upper_coef = Au;
    out.upper_const = cu;
    out.lower_coef = Al;
    out.lower_const = cl;

    // Backward pass for each output, upper and lower.
    const auto& layers = net.layers();
    auto backward_upper = [&](const Vec& c, Vec& coef, double& cst) {
        Vec lam = c;
        cst = 0.0;
        for (int L = static_cast<int>(layers.size()) - 1; L >= 0; --L) {
            const Relaxation& r = relax[L];
            Vec mu(lam.size());
            for (int k = 0; k < lam.size(); ++k) {
                if (lam[k] >= 0.0) {
                    mu[k] = lam[k] * r.s[k];
                    cst += lam[k] * r.t[k];
                } else {
                    mu[k] = lam[k] * r.a[k];
                }
            }
            cst += mu.dot(layers[L].bias);
            lam = layers[L].weight.transpose() * mu;
        }
        coef = lam;
    };
    for (int k = 0; k < o; ++k) {
        Vec e = Vec::Zero(o);
        e[k] = 1.0;
        Vec cu_coef;
        double cu_c;
        backward_upper(e, cu_coef, cu_c);
        const double ub = affine_max(cu_coef, cu_c, box);
        const double fub = affine_max(out.upper_coef.row(k).transpose(), out.upper_const[k], box);
        if (ub <= fub) {
            out.upper_coef.row(k) = cu_coef.transpose();
            out.upper_const[k] = cu_c;
        }
        out.out_upper[k] = std::min({out.out_upper[k], ub, fub});

        Vec cl_coef;
        double cl_c;
        backward_upper(-e, cl_coef, cl_c);
        const double lb = -affine_max(cl_coef, cl_c, box);
        const double flb = affine_min(out.lower_coef.row(k).transpose(), out.lower_const[k], box);
        if (lb >= flb) {
            out.lower_coef.row(k) = -cl_coef.transpose();
            out.lower_const[k] = -cl_c;
        }
        out.out_lower[k] = std::max({out.out_lower[k], lb, flb});
    }
    return out;
}

}  // namespace siss
