#include "siss/neural.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace siss {

using nlohmann::json;

void GradientRecord::add(const GradientRecord& other, double s)
{
    if (weight.size() != other.weight.size())
        throw StructuralError("gradient records of different depth");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] += s * other.weight[l];
        bias[l] += s * other.bias[l];
    }
}

void GradientRecord::scale(double s)
{
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] *= s;
        bias[l] *= s;
    }
}

Vec GradientRecord::flatten() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < weight.size(); ++l)
        n += weight[l].size() + bias[l].size();
    Vec out(static_cast<int>(n));
    int k = 0;
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (int c = 0; c < weight[l].cols(); ++c)
            for (int r = 0; r < weight[l].rows(); ++r)
                out[k++] = weight[l](r, c);
        for (int r = 0; r < bias[l].size(); ++r)
            out[k++] = bias[l][r];
    }
    return out;
}

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers, bool convex_mode)
    : layers_(std::move(layers)), convex_mode_(convex_mode)
{
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].weight.rows() != layers_[l].bias.size())
            throw StructuralError("layer " + std::to_string(l) + ": bias length does not match weight rows");
        if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())
            throw StructuralError("layer " + std::to_string(l) + ": input width does not chain");
    }
}

MlpNetwork MlpNetwork::random(const std::vector<int>& widths, std::uint64_t seed, bool convex_mode)
{
    if (widths.size() < 2)
        throw ConfigError("a network needs at least an input and an output width");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l], out = widths[l + 1];
        if (in <= 0 || out <= 0)
            throw ConfigError("network widths must be positive");
        const double a = std::sqrt(1.0 / in);
        std::uniform_real_distribution<double> U(-a, a);
        DenseLayer layer{Mat(out, in), Vec(out)};
        for (int c = 0; c < in; ++c)
            for (int r = 0; r < out; ++r)
                layer.weight(r, c) = U(rng);
        for (int r = 0; r < out; ++r)
            layer.bias[r] = U(rng);
        layers.push_back(std::move(layer));
    }
    MlpNetwork net(std::move(layers), false);
    net.seed_ = seed;
    if (convex_mode)
        net = icnn_project(net);
    net.seed_ = seed;
    return net;
}

int MlpNetwork::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int MlpNetwork::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> MlpNetwork::widths() const
{
    std::vector<int> w;
    if (layers_.empty())
        return w;
    w.push_back(input_dim());
    for (const auto& l : layers_)
        w.push_back(static_cast<int>(l.weight.rows()));
    return w;
}

Vec MlpNetwork::forward(const Vec& x) const
{
    if (x.size() != input_dim())
        throw StructuralError("forward: input has dimension " + std::to_string(x.size()) + ", network expects " +
                              std::to_string(input_dim()));
    Vec h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        h = layers_[l].weight * h + layers_[l].bias;
        if (l + 1 < layers_.size())
            h = h.cwiseMax(0.0);
    }
    return h;
}

Vec MlpNetwork::forward(const Vec& x, Trace& trace) const
{
    if (x.size() != input_dim())
        throw StructuralError("forward: input dimension mismatch");
    trace.inputs.resize(layers_.size());
    trace.pre.resize(layers_.size());
    Vec h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        trace.inputs[l] = h;
        trace.pre[l] = layers_[l].weight * h + layers_[l].bias;
        h = (l + 1 < layers_.size()) ? Vec(trace.pre[l].cwiseMax(0.0)) : trace.pre[l];
    }
    return h;
}

Vec MlpNetwork::backward(const Trace& trace, const Vec& upstream, GradientRecord* grad, double scale) const
{
    if (upstream.size() != output_dim() || trace.pre.size() != layers_.size())
        throw StructuralError("backward: shape mismatch");
    if (grad && grad->weight.size() != layers_.size())
        throw StructuralError("backward: gradient record does not match the network");
    Vec g = upstream;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
        if (l + 1 < static_cast<int>(layers_.size()))
            g = g.cwiseProduct((trace.pre[l].array() > 0.0).cast<double>().matrix());
        if (grad) {
            grad->weight[l].noalias() += scale * g * trace.inputs[l].transpose();
            grad->bias[l] += scale * g;
        }
        g = layers_[l].weight.transpose() * g;
    }
    return g;
}

GradientRecord MlpNetwork::zero_gradient() const
{
    GradientRecord r;
    for (const auto& l : layers_) {
        r.weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
        r.bias.push_back(Vec::Zero(l.bias.size()));
    }
    return r;
}

GradientRecord MlpNetwork::backward(const Vec& x, const Vec& upstream) const
{
    Trace t;
    forward(x, t);
    GradientRecord g = zero_gradient();
    backward(t, upstream, &g);
    return g;
}

std::size_t MlpNetwork::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        n += l.weight.size() + l.bias.size();
    return n;
}

Vec MlpNetwork::flatten() const
{
    Vec out(static_cast<int>(parameter_count()));
    int k = 0;
    for (const auto& l : layers_) {
        for (int c = 0; c < l.weight.cols(); ++c)
            for (int r = 0; r < l.weight.rows(); ++r)
                out[k++] = l.weight(r, c);
        for (int r = 0; r < l.bias.size(); ++r)
            out[k++] = l.bias[r];
    }
    return out;
}

void MlpNetwork::unflatten(const Vec& p)
{
    if (static_cast<std::size_t>(p.size()) != parameter_count())
        throw StructuralError("unflatten: parameter vector has the wrong length");
    int k = 0;
    for (auto& l : layers_) {
        for (int c = 0; c < l.weight.cols(); ++c)
            for (int r = 0; r < l.weight.rows(); ++r)
                l.weight(r, c) = p[k++];
        for (int r = 0; r < l.bias.size(); ++r)
            l.bias[r] = p[k++];
    }
}

json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<int>(v.size()));
}

json mat_to_json(const Mat& m)
{
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        std::vector<double> row(m.cols());
        for (int c = 0; c < m.cols(); ++c)
            row[c] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

Mat mat_from_json(const json& j)
{
    const int rows = static_cast<int>(j.size());
    const int cols = rows ? static_cast<int>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw StructuralError("ragged matrix in JSON");
        for (int c = 0; c < cols; ++c)
            m(r, c) = j[r][c].get<double>();
    }
    return m;
}

json MlpNetwork::to_json() const
{
    json layers = json::array();
    for (const auto& l : layers_)
        layers.push_back({{"weight", mat_to_json(l.weight)}, {"bias", vec_to_json(l.bias)}});
    return {{"widths", widths()}, {"convex_mode", convex_mode_}, {"seed", seed_}, {"layers", layers}};
}

MlpNetwork MlpNetwork::from_json(const json& j)
{
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
        DenseLayer d{mat_from_json(l.at("weight")), vec_from_json(l.at("bias"))};
        if (d.weight.rows() == 0 && d.bias.size() > 0)
            d.weight = Mat::Zero(d.bias.size(), 0);
        layers.push_back(std::move(d));
    }
    MlpNetwork net(std::move(layers), j.value("convex_mode", false));
    net.seed_ = j.value("seed", std::uint64_t{0});
    return net;
}

Vec clamp(const Vec& y, const Vec& lo, const Vec& hi)
{
    if (y.size() != lo.size() || y.size() != hi.size())
        throw StructuralError("clamp: dimension mismatch");
    if ((lo.array() > hi.array()).any())
        throw ConfigError("clamp: lower bound exceeds upper bound");
    return y.cwiseMax(lo).cwiseMin(hi);
}

Vec clamp_relu_form(const Vec& y, const Vec& lo, const Vec& hi)
{
    if ((lo.array() > hi.array()).any())
        throw ConfigError("clamp: lower bound exceeds upper bound");
    return lo + (y - lo).cwiseMax(0.0) - (y - hi).cwiseMax(0.0);
}

double spectral_norm(const Mat& m)
{
    if (m.size() == 0)
        return 0.0;
    // Power iteration on M^T M gives a lower estimate; the symmetric eigen-solver
    // bounds it from above up to rounding.
    const Mat g = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
    double lam = std::max(0.0, es.eigenvalues().maxCoeff());
    Vec v = Vec::Ones(g.cols()) / std::sqrt(static_cast<double>(g.cols()));
    double prev = 0.0;
    for (int it = 0; it < 50; ++it) {
        Vec w = g * v;
        const double n = w.norm();
        if (n == 0.0)
            break;
        v = w / n;
        if (std::abs(n - prev) <= 1e-8 * std::max(1.0, n))
            break;
        prev = n;
    }
    lam = std::max(lam, v.dot(g * v));
    return std::sqrt(lam) * (1.0 + 1e-9) + 1e-15;
}

double operator_norm(const Mat& m, NormKind norm)
{
    if (m.size() == 0)
        return 0.0;
    if (norm == NormKind::Inf)
        return m.cwiseAbs().rowwise().sum().maxCoeff();
    return spectral_norm(m);
}

double lipschitz_upper_bound(const MlpNetwork& net, NormKind norm)
{
    double L = 1.0;
    for (const auto& l : net.layers())
        L *= operator_norm(l.weight, norm);
    return net.empty() ? 0.0 : L;
}

MlpNetwork icnn_project(const MlpNetwork& net)
{
    MlpNetwork out = net;
    auto& layers = out.layers();
    for (std::size_t l = 1; l < layers.size(); ++l)
        layers[l].weight = layers[l].weight.cwiseMax(0.0);
    out.set_convex_mode(true);
    return out;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : m_(Vec::Zero(static_cast<int>(n))), v_(Vec::Zero(static_cast<int>(n))), lr_(lr), beta1_(beta1),
      beta2_(beta2), eps_(eps)
{
}

void Adam::step(Vec& params, const Vec& grad)
{
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw StructuralError("Adam: parameter vector size changed");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace siss
