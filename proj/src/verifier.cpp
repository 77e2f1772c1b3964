#include "siss/verifier.hpp"

#include "siss/lp.hpp"
#include "siss/parallel.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

namespace siss {

using nlohmann::json;

std::string to_string(VerifyStatus s)
{
    switch (s) {
    case VerifyStatus::Verified: return "verified";
    case VerifyStatus::Falsified: return "falsified";
    case VerifyStatus::Unknown: return "unknown";
    }
    return "unknown";
}

VerifyStatus status_from_string(const std::string& s)
{
    if (s == "verified")
        return VerifyStatus::Verified;
    if (s == "falsified")
        return VerifyStatus::Falsified;
    return VerifyStatus::Unknown;
}

// ---------------------------------------------------------------- plain bounds

HyperBox interval_propagate(const MlpNetwork& net, const HyperBox& box)
{
    const PwlBounds b = interval_bounds(PwlNet::from_mlp(net), box);
    return HyperBox(b.out_lower, b.out_upper);
}

std::vector<LinearBounds> linear_relax_propagate(const MlpNetwork& net, const HyperBox& box)
{
    const PwlBounds b = relaxed_bounds(PwlNet::from_mlp(net), box);
    std::vector<LinearBounds> out;
    for (int k = 0; k < b.out_upper.size(); ++k)
        out.push_back({b.lower_coef.row(k).transpose(), b.lower_const[k], b.upper_coef.row(k).transpose(),
                       b.upper_const[k], b.out_lower[k], b.out_upper[k]});
    return out;
}

std::pair<double, double> bound_norm(const HyperBox& box)
{
    const Vec nearest = Vec::Zero(box.dim()).cwiseMax(box.lower()).cwiseMin(box.upper());
    const Vec farthest = box.lower().cwiseAbs().cwiseMax(box.upper().cwiseAbs());
    return {nearest.norm(), farthest.norm()};
}

// ---------------------------------------------------------------- encodings

PwlNet lyapunov_pwl(const LyapunovNet& v)
{
    const PwlNet phi = PwlNet::from_mlp(v.phi());
    const int r = static_cast<int>(v.r().rows());
    const Vec shift = Vec::Constant(1, -v.equilibrium_value());
    if (r == 0)
        return phi.then(PwlNet::affine(Mat::Ones(1, 1), shift));
    const PwlNet absr = PwlNet::affine(v.r(), Vec::Zero(r)).then(PwlNet::abs(r));
    return PwlNet::stack(phi, absr).then(PwlNet::affine(Mat::Ones(1, 1 + r), shift));
}

namespace {

PwlNet sum_halves(int n)
{
    Mat w(n, 2 * n);
    w << Mat::Identity(n, n), Mat::Identity(n, n);
    return PwlNet::affine(w, Vec::Zero(n));
}

PwlNet affine_plus_mlp(const Mat& a, const Vec& shift, const MlpNetwork& net)
{
    const PwlNet lin = PwlNet::affine(a, shift);
    if (net.empty())
        return lin;
    return PwlNet::stack(lin, PwlNet::from_mlp(net)).then(sum_halves(static_cast<int>(a.rows())));
}

}  // namespace

PwlNet successor_pwl(const LocalQuery& q)
{
    const int m = q.domain.dim();
    const SurrogateNet& s = q.surrogate().net;
    const PwlNet sur = affine_plus_mlp(s.linear(), s.output_shift(), s.residual());
    const Controller* c = q.controller();
    if (!c)
        return sur;
    const int p = c->output_dim();
    const PwlNet raw = PwlNet::select(m, 0, q.disturbance_offset)
                           .then(affine_plus_mlp(c->linear, Vec::Zero(p), c->net));
    const PwlNet zu = PwlNet::stack(PwlNet::identity(m), raw);

    PwlNet clampnet(m + p);
    Mat w1 = Mat::Zero(m + 2 * p, m + p);
    w1.topLeftCorner(m, m) = Mat::Identity(m, m);
    w1.block(m, m, p, p) = Mat::Identity(p, p);
    w1.block(m + p, m, p, p) = Mat::Identity(p, p);
    Vec b1 = Vec::Zero(m + 2 * p);
    b1.segment(m, p) = -c->lo;
    b1.segment(m + p, p) = -c->hi;
    std::vector<char> relu(m + 2 * p, 1);
    std::fill(relu.begin(), relu.begin() + m, 0);
    clampnet.push_layer({w1, b1, relu});
    Mat w2 = Mat::Zero(m + p, m + 2 * p);
    w2.topLeftCorner(m, m) = Mat::Identity(m, m);
    w2.block(m, m, p, p) = Mat::Identity(p, p);
    w2.block(m, m + p, p, p) = -Mat::Identity(p, p);
    Vec b2 = Vec::Zero(m + p);
    b2.segment(m, p) = c->lo;
    clampnet.push_layer({w2, b2, std::vector<char>(m + p, 0)});
    return zu.then(clampnet).then(sur);
}

QueryEncoding encode_query(const LocalQuery& q)
{
    QueryEncoding enc;
    const int m = q.domain.dim();
    const auto& env = q.bundle->envelope;
    if (q.condition != Condition::Decrement) {
        const PwlNet v = lyapunov_pwl(q.v_self());
        const PwlNet all = PwlNet::stack(v, PwlNet::abs(m));
        Mat w = Mat::Zero(2, 1 + m);
        if (q.condition == Condition::PositivityLower) {
            w(0, 0) = -1.0;
            w.row(0).tail(m).setConstant(env.c1);
            w(1, 0) = -1.0;
            enc.norm_coef = env.c1;
        } else {
            w(0, 0) = 1.0;
            w.row(0).tail(m).setConstant(-env.c2 / std::sqrt(static_cast<double>(m)));
            w(1, 0) = 1.0;
            enc.norm_coef = -env.c2;
        }
        enc.net = all.then(PwlNet::affine(w, Vec::Zero(2)));
        enc.norm_offset = 0;
        enc.norm_len = m;
        return enc;
    }

    std::vector<PwlNet> parts;
    parts.push_back(successor_pwl(q).then(lyapunov_pwl(q.v_self())));
    parts.push_back(PwlNet::select(m, 0, q.state_dim).then(lyapunov_pwl(q.v_self())));
    const int E = static_cast<int>(q.neighbor_offsets.size());
    for (int k = 0; k < E; ++k)
        parts.push_back(PwlNet::select(m, q.neighbor_offsets[k], q.neighbor_dims[k]).then(lyapunov_pwl(q.v_neighbor(k))));
    const int p = q.disturbance_dim;
    if (p > 0)
        parts.push_back(PwlNet::select(m, q.disturbance_offset, p).then(PwlNet::abs(p)));
    const PwlNet all = PwlNet::stack(parts);
    const double psi = q.bundle->psi;
    Mat w = Mat::Zero(2, 2 + E + p);
    for (int row = 0; row < 2; ++row) {
        w(row, 0) = 1.0;
        w(row, 1) = -q.gamma_self();
        for (int k = 0; k < E; ++k)
            w(row, 2 + k) = -q.gamma_neighbor(k);
    }
    if (p > 0)
        w.row(0).tail(p).setConstant(-psi / std::sqrt(static_cast<double>(p)));
    enc.net = all.then(PwlNet::affine(w, Vec::Zero(2)));
    enc.norm_coef = -psi;
    enc.norm_offset = q.disturbance_offset;
    enc.norm_len = p;
    return enc;
}

namespace {

double norm_term(const QueryEncoding& enc, const HyperBox& box)
{
    if (enc.norm_len == 0 || enc.norm_coef == 0.0)
        return 0.0;
    const auto [lo, hi] = bound_norm(box.slice(enc.norm_offset, enc.norm_len));
    return enc.norm_coef >= 0.0 ? enc.norm_coef * hi : enc.norm_coef * lo;
}

}  // namespace

double encoding_upper_bound(const QueryEncoding& enc, const PwlBounds& b, const HyperBox& box)
{
    return std::min(b.out_upper[0], b.out_upper[1] + norm_term(enc, box));
}

// ---------------------------------------------------------------- LP refinement

namespace {

enum class LpOutcome { Proven, Violated, Open };

struct UnstableUnit {
    int layer;
    int unit;
    double l;
    double u;
};

class LpRefiner {
public:
    LpRefiner(const QueryEncoding& enc, const PwlBounds& bounds, const HyperBox& box, double delta, double tol,
              int max_leaves, const std::function<bool(const Vec&)>& try_point, long long& lp_calls)
        : enc_(enc), bounds_(bounds), box_(box), delta_(delta), tol_(tol), max_leaves_(max_leaves),
          try_point_(try_point), lp_calls_(lp_calls)
    {
        const auto& layers = enc_.net.layers();
        for (int L = 0; L < static_cast<int>(layers.size()); ++L)
            for (int k = 0; k < layers[L].bias.size(); ++k)
                if (layers[L].relu[k] && bounds_.pre_lower[L][k] < 0.0 && bounds_.pre_upper[L][k] > 0.0)
                    units_.push_back({L, k, bounds_.pre_lower[L][k], bounds_.pre_upper[L][k]});
    }

    int unstable() const { return static_cast<int>(units_.size()); }

    LpOutcome run()
    {
        std::vector<int> phase(units_.size(), 0);
        leaves_ = 0;
        return branch(phase);
    }

private:
    LpOutcome branch(std::vector<int>& phase)
    {
        if (++leaves_ > max_leaves_)
            return LpOutcome::Open;
        Vec vars;
        Vec gaps;
        const LpResult r = solve(phase, vars, gaps);
        ++lp_calls_;
        if (r.status == LpStatus::Infeasible)
            return LpOutcome::Proven;
        if (r.status != LpStatus::Optimal)
            return LpOutcome::Open;
        if (r.value + delta_ <= tol_)
            return LpOutcome::Proven;
        const int m = box_.dim();
        const Vec x = (box_.lower() + vars.head(m)).cwiseMax(box_.lower()).cwiseMin(box_.upper());
        if (try_point_(x))
            return LpOutcome::Violated;
        int pick = -1;
        double best = 1e-12;
        for (std::size_t j = 0; j < units_.size(); ++j)
            if (phase[j] == 0 && gaps[static_cast<int>(j)] > best) {
                best = gaps[static_cast<int>(j)];
                pick = static_cast<int>(j);
            }
        if (pick < 0) {
            for (std::size_t j = 0; j < units_.size(); ++j)
                if (phase[j] == 0) {
                    pick = static_cast<int>(j);
                    break;
                }
        }
        if (pick < 0)
            return LpOutcome::Open;
        for (int side : {1, -1}) {
            phase[pick] = side;
            const LpOutcome o = branch(phase);
            if (o != LpOutcome::Proven) {
                phase[pick] = 0;
                return o;
            }
        }
        phase[pick] = 0;
        return LpOutcome::Proven;
    }

    LpResult solve(const std::vector<int>& phase, Vec& vars, Vec& gaps)
    {
        const int m = box_.dim();
        const int K = static_cast<int>(units_.size());
        const int nv = m + K + 2;
        const int t1 = m + K, t2 = m + K + 1;
        std::vector<Vec> rows;
        std::vector<double> rhs;
        auto add = [&](const Vec& a, double b) {
            rows.push_back(a);
            rhs.push_back(b);
        };
        for (int d = 0; d < m; ++d) {
            Vec a = Vec::Zero(nv);
            a[d] = 1.0;
            add(a, box_.width()[d]);
        }
        // Expressions of the current layer's outputs over the LP variables.
        Mat E = Mat::Zero(m, nv);
        E.leftCols(m) = Mat::Identity(m, m);
        Vec c = box_.lower();
        std::vector<std::pair<Vec, double>> pre_of_unit(K);
        int j = 0;
        const auto& layers = enc_.net.layers();
        for (int L = 0; L < static_cast<int>(layers.size()); ++L) {
            Mat P = layers[L].weight * E;
            Vec pc = layers[L].weight * c + layers[L].bias;
            for (int k = 0; k < P.rows(); ++k) {
                if (!layers[L].relu[k])
                    continue;
                const double l = bounds_.pre_lower[L][k], u = bounds_.pre_upper[L][k];
                if (l >= 0.0)
                    continue;
                if (u <= 0.0) {
                    P.row(k).setZero();
                    pc[k] = 0.0;
                    continue;
                }
                const Vec pre = P.row(k).transpose();
                const double pcst = pc[k];
                const int y = m + j;
                pre_of_unit[j] = {pre, pcst};
                Vec a = pre;
                a[y] -= 1.0;
                add(a, -pcst);  // y >= pre
                const double s = u / (u - l);
                a = -s * pre;
                a[y] += 1.0;
                add(a, s * (pcst - l));  // y <= s (pre - l)
                if (phase[j] == 1) {
                    add(-pre, pcst);  // pre >= 0
                    a = -pre;
                    a[y] += 1.0;
                    add(a, pcst);  // y <= pre
                } else if (phase[j] == -1) {
                    add(pre, -pcst);  // pre <= 0
                    a = Vec::Zero(nv);
                    a[y] = 1.0;
                    add(a, 0.0);  // y <= 0
                }
                P.row(k).setZero();
                P(k, y) = 1.0;
                pc[k] = 0.0;
                ++j;
            }
            E = P;
            c = pc;
        }
        const double extra[2] = {0.0, norm_term(enc_, box_)};
        for (int o = 0; o < 2; ++o) {
            Vec a = -E.row(o).transpose();
            a[t1] += 1.0;
            a[t2] -= 1.0;
            add(a, c[o] + extra[o]);
        }
        LpProblem prob;
        prob.c = Vec::Zero(nv);
        prob.c[t1] = 1.0;
        prob.c[t2] = -1.0;
        prob.a_le.resize(static_cast<int>(rows.size()), nv);
        prob.b_le.resize(static_cast<int>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            prob.a_le.row(static_cast<int>(r)) = rows[r].transpose();
            prob.b_le[static_cast<int>(r)] = rhs[r];
        }
        prob.a_eq.resize(0, nv);
        prob.b_eq.resize(0);
        LpResult res = solve_lp(prob);
        gaps = Vec::Zero(K);
        if (res.status == LpStatus::Optimal) {
            vars = res.x;
            for (int q = 0; q < K; ++q) {
                const double pre = pre_of_unit[q].first.dot(vars) + pre_of_unit[q].second;
                gaps[q] = vars[m + q] - std::max(0.0, pre);
            }
        }
        return res;
    }

    const QueryEncoding& enc_;
    const PwlBounds& bounds_;
    const HyperBox& box_;
    double delta_, tol_;
    int max_leaves_;
    const std::function<bool(const Vec&)>& try_point_;
    long long& lp_calls_;
    std::vector<UnstableUnit> units_;
    int leaves_ = 0;
};

std::vector<Vec> pre_activations(const PwlNet& net, const Vec& x)
{
    std::vector<Vec> pre;
    Vec h = x;
    for (const auto& layer : net.layers()) {
        Vec p = layer.weight * h + layer.bias;
        pre.push_back(p);
        for (int k = 0; k < p.size(); ++k)
            if (layer.relu[k])
                p[k] = std::max(0.0, p[k]);
        h = p;
    }
    return pre;
}

/// Every ReLU that is unstable over the box vanishes at the origin (up to rounding), so
/// the network is a constant plus a positively homogeneous function on the box.
bool homogeneous_on(const PwlNet& net, const PwlBounds& b, const std::vector<Vec>& origin_pre)
{
    const auto& layers = net.layers();
    for (std::size_t L = 0; L < layers.size(); ++L)
        for (int k = 0; k < layers[L].bias.size(); ++k)
            if (layers[L].relu[k] && b.pre_lower[L][k] < 0.0 && b.pre_upper[L][k] > 0.0 &&
                std::abs(origin_pre[L][k]) > 1e-12)
                return false;
    return true;
}

struct Node {
    HyperBox box;
    int depth;
    double parent_ub;
    long long seq;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const
    {
        if (a.parent_ub != b.parent_ub)
            return a.parent_ub < b.parent_ub;
        return a.seq > b.seq;
    }
};

}  // namespace

// ---------------------------------------------------------------- branch and bound

VerifyResult verify_query(const LocalQuery& q, const VerifyBudget& budget)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    VerifyResult res;
    res.agent = q.agent;
    res.condition = q.condition;
    const double tol = budget.tolerance;

    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
    auto try_point = std::function<bool(const Vec&)>([&](const Vec& z) {
        const double r = q.residual(z);
        if (r > tol) {
            res.counterexample = Counterexample{q.agent, q.condition, z, r};
            return true;
        }
        return false;
    });
    auto finish = [&](VerifyStatus s) {
        res.status = s;
        res.stats.seconds = elapsed();
        return res;
    };

    if (q.domain.is_point()) {
        res.stats.boxes = 1;
        return finish(try_point(q.domain.center()) ? VerifyStatus::Falsified : VerifyStatus::Verified);
    }

    const QueryEncoding enc = encode_query(q);
    auto delta_for = [&](const HyperBox& b) { return (q.core && q.core->contains(b)) ? 0.0 : q.delta; };

    const Vec origin = Vec::Zero(q.domain.dim());
    const bool origin_inside = q.domain.contains(origin);
    std::vector<Vec> origin_pre;
    if (origin_inside) {
        if (try_point(origin))
            return finish(VerifyStatus::Falsified);
        origin_pre = pre_activations(enc.net, origin);
    }

    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    long long seq = 0;
    open.push({q.domain, 0, std::numeric_limits<double>::infinity(), seq++});
    bool incomplete = false;

    while (!open.empty()) {
        if (res.stats.boxes >= budget.max_boxes || elapsed() > budget.max_seconds) {
            incomplete = true;
            break;
        }
        Node node = open.top();
        open.pop();
        ++res.stats.boxes;
        res.stats.max_depth = std::max(res.stats.max_depth, node.depth);
        const HyperBox& box = node.box;

        if (box.is_point()) {
            if (try_point(box.center()))
                return finish(VerifyStatus::Falsified);
            continue;
        }
        if (try_point(box.center()))
            return finish(VerifyStatus::Falsified);

        const PwlBounds b = relaxed_bounds(enc.net, box);
        const double nt = norm_term(enc, box);
        const double ub0 = b.out_upper[0], ub1 = b.out_upper[1] + nt;
        const int which = ub0 <= ub1 ? 0 : 1;
        const double ub = std::min({ub0, ub1, node.parent_ub});
        const double delta = delta_for(box);

        // Corner maximizing the active upper form.
        Vec corner(box.dim());
        for (int d = 0; d < box.dim(); ++d)
            corner[d] = b.upper_coef(which, d) >= 0.0 ? box.upper()[d] : box.lower()[d];
        if (try_point(corner))
            return finish(VerifyStatus::Falsified);

        if (ub + delta <= tol)
            continue;

        // Positively homogeneous residual: rays from the origin leave the box through its
        // outer faces, so checking those faces covers the whole box.
        if (origin_inside && delta == 0.0 && box.contains(origin) && homogeneous_on(enc.net, b, origin_pre)) {
            for (int d = 0; d < box.dim(); ++d) {
                if (box.upper()[d] > 0.0) {
                    Vec lo = box.lower();
                    lo[d] = box.upper()[d];
                    open.push({HyperBox(lo, box.upper()), node.depth + 1, node.parent_ub, seq++});
                }
                if (box.lower()[d] < 0.0) {
                    Vec hi = box.upper();
                    hi[d] = box.lower()[d];
                    open.push({HyperBox(box.lower(), hi), node.depth + 1, node.parent_ub, seq++});
                }
            }
            continue;
        }

        LpRefiner lp(enc, b, box, delta, tol, budget.lp_max_leaves, try_point, res.stats.lp_calls);
        if (lp.unstable() <= budget.lp_max_unstable) {
            const LpOutcome o = lp.run();
            if (o == LpOutcome::Proven)
                continue;
            if (o == LpOutcome::Violated)
                return finish(VerifyStatus::Falsified);
        }

        if (node.depth >= budget.max_depth) {
            incomplete = true;
            continue;
        }

        // Branch on width x |coefficient|; the norm term's slice counts in the no-norm variant.
        int dim = -1;
        double best = 0.0;
        for (int d = 0; d < box.dim(); ++d) {
            double score = box.width()[d] * std::abs(b.upper_coef(which, d));
            if (which == 1 && d >= enc.norm_offset && d < enc.norm_offset + enc.norm_len)
                score += box.width()[d] * std::abs(enc.norm_coef);
            if (score > best) {
                best = score;
                dim = d;
            }
        }
        if (dim < 0) {
            for (int d = 0; d < box.dim(); ++d)
                if (box.width()[d] > best) {
                    best = box.width()[d];
                    dim = d;
                }
        }
        double at = box.center()[dim];
        if (q.core && delta > 0.0) {
            const double lo = box.lower()[dim], hi = box.upper()[dim];
            const double cu = q.core->upper()[dim], cl = q.core->lower()[dim];
            if (cu > lo && cu < hi)
                at = cu;
            else if (cl > lo && cl < hi)
                at = cl;
        }
        auto [left, right] = box.split_at(dim, at);
        const double keep = std::min(ub0, ub1);
        open.push({left, node.depth + 1, std::min(keep, node.parent_ub), seq++});
        open.push({right, node.depth + 1, std::min(keep, node.parent_ub), seq++});
    }
    return finish(incomplete ? VerifyStatus::Unknown : VerifyStatus::Verified);
}

SystemVerification verify_system(CertificateBundle& bundle, const VerifyBudget& budget,
                                 const std::vector<int>* representatives, int threads,
                                 const std::vector<int>* trusted)
{
    const int n = bundle.n_agents();
    std::vector<int> agents;
    if (representatives) {
        agents = *representatives;
        std::sort(agents.begin(), agents.end());
        agents.erase(std::unique(agents.begin(), agents.end()), agents.end());
    } else {
        for (int i = 0; i < n; ++i)
            agents.push_back(i);
    }
    if (trusted)
        std::erase_if(agents, [&](int a) {
            return a < static_cast<int>(bundle.status.size()) &&
                   std::find(trusted->begin(), trusted->end(), a) != trusted->end();
        });
    const Condition conds[3] = {Condition::PositivityLower, Condition::PositivityUpper, Condition::Decrement};
    std::vector<LocalQuery> tasks;
    for (int a : agents) {
        if (a < 0 || a >= n)
            throw StructuralError("representative agent id out of range");
        for (Condition c : conds)
            tasks.push_back(make_query(bundle, a, c));
    }
    std::vector<VerifyResult> done(tasks.size());
    std::atomic<std::size_t> next{0};
    if (threads <= 0)
        threads = default_threads();
    parallel_chunks(threads, threads, [&](long long, long long, int) {
        for (std::size_t k = next++; k < tasks.size(); k = next++)
            done[k] = verify_query(tasks[k], budget);
    });

    SystemVerification out;
    out.queries_executed = static_cast<int>(tasks.size());
    std::map<std::string, std::size_t> by_digest;
    if (representatives)
        for (std::size_t k = 0; k < tasks.size(); ++k)
            by_digest.emplace(tasks[k].digest(), k);

    const std::vector<AgentStatus> previous = bundle.status;
    auto is_trusted = [&](int i) {
        return trusted && i < static_cast<int>(previous.size()) &&
               std::find(trusted->begin(), trusted->end(), i) != trusted->end();
    };
    bundle.status.assign(n, AgentStatus{});
    std::map<std::pair<int, int>, std::size_t> executed;
    for (std::size_t k = 0; k < tasks.size(); ++k)
        executed[{tasks[k].agent, static_cast<int>(tasks[k].condition)}] = k;

    for (int i = 0; i < n; ++i) {
        for (Condition c : conds) {
            VerifyResult r;
            auto it = executed.find({i, static_cast<int>(c)});
            if (it != executed.end()) {
                r = done[it->second];
            } else {
                r.agent = i;
                r.condition = c;
                const auto d = by_digest.find(make_query(bundle, i, c).digest());
                if (is_trusted(i)) {
                    const AgentStatus& p = previous[i];
                    r.status = status_from_string(c == Condition::PositivityLower   ? p.positivity_lower
                                                  : c == Condition::PositivityUpper ? p.positivity_upper
                                                                                    : p.decrement);
                    r.transferred = true;
                } else if (d != by_digest.end()) {
                    r.status = done[d->second].status;
                    r.transferred = true;
                } else {
                    r.status = VerifyStatus::Unknown;
                }
            }
            const std::string s = to_string(r.status);
            switch (c) {
            case Condition::PositivityLower: bundle.status[i].positivity_lower = s; break;
            case Condition::PositivityUpper: bundle.status[i].positivity_upper = s; break;
            case Condition::Decrement: bundle.status[i].decrement = s; break;
            }
            if (r.counterexample && !r.transferred)
                out.counterexamples.push_back(*r.counterexample);
            out.results.push_back(r);
        }
    }
    out.verified = std::all_of(bundle.status.begin(), bundle.status.end(), [](const AgentStatus& s) { return s.verified(); });
    bundle.verified = out.verified;
    return out;
}

json to_json(const VerifyResult& r)
{
    json j{{"agent", r.agent},
           {"condition", to_string(r.condition)},
           {"status", to_string(r.status)},
           {"transferred", r.transferred},
           {"boxes", r.stats.boxes},
           {"max_depth", r.stats.max_depth},
           {"lp_calls", r.stats.lp_calls},
           {"seconds", r.stats.seconds}};
    if (r.counterexample)
        j["counterexample"] = {{"point", vec_to_json(r.counterexample->point)},
                               {"violation", r.counterexample->violation}};
    return j;
}

json to_json(const SystemVerification& s)
{
    json res = json::array();
    for (const auto& r : s.results)
        res.push_back(to_json(r));
    json cex = json::array();
    for (const auto& c : s.counterexamples)
        cex.push_back({{"agent", c.agent},
                       {"condition", to_string(c.kind)},
                       {"point", vec_to_json(c.point)},
                       {"violation", c.violation}});
    return {{"verified", s.verified}, {"queries_executed", s.queries_executed}, {"results", res},
            {"counterexamples", cex}};
}

}  // namespace siss
