#include "siss/scalability.hpp"

#include "siss/lp.hpp"
#include "siss/neural.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

namespace siss {

using nlohmann::json;

std::vector<std::string> dynamics_signatures(const Scenario& s, const std::vector<std::string>* surrogate_keys)
{
    std::vector<std::string> out;
    for (AgentId i = 0; i < s.n_agents(); ++i) {
        json rec = agent_parameter_record(s, i);
        const HyperBox d = local_domain(s, i);
        rec["domain"] = {vec_to_json(d.lower()), vec_to_json(d.upper())};
        if (surrogate_keys)
            rec["surrogate"] = surrogate_keys->at(i);
        out.push_back(fnv1a_hex(rec.dump()));
    }
    return out;
}

// ---------------------------------------------------------------- embeddings

namespace {

class EmbeddingSearcher {
public:
    EmbeddingSearcher(const SignedGraph& small, const SignedGraph& large, EmbeddingSearch& stats,
                      const std::function<bool(const EmbeddingMap&)>& accept)
        : s_(small), l_(large), stats_(stats), accept_(accept), tau_(small.graph.size(), -1),
          used_(large.graph.size(), false)
    {
    }

    bool run() { return extend(0); }
    EmbeddingMap result() const { return {tau_}; }

private:
    bool compatible(int j, int cand) const
    {
        if (used_[cand] || s_.signatures[j] != l_.signatures[cand])
            return false;
        if (s_.graph.neighbors(j).size() != l_.graph.neighbors(cand).size())
            return false;
        for (int k = 0; k < j; ++k) {
            const int tk = tau_[k];
            if (s_.graph.has_edge(j, k) != l_.graph.has_edge(cand, tk))
                return false;
            if (s_.graph.has_edge(k, j) != l_.graph.has_edge(tk, cand))
                return false;
        }
        return true;
    }

    bool extend(int j)
    {
        if (++stats_.nodes > stats_.node_cap) {
            stats_.capped = true;
            return false;
        }
        if (j == s_.graph.size())
            return !accept_ || accept_(result());
        for (int cand = 0; cand < l_.graph.size(); ++cand) {
            if (!compatible(j, cand))
                continue;
            tau_[j] = cand;
            used_[cand] = true;
            if (extend(j + 1))
                return true;
            used_[cand] = false;
            tau_[j] = -1;
            if (stats_.capped)
                return false;
        }
        return false;
    }

    const SignedGraph& s_;
    const SignedGraph& l_;
    EmbeddingSearch& stats_;
    const std::function<bool(const EmbeddingMap&)>& accept_;
    std::vector<AgentId> tau_;
    std::vector<bool> used_;
};

}  // namespace

std::optional<EmbeddingMap> find_embedding(const SignedGraph& small, const SignedGraph& large, EmbeddingSearch* search,
                                           const std::function<bool(const EmbeddingMap&)>& accept)
{
    if (static_cast<int>(small.signatures.size()) != small.graph.size() ||
        static_cast<int>(large.signatures.size()) != large.graph.size())
        throw StructuralError("signature count does not match graph size");
    EmbeddingSearch local;
    EmbeddingSearch& stats = search ? *search : local;
    stats.nodes = 0;
    stats.capped = false;
    if (small.graph.size() > large.graph.size())
        return std::nullopt;
    EmbeddingSearcher searcher(small, large, stats, accept);
    if (searcher.run())
        return searcher.result();
    return std::nullopt;
}

bool embedding_valid(const SignedGraph& small, const SignedGraph& large, const EmbeddingMap& map)
{
    const int n = small.graph.size();
    if (static_cast<int>(map.tau.size()) != n)
        return false;
    std::set<AgentId> image;
    for (int j = 0; j < n; ++j) {
        const AgentId t = map.tau[j];
        if (t < 0 || t >= large.graph.size() || !image.insert(t).second)
            return false;
        if (small.signatures[j] != large.signatures[t])
            return false;
    }
    for (int j = 0; j < n; ++j) {
        std::set<AgentId> mapped;
        for (AgentId k : small.graph.neighbors(j))
            mapped.insert(map.tau[k]);
        const auto& target = large.graph.neighbors(map.tau[j]);
        if (mapped != std::set<AgentId>(target.begin(), target.end()))
            return false;
    }
    return true;
}

// ---------------------------------------------------------------- color refinement

EquivalencePartition equivalence_classes(const SignedGraph& g)
{
    const int n = g.graph.size();
    if (static_cast<int>(g.signatures.size()) != n)
        throw StructuralError("signature count does not match graph size");
    std::vector<std::vector<AgentId>> in(n);
    for (int i = 0; i < n; ++i)
        for (AgentId j : g.graph.neighbors(i))
            in[j].push_back(i);

    std::vector<int> color(n);
    {
        std::map<std::string, int> ids;
        for (const auto& s : g.signatures)
            ids.emplace(s, 0);
        int next = 0;
        for (auto& [k, v] : ids)
            v = next++;
        for (int i = 0; i < n; ++i)
            color[i] = ids[g.signatures[i]];
    }
    int classes = static_cast<int>(std::set<int>(color.begin(), color.end()).size());
    while (true) {
        using Key = std::tuple<int, std::vector<int>, std::vector<int>>;
        std::vector<Key> keys(n);
        for (int i = 0; i < n; ++i) {
            std::vector<int> outc, inc;
            for (AgentId j : g.graph.neighbors(i))
                outc.push_back(color[j]);
            for (AgentId j : in[i])
                inc.push_back(color[j]);
            std::sort(outc.begin(), outc.end());
            std::sort(inc.begin(), inc.end());
            keys[i] = {color[i], outc, inc};
        }
        std::map<Key, int> ids;
        for (const auto& k : keys)
            ids.emplace(k, 0);
        int next = 0;
        for (auto& [k, v] : ids)
            v = next++;
        for (int i = 0; i < n; ++i)
            color[i] = ids[keys[i]];
        if (next == classes)
            break;
        classes = next;
    }

    EquivalencePartition p;
    p.class_of.assign(n, -1);
    std::map<int, int> order;
    for (int i = 0; i < n; ++i) {
        auto [it, fresh] = order.emplace(color[i], static_cast<int>(p.classes.size()));
        if (fresh) {
            p.classes.emplace_back();
            p.representative.push_back(i);
        }
        p.classes[it->second].push_back(i);
        p.class_of[i] = it->second;
    }
    return p;
}

bool decomposable(const SystemGraph& g, const std::vector<AgentId>& subsystem)
{
    const std::set<AgentId> inside(subsystem.begin(), subsystem.end());
    for (AgentId i : subsystem) {
        if (i < 0 || i >= g.size())
            throw StructuralError("subsystem agent out of range");
        for (AgentId j : g.neighbors(i))
            if (!inside.count(j))
                return false;
    }
    return true;
}

// ---------------------------------------------------------------- minimum verification network

json Reduction::to_json() const
{
    json steps = json::array();
    for (const auto& s : audit)
        steps.push_back({{"rule", s.rule}, {"pruned", s.pruned}, {"detail", s.detail}});
    return {{"representatives", representatives}, {"classes", partition.classes}, {"audit", steps}};
}

Reduction minimum_verification_network(const SignedGraph& system, const std::vector<VerifiedTemplate>& library,
                                       const std::vector<AgentId>& verified_subsystem)
{
    const int n = system.graph.size();
    Reduction red;
    std::vector<bool> covered(n, false);

    for (const auto& tpl : library) {
        while (true) {
            EmbeddingSearch search;
            auto hits_new = [&](const EmbeddingMap& m) {
                return std::any_of(m.tau.begin(), m.tau.end(), [&](AgentId a) { return !covered[a]; });
            };
            const auto map = find_embedding(tpl.system, system, &search, hits_new);
            if (!map)
                break;
            ReductionStep step{"substructure", {}, "template " + tpl.name};
            for (AgentId a : map->tau)
                if (!covered[a]) {
                    covered[a] = true;
                    step.pruned.push_back(a);
                }
            std::sort(step.pruned.begin(), step.pruned.end());
            red.audit.push_back(step);
        }
    }

    red.partition = equivalence_classes(system);
    ReductionStep eq{"equivalence", {}, ""};
    std::vector<AgentId> survivors;
    for (const auto& cls : red.partition.classes) {
        const bool any_covered = std::any_of(cls.begin(), cls.end(), [&](AgentId a) { return covered[a]; });
        AgentId keep = -1;
        for (AgentId a : cls) {
            if (covered[a])
                continue;
            if (!any_covered && keep < 0)
                keep = a;
            else
                eq.pruned.push_back(a);
        }
        if (keep >= 0)
            survivors.push_back(keep);
    }
    std::sort(eq.pruned.begin(), eq.pruned.end());
    eq.detail = std::to_string(red.partition.classes.size()) + " classes";
    if (!eq.pruned.empty())
        red.audit.push_back(eq);

    if (!verified_subsystem.empty() && decomposable(system.graph, verified_subsystem)) {
        const std::set<AgentId> sub(verified_subsystem.begin(), verified_subsystem.end());
        ReductionStep dec{"decomposition", {}, "verified subsystem is dynamically independent"};
        std::vector<AgentId> kept;
        for (AgentId a : survivors)
            (sub.count(a) ? dec.pruned : kept).push_back(a);
        survivors = kept;
        if (!dec.pruned.empty())
            red.audit.push_back(dec);
    }
    std::sort(survivors.begin(), survivors.end());
    red.representatives = survivors;
    return red;
}

// ---------------------------------------------------------------- hulls

bool in_convex_hull(const std::vector<Vec>& points, const Vec& x, double tol)
{
    if (points.empty())
        return false;
    const int p = static_cast<int>(x.size());
    const int m = static_cast<int>(points.size());
    // lambda >= 0, sum lambda = 1, sum lambda_k v_k = x.
    LpProblem lp;
    lp.c = Vec::Zero(m);
    lp.a_le.resize(0, m);
    lp.b_le.resize(0);
    lp.a_eq.resize(p + 1, m);
    lp.b_eq.resize(p + 1);
    for (int k = 0; k < m; ++k) {
        if (points[k].size() != p)
            throw StructuralError("hull points have inconsistent dimensions");
        lp.a_eq.block(0, k, p, 1) = points[k];
        lp.a_eq(p, k) = 1.0;
    }
    lp.b_eq.head(p) = x;
    lp.b_eq[p] = 1.0;
    return solve_lp(lp, tol).status == LpStatus::Optimal;
}

std::vector<int> hull_vertices(const std::vector<Vec>& points)
{
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(points.size()); ++k) {
        bool duplicate = false;
        for (int j = 0; j < k && !duplicate; ++j)
            duplicate = (points[j] - points[k]).cwiseAbs().maxCoeff() <= 1e-12;
        if (duplicate)
            continue;
        std::vector<Vec> others;
        for (int j = 0; j < static_cast<int>(points.size()); ++j)
            if (j != k && (points[j] - points[k]).cwiseAbs().maxCoeff() > 1e-12)
                others.push_back(points[j]);
        if (!in_convex_hull(others, points[k]))
            out.push_back(k);
    }
    return out;
}

int CertifiedPolytope::dim() const { return vertices.empty() ? 0 : static_cast<int>(vertices.front().size()); }

namespace {

int affine_rank(const std::vector<Vec>& v)
{
    if (v.size() < 2)
        return 0;
    Mat d(v.front().size(), static_cast<int>(v.size()) - 1);
    for (std::size_t k = 1; k < v.size(); ++k)
        d.col(static_cast<int>(k) - 1) = v[k] - v[0];
    Eigen::FullPivLU<Mat> lu(d);
    lu.setThreshold(1e-10);
    return static_cast<int>(lu.rank());
}

Vec plane_normal(const std::vector<Vec>& pts)
{
    const int p = static_cast<int>(pts.front().size());
    if (p == 1)
        return Vec::Ones(1);
    if (p == 2) {
        const Vec e = pts[1] - pts[0];
        Vec nrm(2);
        nrm << -e[1], e[0];
        return nrm;
    }
    const Eigen::Vector3d a = pts[1] - pts[0], b = pts[2] - pts[0];
    return a.cross(b);
}

}  // namespace

std::pair<Mat, Vec> facet_enumeration(const std::vector<Vec>& vertices)
{
    if (vertices.empty())
        throw StructuralError("facet enumeration needs vertices");
    const int p = static_cast<int>(vertices.front().size());
    if (p < 1 || p > 3)
        throw StructuralError("facet enumeration supports dimensions 1 to 3");
    const int m = static_cast<int>(vertices.size());
    std::vector<std::pair<Vec, double>> facets;
    auto consider = [&](const std::vector<Vec>& pts) {
        Vec nrm = plane_normal(pts);
        const double len = nrm.norm();
        if (len < 1e-12)
            return;
        nrm /= len;
        double off = nrm.dot(pts[0]);
        double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
        for (const auto& v : vertices) {
            hi = std::max(hi, nrm.dot(v) - off);
            lo = std::min(lo, nrm.dot(v) - off);
        }
        if (hi > 1e-9) {
            if (lo < -1e-9)
                return;
            nrm = -nrm;
            off = -off;
        }
        for (const auto& [fn, fo] : facets)
            if ((fn - nrm).norm() < 1e-9 && std::abs(fo - off) < 1e-9)
                return;
        facets.emplace_back(nrm, off);
    };
    for (int a = 0; a < m; ++a) {
        if (p == 1) {
            consider({vertices[a]});
            continue;
        }
        for (int b = a + 1; b < m; ++b) {
            if (p == 2) {
                consider({vertices[a], vertices[b]});
                continue;
            }
            for (int c = b + 1; c < m; ++c)
                consider({vertices[a], vertices[b], vertices[c]});
        }
    }
    Mat H(static_cast<int>(facets.size()), p);
    Vec h(static_cast<int>(facets.size()));
    for (std::size_t k = 0; k < facets.size(); ++k) {
        H.row(static_cast<int>(k)) = facets[k].first.transpose();
        h[static_cast<int>(k)] = facets[k].second;
    }
    return {H, h};
}

CertifiedPolytope certify_polytope(const std::vector<Vec>& points, const std::function<bool(const Vec&)>& verify_at)
{
    CertifiedPolytope poly;
    if (points.empty())
        throw ConfigError("certify_polytope needs at least one parameter point");
    std::vector<Vec> verified;
    for (int k : hull_vertices(points)) {
        if (verify_at(points[k]))
            verified.push_back(points[k]);
        else
            poly.rejected.push_back(points[k]);
    }
    for (int k : hull_vertices(verified))
        poly.vertices.push_back(verified[k]);
    const int p = static_cast<int>(points.front().size());
    poly.degenerate = static_cast<int>(poly.vertices.size()) < p + 1 || affine_rank(poly.vertices) < p;
    if (!poly.degenerate && p <= 3) {
        std::tie(poly.H, poly.h) = facet_enumeration(poly.vertices);
        poly.has_h = true;
    }
    return poly;
}

bool hull_membership(const CertifiedPolytope& poly, const Vec& chi)
{
    if (poly.degenerate || poly.vertices.empty())
        throw StructuralError("membership query on a degenerate certified polytope");
    if (chi.size() != poly.dim())
        throw StructuralError("parameter dimension does not match the polytope");
    if (poly.has_h)
        return ((poly.H * chi - poly.h).array() <= 1e-9).all();
    return in_convex_hull(poly.vertices, chi);
}

json CertifiedPolytope::to_json() const
{
    json v = json::array(), r = json::array();
    for (const auto& x : vertices)
        v.push_back(vec_to_json(x));
    for (const auto& x : rejected)
        r.push_back(vec_to_json(x));
    json j{{"vertices", v}, {"rejected", r}, {"degenerate", degenerate}};
    if (has_h) {
        j["H"] = mat_to_json(H);
        j["h"] = vec_to_json(h);
    }
    return j;
}

CertifiedPolytope CertifiedPolytope::from_json(const json& j)
{
    CertifiedPolytope p;
    for (const auto& x : j.at("vertices"))
        p.vertices.push_back(vec_from_json(x));
    for (const auto& x : j.value("rejected", json::array()))
        p.rejected.push_back(vec_from_json(x));
    p.degenerate = j.value("degenerate", false);
    if (j.contains("H")) {
        p.H = mat_from_json(j.at("H"));
        p.h = vec_from_json(j.at("h"));
        p.has_h = true;
    }
    return p;
}

}  // namespace siss
