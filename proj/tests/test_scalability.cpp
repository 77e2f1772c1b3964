#include "fixtures.hpp"
#include "orbits.hpp"
#include "siss/verifier.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace siss;
using namespace siss::fixtures;

TEST_CASE("a 2-chain embeds into a 3-chain at the lexicographically first spot")
{
    const auto m = find_embedding(homogeneous(SystemGraph::chain(2)), homogeneous(SystemGraph::chain(3)));
    REQUIRE(m);
    CHECK(m->tau == std::vector<AgentId>{0, 1});
    CHECK(embedding_valid(homogeneous(SystemGraph::chain(2)), homogeneous(SystemGraph::chain(3)), *m));
    CHECK_FALSE(find_embedding(homogeneous(SystemGraph::chain(2), "a"), homogeneous(SystemGraph::chain(3), "b")));
}

TEST_CASE("accept callback continues the search")
{
    const SignedGraph ring = homogeneous(SystemGraph::ring(3));
    const auto m = find_embedding(ring, ring, nullptr, [](const EmbeddingMap& e) { return e.tau[0] != 0; });
    REQUIRE(m);
    CHECK(m->tau == std::vector<AgentId>{1, 2, 0});
    CHECK_FALSE(find_embedding(ring, ring, nullptr, [](const EmbeddingMap&) { return false; }));
    CHECK_FALSE(find_embedding(homogeneous(SystemGraph::chain(2)), homogeneous(SystemGraph::chain(3)), nullptr,
                               [](const EmbeddingMap& e) { return e.tau[0] != 0; }));
}

TEST_CASE("star template into a larger star maps hub to hub")
{
    const SignedGraph small = homogeneous(SystemGraph::star(4));
    const SignedGraph large = homogeneous(SystemGraph::star(9));
    EmbeddingSearch search;
    const auto m = find_embedding(small, large, &search);
    REQUIRE(m);
    CHECK(m->tau[0] == 0);
    CHECK(embedding_valid(small, large, *m));
    CHECK_FALSE(search.capped);

    // Brute-force oracle: every injective map that passes the validity check sends hub to hub.
    int valid = 0;
    std::vector<int> pick(10, 0);
    std::fill(pick.begin(), pick.begin() + 5, 1);
    std::sort(pick.begin(), pick.end());
    do {
        std::vector<AgentId> chosen;
        for (int k = 0; k < 10; ++k)
            if (pick[k])
                chosen.push_back(k);
        do {
            const EmbeddingMap e{chosen};
            if (embedding_valid(small, large, e)) {
                ++valid;
                CHECK(e.tau[0] == 0);
            }
        } while (std::next_permutation(chosen.begin(), chosen.end()));
    } while (std::next_permutation(pick.begin(), pick.end()));
    CHECK(valid > 0);
}

TEST_CASE("equivalence classes of small reference graphs")
{
    const auto star = equivalence_classes(homogeneous(SystemGraph::star(4)));
    CHECK(star.classes.size() == 2);
    CHECK(star.classes[0] == std::vector<AgentId>{0});
    const auto ring = equivalence_classes(homogeneous(SystemGraph::ring(5)));
    CHECK(ring.classes.size() == 1);
    CHECK(ring.representative == std::vector<AgentId>{0});
    const SignedGraph chain = homogeneous(SystemGraph::chain(4));
    CHECK(refines_orbits(chain));
    CHECK(equivalence_classes(chain).classes.size() == 4);
}

TEST_CASE("signatures split otherwise symmetric nodes")
{
    SignedGraph ring = homogeneous(SystemGraph::ring(4));
    ring.signatures[2] = "other";
    const auto p = equivalence_classes(ring);
    CHECK(p.classes.size() == 4);
    ring.signatures = {"a", "b", "a", "b"};
    CHECK(equivalence_classes(ring).classes.size() == 2);
    CHECK(refines_orbits(ring));
}

TEST_CASE("color refinement never merges across orbits on small graphs")
{
    for (int n = 2; n <= 6; ++n) {
        CHECK(refines_orbits(homogeneous(SystemGraph::chain(n))));
        CHECK(refines_orbits(homogeneous(SystemGraph::ring(n))));
        CHECK(refines_orbits(homogeneous(SystemGraph::star(n - 1))));
    }
}

TEST_CASE("decomposability")
{
    const SystemGraph g = SystemGraph::chain(3).with_appended({2});
    CHECK(decomposable(g, {0, 1, 2}));
    CHECK(decomposable(g, {}));
    std::vector<std::vector<int>> a = g.adjacency();
    a[1][3] = 1;
    CHECK_FALSE(decomposable(SystemGraph::from_adjacency(a), {0, 1, 2}));
}

TEST_CASE("minimum verification network")
{
    SignedGraph hetero{SystemGraph::chain(3), {"a", "b", "c"}};
    CHECK(minimum_verification_network(hetero, {}, {}).representatives == std::vector<AgentId>{0, 1, 2});

    const SignedGraph ring10 = homogeneous(SystemGraph::ring(10)), ring50 = homogeneous(SystemGraph::ring(50));
    CHECK(minimum_verification_network(ring10, {}, {}).representatives.size() == 1);
    CHECK(minimum_verification_network(ring50, {}, {}).representatives.size() == 1);

    const Reduction full = minimum_verification_network(ring10, {{"ring", ring10}}, {});
    CHECK(full.representatives.empty());
    REQUIRE(!full.audit.empty());
    CHECK(full.audit.front().rule == "substructure");

    const SignedGraph grown = homogeneous(SystemGraph::chain(3).with_appended({2}));
    const Reduction add = minimum_verification_network(grown, {}, {0, 1, 2});
    CHECK(add.representatives == std::vector<AgentId>{3});
    CHECK(add.to_json().at("representatives").size() == 1);
}

TEST_CASE("pruned ring agents satisfy their conditions")
{
    CertificateBundle b = ring_bundle(6, 0.3, 0.3, 0.1);
    const Reduction red = minimum_verification_network(homogeneous(SystemGraph::ring(6)), {}, {});
    const SystemVerification v = verify_system(b, VerifyBudget{}, &red.representatives, 1);
    CHECK(v.queries_executed == 3);
    CHECK(v.verified);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 1; i < 6; ++i) {
        const LocalQuery q = make_query(b, i, Condition::Decrement);
        for (int k = 0; k < 10000; ++k) {
            Vec z(3);
            z << u(rng), u(rng), u(rng);
            CHECK(q.residual(z) <= 0.0);
        }
    }
}

TEST_CASE("triangle hull drops the interior point")
{
    std::vector<Vec> pts(4, Vec(2));
    pts[0] << 0, 0;
    pts[1] << 1, 0;
    pts[2] << 0, 1;
    pts[3] << 0.25, 0.25;
    CHECK(hull_vertices(pts) == std::vector<int>{0, 1, 2});
    int calls = 0;
    const CertifiedPolytope poly = certify_polytope(pts, [&](const Vec&) {
        ++calls;
        return true;
    });
    CHECK(calls == 3);
    CHECK_FALSE(poly.degenerate);
    REQUIRE(poly.has_h);
    for (int r = 0; r < poly.H.rows(); ++r)
        CHECK(poly.H.row(r).norm() == doctest::Approx(1.0));
    Vec q(2);
    q << 0.2, 0.2;
    CHECK(hull_membership(poly, q));
    CHECK(hull_membership(poly, pts[1]));
    CHECK(hull_membership(poly, (pts[0] + pts[1] + pts[2]) / 3.0));
    q << 0.8, 0.8;
    CHECK_FALSE(hull_membership(poly, q));
    const CertifiedPolytope back = CertifiedPolytope::from_json(poly.to_json());
    CHECK(back.vertices.size() == 3);
    CHECK(hull_membership(back, pts[2]));
}

TEST_CASE("failed vertices shrink the polytope and can degenerate it")
{
    std::vector<Vec> pts(3, Vec(2));
    pts[0] << 0, 0;
    pts[1] << 1, 0;
    pts[2] << 0, 1;
    const CertifiedPolytope poly = certify_polytope(pts, [](const Vec& c) { return c[1] == 0.0; });
    CHECK(poly.degenerate);
    CHECK(poly.rejected.size() == 1);
    CHECK_THROWS_AS(hull_membership(poly, pts[0]), StructuralError);
}

TEST_CASE("facet test agrees with LP membership on a random hull")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec> pts;
    for (int k = 0; k < 12; ++k) {
        Vec p(2);
        p << u(rng), u(rng);
        pts.push_back(p);
    }
    const CertifiedPolytope poly = certify_polytope(pts, [](const Vec&) { return true; });
    REQUIRE(poly.has_h);
    int disagreements = 0;
    for (int k = 0; k < 10000; ++k) {
        Vec q(2);
        q << 1.2 * u(rng), 1.2 * u(rng);
        const double slack = (poly.H * q - poly.h).maxCoeff();
        if (std::abs(slack) < 1e-7)
            continue;
        if (hull_membership(poly, q) != in_convex_hull(poly.vertices, q))
            ++disagreements;
    }
    CHECK(disagreements == 0);
}

TEST_CASE("one-parameter hull is an interval")
{
    std::vector<Vec> pts{Vec::Constant(1, 0.3), Vec::Constant(1, 0.7), Vec::Constant(1, 0.5)};
    const CertifiedPolytope poly = certify_polytope(pts, [](const Vec&) { return true; });
    CHECK(poly.vertices.size() == 2);
    CHECK(hull_membership(poly, Vec::Constant(1, 0.45)));
    CHECK_FALSE(hull_membership(poly, Vec::Constant(1, 0.95)));
}
