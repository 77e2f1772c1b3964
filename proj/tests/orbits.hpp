#pragma once

#include "siss/scalability.hpp"

#include <algorithm>
#include <numeric>

namespace siss::fixtures {

inline SignedGraph homogeneous(const SystemGraph& g, const std::string& sig = "x")
{
    return {g, std::vector<std::string>(static_cast<std::size_t>(g.size()), sig)};
}

/// Orbit id per node under signature- and edge-preserving permutations.
inline std::vector<int> brute_force_orbits(const SignedGraph& g)
{
    const int n = g.graph.size();
    std::vector<int> orbit(n);
    std::iota(orbit.begin(), orbit.end(), 0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            ok = g.signatures[i] == g.signatures[perm[i]];
            for (int j = 0; j < n && ok; ++j)
                ok = g.graph.has_edge(i, j) == g.graph.has_edge(perm[i], perm[j]);
        }
        if (!ok)
            continue;
        for (int i = 0; i < n; ++i) {
            const int a = orbit[i], b = orbit[perm[i]];
            if (a != b)
                for (int& o : orbit)
                    if (o == b)
                        o = a;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return orbit;
}

inline bool refines_orbits(const SignedGraph& g)
{
    const auto orbit = brute_force_orbits(g);
    const auto part = equivalence_classes(g);
    for (const auto& cls : part.classes)
        for (AgentId a : cls)
            if (orbit[a] != orbit[cls.front()])
                return false;
    return true;
}

}  // namespace siss::fixtures
