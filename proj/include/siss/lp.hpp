#pragma once

#include "siss/types.hpp"

namespace siss {

/// maximize c.x  subject to  A_le x <= b_le,  A_eq x = b_eq,  x >= 0.
struct LpProblem {
    Vec c;
    Mat a_le;
    Vec b_le;
    Mat a_eq;
    Vec b_eq;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = 0.0;
    Vec x;
};

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
LpResult solve_lp(const LpProblem& problem, double tol = 1e-9, int max_iterations = 20000);

}  // namespace siss
