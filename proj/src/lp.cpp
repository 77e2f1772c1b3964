#include "siss/lp.hpp"

#include "siss/errors.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace siss {

namespace {

struct Tableau {
    Mat t;                  // rows 0..m-1 constraints, row m objective; last column rhs
    std::vector<int> basis; // basic variable per row
    int m = 0;
    int cols = 0;  // number of variables (excluding rhs)

    void pivot(int row, int col)
    {
        t.row(row) /= t(row, col);
        for (int r = 0; r <= m; ++r) {
            if (r == row)
                continue;
            const double f = t(r, col);
            if (f != 0.0)
                t.row(r) -= f * t.row(row);
        }
        basis[row] = col;
    }

    // Objective row holds reduced costs r_j = z_j - c_j (minimisation of -c.x style):
    // we maximise, so a column may enter when its objective-row entry is negative.
    LpStatus run(const std::vector<bool>& allowed, double tol, int& iterations, int max_iterations)
    {
        while (true) {
            if (++iterations > max_iterations)
                return LpStatus::IterationLimit;
            int enter = -1;
            for (int j = 0; j < cols; ++j) {
                if (allowed[j] && t(m, j) < -tol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0)
                return LpStatus::Optimal;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int r = 0; r < m; ++r) {
                const double a = t(r, enter);
                if (a <= tol)
                    continue;
                const double ratio = t(r, cols) / a;
                if (leave < 0 || ratio < best - tol) {
                    best = ratio;
                    leave = r;
                } else if (ratio <= best + tol && basis[r] < basis[leave]) {
                    best = std::min(best, ratio);
                    leave = r;
                }
            }
            if (leave < 0)
                return LpStatus::Unbounded;
            pivot(leave, enter);
        }
    }
};

}  // namespace

LpResult solve_lp(const LpProblem& p, double tol, int max_iterations)
{
    const int n = static_cast<int>(p.c.size());
    const int m_le = static_cast<int>(p.a_le.rows());
    const int m_eq = static_cast<int>(p.a_eq.rows());
    if ((m_le && p.a_le.cols() != n) || (m_eq && p.a_eq.cols() != n) || p.b_le.size() != m_le ||
        p.b_eq.size() != m_eq)
        throw StructuralError("solve_lp: inconsistent problem dimensions");

    const int m = m_le + m_eq;
    // Columns: x (n) | slacks (m_le) | artificials (m) | rhs
    const int n_slack = m_le;
    const int art0 = n + n_slack;
    const int cols = art0 + m;

    Tableau tab;
    tab.m = m;
    tab.cols = cols;
    tab.t = Mat::Zero(m + 1, cols + 1);
    tab.basis.assign(m, -1);

    std::vector<bool> needs_art(m, false);
    for (int r = 0; r < m_le; ++r) {
        const double sign = p.b_le[r] < 0.0 ? -1.0 : 1.0;
        tab.t.row(r).head(n) = sign * p.a_le.row(r);
        tab.t(r, n + r) = sign;
        tab.t(r, cols) = sign * p.b_le[r];
        if (sign > 0.0)
            tab.basis[r] = n + r;
        else
            needs_art[r] = true;
    }
    for (int e = 0; e < m_eq; ++e) {
        const int r = m_le + e;
        const double sign = p.b_eq[e] < 0.0 ? -1.0 : 1.0;
        tab.t.row(r).head(n) = sign * p.a_eq.row(e);
        tab.t(r, cols) = sign * p.b_eq[e];
        needs_art[r] = true;
    }

    int iterations = 0;
    std::vector<bool> allowed(cols, true);
    bool any_art = false;
    for (int r = 0; r < m; ++r) {
        if (needs_art[r]) {
            tab.t(r, art0 + r) = 1.0;
            tab.basis[r] = art0 + r;
            any_art = true;
        } else {
            allowed[art0 + r] = false;
        }
    }

    if (any_art) {
        // Phase 1: maximise -sum(artificials).
        tab.t.row(m).setZero();
        for (int r = 0; r < m; ++r)
            if (needs_art[r]) {
                tab.t(m, art0 + r) = 1.0;
                tab.t.row(m) -= tab.t.row(r);
            }
        const LpStatus s1 = tab.run(allowed, tol, iterations, max_iterations);
        if (s1 == LpStatus::IterationLimit)
            return {LpStatus::IterationLimit, 0.0, Vec()};
        if (tab.t(m, cols) < -1e3 * tol * std::max(1.0, tab.t.col(cols).head(m).cwiseAbs().maxCoeff()))
            return {LpStatus::Infeasible, 0.0, Vec()};
        // Drive remaining artificial variables out of the basis where possible.
        for (int r = 0; r < m; ++r) {
            if (tab.basis[r] >= art0) {
                int col = -1;
                for (int j = 0; j < art0; ++j)
                    if (std::abs(tab.t(r, j)) > tol) {
                        col = j;
                        break;
                    }
                if (col >= 0)
                    tab.pivot(r, col);
            }
        }
        for (int j = art0; j < cols; ++j)
            allowed[j] = false;
    }

    // Phase 2 objective row: -c in original columns, expressed in the current basis.
    tab.t.row(m).setZero();
    tab.t.row(m).head(n) = -p.c.transpose();
    for (int r = 0; r < m; ++r) {
        const int b = tab.basis[r];
        const double coef = tab.t(m, b);
        if (coef != 0.0)
            tab.t.row(m) -= coef * tab.t.row(r);
    }
    const LpStatus s2 = tab.run(allowed, tol, iterations, max_iterations);
    if (s2 != LpStatus::Optimal)
        return {s2, 0.0, Vec()};

    LpResult res;
    res.status = LpStatus::Optimal;
    res.x = Vec::Zero(n);
    for (int r = 0; r < m; ++r)
        if (tab.basis[r] < n)
            res.x[tab.basis[r]] = tab.t(r, cols);
    res.value = p.c.dot(res.x);
    return res;
}

}  // namespace siss
