// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "awdro/common.hpp"

namespace awdro::lp {

enum class Sense { LessEqual, Equal, GreaterEqual };

/// Linear program  min c'x  s.t.  rows, x >= 0.
struct Problem {
    int num_vars = 0;
    std::vector<double> objective;
    std::vector<std::vector<double>> rows;
    std::vector<Sense> senses;
    std::vector<double> rhs;

    void add_row(std::vector<double> a, Sense s, double b) {
        rows.push_back(std::move(a));
        senses.push_back(s);
        rhs.push_back(b);
    }
};

struct Solution {
    bool feasible = false;
    bool bounded = true;
    double objective = 0.0;
    std::vector<double> x;      // structural variables only
    std::vector<double> duals;  // one per row, oriented for the original rows:
                                // strong duality reads objective == duals . rhs
    std::vector<int> basis;     // extended column index per surviving row (warm starts)
    std::vector<int> live_rows; // original row index per surviving row
};

/// Two-phase dense tableau simplex.
///
/// Pivot selection is Dantzig (most negative reduced cost, smallest column
/// index on ties) with a switch to Bland's rule after a degenerate streak, so
/// pivoting is deterministic and cannot cycle. Pivot tolerance 1e-11.
///
/// `warm_basis`/`warm_rows` restart phase 2 from a basis returned by a prior
/// call on a problem with identical constraints (only the objective may
/// differ). Falls back to a cold solve if the basis cannot be refactored.
class Simplex {
  public:
    explicit Simplex(const Problem& p) : p_(p) { build(); }

    Solution solve(const std::vector<int>* warm_basis = nullptr,
                   const std::vector<int>* warm_rows = nullptr) {
        if (warm_basis && warm_rows && try_warm(*warm_basis, *warm_rows)) {
            return run_phase2();
        }
        reset();
        if (!run_phase1()) {
            Solution s;
            s.feasible = false;
            return s;
        }
        return run_phase2();
    }

  private:
    const Problem& p_;
    int m_ = 0;        // rows (live)
    int n_ = 0;        // structural columns
    int ncols_ = 0;    // structural + slack/artificial
    int art_begin_ = 0;
    std::vector<double> a0_;     // pristine extended matrix, row-major, m0 rows
    std::vector<double> b0_;
    std::vector<char> flipped_;  // row sign-flips applied to make rhs >= 0
    int m0_ = 0;

    // working tableau (live rows only)
    std::vector<double> t_;      // m_ x (ncols_ + 1)
    std::vector<int> basis_;
    std::vector<int> live_;      // original row index per live row
    std::vector<double> z_;      // reduced-cost row, ncols_ + 1 entries
    static constexpr int kMaxIter = 200000;

    double& T(int i, int j) { return t_[static_cast<std::size_t>(i) * (ncols_ + 1) + j]; }
    double& A0(int i, int j) { return a0_[static_cast<std::size_t>(i) * ncols_ + j]; }

    void build() {
        m0_ = static_cast<int>(p_.rows.size());
        n_ = p_.num_vars;
        // one slack/surplus column and one artificial slot per row keeps
        // column indexing stable across warm starts
        art_begin_ = n_ + m0_;
        ncols_ = art_begin_ + m0_;  // at most one artificial per row
        a0_.assign(static_cast<std::size_t>(m0_) * ncols_, 0.0);
        b0_.resize(m0_);
        flipped_.assign(m0_, 0);
        for (int i = 0; i < m0_; ++i) {
            double sgn = 1.0;
            if (p_.rhs[i] < 0) {
                sgn = -1.0;
                flipped_[i] = 1;
            }
            for (int j = 0; j < n_; ++j) A0(i, j) = sgn * p_.rows[i][j];
            b0_[i] = sgn * p_.rhs[i];
            Sense s = p_.senses[i];
            if (flipped_[i]) {
                if (s == Sense::LessEqual) s = Sense::GreaterEqual;
                else if (s == Sense::GreaterEqual) s = Sense::LessEqual;
            }
            if (s == Sense::LessEqual) {
                A0(i, n_ + i) = 1.0;  // slack, usable as initial basis
            } else if (s == Sense::GreaterEqual) {
                A0(i, n_ + i) = -1.0;  // surplus
                A0(i, art_begin_ + i) = 1.0;
            } else {
                A0(i, art_begin_ + i) = 1.0;
            }
        }
    }

    void reset() {
        m_ = m0_;
        t_.assign(static_cast<std::size_t>(m_) * (ncols_ + 1), 0.0);
        basis_.resize(m_);
        live_.resize(m_);
        for (int i = 0; i < m_; ++i) {
            for (int j = 0; j < ncols_; ++j) T(i, j) = A0(i, j);
            T(i, ncols_) = b0_[i];
            live_[i] = i;
            basis_[i] = A0(i, n_ + i) == 1.0 ? n_ + i : art_begin_ + i;
        }
    }

    void compute_z(const std::vector<double>& cost) {
        z_.assign(ncols_ + 1, 0.0);
        for (int j = 0; j < ncols_; ++j) z_[j] = j < static_cast<int>(cost.size()) ? cost[j] : 0.0;
        for (int i = 0; i < m_; ++i) {
            double cb = basis_[i] < static_cast<int>(cost.size()) ? cost[basis_[i]] : 0.0;
            if (cb == 0.0) continue;
            for (int j = 0; j <= ncols_; ++j) z_[j] -= cb * T(i, j);
        }
    }

    void pivot(int row, int col) {
        double piv = T(row, col);
        double inv = 1.0 / piv;
        for (int j = 0; j <= ncols_; ++j) T(row, j) *= inv;
        T(row, col) = 1.0;
        for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            double f = T(i, col);
            if (f == 0.0) continue;
            for (int j = 0; j <= ncols_; ++j) T(i, j) -= f * T(row, j);
            T(i, col) = 0.0;
        }
        double f = z_[col];
        if (f != 0.0) {
            for (int j = 0; j <= ncols_; ++j) z_[j] -= f * T(row, j);
            z_[col] = 0.0;
        }
        basis_[row] = col;
    }

    // returns false on unbounded
    bool iterate(bool allow_artificial) {
        int degenerate_streak = 0;
        const int limit = allow_artificial ? ncols_ : art_begin_;
        for (int iter = 0; iter < kMaxIter; ++iter) {
            const bool bland = degenerate_streak > 24;
            int enter = -1;
            if (bland) {
                for (int j = 0; j < limit; ++j) {
                    if (z_[j] < -1e-10) {
                        enter = j;
                        break;
                    }
                }
            } else {
                double best = -1e-10;
                for (int j = 0; j < limit; ++j) {
                    if (z_[j] < best) {
                        best = z_[j];
                        enter = j;
                    }
                }
            }
            if (enter < 0) return true;
            int leave = -1;
            double best_ratio = 0.0;
            for (int i = 0; i < m_; ++i) {
                double aie = T(i, enter);
                if (aie > kPivotTol) {
                    double ratio = T(i, ncols_) / aie;
                    if (leave < 0 || ratio < best_ratio - 1e-12 ||
                        (ratio < best_ratio + 1e-12 && basis_[i] < basis_[leave])) {
                        leave = i;
                        best_ratio = ratio;
                    }
                }
            }
            if (leave < 0) return false;  // unbounded
            degenerate_streak = best_ratio < 1e-12 ? degenerate_streak + 1 : 0;
            pivot(leave, enter);
        }
        throw InternalError("simplex iteration limit reached");
    }

    bool run_phase1() {
        bool any_art = false;
        for (int i = 0; i < m_; ++i) any_art |= basis_[i] >= art_begin_;
        if (!any_art) return true;
        std::vector<double> c1(ncols_, 0.0);
        for (int j = art_begin_; j < ncols_; ++j) c1[j] = 1.0;
        compute_z(c1);
        if (!iterate(true)) throw InternalError("phase-1 unbounded");
        double infeas = -z_[ncols_];
        if (infeas > 1e-9) return false;
        // drive artificials out of the basis, dropping redundant rows
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < art_begin_) continue;
            int col = -1;
            for (int j = 0; j < art_begin_; ++j) {
                if (std::abs(T(i, j)) > 1e-9) {
                    col = j;
                    break;
                }
            }
            if (col >= 0) {
                pivot(i, col);
            } else {
                drop_row(i);
                --i;
            }
        }
        return true;
    }

    void drop_row(int row) {
        int last = m_ - 1;
        if (row != last) {
            for (int j = 0; j <= ncols_; ++j) T(row, j) = T(last, j);
            basis_[row] = basis_[last];
            live_[row] = live_[last];
        }
        basis_.pop_back();
        live_.pop_back();
        m_ = last;
        t_.resize(static_cast<std::size_t>(m_) * (ncols_ + 1));
    }

    bool try_warm(const std::vector<int>& wb, const std::vector<int>& wrows) {
        if (wb.size() != wrows.size() || wb.empty()) return false;
        m_ = static_cast<int>(wb.size());
        t_.assign(static_cast<std::size_t>(m_) * (ncols_ + 1), 0.0);
        live_ = wrows;
        basis_.assign(m_, -1);
        for (int i = 0; i < m_; ++i) {
            int r = live_[i];
            if (r < 0 || r >= m0_) return false;
            for (int j = 0; j < ncols_; ++j) T(i, j) = A0(r, j);
            T(i, ncols_) = b0_[r];
        }
        // refactor: pivot each warm-basis column into some still-unassigned row
        for (int k = 0; k < m_; ++k) {
            int col = wb[k];
            if (col < 0 || col >= ncols_) return false;
            int row = -1;
            double best = 1e-9;
            for (int r = 0; r < m_; ++r) {
                if (basis_[r] >= 0) continue;
                if (std::abs(T(r, col)) > best) {
                    best = std::abs(T(r, col));
                    row = r;
                }
            }
            if (row < 0) return false;
            double inv = 1.0 / T(row, col);
            for (int j = 0; j <= ncols_; ++j) T(row, j) *= inv;
            T(row, col) = 1.0;
            for (int r = 0; r < m_; ++r) {
                if (r == row) continue;
                double f = T(r, col);
                if (f == 0.0) continue;
                for (int j = 0; j <= ncols_; ++j) T(r, j) -= f * T(row, j);
                T(r, col) = 0.0;
            }
            basis_[row] = col;
        }
        for (int i = 0; i < m_; ++i) {
            if (T(i, ncols_) < -1e-9) return false;
        }
        return true;
    }

    Solution run_phase2() {
        std::vector<double> c2(ncols_, 0.0);
        for (int j = 0; j < n_; ++j) c2[j] = p_.objective[j];
        compute_z(c2);
        Solution s;
        if (!iterate(false)) {
            s.feasible = true;
            s.bounded = false;
            return s;
        }
        s.feasible = true;
        s.x.assign(n_, 0.0);
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < n_) s.x[basis_[i]] = std::max(0.0, T(i, ncols_));
        }
        s.objective = 0.0;
        for (int j = 0; j < n_; ++j) s.objective += p_.objective[j] * s.x[j];
        s.basis = basis_;
        s.live_rows = live_;
        s.duals = extract_duals(c2);
        return s;
    }

    // solve B'y = c_B on the live rows, then re-orient for the original rows
    std::vector<double> extract_duals(const std::vector<double>& cost) {
        int m = m_;
        // system rows indexed by basis column c: sum_r B(r,c) y_r = cost[basis_[c]]
        std::vector<double> M(static_cast<std::size_t>(m) * (m + 1), 0.0);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                M[static_cast<std::size_t>(c) * (m + 1) + r] = A0(live_[r], basis_[c]);
        for (int c = 0; c < m; ++c)
            M[static_cast<std::size_t>(c) * (m + 1) + m] =
                basis_[c] < static_cast<int>(cost.size()) ? cost[basis_[c]] : 0.0;
        // gauss-jordan with partial pivoting; final system is diagonal
        for (int k = 0; k < m; ++k) {
            int piv = k;
            for (int r = k + 1; r < m; ++r) {
                if (std::abs(M[static_cast<std::size_t>(r) * (m + 1) + k]) >
                    std::abs(M[static_cast<std::size_t>(piv) * (m + 1) + k]))
                    piv = r;
            }
            if (std::abs(M[static_cast<std::size_t>(piv) * (m + 1) + k]) < 1e-13) continue;
            if (piv != k) {
                for (int j = 0; j <= m; ++j)
                    std::swap(M[static_cast<std::size_t>(piv) * (m + 1) + j],
                              M[static_cast<std::size_t>(k) * (m + 1) + j]);
            }
            double inv = 1.0 / M[static_cast<std::size_t>(k) * (m + 1) + k];
            for (int r = 0; r < m; ++r) {
                if (r == k) continue;
                double f = M[static_cast<std::size_t>(r) * (m + 1) + k] * inv;
                if (f == 0.0) continue;
                for (int j = k; j <= m; ++j)
                    M[static_cast<std::size_t>(r) * (m + 1) + j] -=
                        f * M[static_cast<std::size_t>(k) * (m + 1) + j];
            }
        }
        std::vector<double> y(m, 0.0);
        for (int k = 0; k < m; ++k) {
            double d = M[static_cast<std::size_t>(k) * (m + 1) + k];
            y[k] = std::abs(d) < 1e-13 ? 0.0 : M[static_cast<std::size_t>(k) * (m + 1) + m] / d;
        }
        std::vector<double> out(m0_, 0.0);
        for (int r = 0; r < m; ++r) out[live_[r]] = flipped_[live_[r]] ? -y[r] : y[r];
        return out;
    }
};

inline Solution solve(const Problem& p, const std::vector<int>* warm_basis = nullptr,
                      const std::vector<int>* warm_rows = nullptr) {
    Simplex s(p);
    return s.solve(warm_basis, warm_rows);
}

}  // namespace awdro::lp
