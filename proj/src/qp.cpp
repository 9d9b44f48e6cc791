#include "pensim/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pensim/errors.hpp"

namespace pensim {

namespace {

constexpr double kStepTol = 1e-11;    // below this the EQP step counts as zero
constexpr double kDirTol = 1e-12;     // a'p magnitude below this cannot block

struct Working {
    std::vector<int> rows;   // indices into Ain
    std::vector<int> sides;  // +1 hi, -1 lo, aligned with rows
};

// Solves the equality-constrained subproblem at the current working set.
//   [Q   A'] [p]   [-g]
//   [A   0 ] [u] = [ 0]
// where A stacks Aeq and the working rows of Ain.
bool solve_kkt(const QpProblem& prob, const Working& ws, const Vec& g, Vec& p, Vec& u) {
    const int n = static_cast<int>(prob.Q.rows());
    const int me = static_cast<int>(prob.Aeq.rows());
    const int mw = static_cast<int>(ws.rows.size());
    const int m = me + mw;

    Mat kkt = Mat::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = prob.Q;
    if (me > 0) {
        kkt.block(n, 0, me, n) = prob.Aeq;
        kkt.block(0, n, n, me) = prob.Aeq.transpose();
    }
    for (int k = 0; k < mw; ++k) {
        kkt.block(n + me + k, 0, 1, n) = prob.Ain.row(ws.rows[k]);
        kkt.block(0, n + me + k, n, 1) = prob.Ain.row(ws.rows[k]).transpose();
    }
    Vec rhs = Vec::Zero(n + m);
    rhs.head(n) = -g;

    Eigen::FullPivLU<Mat> lu(kkt);
    if (lu.rank() < n + m) return false;
    Vec sol = lu.solve(rhs);
    p = sol.head(n);
    u = sol.tail(m);
    return true;
}

bool row_independent(const QpProblem& prob, const Working& ws, int row) {
    const int me = static_cast<int>(prob.Aeq.rows());
    const int mw = static_cast<int>(ws.rows.size());
    const int n = static_cast<int>(prob.Q.cols());
    Mat a(me + mw + 1, n);
    if (me > 0) a.topRows(me) = prob.Aeq;
    for (int k = 0; k < mw; ++k) a.row(me + k) = prob.Ain.row(ws.rows[k]);
    a.row(me + mw) = prob.Ain.row(row);
    Eigen::FullPivLU<Mat> lu(a);
    return lu.rank() == me + mw + 1;
}

}  // namespace

double QpSolution::max_residual() const {
    return std::max(std::max(stationarity, primal), std::max(dual, complementarity));
}

QpSolution solve_qp(const QpProblem& prob, const Vec& x0, double multiplier_tol) {
    const int n = static_cast<int>(prob.Q.rows());
    const int me = static_cast<int>(prob.Aeq.rows());
    const int mi = static_cast<int>(prob.Ain.rows());
    const double inf = std::numeric_limits<double>::infinity();

    Vec x = x0;
    Working ws;

    QpSolution out;
    out.active_side.assign(mi, 0);
    out.ineq_multipliers = Vec::Zero(mi);
    out.eq_multipliers = Vec::Zero(me);

    const int max_iter = 200 + 20 * (n + mi);
    int iter = 0;
    for (;; ++iter) {
        if (iter > max_iter) throw Error("qp: iteration limit reached");

        Vec g = prob.Q * x + prob.c;
        Vec p, u;
        if (!solve_kkt(prob, ws, g, p, u)) throw Error("qp: singular KKT system");

        if (p.lpNorm<Eigen::Infinity>() <= kStepTol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
            // Stationary on the working set; check multiplier signs.
            int worst = -1, worst_k = -1;
            double worst_viol = multiplier_tol;
            for (int k = 0; k < static_cast<int>(ws.rows.size()); ++k) {
                double lam = u[me + k];
                double viol = ws.sides[k] > 0 ? -lam : lam;  // wrong-signed magnitude
                if (viol > worst_viol) {
                    worst_viol = viol;
                    worst = ws.rows[k];
                    worst_k = k;
                }
            }
            if (worst < 0) {
                out.x = x;
                out.eq_multipliers = u.head(me);
                out.ineq_multipliers = Vec::Zero(mi);
                for (int k = 0; k < static_cast<int>(ws.rows.size()); ++k) {
                    out.ineq_multipliers[ws.rows[k]] = u[me + k];
                    out.active_side[ws.rows[k]] = ws.sides[k];
                }
                out.iterations = iter;

                // Residual report.
                Vec r = prob.Q * x + prob.c;
                if (me > 0) r += prob.Aeq.transpose() * out.eq_multipliers;
                if (mi > 0) r += prob.Ain.transpose() * out.ineq_multipliers;
                double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
                out.stationarity = r.lpNorm<Eigen::Infinity>() / scale;
                double pr = 0;
                if (me > 0) pr = (prob.Aeq * x - prob.beq).lpNorm<Eigen::Infinity>();
                for (int i = 0; i < mi; ++i) {
                    double ax = prob.Ain.row(i).dot(x);
                    pr = std::max(pr, std::max(prob.lo[i] - ax, ax - prob.hi[i]));
                }
                out.primal = std::max(0.0, pr);
                double dual = 0, comp = 0;
                for (int i = 0; i < mi; ++i) {
                    double lam = out.ineq_multipliers[i];
                    if (out.active_side[i] > 0) dual = std::max(dual, -lam);
                    else if (out.active_side[i] < 0) dual = std::max(dual, lam);
                    double ax = prob.Ain.row(i).dot(x);
                    double slack = out.active_side[i] > 0 ? prob.hi[i] - ax
                                 : out.active_side[i] < 0 ? ax - prob.lo[i]
                                                          : 0.0;
                    comp = std::max(comp, std::abs(lam * slack));
                }
                out.dual = dual / scale;
                out.complementarity = comp / scale;
                return out;
            }
            ws.rows.erase(ws.rows.begin() + worst_k);
            ws.sides.erase(ws.sides.begin() + worst_k);
            continue;
        }

        // Ratio test against rows not in the working set.
        double alpha = 1.0;
        int blocking = -1, block_side = 0;
        for (int i = 0; i < mi; ++i) {
            bool in_ws = false;
            for (int r : ws.rows)
                if (r == i) { in_ws = true; break; }
            if (in_ws) continue;
            double d = prob.Ain.row(i).dot(p);
            double ax = prob.Ain.row(i).dot(x);
            if (d > kDirTol && prob.hi[i] < inf) {
                double a = (prob.hi[i] - ax) / d;
                if (a < alpha) { alpha = a; blocking = i; block_side = +1; }
            } else if (d < -kDirTol && prob.lo[i] > -inf) {
                double a = (prob.lo[i] - ax) / d;
                if (a < alpha) { alpha = a; blocking = i; block_side = -1; }
            }
        }
        if (alpha < 0) alpha = 0;  // iterate already pinned to the bound
        x += alpha * p;
        if (blocking >= 0 && alpha < 1.0) {
            if (row_independent(prob, ws, blocking)) {
                ws.rows.push_back(blocking);
                ws.sides.push_back(block_side);
            }
            // A dependent blocking row cannot restrict the next EQP step
            // further than the rows already held, so it is skipped.
        }
    }
}

}  // namespace pensim
