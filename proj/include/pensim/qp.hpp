#pragma once

#include <Eigen/Dense>
#include <vector>

namespace pensim {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Dense convex QP
//
//   minimize    1/2 x'Qx + c'x
//   subject to  Aeq x = beq
//               lo <= Ain x <= hi   (row-wise; +-inf entries allowed)
//
// Q must be positive semidefinite; pass it with a ridge if it is singular
// on the feasible affine hull.  Box constraints are identity rows of Ain.
struct QpProblem {
    Mat Q;
    Vec c;
    Mat Aeq;
    Vec beq;
    Mat Ain;
    Vec lo;
    Vec hi;
};

struct QpSolution {
    Vec x;
    Vec eq_multipliers;    // one per Aeq row
    Vec ineq_multipliers;  // one per Ain row; > 0 active at hi, < 0 active at lo
    std::vector<int> active_side;  // per Ain row: -1 lo, 0 free, +1 hi
    int iterations = 0;

    // Residuals of the optimality system, scaled by the gradient magnitude.
    double stationarity = 0;
    double primal = 0;
    double dual = 0;
    double complementarity = 0;
    double max_residual() const;
};

// Primal active-set method.  `x0` must satisfy the constraints (up to ~1e-9).
// `multiplier_tol` is the stopping rule on dual feasibility.
QpSolution solve_qp(const QpProblem& prob, const Vec& x0, double multiplier_tol = 1e-8);

}  // namespace pensim
