#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

namespace safemaddpg {

/// Dense strictly convex quadratic program
///   min 1/2 x'Hx + f'x   s.t.  Ax <= b
/// with H symmetric positive definite.
struct QpProblem {
    Eigen::MatrixXd hessian;      // n x n
    Eigen::VectorXd linear_cost;  // n
    Eigen::MatrixXd ineq_matrix;  // r x n
    Eigen::VectorXd ineq_rhs;     // r

    long n_vars() const { return linear_cost.size(); }
    long n_rows() const { return ineq_rhs.size(); }
};

enum class QpStatus { Optimal, Infeasible };

struct QpSolution {
    Eigen::VectorXd primal;       // x*
    Eigen::VectorXd dual;         // lambda* >= 0, one entry per row
    QpStatus status = QpStatus::Infeasible;
    std::vector<int> active_set;  // rows active at the optimum, ascending
    double objective = 0.0;
    int iterations = 0;
};

/// Dual active-set method (Goldfarb-Idnani). Starts from the
/// unconstrained minimum and adds violated rows one at a time, keeping
/// dual feasibility throughout. `tolerance` bounds the allowed
/// constraint violation at the reported optimum. Rows are picked
/// most-violated-first; ties go to the lowest index.
QpSolution solve_qp(const QpProblem& problem, double tolerance = 1e-10);

struct KktResiduals {
    double stationarity = 0.0;            // |Hx + f + A'lambda|_inf
    double primal_feasibility = 0.0;      // max(0, max_i (A x - b)_i)
    double dual_feasibility = 0.0;        // max(0, -min_i lambda_i)
    double complementary_slackness = 0.0; // max_i |lambda_i (A x - b)_i|
};

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Checks the residuals against the repo-wide gates: stationarity
/// <= 1e-6 * (1 + |f|_inf), primal feasibility <= 1e-8, complementary
/// slackness <= 1e-8, duals >= -1e-10.
bool kkt_ok(const QpProblem& problem, const QpSolution& solution);

/// Plain-text dump (dimensions + matrices, one row per line) for
/// cross-checking against external solvers.
void dump_problem(const QpProblem& problem, std::ostream& out);
QpProblem read_problem(std::istream& in);

}  // namespace safemaddpg
