#pragma once

#include <utility>

#include "safemaddpg/qp.hpp"

namespace safemaddpg {

/// Inputs of the action-projection QPs. Row j of
/// constraint_sensitivities is the learned sensitivity of constraint j
/// to the joint action; constraint_margins(j) is the room left before
/// the threshold (C_j - c_j(x)).
struct ProjectionSpec {
    Eigen::VectorXd proposed_action;              // N*m
    Eigen::MatrixXd constraint_sensitivities;     // K x N*m
    Eigen::VectorXd constraint_margins;           // K
    double action_bound = 1.0;
    double rho = 1000.0;       // soft slack penalty weight
    double slack_reg = 1e-6;   // delta: quadratic regularization on slacks

    long n_action_dims() const { return proposed_action.size(); }
    long n_constraints() const { return constraint_margins.size(); }
    void validate() const;
};

/// min |a - proposal|^2  s.t.  g_j'a <= margin_j,  |a_d| <= action_bound.
/// Rows: K sensitivity rows, then upper box rows, then lower box rows.
QpProblem build_hard_projection(const ProjectionSpec& spec);

/// min |a - proposal|^2 + rho * sum_j eps_j + delta * |eps|^2 over
/// (a, eps) with  g_j'a - eps_j <= margin_j,  -eps_j <= 0,  and the
/// action box. The tiny delta term keeps the Hessian positive definite;
/// with eps >= 0 the linear term equals rho * |eps|_1.
/// Rows: K sensitivity rows, K slack positivity rows, 2*N*m box rows.
QpProblem build_soft_projection(const ProjectionSpec& spec);

/// Splits an optimal primal into (joint_action, slacks). Hard problems
/// yield an empty slack vector.
std::pair<Eigen::VectorXd, Eigen::VectorXd> extract_action(const QpSolution& solution, long n_action_dims);

}  // namespace safemaddpg
