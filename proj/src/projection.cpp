#include "safemaddpg/projection.hpp"

#include <stdexcept>

namespace safemaddpg {

void ProjectionSpec::validate() const {
    if (proposed_action.size() == 0) throw std::invalid_argument("projection: empty proposed action");
    if (constraint_sensitivities.rows() != n_constraints())
        throw std::invalid_argument("projection: sensitivity rows do not match margins");
    if (n_constraints() > 0 && constraint_sensitivities.cols() != n_action_dims())
        throw std::invalid_argument("projection: sensitivity width does not match action dims");
    if (action_bound <= 0.0) throw std::invalid_argument("projection: action_bound must be positive");
    if (rho <= 0.0) throw std::invalid_argument("projection: rho must be positive");
    if (slack_reg <= 0.0) throw std::invalid_argument("projection: slack_reg must be positive");
}

QpProblem build_hard_projection(const ProjectionSpec& spec) {
    spec.validate();
    const long n = spec.n_action_dims();
    const long k = spec.n_constraints();

    QpProblem p;
    p.hessian = 2.0 * Eigen::MatrixXd::Identity(n, n);
    p.linear_cost = -2.0 * spec.proposed_action;
    p.ineq_matrix.resize(k + 2 * n, n);
    p.ineq_rhs.resize(k + 2 * n);
    if (k > 0) {
        p.ineq_matrix.topRows(k) = spec.constraint_sensitivities;
        p.ineq_rhs.head(k) = spec.constraint_margins;
    }
    p.ineq_matrix.middleRows(k, n) = Eigen::MatrixXd::Identity(n, n);
    p.ineq_rhs.segment(k, n).setConstant(spec.action_bound);
    p.ineq_matrix.bottomRows(n) = -Eigen::MatrixXd::Identity(n, n);
    p.ineq_rhs.tail(n).setConstant(spec.action_bound);
    return p;
}

QpProblem build_soft_projection(const ProjectionSpec& spec) {
    spec.validate();
    const long n = spec.n_action_dims();
    const long k = spec.n_constraints();
    const long dim = n + k;

    QpProblem p;
    p.hessian = Eigen::MatrixXd::Zero(dim, dim);
    p.hessian.topLeftCorner(n, n) = 2.0 * Eigen::MatrixXd::Identity(n, n);
    p.hessian.bottomRightCorner(k, k) = 2.0 * spec.slack_reg * Eigen::MatrixXd::Identity(k, k);
    p.linear_cost.resize(dim);
    p.linear_cost.head(n) = -2.0 * spec.proposed_action;
    p.linear_cost.tail(k).setConstant(spec.rho);

    p.ineq_matrix = Eigen::MatrixXd::Zero(2 * k + 2 * n, dim);
    p.ineq_rhs.resize(2 * k + 2 * n);
    if (k > 0) {
        p.ineq_matrix.topLeftCorner(k, n) = spec.constraint_sensitivities;
        p.ineq_matrix.block(0, n, k, k) = -Eigen::MatrixXd::Identity(k, k);
        p.ineq_rhs.head(k) = spec.constraint_margins;
        p.ineq_matrix.block(k, n, k, k) = -Eigen::MatrixXd::Identity(k, k);
        p.ineq_rhs.segment(k, k).setZero();
    }
    p.ineq_matrix.block(2 * k, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
    p.ineq_rhs.segment(2 * k, n).setConstant(spec.action_bound);
    p.ineq_matrix.block(2 * k + n, 0, n, n) = -Eigen::MatrixXd::Identity(n, n);
    p.ineq_rhs.tail(n).setConstant(spec.action_bound);
    return p;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> extract_action(const QpSolution& solution, long n_action_dims) {
    if (solution.status != QpStatus::Optimal)
        throw std::logic_error("extract_action: solution is not optimal");
    if (solution.primal.size() < n_action_dims)
        throw std::invalid_argument("extract_action: primal shorter than the action dimension");
    Eigen::VectorXd action = solution.primal.head(n_action_dims);
    Eigen::VectorXd slack = solution.primal.tail(solution.primal.size() - n_action_dims);
    return {std::move(action), std::move(slack)};
}

}  // namespace safemaddpg
