// Test-only reference implementations, kept independent of the library
// paths they verify.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "safemaddpg/qp.hpp"
#include "safemaddpg/rng.hpp"

namespace oracles {

// Projected-gradient solve of min 1/2 x'Hx + f'x s.t. Ax <= b via its
// dual: min_{l >= 0} 1/2 l'(A H^-1 A')l + (A H^-1 f + b)'l, iterated
// with FISTA; the projection onto l >= 0 is a clamp. The primal is
// recovered as x = -H^-1 (f + A'l).
struct PgResult {
    Eigen::VectorXd primal;
    Eigen::VectorXd dual;
    double objective = 0.0;
    bool converged = false;
    long iterations = 0;
};

inline PgResult projected_gradient_qp(const safemaddpg::QpProblem& p, double grad_tol = 1e-10,
                                      long max_iters = 2'000'000) {
    const long r = p.n_rows();
    const Eigen::LLT<Eigen::MatrixXd> llt(p.hessian);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("oracle: H not PD");

    PgResult out;
    if (r == 0) {
        out.primal = llt.solve(-p.linear_cost);
        out.dual.resize(0);
        out.objective = 0.5 * out.primal.dot(p.hessian * out.primal) + p.linear_cost.dot(out.primal);
        out.converged = true;
        return out;
    }

    const Eigen::MatrixXd hinv_at = llt.solve(p.ineq_matrix.transpose());  // H^-1 A'
    const Eigen::MatrixXd Q = p.ineq_matrix * hinv_at;                     // A H^-1 A'
    const Eigen::VectorXd c = p.ineq_matrix * llt.solve(p.linear_cost) + p.ineq_rhs;

    // Lipschitz constant of the dual gradient
    const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().maxCoeff();
    const double step = lip > 0.0 ? 1.0 / lip : 1.0;

    Eigen::VectorXd lam = Eigen::VectorXd::Zero(r);
    Eigen::VectorXd y = lam;
    double t = 1.0;
    for (long it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd grad = Q * y + c;
        Eigen::VectorXd lam_next = (y - step * grad).cwiseMax(0.0);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = lam_next + ((t - 1.0) / t_next) * (lam_next - lam);
        const double move = (lam_next - lam).lpNorm<Eigen::Infinity>();
        lam = std::move(lam_next);
        t = t_next;
        out.iterations = it + 1;
        if (move <= grad_tol * step) {
            // polish: check the fixed-point condition at lam itself
            const Eigen::VectorXd g = Q * lam + c;
            const Eigen::VectorXd fixed = (lam - step * g).cwiseMax(0.0);
            if ((fixed - lam).lpNorm<Eigen::Infinity>() <= grad_tol * step) {
                out.converged = true;
                break;
            }
        }
    }
    out.dual = lam;
    out.primal = -llt.solve(p.linear_cost + p.ineq_matrix.transpose() * lam);
    out.objective = 0.5 * out.primal.dot(p.hessian * out.primal) + p.linear_cost.dot(out.primal);
    return out;
}

// Random strictly convex QP with a guaranteed strictly feasible point:
// eigenvalues of H in [0.5, 5], b = A x0 + margin with margin > 0.
inline safemaddpg::QpProblem random_feasible_qp(long n, long r, safemaddpg::Rng& rng) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    MatrixXd raw(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) raw(i, j) = rng.normal();
    const Eigen::HouseholderQR<MatrixXd> qr(raw);
    MatrixXd q = qr.householderQ();
    VectorXd eigs(n);
    for (long i = 0; i < n; ++i) eigs(i) = rng.uniform(0.5, 5.0);
    safemaddpg::QpProblem p;
    p.hessian = q * eigs.asDiagonal() * q.transpose();
    p.hessian = 0.5 * (p.hessian + p.hessian.transpose());

    p.linear_cost = VectorXd::NullaryExpr(n, [&](long) { return rng.normal(); });
    p.ineq_matrix = MatrixXd::NullaryExpr(r, n, [&](long, long) { return rng.normal(); });
    VectorXd x0 = VectorXd::NullaryExpr(n, [&](long) { return rng.normal(); });
    p.ineq_rhs = p.ineq_matrix * x0;
    for (long i = 0; i < r; ++i) p.ineq_rhs(i) += rng.uniform(0.05, 1.0);
    return p;
}

// Scalar objective used by gradient checks on tiny networks elsewhere.
inline double quadratic_objective(const safemaddpg::QpProblem& p, const Eigen::VectorXd& x) {
    return 0.5 * x.dot(p.hessian * x) + p.linear_cost.dot(x);
}

}  // namespace oracles
