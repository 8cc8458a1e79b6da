#include "safemaddpg/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <istream>
#include <stdexcept>
#include <vector>

namespace safemaddpg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// sqrt(a^2 + b^2) without overflow
double hypot2(double a, double b) { return std::hypot(a, b); }

struct GiWorkspace {
    long n = 0;
    Eigen::MatrixXd J;  // n x n, J = L^-T initially, rotated as constraints enter
    Eigen::MatrixXd R;  // n x n upper triangular factor of N* (first q cols used)
    Eigen::VectorXd d, z, r, np;
    double R_norm = 1.0;
};

// Append the constraint whose image is in d: zero d[q+1..n-1] into d[q]
// with Givens rotations applied to the columns of J, then store the
// leading part of d as the new column of R. Fails when the normal is
// linearly dependent on the active ones.
bool add_constraint(GiWorkspace& w, long& q) {
    const long n = w.n;
    for (long j = n - 1; j >= q + 1; --j) {
        const double cc = w.d(j - 1);
        const double ss = w.d(j);
        if (ss == 0.0) continue;
        const double h = hypot2(cc, ss);
        const double c = cc / h;
        const double s = ss / h;
        w.d(j) = 0.0;
        w.d(j - 1) = h;
        // rotate columns j-1 and j of J
        for (long i = 0; i < n; ++i) {
            const double t1 = w.J(i, j - 1);
            const double t2 = w.J(i, j);
            w.J(i, j - 1) = t1 * c + t2 * s;
            w.J(i, j) = -t1 * s + t2 * c;
        }
    }
    if (std::abs(w.d(q)) <= std::numeric_limits<double>::epsilon() * w.R_norm) return false;
    w.R.col(q).head(q + 1) = w.d.head(q + 1);
    ++q;
    w.R_norm = std::max(w.R_norm, std::abs(w.d(q - 1)));
    return true;
}

// Remove the active constraint at position `pos`, restoring the upper
// triangular structure of R with Givens rotations.
void delete_constraint(GiWorkspace& w, std::vector<int>& active, Eigen::VectorXd& u, long& q, long pos) {
    const long n = w.n;
    for (long i = pos; i + 1 < q; ++i) {
        active[i] = active[i + 1];
        u(i) = u(i + 1);
        w.R.col(i).head(i + 2) = w.R.col(i + 1).head(i + 2);
    }
    active.resize(q - 1);
    u(q - 1) = u(q);  // incoming multiplier slides down
    --q;

    for (long j = pos; j < q; ++j) {
        const double cc = w.R(j, j);
        const double ss = w.R(j + 1, j);
        if (ss == 0.0) continue;
        const double h = hypot2(cc, ss);
        const double c = cc / h;
        const double s = ss / h;
        w.R(j, j) = h;
        w.R(j + 1, j) = 0.0;
        for (long k = j + 1; k < q; ++k) {
            const double t1 = w.R(j, k);
            const double t2 = w.R(j + 1, k);
            w.R(j, k) = t1 * c + t2 * s;
            w.R(j + 1, k) = -t1 * s + t2 * c;
        }
        for (long i = 0; i < n; ++i) {
            const double t1 = w.J(i, j);
            const double t2 = w.J(i, j + 1);
            w.J(i, j) = t1 * c + t2 * s;
            w.J(i, j + 1) = -t1 * s + t2 * c;
        }
    }
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem, double tolerance) {
    const long n = problem.n_vars();
    const long m = problem.n_rows();
    if (tolerance <= 0.0) throw std::invalid_argument("solve_qp: tolerance must be positive");
    if (problem.hessian.rows() != n || problem.hessian.cols() != n)
        throw std::invalid_argument("solve_qp: Hessian shape does not match linear cost");
    if (problem.ineq_matrix.rows() != m || (m > 0 && problem.ineq_matrix.cols() != n))
        throw std::invalid_argument("solve_qp: constraint shapes inconsistent");

    const double h_scale = std::max(1.0, problem.hessian.cwiseAbs().maxCoeff());
    if ((problem.hessian - problem.hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * h_scale)
        throw std::invalid_argument("solve_qp: Hessian is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(problem.hessian);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("solve_qp: Hessian is not positive definite");

    QpSolution sol;
    sol.dual = Eigen::VectorXd::Zero(m);

    GiWorkspace w;
    w.n = n;
    w.J = llt.matrixL().transpose().solve(Eigen::MatrixXd::Identity(n, n));
    w.R = Eigen::MatrixXd::Zero(n, n);
    w.d.resize(n);
    w.z.resize(n);
    w.r = Eigen::VectorXd::Zero(n + 1);
    w.np.resize(n);

    // unconstrained minimizer; feasible point of the dual
    Eigen::VectorXd x = llt.solve(-problem.linear_cost);

    // GI convention: row i becomes n_i'x >= b~_i with n_i = -A_i, b~_i = -b_i,
    // so the slack s_i = b_i - A_i x is non-negative when satisfied.
    Eigen::VectorXd s = problem.ineq_rhs - problem.ineq_matrix * x;

    std::vector<int> active;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
    long q = 0;

    // machine-level threshold for "no primal direction"
    const double z_eps = std::numeric_limits<double>::epsilon() * std::max(1.0, problem.hessian.trace()) *
                         std::max(1.0, w.J.cwiseAbs().maxCoeff()) * 100.0;

    std::vector<char> in_active(static_cast<std::size_t>(m), 0);
    std::vector<char> excluded(static_cast<std::size_t>(m), 0);

    const int max_iterations = 50 * static_cast<int>(n + m + 1);
    int iter = 0;
    Eigen::VectorXd x_saved = x;
    Eigen::VectorXd u_saved = u;
    std::vector<int> active_saved = active;

    while (true) {
        if (++iter > max_iterations) throw std::runtime_error("solve_qp: iteration limit exceeded");
        sol.iterations = iter;

        // choose the most violated inactive row
        s = problem.ineq_rhs - problem.ineq_matrix * x;
        long ip = -1;
        double worst = -tolerance;
        bool excluded_violation = false;
        for (long i = 0; i < m; ++i) {
            if (in_active[i]) continue;
            if (excluded[i]) {
                if (s(i) < -tolerance) excluded_violation = true;
                continue;
            }
            if (s(i) < worst) {
                worst = s(i);
                ip = i;
            }
        }
        if (ip < 0) {
            if (excluded_violation)
                throw std::runtime_error("solve_qp: degenerate working set, violated rows are dependent");
            sol.status = QpStatus::Optimal;
            break;
        }

        w.np = -problem.ineq_matrix.row(ip).transpose();
        u(q) = 0.0;
        double s_ip = s(ip);
        x_saved = x;
        u_saved = u;
        active_saved = active;

        while (true) {
            if (++iter > max_iterations) throw std::runtime_error("solve_qp: iteration limit exceeded");

            // step directions: z in the primal space, r in the dual space
            w.d.noalias() = w.J.transpose() * w.np;
            w.z.setZero();
            if (q < n) w.z.noalias() = w.J.rightCols(n - q) * w.d.tail(n - q);
            for (long i = q - 1; i >= 0; --i) {
                double sum = w.d(i);
                for (long j = i + 1; j < q; ++j) sum -= w.R(i, j) * w.r(j);
                w.r(i) = sum / w.R(i, i);
            }

            // partial step length: largest dual step keeping u >= 0
            double t1 = kInf;
            long drop_pos = -1;
            for (long k = 0; k < q; ++k) {
                if (w.r(k) > 0.0 && u(k) / w.r(k) < t1) {
                    t1 = u(k) / w.r(k);
                    drop_pos = k;
                }
            }
            // full step length: smallest primal step making row ip active;
            // s_ip < 0 here and moving along z raises it at rate z'np > 0
            double t2 = kInf;
            const double ztnp = w.z.dot(w.np);
            if (w.z.squaredNorm() > z_eps * z_eps) t2 = -s_ip / ztnp;

            const double t = std::min(t1, t2);
            if (t >= kInf) {
                // no primal or dual step possible: the row cannot be
                // satisfied, dual objective unbounded above
                sol.status = QpStatus::Infeasible;
                sol.primal = x;
                sol.objective = 0.5 * x.dot(problem.hessian * x) + problem.linear_cost.dot(x);
                return sol;
            }

            if (t2 >= kInf) {
                // dual-only step: drop the blocking row and retry
                u.head(q) -= t * w.r.head(q);
                u(q) += t;
                in_active[active[drop_pos]] = 0;
                delete_constraint(w, active, u, q, drop_pos);
                continue;
            }

            x += t * w.z;
            u.head(q) -= t * w.r.head(q);
            u(q) += t;

            if (t == t2) {
                // row ip becomes active
                if (add_constraint(w, q)) {
                    active.push_back(static_cast<int>(ip));
                    in_active[ip] = 1;
                    std::fill(excluded.begin(), excluded.end(), 0);
                } else {
                    // linearly dependent normal: restore and try another row
                    excluded[ip] = 1;
                    x = x_saved;
                    u = u_saved;
                    for (int a : active) in_active[a] = 0;
                    active = active_saved;
                    q = static_cast<long>(active.size());
                    for (int a : active) in_active[a] = 1;
                    // R and J must be rebuilt to match the restored active set
                    // (rare path; rebuild from scratch)
                    w.J = llt.matrixL().transpose().solve(Eigen::MatrixXd::Identity(n, n));
                    w.R.setZero();
                    w.R_norm = 1.0;
                    long qq = 0;
                    for (int a : active) {
                        w.np = -problem.ineq_matrix.row(a).transpose();
                        w.d.noalias() = w.J.transpose() * w.np;
                        if (!add_constraint(w, qq))
                            throw std::runtime_error("solve_qp: active set rebuild failed");
                    }
                }
                break;  // back to violated-row selection
            }

            // partial step: drop the blocking row, stay on row ip
            in_active[active[drop_pos]] = 0;
            delete_constraint(w, active, u, q, drop_pos);
            s_ip = problem.ineq_rhs(ip) - (problem.ineq_matrix.row(ip) * x).value();
        }
    }

    sol.primal = x;
    for (long k = 0; k < q; ++k) sol.dual(active[k]) = std::max(0.0, u(k));
    sol.active_set.assign(active.begin(), active.end());
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.objective = 0.5 * x.dot(problem.hessian * x) + problem.linear_cost.dot(x);
    return sol;
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
    KktResiduals res;
    const Eigen::VectorXd stat = p.hessian * s.primal + p.linear_cost + p.ineq_matrix.transpose() * s.dual;
    res.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
    if (p.n_rows() > 0) {
        const Eigen::VectorXd slack = p.ineq_matrix * s.primal - p.ineq_rhs;  // <= 0 feasible
        res.primal_feasibility = std::max(0.0, slack.maxCoeff());
        res.dual_feasibility = std::max(0.0, -s.dual.minCoeff());
        res.complementary_slackness = (s.dual.array() * slack.array()).abs().maxCoeff();
    }
    return res;
}

bool kkt_ok(const QpProblem& p, const QpSolution& s) {
    if (s.status != QpStatus::Optimal) return false;
    const KktResiduals r = kkt_residuals(p, s);
    const double f_scale = 1.0 + (p.linear_cost.size() ? p.linear_cost.cwiseAbs().maxCoeff() : 0.0);
    return r.stationarity <= 1e-6 * f_scale && r.primal_feasibility <= 1e-8 &&
           r.complementary_slackness <= 1e-8 && r.dual_feasibility <= 1e-10;
}

void dump_problem(const QpProblem& p, std::ostream& out) {
    char buf[64];
    auto put_matrix = [&](const char* name, const Eigen::MatrixXd& m) {
        out << name << '\n';
        for (long i = 0; i < m.rows(); ++i) {
            for (long j = 0; j < m.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
                out << (j ? " " : "") << buf;
            }
            out << '\n';
        }
    };
    out << "qp " << p.n_vars() << ' ' << p.n_rows() << '\n';
    put_matrix("H", p.hessian);
    put_matrix("f", p.linear_cost.transpose());
    if (p.n_rows() > 0) {
        put_matrix("A", p.ineq_matrix);
        put_matrix("b", p.ineq_rhs.transpose());
    }
}

QpProblem read_problem(std::istream& in) {
    std::string tag;
    long n = 0, r = 0;
    if (!(in >> tag >> n >> r) || tag != "qp") throw std::runtime_error("read_problem: bad header");
    QpProblem p;
    auto read_block = [&](const char* name, Eigen::MatrixXd& m, long rows, long cols) {
        std::string t;
        if (!(in >> t) || t != name) throw std::runtime_error(std::string("read_problem: expected ") + name);
        m.resize(rows, cols);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j)
                if (!(in >> m(i, j))) throw std::runtime_error("read_problem: short matrix");
    };
    Eigen::MatrixXd tmp;
    read_block("H", p.hessian, n, n);
    read_block("f", tmp, 1, n);
    p.linear_cost = tmp.row(0).transpose();
    if (r > 0) {
        read_block("A", p.ineq_matrix, r, n);
        read_block("b", tmp, 1, r);
        p.ineq_rhs = tmp.row(0).transpose();
    } else {
        p.ineq_matrix.resize(0, n);
        p.ineq_rhs.resize(0);
    }
    return p;
}

}  // namespace safemaddpg
