#include "orthoboot/influence_solvers.hpp"

#include "orthoboot/core.hpp"

#include <cmath>
#include <string>

namespace orthoboot {

CgNotConverged::CgNotConverged(int iterations, double relative_residual)
    : std::runtime_error("conjugate gradient did not converge after " + std::to_string(iterations) +
                         " iterations (relative residual " + std::to_string(relative_residual) + ")"),
      iterations_(iterations),
      relative_residual_(relative_residual)
{
}

CgResult cg_solve(const LinearOperator& apply_A, const Eigen::VectorXd& b, const CgConfig& cfg)
{
    if (!(cfg.tol > 0.0)) throw std::invalid_argument("cg: tol must be positive");
    if (cfg.max_iter < 0) throw std::invalid_argument("cg: max_iter must be at least 1");
    if (cfg.damping < 0.0) throw std::invalid_argument("cg: damping must be non-negative");

    const auto n = b.size();
    const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : static_cast<int>(std::max<Eigen::Index>(10 * n, 1));
    auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        Eigen::VectorXd out = apply_A(v);
        if (cfg.damping > 0.0) out += cfg.damping * v;
        return out;
    };

    CgResult result;
    result.x = Eigen::VectorXd::Zero(n);
    const double b_norm = b.norm();
    if (b_norm == 0.0) return result;

    Eigen::VectorXd r = b;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    int it = 0;
    while (it < max_iter) {
        ++it;
        const Eigen::VectorXd q = apply(p);
        const double pq = p.dot(q);
        if (!(pq > 0.0)) throw std::domain_error("cg: operator is not positive definite");
        const double step = rr / pq;
        result.x += step * p;
        r -= step * q;
        const double rr_next = r.squaredNorm();
        if (std::sqrt(rr_next) <= cfg.tol * b_norm) {
            rr = rr_next;
            break;
        }
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }

    // The recursive residual drifts from the true one; judge convergence on the latter.
    const double true_rel = (apply(result.x) - b).norm() / b_norm;
    result.iterations = it;
    result.relative_residual = true_rel;
    if (std::sqrt(rr) > cfg.tol * b_norm || !(true_rel <= std::max(cfg.tol, 1e-13) * 10.0))
        throw CgNotConverged(it, true_rel);
    return result;
}

MEstimatorInfluence::MEstimatorInfluence(MEstimatorModel model, const CgConfig& cfg) : model_(std::move(model))
{
    const Eigen::VectorXd g = model_.probe_gradient(model_.theta);
    const auto& theta = model_.theta;
    auto hvp = [this, &theta](const Eigen::VectorXd& v) { return model_.hessian_vector_product(theta, v); };
    CgResult solved = cg_solve(hvp, g, cfg);
    direction_ = std::move(solved.x);
    iterations_ = solved.iterations;
}

double MEstimatorInfluence::operator()(Point z) const
{
    return -direction_.dot(model_.loss_gradient(z, model_.theta));
}

double mestimator_influence(const MEstimatorModel& model, Point z, const CgConfig& cfg)
{
    return MEstimatorInfluence(model, cfg)(z);
}

KktQp::KktQp(Eigen::MatrixXd B, Eigen::MatrixXd A) : B_(std::move(B)), A_(std::move(A))
{
    const auto p = B_.rows();
    const auto d = A_.rows();
    if (B_.cols() != p || p == 0) throw std::invalid_argument("qp: objective matrix must be square");
    if (A_.cols() != p || d == 0) throw std::invalid_argument("qp: constraint matrix must be d x p with d >= 1");
    if (d > p) throw std::invalid_argument("qp: more constraints than variables; A cannot have full row rank");
    if (!B_.isApprox(B_.transpose(), 1e-12)) throw std::invalid_argument("qp: objective matrix is not symmetric");
    if (Eigen::LLT<Eigen::MatrixXd>(B_).info() != Eigen::Success)
        throw std::invalid_argument("qp: objective matrix is not positive definite");
    Eigen::FullPivLU<Eigen::MatrixXd> rank_check(A_);
    rank_check.setThreshold(1e-12);
    if (rank_check.rank() != d) throw std::invalid_argument("qp: constraint matrix is rank deficient");

    Eigen::MatrixXd saddle = Eigen::MatrixXd::Zero(p + d, p + d);
    saddle.topLeftCorner(p, p) = 2.0 * B_;
    saddle.topRightCorner(p, d) = A_.transpose();
    saddle.bottomLeftCorner(d, p) = A_;
    saddle_.compute(saddle);
}

Eigen::VectorXd KktQp::solve_saddle(const Eigen::VectorXd& rhs) const
{
    if (rhs.size() != A_.rows()) throw std::invalid_argument("qp: right-hand side has wrong dimension");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(B_.rows() + A_.rows());
    full.tail(A_.rows()) = rhs;
    return saddle_.solve(full);
}

Eigen::VectorXd KktQp::solve(const Eigen::VectorXd& rhs) const
{
    return solve_saddle(rhs).head(B_.rows());
}

Eigen::VectorXd KktQp::multiplier(const Eigen::VectorXd& rhs) const
{
    return solve_saddle(rhs).tail(A_.rows());
}

Eigen::VectorXd KktQp::influence(const Eigen::VectorXd& b_hat, const Eigen::VectorXd& xi) const
{
    // Stationarity 2Bx + A^T mu = 0 and feasibility Ax = b are linear, so the
    // differential system has the same saddle matrix with db on the right.
    return solve(xi - b_hat);
}

Eigen::VectorXd kkt_influence(const KktQp& qp, const Eigen::VectorXd& b_hat, const Eigen::VectorXd& xi)
{
    return qp.influence(b_hat, xi);
}

QpInstance random_qp_instance(Eigen::Index p, Eigen::Index d, std::uint64_t seed)
{
    if (p < 1 || d < 1 || d > p) throw std::invalid_argument("qp instance: need 1 <= d <= p");
    Rng rng(seed);
    Eigen::MatrixXd M(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < p; ++i) M(i, j) = rng.normal();
    QpInstance qp;
    qp.B = M.transpose() * M / static_cast<double>(p) + Eigen::MatrixXd::Identity(p, p);
    qp.B = 0.5 * (qp.B + qp.B.transpose()).eval();
    qp.A.resize(d, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < d; ++i) qp.A(i, j) = rng.normal();
    return qp;
}

}  // namespace orthoboot
