// influence_solvers.hpp
//
// Numerical influence functions where no closed form is available:
//  - M-estimators: I(z) = -g^T H^{-1} grad L(z, theta_hat), with g the gradient
//    of the probed quantity and H the empirical Hessian. H is only touched
//    through Hessian-vector products; the single solve s = H^{-1} g is done by
//    conjugate gradients once and reused for every z.
//  - Equality-constrained quadratic programs min x^T B x s.t. A x = b:
//    differentiating the KKT conditions gives
//        [2B  A^T] [dx ]   [0 ]
//        [A   0  ] [dmu] = [db]
//    which is solved against a cached dense factorization.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>

namespace orthoboot {

// A data point: a row of a block, possibly strided.
using Point = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

struct CgConfig {
    double tol = 1e-10;      // relative residual ||Ax - b|| / ||b||
    int max_iter = 0;        // 0 means 10 * dimension
    // Solves (A + damping I) x = b instead. Damping biases the influence
    // function; it exists only for near-singular user models.
    double damping = 0.0;
};

struct CgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double relative_residual = 0.0;
};

class CgNotConverged : public std::runtime_error {
public:
    CgNotConverged(int iterations, double relative_residual);
    int iterations() const noexcept { return iterations_; }
    double relative_residual() const noexcept { return relative_residual_; }

private:
    int iterations_;
    double relative_residual_;
};

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// apply_A must be symmetric positive definite (after damping).
CgResult cg_solve(const LinearOperator& apply_A, const Eigen::VectorXd& b, const CgConfig& cfg = {});

struct MEstimatorModel {
    Eigen::VectorXd theta;
    std::function<Eigen::VectorXd(Point z, const Eigen::VectorXd& theta)> loss_gradient;
    // v -> H_theta v for the empirical Hessian (1/n) sum_i hess L(z_i, theta).
    std::function<Eigen::VectorXd(const Eigen::VectorXd& theta, const Eigen::VectorXd& v)> hessian_vector_product;
    // Gradient of the scalar quantity of interest with respect to theta.
    std::function<Eigen::VectorXd(const Eigen::VectorXd& theta)> probe_gradient;
};

// Influence of one M-estimator report with the inverse-Hessian solve cached.
class MEstimatorInfluence {
public:
    MEstimatorInfluence(MEstimatorModel model, const CgConfig& cfg = {});

    double operator()(Point z) const;

    const Eigen::VectorXd& solved_direction() const noexcept { return direction_; }
    int cg_iterations() const noexcept { return iterations_; }

private:
    MEstimatorModel model_;
    Eigen::VectorXd direction_;  // H^{-1} probe_gradient
    int iterations_ = 0;
};

// One-off evaluation; prefer MEstimatorInfluence when evaluating many points.
double mestimator_influence(const MEstimatorModel& model, Point z, const CgConfig& cfg = {});

class KktQp {
public:
    // B symmetric positive definite (p x p); A full row rank (d x p).
    KktQp(Eigen::MatrixXd B, Eigen::MatrixXd A);

    Eigen::Index primal_dim() const noexcept { return B_.rows(); }
    Eigen::Index constraint_dim() const noexcept { return A_.rows(); }
    const Eigen::MatrixXd& objective() const noexcept { return B_; }
    const Eigen::MatrixXd& constraints() const noexcept { return A_; }

    // argmin x^T B x subject to A x = rhs.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    // Multiplier mu* of the same problem (Lagrangian x^T B x + mu^T (A x - b)).
    Eigen::VectorXd multiplier(const Eigen::VectorXd& rhs) const;
    // (d x*/d b) (xi - b_hat).
    Eigen::VectorXd influence(const Eigen::VectorXd& b_hat, const Eigen::VectorXd& xi) const;

private:
    Eigen::VectorXd solve_saddle(const Eigen::VectorXd& rhs) const;

    Eigen::MatrixXd B_;
    Eigen::MatrixXd A_;
    Eigen::PartialPivLU<Eigen::MatrixXd> saddle_;
};

Eigen::VectorXd kkt_influence(const KktQp& qp, const Eigen::VectorXd& b_hat, const Eigen::VectorXd& xi);

// Random well-conditioned instance: B = M^T M / p + I with Gaussian M, and a
// Gaussian A. Deterministic in `seed`.
struct QpInstance {
    Eigen::MatrixXd B;
    Eigen::MatrixXd A;
};
QpInstance random_qp_instance(Eigen::Index p, Eigen::Index d, std::uint64_t seed);

}  // namespace orthoboot
