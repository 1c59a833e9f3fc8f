#include "orthoboot/functionals.hpp"
#include "orthoboot/influence_solvers.hpp"

#include "reference.hpp"

#include <doctest.h>

using namespace orthoboot;

namespace {

Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng)
{
    Eigen::MatrixXd M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = rng.normal();
    return M.transpose() * M / static_cast<double>(n) + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng)
{
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("cg matches a dense solve")
{
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd A = random_spd(20, rng);
        const Eigen::VectorXd b = random_vector(20, rng);
        const Eigen::VectorXd direct = A.llt().solve(b);
        const CgResult res = cg_solve([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(A * v); }, b);
        CHECK(ref::rel_err(res.x, direct) < 1e-8);
        CHECK(res.relative_residual <= 1e-10);
        CHECK(res.iterations <= 200);
    }
}

TEST_CASE("cg edge cases")
{
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
    auto apply = [&](const Eigen::VectorXd& v) { return Eigen::VectorXd(I * v); };
    CHECK(cg_solve(apply, Eigen::VectorXd::Zero(4)).x.isZero());

    Eigen::MatrixXd indefinite = I;
    indefinite(2, 2) = -1.0;
    Eigen::VectorXd e(4);
    e << 0, 0, 1, 0;
    CHECK_THROWS_AS(cg_solve([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(indefinite * v); }, e),
                    std::domain_error);

    Rng rng(5);
    const Eigen::MatrixXd A = random_spd(30, rng);
    CgConfig tight;
    tight.max_iter = 1;
    try {
        cg_solve([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(A * v); }, random_vector(30, rng), tight);
        FAIL("expected CgNotConverged");
    } catch (const CgNotConverged& err) {
        CHECK(err.iterations() == 1);
        CHECK(err.relative_residual() > 1e-10);
    }

    CgConfig damped;
    damped.damping = 1.0;
    const Eigen::VectorXd b = random_vector(4, rng);
    CHECK(ref::rel_err(cg_solve(apply, b, damped).x, b / 2.0) < 1e-10);
}

TEST_CASE("m-estimator influence matches the OLS closed form")
{
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 40, d = 4;
        Eigen::MatrixXd X(n, d);
        Eigen::VectorXd y(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = 0; k < d; ++k) X(j, k) = rng.normal();
            y[j] = X.row(j).sum() + rng.normal();
        }
        const Eigen::MatrixXd block = regression_block(X, y);
        const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / n);
        const LinearModel model(d);
        const Eigen::VectorXd beta = model.fit(block, w);
        const Eigen::Index k = trial % d;
        const MEstimatorInfluence infl(model.mestimator(block, w, beta, Eigen::VectorXd::Unit(d, k)));

        const Eigen::MatrixXd gram_inv = (X.transpose() * X).inverse();
        for (Eigen::Index j = 0; j < n; j += 7) {
            const Eigen::VectorXd xz = X.row(j).transpose();
            const double want = -static_cast<double>(n) * (gram_inv * xz)[k] * (xz.dot(beta) - y[j]);
            CHECK(ref::rel_err(infl(block.row(j)), want) < 1e-8);
            CHECK(mestimator_influence(model.mestimator(block, w, beta, Eigen::VectorXd::Unit(d, k)), block.row(j)) ==
                  doctest::Approx(infl(block.row(j))).epsilon(1e-12));
        }
    }
}

TEST_CASE("m-estimator influence is invariant to duplicating the data")
{
    Rng rng(23);
    const Eigen::Index n = 25;
    Eigen::MatrixXd block(n, 3);
    for (Eigen::Index j = 0; j < n; ++j) {
        block(j, 0) = rng.normal();
        block(j, 1) = rng.normal();
        block(j, 2) = 2 * block(j, 0) + rng.normal();
    }
    Eigen::MatrixXd doubled(2 * n, 3);
    doubled << block, block;
    const auto spec = make_linreg_functional(2, 1, {true, 0.1, {}});
    const Dataset a({block}), b({doubled});
    const Weights wa = uniform_weights(a), wb = uniform_weights(b);
    const auto ia = spec.influence[0](a, wa);
    const auto ib = spec.influence[0](b, wb);
    for (Eigen::Index j = 0; j < n; ++j) CHECK(ref::rel_err(ib(block.row(j))[0], ia(block.row(j))[0]) < 1e-9);
}

TEST_CASE("kkt solution satisfies the optimality conditions")
{
    const QpInstance inst = random_qp_instance(8, 3, 4);
    const KktQp qp(inst.B, inst.A);
    Rng rng(9);
    const Eigen::VectorXd b = random_vector(3, rng);
    const Eigen::VectorXd x = qp.solve(b);
    const Eigen::VectorXd mu = qp.multiplier(b);
    CHECK((inst.A * x - b).norm() < 1e-10);
    CHECK((2 * inst.B * x + inst.A.transpose() * mu).norm() < 1e-10);
    CHECK(ref::rel_err(x, ref::qp_solution(inst.B, inst.A, b)) < 1e-10);
}

TEST_CASE("kkt influence matches the FD Jacobian of the explicit solution")
{
    Rng rng(31);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const QpInstance inst = random_qp_instance(6, 3, seed);
        const KktQp qp(inst.B, inst.A);
        const Eigen::VectorXd b_hat = random_vector(3, rng);
        const Eigen::VectorXd xi = random_vector(3, rng);
        const double h = 1e-5;
        const Eigen::VectorXd fd = (ref::qp_solution(inst.B, inst.A, b_hat + h * (xi - b_hat)) -
                                    ref::qp_solution(inst.B, inst.A, b_hat - h * (xi - b_hat))) /
                                   (2 * h);
        CHECK(ref::rel_err(kkt_influence(qp, b_hat, xi), fd) < 1e-6);
    }
}

TEST_CASE("kkt validation")
{
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd A(2, 3);
    A << 1, 0, 0, 2, 0, 0;  // rank 1
    CHECK_THROWS(KktQp(B, A));
    Eigen::MatrixXd asym = B;
    asym(0, 1) = 1.0;
    CHECK_THROWS(KktQp(asym, Eigen::MatrixXd::Ones(1, 3)));
    Eigen::MatrixXd indefinite = B;
    indefinite(1, 1) = -1.0;
    CHECK_THROWS(KktQp(indefinite, Eigen::MatrixXd::Ones(1, 3)));
    CHECK_THROWS(KktQp(B, Eigen::MatrixXd::Ones(4, 3)));
    CHECK_NOTHROW(KktQp(B, Eigen::MatrixXd::Ones(1, 3)));
}
