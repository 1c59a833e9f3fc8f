// Reference implementations used as independent oracles by the tests.
// Written directly from the definitions with plain loops; no library code
// beyond Eigen containers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

namespace ref {

// Mixture (1 - t) * sum_j w_j delta_{X_j} + t delta_x as explicit support and weights.
struct Mixture {
    std::vector<Eigen::VectorXd> points;
    std::vector<double> weights;
};

inline Mixture mixture(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, const Eigen::VectorXd& x, double t)
{
    Mixture m;
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
        m.points.push_back(X.row(j).transpose());
        m.weights.push_back((1.0 - t) * w[j]);
    }
    m.points.push_back(x);
    m.weights.push_back(t);
    return m;
}

inline Eigen::VectorXd mean(const Mixture& m)
{
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m.points[0].size());
    for (std::size_t j = 0; j < m.points.size(); ++j) mu += m.weights[j] * m.points[j];
    return mu;
}

inline double mean_norm_sq(const Mixture& m)
{
    return mean(m).squaredNorm();
}

inline double mean_norm_4(const Mixture& m)
{
    const double s = mean(m).squaredNorm();
    return s * s;
}

inline double variance(const Mixture& m)
{
    double mu = 0, sq = 0;
    for (std::size_t j = 0; j < m.points.size(); ++j) {
        mu += m.weights[j] * m.points[j][0];
        sq += m.weights[j] * m.points[j][0] * m.points[j][0];
    }
    return sq - mu * mu;
}

inline double correlation(const Mixture& m)
{
    double ex = 0, ey = 0, exx = 0, eyy = 0, exy = 0;
    for (std::size_t j = 0; j < m.points.size(); ++j) {
        const double x = m.points[j][0], y = m.points[j][1], w = m.weights[j];
        ex += w * x;
        ey += w * y;
        exx += w * x * x;
        eyy += w * y * y;
        exy += w * x * y;
    }
    return (exy - ex * ey) / std::sqrt((exx - ex * ex) * (eyy - ey * ey));
}

inline double entropy(const Mixture& m, int categories)
{
    std::vector<double> p(static_cast<std::size_t>(categories), 0.0);
    for (std::size_t j = 0; j < m.points.size(); ++j) p[static_cast<std::size_t>(m.points[j][0])] += m.weights[j];
    double h = 0;
    for (double q : p)
        if (q > 0) h -= q * std::log(q);
    return h;
}

// Weighted ridge least squares on [X | y] rows, solved by an explicit inverse.
inline Eigen::VectorXd ridge_fit(const Mixture& m, int features, bool intercept, double ridge)
{
    const int q = features + (intercept ? 1 : 0);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(q);
    for (std::size_t j = 0; j < m.points.size(); ++j) {
        Eigen::VectorXd f(q);
        if (intercept) f[0] = 1.0;
        f.tail(features) = m.points[j].head(features);
        G += m.weights[j] * f * f.transpose();
        r += m.weights[j] * f * m.points[j][features];
    }
    G.diagonal().array() += ridge;
    return G.inverse() * r;
}

// Central difference of a scalar functional along the mixture path.
inline double central_difference(const std::function<double(const Mixture&)>& phi, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& w, const Eigen::VectorXd& x, double eps)
{
    return (phi(mixture(X, w, x, eps)) - phi(mixture(X, w, x, -eps))) / (2.0 * eps);
}

// Explicit solution of min x'Bx s.t. Ax = b.
inline Eigen::VectorXd qp_solution(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
{
    const Eigen::MatrixXd Bi = B.inverse();
    return Bi * A.transpose() * (A * Bi * A.transpose()).inverse() * b;
}

inline double rel_err(double got, double want, double floor = 1e-6)
{
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

inline double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want, double floor = 1e-6)
{
    return (got - want).norm() / std::max(want.norm(), floor);
}

}  // namespace ref
