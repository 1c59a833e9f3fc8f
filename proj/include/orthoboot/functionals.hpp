// functionals.hpp
//
// Performance measures phi(F_1, ..., F_m) evaluated at weighted empirical
// measures, together with their per-block influence functions.
//
// Conventions:
//  - Weights per block sum to one. The resampling path always passes
//    counts / n; finite-difference oracles pass fractional, possibly signed
//    mixtures (1 - t) F_hat + t delta_x.
//  - Variances and covariances are plug-in (population, 1/n) moments of the
//    weighted measure. Using 1/(n-1) would move every variance target.
//  - Entropy observations are category indices stored in a one-column block.
//    Its influence is the Gateaux derivative of -sum p log p, i.e.
//    -sum_i (x_i - p_i)(log p_i + 1), where x is the one-hot observation.

#pragma once

#include "orthoboot/core.hpp"
#include "orthoboot/influence_solvers.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace orthoboot {

using PointInfluence = std::function<Eigen::VectorXd(Point)>;
// Binds an influence function at the base measure; the returned callable is
// what gets evaluated at individual points.
using InfluenceFactory = std::function<PointInfluence(const Dataset&, WeightsView)>;

struct FunctionalSpec {
    std::string name;
    Eigen::Index output_dim = 1;
    std::size_t num_blocks = 1;
    std::function<Eigen::VectorXd(const Dataset&, WeightsView)> evaluate;
    // One per block, or empty when no influence is available.
    std::vector<InfluenceFactory> influence;

    bool has_influence() const noexcept { return influence.size() == num_blocks; }
};

Eigen::VectorXd eval_functional(const FunctionalSpec& spec, const Dataset& data, WeightsView weights);
Eigen::VectorXd eval_functional(const FunctionalSpec& spec, const Dataset& data,
                                std::span<const EmpiricalDistribution> dists);

// n_i x p matrix of I_i evaluated at every observation of block i.
Eigen::MatrixXd influence_table(const FunctionalSpec& spec, const Dataset& data, std::size_t block,
                                WeightsView base);

// Closed-form influence functions.
double influence_mean_norm_sq(Point x, const Eigen::VectorXd& mean);
double influence_mean_norm_4(Point x, const Eigen::VectorXd& mean);
double influence_variance(double x, double mean, double variance);

struct BivariateMoments {
    double mean_x = 0, mean_y = 0, var_x = 0, var_y = 0, cov = 0;
    double correlation() const;
};
BivariateMoments bivariate_moments(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights);
double influence_correlation(double x, double y, const BivariateMoments& m);

// x: one-hot or probability vector over the categories of p_hat.
double influence_entropy(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& x);

enum class FdScheme { forward, central };

// Gateaux quotient of phi along (1 - t) F_hat_i + t delta_x for block i,
// others fixed. forward: [phi(eps) - phi(0)] / eps;
// central: [phi(eps) - phi(-eps)] / (2 eps).
Eigen::VectorXd fd_influence_oracle(const FunctionalSpec& spec, const Dataset& data, WeightsView base,
                                    std::size_t block, Point x, double eps, FdScheme scheme = FdScheme::central);

// Built-ins ------------------------------------------------------------------

// E_F X for a d-dimensional block. Linear, so its orthogonal remainder is 0.
FunctionalSpec make_mean_functional(Eigen::Index dim);
FunctionalSpec make_mean_norm_sq_functional();
FunctionalSpec make_mean_norm_4_functional();
FunctionalSpec make_variance_functional();
FunctionalSpec make_correlation_functional();
FunctionalSpec make_entropy_functional(Eigen::Index categories);
FunctionalSpec make_constrained_qp_functional(Eigen::MatrixXd B, Eigen::MatrixXd A);

// Weighted (ridge) least squares on a block laid out as [x_1 ... x_d | y].
// Loss per point: (f_theta(x) - y)^2 + ridge * ||theta||^2.
struct LinearModelOptions {
    bool intercept = false;
    double ridge = 0.0;
    CgConfig cg{};
};

class LinearModel {
public:
    LinearModel(Eigen::Index num_features, LinearModelOptions options = {});

    Eigen::Index num_features() const noexcept { return num_features_; }
    Eigen::Index num_params() const noexcept { return num_features_ + (options_.intercept ? 1 : 0); }
    const LinearModelOptions& options() const noexcept { return options_; }

    // Design row for raw covariates x (length num_features, or a full block
    // row whose trailing target column is ignored).
    Eigen::VectorXd features(Point x) const;
    double target(Point row) const { return row(row.size() - 1); }

    // Throws std::domain_error("singular empirical Hessian") if the weighted
    // normal equations are singular.
    Eigen::VectorXd fit(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights) const;
    double predict(const Eigen::VectorXd& theta, Point x) const { return features(x).dot(theta); }

    MEstimatorModel mestimator(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights,
                               Eigen::VectorXd theta, Eigen::VectorXd probe) const;

private:
    Eigen::Index num_features_;
    LinearModelOptions options_;
};

// Coefficient k of the weighted least-squares fit; influence through the
// CG-based M-estimator path.
FunctionalSpec make_linreg_functional(Eigen::Index num_features, Eigen::Index k, LinearModelOptions options = {});
// Prediction f_theta(x_test) of the refitted model.
FunctionalSpec make_prediction_functional(const LinearModel& model, const Eigen::RowVectorXd& x_test);

// Packs design and targets into the [X | y] block layout.
Eigen::MatrixXd regression_block(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Name -> factory over a JSON parameter object. Unknown parameters are errors.
class FunctionalRegistry {
public:
    using Factory = std::function<FunctionalSpec(const nlohmann::json& params)>;

    static const FunctionalRegistry& builtin();

    std::vector<std::string> names() const;
    bool contains(const std::string& name) const { return factories_.count(name) != 0; }
    FunctionalSpec make(const std::string& name, const nlohmann::json& params = nlohmann::json::object()) const;

    void add(const std::string& name, Factory factory);

private:
    std::map<std::string, Factory> factories_;
};

}  // namespace orthoboot
