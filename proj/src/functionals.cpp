#include "orthoboot/functionals.hpp"

#include "params.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace orthoboot {

namespace {

void check_arity(const FunctionalSpec& spec, const Dataset& data, WeightsView weights)
{
    if (data.num_blocks() != spec.num_blocks)
        throw std::invalid_argument(spec.name + ": expected " + std::to_string(spec.num_blocks) + " block(s), got " +
                                    std::to_string(data.num_blocks()));
    if (weights.size() != data.num_blocks())
        throw std::invalid_argument(spec.name + ": one weight vector per block required");
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i].size() != data.size(i))
            throw std::invalid_argument(spec.name + ": weight vector length does not match block " + std::to_string(i));
}

void require_dim(const std::string& name, const Eigen::MatrixXd& block, Eigen::Index cols)
{
    if (block.cols() != cols)
        throw std::invalid_argument(name + ": expected a block with " + std::to_string(cols) + " column(s), got " +
                                    std::to_string(block.cols()));
}

Eigen::VectorXd scalar(double v)
{
    Eigen::VectorXd out(1);
    out[0] = v;
    return out;
}

struct ScalarMoments {
    double mean = 0;
    double variance = 0;
};

ScalarMoments scalar_moments(const Eigen::MatrixXd& block, const Eigen::VectorXd& w)
{
    const auto x = block.col(0);
    ScalarMoments m;
    m.mean = w.dot(x);
    m.variance = w.dot((x.array() - m.mean).square().matrix());
    return m;
}

Eigen::VectorXd category_probabilities(const Eigen::MatrixXd& block, const Eigen::VectorXd& w, Eigen::Index categories)
{
    Eigen::VectorXd p = Eigen::VectorXd::Zero(categories);
    for (Eigen::Index j = 0; j < block.rows(); ++j) {
        const double v = block(j, 0);
        const auto c = static_cast<Eigen::Index>(v);
        if (static_cast<double>(c) != v || c < 0 || c >= categories)
            throw std::domain_error("entropy: observation " + std::to_string(v) + " is not a category index in [0, " +
                                    std::to_string(categories) + ")");
        p[c] += w[j];
    }
    return p;
}

Eigen::Index category_of(Point x, Eigen::Index categories)
{
    if (x.size() != 1) throw std::invalid_argument("entropy: observations are single category indices");
    const double v = x(0);
    const auto c = static_cast<Eigen::Index>(v);
    if (static_cast<double>(c) != v || c < 0 || c >= categories)
        throw std::domain_error("entropy: observation is not a category index");
    return c;
}

}  // namespace

Eigen::VectorXd eval_functional(const FunctionalSpec& spec, const Dataset& data, WeightsView weights)
{
    check_arity(spec, data, weights);
    Eigen::VectorXd out = spec.evaluate(data, weights);
    if (out.size() != spec.output_dim)
        throw std::logic_error(spec.name + ": evaluate returned the wrong output dimension");
    return out;
}

Eigen::VectorXd eval_functional(const FunctionalSpec& spec, const Dataset& data,
                                std::span<const EmpiricalDistribution> dists)
{
    const Weights w = to_weights(dists);
    return eval_functional(spec, data, w);
}

Eigen::MatrixXd influence_table(const FunctionalSpec& spec, const Dataset& data, std::size_t block, WeightsView base)
{
    if (!spec.has_influence()) throw std::invalid_argument(spec.name + ": no influence function available");
    check_arity(spec, data, base);
    const PointInfluence infl = spec.influence.at(block)(data, base);
    const auto& X = data.block(block);
    Eigen::MatrixXd table(X.rows(), spec.output_dim);
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
        const Eigen::VectorXd v = infl(X.row(j));
        if (v.size() != spec.output_dim) throw std::logic_error(spec.name + ": influence has the wrong dimension");
        table.row(j) = v.transpose();
    }
    return table;
}

double influence_mean_norm_sq(Point x, const Eigen::VectorXd& mean)
{
    return 2.0 * (x.dot(mean.transpose()) - mean.squaredNorm());
}

double influence_mean_norm_4(Point x, const Eigen::VectorXd& mean)
{
    const double sq = mean.squaredNorm();
    return 4.0 * sq * (x.dot(mean.transpose()) - sq);
}

double influence_variance(double x, double mean, double variance)
{
    return (x - mean) * (x - mean) - variance;
}

double BivariateMoments::correlation() const
{
    if (!(var_x > 0.0) || !(var_y > 0.0)) throw std::domain_error("correlation: degenerate marginal");
    return cov / std::sqrt(var_x * var_y);
}

BivariateMoments bivariate_moments(const Eigen::MatrixXd& block, const Eigen::VectorXd& w)
{
    require_dim("correlation", block, 2);
    BivariateMoments m;
    m.mean_x = w.dot(block.col(0));
    m.mean_y = w.dot(block.col(1));
    const Eigen::ArrayXd dx = block.col(0).array() - m.mean_x;
    const Eigen::ArrayXd dy = block.col(1).array() - m.mean_y;
    m.var_x = w.dot((dx * dx).matrix());
    m.var_y = w.dot((dy * dy).matrix());
    m.cov = w.dot((dx * dy).matrix());
    return m;
}

double influence_correlation(double x, double y, const BivariateMoments& m)
{
    const double rho = m.correlation();
    const double xs = (x - m.mean_x) / std::sqrt(m.var_x);
    const double ys = (y - m.mean_y) / std::sqrt(m.var_y);
    return xs * ys - 0.5 * rho * (xs * xs + ys * ys);
}

double influence_entropy(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& x)
{
    if (p_hat.size() != x.size()) throw std::invalid_argument("entropy: dimension mismatch");
    double out = 0.0;
    for (Eigen::Index i = 0; i < p_hat.size(); ++i) {
        if (p_hat[i] > 0.0) {
            out -= (x[i] - p_hat[i]) * (std::log(p_hat[i]) + 1.0);
        } else if (x[i] > 0.0) {
            throw std::domain_error("entropy: zero plug-in probability");
        }
    }
    return out;
}

Eigen::VectorXd fd_influence_oracle(const FunctionalSpec& spec, const Dataset& data, WeightsView base,
                                    std::size_t block, Point x, double eps, FdScheme scheme)
{
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("fd oracle: eps must lie in (0, 1)");
    check_arity(spec, data, base);
    if (block >= data.num_blocks()) throw std::invalid_argument("fd oracle: block index out of range");
    if (x.size() != data.dim(block)) throw std::invalid_argument("fd oracle: point dimension mismatch");

    // Append x as an extra support point of block i.
    std::vector<Eigen::MatrixXd> blocks = data.blocks();
    auto& target = blocks[block];
    target.conservativeResize(target.rows() + 1, Eigen::NoChange);
    target.row(target.rows() - 1) = x;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < data.num_blocks(); ++i) names.push_back(data.name(i));
    const Dataset augmented(std::move(blocks), std::move(names));

    auto at = [&](double t) {
        Weights w(base.begin(), base.end());
        Eigen::VectorXd mixed(w[block].size() + 1);
        mixed.head(w[block].size()) = (1.0 - t) * w[block];
        mixed[w[block].size()] = t;
        w[block] = std::move(mixed);
        Eigen::VectorXd value = eval_functional(spec, augmented, w);
        if (!value.allFinite()) throw std::domain_error("fd oracle: perturbed measure leaves the functional's domain");
        return value;
    };

    if (scheme == FdScheme::forward) return (at(eps) - at(0.0)) / eps;
    return (at(eps) - at(-eps)) / (2.0 * eps);
}

FunctionalSpec make_mean_functional(Eigen::Index dim)
{
    FunctionalSpec spec;
    spec.name = "mean";
    spec.output_dim = dim;
    spec.evaluate = [dim](const Dataset& data, WeightsView w) -> Eigen::VectorXd {
        require_dim("mean", data.block(0), dim);
        return weighted_mean(data.block(0), w[0]);
    };
    spec.influence = {[](const Dataset& data, WeightsView w) -> PointInfluence {
        const Eigen::VectorXd mu = weighted_mean(data.block(0), w[0]);
        return [mu](Point x) -> Eigen::VectorXd { return x.transpose() - mu; };
    }};
    return spec;
}

FunctionalSpec make_mean_norm_sq_functional()
{
    FunctionalSpec spec;
    spec.name = "mean_norm_sq";
    spec.evaluate = [](const Dataset& data, WeightsView w) {
        return scalar(weighted_mean(data.block(0), w[0]).squaredNorm());
    };
    spec.influence = {[](const Dataset& data, WeightsView w) -> PointInfluence {
        const Eigen::VectorXd mu = weighted_mean(data.block(0), w[0]);
        return [mu](Point x) { return scalar(influence_mean_norm_sq(x, mu)); };
    }};
    return spec;
}

FunctionalSpec make_mean_norm_4_functional()
{
    FunctionalSpec spec;
    spec.name = "mean_norm_4";
    spec.evaluate = [](const Dataset& data, WeightsView w) {
        const double sq = weighted_mean(data.block(0), w[0]).squaredNorm();
        return scalar(sq * sq);
    };
    spec.influence = {[](const Dataset& data, WeightsView w) -> PointInfluence {
        const Eigen::VectorXd mu = weighted_mean(data.block(0), w[0]);
        return [mu](Point x) { return scalar(influence_mean_norm_4(x, mu)); };
    }};
    return spec;
}

FunctionalSpec make_variance_functional()
{
    FunctionalSpec spec;
    spec.name = "variance";
    spec.evaluate = [](const Dataset& data, WeightsView w) {
        require_dim("variance", data.block(0), 1);
        return scalar(scalar_moments(data.block(0), w[0]).variance);
    };
    spec.influence = {[](const Dataset& data, WeightsView w) -> PointInfluence {
        require_dim("variance", data.block(0), 1);
        const ScalarMoments m = scalar_moments(data.block(0), w[0]);
        return [m](Point x) { return scalar(influence_variance(x(0), m.mean, m.variance)); };
    }};
    return spec;
}

FunctionalSpec make_correlation_functional()
{
    FunctionalSpec spec;
    spec.name = "correlation";
    spec.evaluate = [](const Dataset& data, WeightsView w) {
        return scalar(bivariate_moments(data.block(0), w[0]).correlation());
    };
    spec.influence = {[](const Dataset& data, WeightsView w) -> PointInfluence {
        const BivariateMoments m = bivariate_moments(data.block(0), w[0]);
        (void)m.correlation();  // reject degenerate marginals at bind time
        return [m](Point x) { return scalar(influence_correlation(x(0), x(1), m)); };
    }};
    return spec;
}

FunctionalSpec make_entropy_functional(Eigen::Index categories)
{
    if (categories < 1) throw std::invalid_argument("entropy: need at least one category");
    FunctionalSpec spec;
    spec.name = "entropy";
    spec.evaluate = [categories](const Dataset& data, WeightsView w) {
        require_dim("entropy", data.block(0), 1);
        const Eigen::VectorXd p = category_probabilities(data.block(0), w[0], categories);
        double h = 0.0;
        for (Eigen::Index c = 0; c < categories; ++c) {
            if (p[c] < 0.0) throw std::domain_error("entropy: negative category probability");
            if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
        }
        return scalar(h);
    };
    spec.influence = {[categories](const Dataset& data, WeightsView w) -> PointInfluence {
        require_dim("entropy", data.block(0), 1);
        const Eigen::VectorXd p = category_probabilities(data.block(0), w[0], categories);
        // For a one-hot x at category c the general formula collapses to
        // -log p_c - H(p).
        double h = 0.0;
        for (Eigen::Index c = 0; c < categories; ++c)
            if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
        return [p, h, categories](Point x) {
            const Eigen::Index c = category_of(x, categories);
            if (!(p[c] > 0.0)) throw std::domain_error("entropy: zero plug-in probability");
            return scalar(-std::log(p[c]) - h);
        };
    }};
    return spec;
}

FunctionalSpec make_constrained_qp_functional(Eigen::MatrixXd B, Eigen::MatrixXd A)
{
    auto qp = std::make_shared<const KktQp>(std::move(B), std::move(A));
    FunctionalSpec spec;
    spec.name = "qp_argmin";
    spec.output_dim = qp->primal_dim();
    spec.evaluate = [qp](const Dataset& data, WeightsView w) -> Eigen::VectorXd {
        require_dim("qp_argmin", data.block(0), qp->constraint_dim());
        return qp->solve(weighted_mean(data.block(0), w[0]));
    };
    spec.influence = {[qp](const Dataset& data, WeightsView w) -> PointInfluence {
        require_dim("qp_argmin", data.block(0), qp->constraint_dim());
        const Eigen::VectorXd b_hat = weighted_mean(data.block(0), w[0]);
        return [qp, b_hat](Point xi) -> Eigen::VectorXd { return qp->influence(b_hat, xi.transpose()); };
    }};
    return spec;
}

LinearModel::LinearModel(Eigen::Index num_features, LinearModelOptions options)
    : num_features_(num_features), options_(options)
{
    if (num_features_ < 1) throw std::invalid_argument("linear model: need at least one feature");
    if (options_.ridge < 0.0) throw std::invalid_argument("linear model: ridge must be non-negative");
}

Eigen::VectorXd LinearModel::features(Point x) const
{
    if (x.size() != num_features_ && x.size() != num_features_ + 1)
        throw std::invalid_argument("linear model: point has " + std::to_string(x.size()) + " entries, expected " +
                                    std::to_string(num_features_));
    Eigen::VectorXd f(num_params());
    if (options_.intercept) f[0] = 1.0;
    f.tail(num_features_) = x.head(num_features_).transpose();
    return f;
}

namespace {

Eigen::MatrixXd design_matrix(const LinearModel& model, const Eigen::MatrixXd& block)
{
    const auto q = model.num_params();
    Eigen::MatrixXd X(block.rows(), q);
    if (model.options().intercept) X.col(0).setOnes();
    X.rightCols(model.num_features()) = block.leftCols(model.num_features());
    return X;
}

}  // namespace

Eigen::VectorXd LinearModel::fit(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights) const
{
    require_dim("linear model", block, num_features_ + 1);
    if (weights.size() != block.rows()) throw std::invalid_argument("linear model: weight length mismatch");
    const Eigen::MatrixXd X = design_matrix(*this, block);
    const Eigen::VectorXd y = block.col(num_features_);
    Eigen::MatrixXd gram = X.transpose() * weights.asDiagonal() * X;
    gram.diagonal().array() += options_.ridge;
    const Eigen::VectorXd rhs = X.transpose() * weights.cwiseProduct(y);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const Eigen::VectorXd pivots = ldlt.vectorD();
    const bool degenerate = !(pivots.minCoeff() > 1e-12 * pivots.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || degenerate || ldlt.rcond() < 1e-13)
        throw std::domain_error("singular empirical Hessian");
    return ldlt.solve(rhs);
}

MEstimatorModel LinearModel::mestimator(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights,
                                        Eigen::VectorXd theta, Eigen::VectorXd probe) const
{
    require_dim("linear model", block, num_features_ + 1);
    auto X = std::make_shared<const Eigen::MatrixXd>(design_matrix(*this, block));
    auto w = std::make_shared<const Eigen::VectorXd>(weights);
    const double ridge = options_.ridge;
    const LinearModel self = *this;

    MEstimatorModel model;
    model.theta = std::move(theta);
    model.loss_gradient = [self, ridge](Point z, const Eigen::VectorXd& th) -> Eigen::VectorXd {
        const Eigen::VectorXd f = self.features(z);
        return 2.0 * f * (f.dot(th) - self.target(z)) + 2.0 * ridge * th;
    };
    model.hessian_vector_product = [X, w, ridge](const Eigen::VectorXd&, const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const Eigen::VectorXd Xv = (*X) * v;
        return 2.0 * (X->transpose() * w->cwiseProduct(Xv) + ridge * v);
    };
    model.probe_gradient = [probe = std::move(probe)](const Eigen::VectorXd&) { return probe; };
    return model;
}

FunctionalSpec make_linreg_functional(Eigen::Index num_features, Eigen::Index k, LinearModelOptions options)
{
    const LinearModel model(num_features, options);
    if (k < 0 || k >= model.num_params())
        throw std::invalid_argument("linreg_coeff: coefficient index out of range");
    FunctionalSpec spec;
    spec.name = "linreg_coeff";
    spec.evaluate = [model, k](const Dataset& data, WeightsView w) {
        return scalar(model.fit(data.block(0), w[0])[k]);
    };
    spec.influence = {[model, k](const Dataset& data, WeightsView w) -> PointInfluence {
        Eigen::VectorXd theta = model.fit(data.block(0), w[0]);
        auto infl = std::make_shared<const MEstimatorInfluence>(
            model.mestimator(data.block(0), w[0], std::move(theta), Eigen::VectorXd::Unit(model.num_params(), k)),
            model.options().cg);
        return [infl](Point z) { return scalar((*infl)(z)); };
    }};
    return spec;
}

FunctionalSpec make_prediction_functional(const LinearModel& model, const Eigen::RowVectorXd& x_test)
{
    const Eigen::VectorXd probe = model.features(x_test);
    FunctionalSpec spec;
    spec.name = "prediction";
    spec.evaluate = [model, probe](const Dataset& data, WeightsView w) {
        return scalar(probe.dot(model.fit(data.block(0), w[0])));
    };
    spec.influence = {[model, probe](const Dataset& data, WeightsView w) -> PointInfluence {
        Eigen::VectorXd theta = model.fit(data.block(0), w[0]);
        auto infl = std::make_shared<const MEstimatorInfluence>(
            model.mestimator(data.block(0), w[0], std::move(theta), probe), model.options().cg);
        return [infl](Point z) { return scalar((*infl)(z)); };
    }};
    return spec;
}

Eigen::MatrixXd regression_block(const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
{
    if (X.rows() != y.size()) throw std::invalid_argument("regression_block: X and y disagree on n");
    Eigen::MatrixXd block(X.rows(), X.cols() + 1);
    block.leftCols(X.cols()) = X;
    block.col(X.cols()) = y;
    return block;
}

// Registry ---------------------------------------------------------------

namespace {

using Params = detail::ParamReader;

template <typename Fn>
FunctionalRegistry::Factory no_params(std::string name, Fn make)
{
    return [name = std::move(name), make](const nlohmann::json& json) {
        Params(name, json).finish();
        return make();
    };
}

}  // namespace

const FunctionalRegistry& FunctionalRegistry::builtin()
{
    static const FunctionalRegistry registry = [] {
        FunctionalRegistry r;
        r.add("mean_norm_sq", no_params("mean_norm_sq", make_mean_norm_sq_functional));
        r.add("mean_norm_4", no_params("mean_norm_4", make_mean_norm_4_functional));
        r.add("variance", no_params("variance", make_variance_functional));
        r.add("correlation", no_params("correlation", make_correlation_functional));
        r.add("entropy", [](const nlohmann::json& json) {
            Params p("entropy", json);
            const auto categories = p.get<Eigen::Index>("categories", 100);
            p.finish();
            return make_entropy_functional(categories);
        });
        r.add("qp_argmin", [](const nlohmann::json& json) {
            Params p("qp_argmin", json);
            if (p.has("B") || p.has("A")) {
                Eigen::MatrixXd B = p.matrix("B");
                Eigen::MatrixXd A = p.matrix("A");
                p.finish();
                return make_constrained_qp_functional(std::move(B), std::move(A));
            }
            const auto dim_p = p.get<Eigen::Index>("p", 200);
            const auto dim_d = p.get<Eigen::Index>("d", 100);
            const auto seed = p.get<std::uint64_t>("problem_seed", 1);
            p.finish();
            QpInstance qp = random_qp_instance(dim_p, dim_d, seed);
            return make_constrained_qp_functional(std::move(qp.B), std::move(qp.A));
        });
        r.add("linreg_coeff", [](const nlohmann::json& json) {
            Params p("linreg_coeff", json);
            const auto features = p.get<Eigen::Index>("features", 1);
            const auto k = p.get<Eigen::Index>("k", 0);
            LinearModelOptions opts;
            opts.intercept = p.get<bool>("intercept", false);
            opts.ridge = p.get<double>("ridge", 0.0);
            opts.cg.tol = p.get<double>("cg_tol", 1e-10);
            p.finish();
            return make_linreg_functional(features, k, opts);
        });
        return r;
    }();
    return registry;
}

std::vector<std::string> FunctionalRegistry::names() const
{
    std::vector<std::string> out;
    for (const auto& [name, factory] : factories_) out.push_back(name);
    return out;
}

FunctionalSpec FunctionalRegistry::make(const std::string& name, const nlohmann::json& params) const
{
    const auto it = factories_.find(name);
    if (it == factories_.end()) {
        std::ostringstream msg;
        msg << "unknown functional '" << name << "'; registered:";
        for (const auto& n : names()) msg << ' ' << n;
        throw std::invalid_argument(msg.str());
    }
    return it->second(params);
}

void FunctionalRegistry::add(const std::string& name, Factory factory)
{
    if (!factories_.emplace(name, std::move(factory)).second)
        throw std::invalid_argument("functional '" + name + "' registered twice");
}

}  // namespace orthoboot
