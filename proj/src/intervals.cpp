#include "orthoboot/intervals.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>

namespace orthoboot {

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double student_t_quantile(double p, double dof)
{
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("student_t_quantile: p must lie in (0, 1)");
    if (!(dof >= 1.0)) throw std::domain_error("student_t_quantile: dof must be at least 1");
    return boost::math::quantile(boost::math::students_t_distribution<double>(dof), p);
}

double interval_quantile(Method method, double alpha, Eigen::Index B)
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must lie in (0, 1)");
    if (method == Method::cheap) return student_t_quantile(1.0 - alpha / 2.0, static_cast<double>(B));
    return normal_quantile(1.0 - alpha / 2.0);
}

Interval make_interval(Method method, double center, double s2, double alpha, Eigen::Index B)
{
    if (!(s2 >= 0.0)) throw std::domain_error("interval: negative variance estimate");
    Interval out;
    out.method = method;
    out.alpha = alpha;
    out.center = center;
    out.half_width = interval_quantile(method, alpha, B) * std::sqrt(s2);
    out.lower = center - out.half_width;
    out.upper = center + out.half_width;
    return out;
}

std::vector<Interval> intervals_from_trace(Method method, const PluginEstimate& plugin, const ReplicateTrace* trace,
                                           double alpha)
{
    if (method == Method::naive) throw std::invalid_argument("naive estimator has no interval");
    const EstimateReport report = make_report(method, plugin, trace);
    if (!report.s2) throw std::invalid_argument(std::string(method_name(method)) + ": insufficient replicates");
    std::vector<Interval> out;
    for (Eigen::Index k = 0; k < plugin.point.size(); ++k)
        out.push_back(make_interval(method, plugin.point[k], (*report.s2)[k], alpha, report.B));
    return out;
}

namespace {

std::vector<Interval> traced_ci(Method method, const FunctionalSpec& spec, const Dataset& data, Eigen::Index B,
                                double alpha, const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    const PluginEstimate plugin = prepare(spec, data, method == Method::orthogonal);
    const ReplicateTrace trace = run_replicates(spec, data, plugin, B, seeds, opts);
    return intervals_from_trace(method, plugin, &trace, alpha);
}

}  // namespace

std::vector<Interval> ob_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                            const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    if (B < 2) throw std::invalid_argument("insufficient replicates");
    return traced_ci(Method::orthogonal, spec, data, B, alpha, seeds, opts);
}

std::vector<Interval> sb_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                            const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    if (B < 2) throw std::invalid_argument("insufficient replicates");
    return traced_ci(Method::standard, spec, data, B, alpha, seeds, opts);
}

std::vector<Interval> ij_ci(const FunctionalSpec& spec, const Dataset& data, double alpha)
{
    const PluginEstimate plugin = prepare(spec, data, true);
    return intervals_from_trace(Method::jackknife, plugin, nullptr, alpha);
}

std::vector<Interval> cheap_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                               const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    return traced_ci(Method::cheap, spec, data, B, alpha, seeds, opts);
}

double PredictionContext::oob_fraction(Eigen::Index n) const
{
    if (out_of_bag.empty() || n <= 0) return 0.0;
    double total = 0.0;
    for (const auto& set : out_of_bag) total += static_cast<double>(set.size());
    return total / (static_cast<double>(out_of_bag.size()) * static_cast<double>(n));
}

PredictionInterval ob_pi(const LinearModel& model, const Dataset& data, const Eigen::RowVectorXd& x_test,
                         Eigen::Index B, double alpha, const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    if (B < 2) throw std::invalid_argument("insufficient replicates");
    if (data.num_blocks() != 1) throw std::invalid_argument("ob_pi: expects a single [X | y] block");
    const Eigen::MatrixXd& block = data.block(0);
    const Eigen::Index n = block.rows();

    const FunctionalSpec spec = make_prediction_functional(model, x_test);
    const PluginEstimate plugin = prepare(spec, data, true);

    ReplicateTrace trace;
    trace.phi.resize(B, 1);
    trace.linear.resize(B, 1);
    PredictionContext ctx;
    ctx.out_of_bag.resize(static_cast<std::size_t>(B));
    ctx.refit_predictions.resize(B);
    ctx.oob_mse.resize(B);

    parallel_for(static_cast<std::size_t>(B), opts.exec, [&](std::size_t b) {
        const auto row = static_cast<Eigen::Index>(b);
        try {
            const auto dists = resample_all(data, seeds, opts.repetition, b);
            const Eigen::VectorXd w = dists[0].weights();
            const Eigen::VectorXd theta = model.fit(block, w);
            const double prediction = model.predict(theta, x_test);
            trace.phi(row, 0) = prediction;
            trace.linear(row, 0) = w.dot(plugin.influence[0].col(0));
            ctx.refit_predictions[row] = prediction;

            auto& oob = ctx.out_of_bag[b];
            double sse = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (dists[0].counts()[static_cast<std::size_t>(j)] != 0) continue;
                oob.push_back(j);
                const double resid = model.target(block.row(j)) - model.predict(theta, block.row(j));
                sse += resid * resid;
            }
            ctx.oob_mse[row] = oob.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : sse / static_cast<double>(oob.size());
        } catch (const std::exception& e) {
            throw ReplicateError(row, e.what());
        }
    });

    double sigma_sum = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
        if (ctx.out_of_bag[static_cast<std::size_t>(b)].empty()) {
            ++ctx.empty_oob;
            continue;
        }
        sigma_sum += ctx.oob_mse[b];
        ++used;
    }
    if (used == 0) throw std::runtime_error("no out-of-bag observations");

    PredictionInterval out;
    out.raw_s2 = ob_variance(trace, plugin.summary)[0];
    out.s2 = ob_variance_improved(trace, plugin.summary)[0];
    out.sigma2 = sigma_sum / static_cast<double>(used);
    out.interval = make_interval(Method::orthogonal, plugin.point[0], out.s2 + out.sigma2, alpha, B);
    out.context = std::move(ctx);
    return out;
}

}  // namespace orthoboot
