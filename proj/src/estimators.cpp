#include "orthoboot/estimators.hpp"

#include <sstream>

namespace orthoboot {

const char* method_name(Method m) noexcept
{
    switch (m) {
    case Method::naive: return "naive";
    case Method::standard: return "sb";
    case Method::orthogonal: return "ob";
    case Method::jackknife: return "ij";
    case Method::cheap: return "cheap";
    }
    return "?";
}

std::vector<std::string> method_names()
{
    return {"naive", "sb", "ob", "ij", "cheap"};
}

Method parse_method(const std::string& name)
{
    for (Method m : {Method::naive, Method::standard, Method::orthogonal, Method::jackknife, Method::cheap})
        if (name == method_name(m)) return m;
    std::ostringstream msg;
    msg << "unknown method '" << name << "'; registered:";
    for (const auto& n : method_names()) msg << ' ' << n;
    throw std::invalid_argument(msg.str());
}

ReplicateError::ReplicateError(Eigen::Index replicate, const std::string& what)
    : std::runtime_error("replicate " + std::to_string(replicate) + ": " + what), replicate_(replicate)
{
}

PluginEstimate prepare(const FunctionalSpec& spec, const Dataset& data, bool with_influence)
{
    PluginEstimate plugin;
    const Weights base = uniform_weights(data);
    plugin.point = eval_functional(spec, data, base);
    plugin.summary.nonorthogonal_variance = Eigen::VectorXd::Zero(spec.output_dim);
    if (!with_influence) return plugin;

    for (std::size_t i = 0; i < data.num_blocks(); ++i) {
        Eigen::MatrixXd table = influence_table(spec, data, i, base);
        const double n = static_cast<double>(table.rows());
        plugin.summary.nonorthogonal_variance += table.colwise().squaredNorm().transpose() / (n * n);
        plugin.influence.push_back(std::move(table));
    }
    return plugin;
}

std::vector<EmpiricalDistribution> resample_all(const Dataset& data, const SeedPolicy& seeds, std::uint64_t r,
                                                std::uint64_t b)
{
    std::vector<EmpiricalDistribution> out;
    out.reserve(data.num_blocks());
    for (std::size_t i = 0; i < data.num_blocks(); ++i) {
        const auto original = EmpiricalDistribution::original(i, static_cast<std::size_t>(data.size(i)));
        out.push_back(resample(original, seeds.derive(r, b, i)));
    }
    return out;
}

ReplicateTrace run_replicates(const FunctionalSpec& spec, const Dataset& data, const PluginEstimate& plugin,
                              Eigen::Index B, const SeedPolicy& seeds, const ReplicateOptions& opts)
{
    if (B < 1) throw std::invalid_argument("run_replicates: B must be at least 1");
    const Eigen::Index p = spec.output_dim;
    const std::size_t m = data.num_blocks();

    ReplicateTrace trace;
    trace.phi.resize(B, p);
    trace.linear = Eigen::MatrixXd::Zero(B, p);
    trace.seeds.assign(static_cast<std::size_t>(B), std::vector<std::uint64_t>(m));
    if (opts.keep_resamples) trace.resamples.resize(static_cast<std::size_t>(B));

    parallel_for(static_cast<std::size_t>(B), opts.exec, [&](std::size_t b) {
        const auto row = static_cast<Eigen::Index>(b);
        try {
            auto dists = resample_all(data, seeds, opts.repetition, b);
            const Weights w = to_weights(dists);
            trace.phi.row(row) = eval_functional(spec, data, w).transpose();
            if (plugin.has_influence()) {
                Eigen::RowVectorXd lin = Eigen::RowVectorXd::Zero(p);
                for (std::size_t i = 0; i < m; ++i) lin += w[i].transpose() * plugin.influence[i];
                trace.linear.row(row) = lin;
            }
            for (std::size_t i = 0; i < m; ++i) trace.seeds[b][i] = seeds.derive(opts.repetition, b, i);
            if (opts.keep_resamples) trace.resamples[b] = std::move(dists);
        } catch (const ReplicateError&) {
            throw;
        } catch (const std::exception& e) {
            throw ReplicateError(row, e.what());
        }
    });
    return trace;
}

namespace {

void require_replicates(const ReplicateTrace& trace, Eigen::Index min_b)
{
    if (trace.replicates() < min_b) throw std::invalid_argument("insufficient replicates");
}

}  // namespace

Eigen::VectorXd ob_debias(const ReplicateTrace& trace, const Eigen::VectorXd& point)
{
    require_replicates(trace, 1);
    return 2.0 * point - (trace.phi - trace.linear).colwise().mean().transpose();
}

Eigen::VectorXd sb_debias(const ReplicateTrace& trace, const Eigen::VectorXd& point)
{
    require_replicates(trace, 1);
    return 2.0 * point - trace.phi.colwise().mean().transpose();
}

Eigen::VectorXd ob_variance(const ReplicateTrace& trace, const InfluenceSummary& summary)
{
    require_replicates(trace, 2);
    const double B = static_cast<double>(trace.replicates());
    const Eigen::MatrixXd orth = trace.phi - trace.linear;
    const Eigen::MatrixXd orth_c = orth.rowwise() - orth.colwise().mean();
    const Eigen::MatrixXd lin_c = trace.linear.rowwise() - trace.linear.colwise().mean();
    const Eigen::VectorXd orth_var = orth_c.colwise().squaredNorm().transpose() / B;
    const Eigen::VectorXd cross = orth_c.cwiseProduct(lin_c).colwise().sum().transpose() * (2.0 / B);
    return summary.nonorthogonal_variance + orth_var + cross;
}

Eigen::VectorXd ob_variance_improved(const ReplicateTrace& trace, const InfluenceSummary& summary)
{
    Eigen::VectorXd s2 = ob_variance(trace, summary);
    for (Eigen::Index k = 0; k < s2.size(); ++k)
        if (s2[k] < 0.0) s2[k] = summary.nonorthogonal_variance[k];
    return s2;
}

Eigen::VectorXd sb_variance(const ReplicateTrace& trace)
{
    require_replicates(trace, 2);
    const Eigen::MatrixXd centred = trace.phi.rowwise() - trace.phi.colwise().mean();
    return centred.colwise().squaredNorm().transpose() / static_cast<double>(trace.replicates());
}

Eigen::VectorXd ij_variance(const InfluenceSummary& summary)
{
    return summary.nonorthogonal_variance;
}

Eigen::VectorXd cheap_spread(const ReplicateTrace& trace, const Eigen::VectorXd& point)
{
    require_replicates(trace, 1);
    const Eigen::MatrixXd centred = trace.phi.rowwise() - point.transpose();
    return centred.colwise().squaredNorm().transpose() / static_cast<double>(trace.replicates());
}

EstimateReport make_report(Method method, const PluginEstimate& plugin, const ReplicateTrace* trace)
{
    EstimateReport report;
    report.method = method;
    report.point = plugin.point;
    const bool needs_trace = method == Method::standard || method == Method::orthogonal || method == Method::cheap;
    if (needs_trace && trace == nullptr) throw std::invalid_argument(std::string(method_name(method)) + " needs replicates");
    const bool needs_influence = method == Method::orthogonal || method == Method::jackknife;
    if (needs_influence && !plugin.has_influence())
        throw std::invalid_argument(std::string(method_name(method)) + " needs an influence function");

    if (trace != nullptr) {
        report.B = trace->replicates();
        report.diagnostics.mean_phi = trace->phi.colwise().mean().transpose();
        report.diagnostics.mean_linear = trace->linear.colwise().mean().transpose();
        report.diagnostics.mean_orthogonal = report.diagnostics.mean_phi - report.diagnostics.mean_linear;
    }

    switch (method) {
    case Method::naive:
        break;
    case Method::standard:
        report.point = sb_debias(*trace, plugin.point);
        if (trace->replicates() >= 2) report.s2 = sb_variance(*trace);
        break;
    case Method::orthogonal: {
        report.point = ob_debias(*trace, plugin.point);
        if (trace->replicates() >= 2) {
            const Eigen::VectorXd raw = ob_variance(*trace, plugin.summary);
            report.diagnostics.raw_s2 = raw;
            report.s2 = ob_variance_improved(*trace, plugin.summary);
            for (Eigen::Index k = 0; k < raw.size(); ++k) report.diagnostics.jackknife_fallback.push_back(raw[k] < 0.0);
        }
        break;
    }
    case Method::jackknife:
        report.s2 = ij_variance(plugin.summary);
        break;
    case Method::cheap:
        report.s2 = cheap_spread(*trace, plugin.point);
        break;
    }
    return report;
}

}  // namespace orthoboot
