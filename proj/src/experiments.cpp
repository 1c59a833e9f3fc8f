#include "orthoboot/experiments.hpp"

#include "params.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace orthoboot {

// Samplers --------------------------------------------------------------------

Eigen::MatrixXd sample_folded_normal(Eigen::Index n, Rng& rng)
{
    Eigen::MatrixXd x(n, 1);
    for (Eigen::Index j = 0; j < n; ++j) x(j, 0) = std::abs(rng.normal());
    return x;
}

Eigen::MatrixXd sample_double_exponential(Eigen::Index n, Rng& rng)
{
    Eigen::MatrixXd x(n, 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sign = (rng.next_u64() >> 63) != 0 ? 1.0 : -1.0;
        x(j, 0) = sign * rng.exponential();
    }
    return x;
}

Eigen::MatrixXd sample_bivariate_lognormal(Eigen::Index n, double rho, Rng& rng)
{
    const double tail = std::sqrt(1.0 - rho * rho);
    Eigen::MatrixXd x(n, 2);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double z1 = rng.normal();
        const double z2 = rho * z1 + tail * rng.normal();
        x(j, 0) = std::exp(z1);
        x(j, 1) = std::exp(z2);
    }
    return x;
}

Eigen::MatrixXd sample_gaussian_vector(Eigen::Index n, const Eigen::VectorXd& mean, Rng& rng)
{
    Eigen::MatrixXd x(n, mean.size());
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < mean.size(); ++k) x(j, k) = mean[k] + rng.normal();
    return x;
}

Eigen::VectorXd sample_dirichlet_uniform(Eigen::Index d, Rng& rng)
{
    Eigen::VectorXd p(d);
    for (Eigen::Index k = 0; k < d; ++k) p[k] = rng.exponential();
    return p / p.sum();
}

Eigen::MatrixXd sample_categorical(Eigen::Index n, const Eigen::VectorXd& p, Rng& rng)
{
    std::vector<double> cdf(static_cast<std::size_t>(p.size()));
    double acc = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        acc += p[k];
        cdf[static_cast<std::size_t>(k)] = acc;
    }
    Eigen::MatrixXd x(n, 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double u = rng.uniform01() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        x(j, 0) = static_cast<double>(it - cdf.begin());
    }
    return x;
}

Eigen::VectorXd sample_unit_sphere(Eigen::Index d, Rng& rng)
{
    Eigen::VectorXd v(d);
    for (Eigen::Index k = 0; k < d; ++k) v[k] = rng.normal();
    return v / v.norm();
}

double lognormal_correlation(double rho)
{
    return std::expm1(rho) / std::expm1(1.0);
}

double entropy_of(const Eigen::VectorXd& p)
{
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
    return h;
}

// Scenarios -------------------------------------------------------------------

std::vector<std::string> generator_names()
{
    return {"bivariate_lognormal", "dirichlet_categorical", "double_exponential", "folded_normal",
            "gaussian_vector", "linreg", "qp_rhs"};
}

namespace {

using detail::ParamReader;

Eigen::VectorXd scalar(double v)
{
    return Eigen::VectorXd::Constant(1, v);
}

void require_functional(const std::string& generator, const std::string& functional,
                        std::initializer_list<const char*> allowed)
{
    if (functional.empty()) return;
    for (const char* a : allowed)
        if (functional == a) return;
    std::string msg = "generator '" + generator + "' has no ground truth for functional '" + functional + "'; supported:";
    for (const char* a : allowed) msg += std::string(" ") + a;
    throw std::invalid_argument(msg);
}

// Fills `key` in the functional's parameters from the generator when absent,
// and rejects disagreeing values.
template <typename T>
void inherit(nlohmann::json& fparams, const std::string& key, T value, const std::string& functional)
{
    if (!fparams.is_object()) fparams = nlohmann::json::object();
    if (!fparams.contains(key)) {
        fparams[key] = value;
        return;
    }
    if (fparams[key] != nlohmann::json(value))
        throw std::invalid_argument(functional + ": parameter '" + key + "' disagrees with the generator");
}

}  // namespace

Scenario make_scenario(const std::string& generator, const nlohmann::json& generator_params,
                       const std::string& functional, const nlohmann::json& functional_params)
{
    Scenario sc;
    sc.generator = generator;
    sc.functional = functional;
    nlohmann::json fparams = functional_params.is_null() ? nlohmann::json::object() : functional_params;
    ParamReader gp(generator, generator_params);

    if (generator == "folded_normal") {
        gp.finish();
        require_functional(generator, functional, {"variance"});
        const double truth = 1.0 - 2.0 / std::numbers::pi;
        sc.draw = [truth](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return Draw{Dataset({sample_folded_normal(n, rng)}, {"x"}), scalar(truth)};
        };
    } else if (generator == "double_exponential") {
        gp.finish();
        require_functional(generator, functional, {"variance"});
        sc.draw = [](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return Draw{Dataset({sample_double_exponential(n, rng)}, {"x"}), scalar(2.0)};
        };
    } else if (generator == "bivariate_lognormal") {
        const double rho = gp.get<double>("rho", 0.5);
        gp.finish();
        if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("bivariate_lognormal: rho must lie in (-1, 1)");
        require_functional(generator, functional, {"correlation"});
        const double truth = lognormal_correlation(rho);
        sc.draw = [rho, truth](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return Draw{Dataset({sample_bivariate_lognormal(n, rho, rng)}, {"xy"}), scalar(truth)};
        };
    } else if (generator == "gaussian_vector") {
        const auto d = gp.get<Eigen::Index>("d", 25);
        const double m = gp.get<double>("mean", 0.2);
        gp.finish();
        if (d < 1) throw std::invalid_argument("gaussian_vector: d must be positive");
        require_functional(generator, functional, {"mean_norm_sq", "mean_norm_4"});
        const double sq = static_cast<double>(d) * m * m;
        const double truth = functional == "mean_norm_4" ? sq * sq : sq;
        const Eigen::VectorXd mean = Eigen::VectorXd::Constant(d, m);
        sc.draw = [mean, truth](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return Draw{Dataset({sample_gaussian_vector(n, mean, rng)}, {"x"}), scalar(truth)};
        };
    } else if (generator == "dirichlet_categorical") {
        const auto d = gp.get<Eigen::Index>("d", 100);
        gp.finish();
        if (d < 1) throw std::invalid_argument("dirichlet_categorical: d must be positive");
        require_functional(generator, functional, {"entropy"});
        if (!functional.empty()) inherit(fparams, "categories", d, functional);
        sc.draw = [d](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            const Eigen::VectorXd p = sample_dirichlet_uniform(d, rng);
            return Draw{Dataset({sample_categorical(n, p, rng)}, {"category"}), scalar(entropy_of(p))};
        };
    } else if (generator == "qp_rhs") {
        const auto d = gp.get<Eigen::Index>("d", 100);
        const auto p = gp.get<Eigen::Index>("p", 200);
        const auto problem_seed = gp.get<std::uint64_t>("problem_seed", 1);
        gp.finish();
        require_functional(generator, functional, {"qp_argmin"});
        if (!functional.empty()) {
            inherit(fparams, "d", d, functional);
            inherit(fparams, "p", p, functional);
            inherit(fparams, "problem_seed", problem_seed, functional);
        }
        // b* is part of the problem definition, fixed across repetitions.
        Rng problem_rng(SeedPolicy{problem_seed}.substream(kDataStream).derive(0, 0, 0));
        const Eigen::VectorXd b_star = sample_unit_sphere(d, problem_rng);
        QpInstance inst = random_qp_instance(p, d, problem_seed);
        const Eigen::VectorXd truth = KktQp(inst.B, inst.A).solve(b_star);
        sc.draw = [b_star, truth](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return Draw{Dataset({sample_gaussian_vector(n, b_star, rng)}, {"b"}), truth};
        };
    } else if (generator == "linreg") {
        const auto d = gp.get<Eigen::Index>("d", 50);
        const double beta = gp.get<double>("beta", 1.0);
        const double noise = gp.get<double>("noise_sd", 10.0);
        const std::string design = gp.get<std::string>("design", "lognormal");
        gp.finish();
        if (d < 1) throw std::invalid_argument("linreg: d must be positive");
        if (design != "lognormal" && design != "normal")
            throw std::invalid_argument("linreg: design must be 'lognormal' or 'normal'");
        require_functional(generator, functional, {"linreg_coeff"});
        double truth = beta;
        if (!functional.empty()) {
            inherit(fparams, "features", d, functional);
            const bool intercept = fparams.value("intercept", false);
            const auto k = fparams.value("k", Eigen::Index{0});
            if (intercept && k == 0) truth = 0.0;
        }
        const bool lognormal = design == "lognormal";
        sc.draw = [d, beta, noise, lognormal, truth](Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            Eigen::MatrixXd block(n, d + 1);
            for (Eigen::Index j = 0; j < n; ++j) {
                double y = 0.0;
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double z = rng.normal();
                    block(j, k) = lognormal ? std::exp(z) : z;
                    y += beta * block(j, k);
                }
                block(j, d) = y + noise * rng.normal();
            }
            return Draw{Dataset({std::move(block)}, {"xy"}), scalar(truth)};
        };
    } else {
        std::string msg = "unknown generator '" + generator + "'; registered:";
        for (const auto& g : generator_names()) msg += " " + g;
        throw std::invalid_argument(msg);
    }

    if (!functional.empty()) {
        if (fparams.is_object() && fparams.contains("component")) {
            sc.component = fparams["component"].get<Eigen::Index>();
            fparams.erase("component");
        }
        sc.spec = FunctionalRegistry::builtin().make(functional, fparams);
        if (sc.component < 0 || sc.component >= sc.spec.output_dim)
            throw std::invalid_argument(functional + ": component out of range");
    }
    return sc;
}

// Helpers ---------------------------------------------------------------------

namespace {

std::uint64_t data_seed(std::uint64_t base, std::uint64_t r)
{
    return SeedPolicy{base}.substream(kDataStream).derive(r, 0, 0);
}

SeedPolicy boot_policy(std::uint64_t base, Eigen::Index B, Eigen::Index repeat)
{
    return SeedPolicy{base}
        .substream(kBootStream)
        .substream(static_cast<std::uint64_t>(B))
        .substream(static_cast<std::uint64_t>(repeat));
}

// Linear-interpolated sample quantile (type 7).
double quantile(std::vector<double> v, double q)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool needs_influence(const std::vector<Method>& methods)
{
    return std::any_of(methods.begin(), methods.end(),
                       [](Method m) { return m == Method::orthogonal || m == Method::jackknife; });
}

bool needs_trace(Method m)
{
    return m == Method::standard || m == Method::orthogonal || m == Method::cheap;
}

// Runs fn(r) for r in [0, count) in fixed-size chunks and hands the chunk's
// results to `merge` in index order.
template <typename Result, typename Fn, typename Merge>
void ordered_chunks(std::size_t count, Execution exec, Fn&& fn, Merge&& merge)
{
    const std::size_t chunk = std::max<std::size_t>(64, 4 * exec.resolved());
    std::vector<Result> results;
    for (std::size_t start = 0; start < count; start += chunk) {
        const std::size_t len = std::min(chunk, count - start);
        results.assign(len, Result{});
        parallel_for(len, exec, [&](std::size_t k) { results[k] = fn(start + k); });
        for (std::size_t k = 0; k < len; ++k) merge(start + k, results[k]);
    }
}

}  // namespace

// Coverage ----------------------------------------------------------------------

const CoverageSummary& CoverageReport::find(Method m, Eigen::Index B) const
{
    for (const auto& s : summary)
        if (s.method == m && (m == Method::jackknife || s.B == B)) return s;
    throw std::out_of_range(std::string("coverage report has no row for ") + method_name(m) + " B=" + std::to_string(B));
}

CoverageReport run_coverage(const Scenario& scenario, const CoverageSettings& s)
{
    if (s.R < 1) throw std::invalid_argument("coverage: R must be positive");
    for (Method m : s.methods)
        if (m == Method::naive) throw std::invalid_argument("coverage: the naive estimator has no interval");
    const bool with_influence = needs_influence(s.methods);
    const Eigen::Index k = scenario.component;

    // Column layout per repetition: (method, B) pairs in settings order.
    struct Slot {
        Method method;
        Eigen::Index B;
    };
    std::vector<Slot> slots;
    for (Method m : s.methods) {
        if (m == Method::jackknife) {
            slots.push_back({m, 0});
            continue;
        }
        for (Eigen::Index B : s.B) slots.push_back({m, B});
    }

    using Rep = std::vector<CoverageRecord>;
    CoverageReport report;
    report.n = s.n;
    report.records.reserve(static_cast<std::size_t>(s.R) * slots.size());

    ordered_chunks<Rep>(
        static_cast<std::size_t>(s.R), s.exec,
        [&](std::size_t r) {
            const Draw draw = scenario.draw(s.n, data_seed(s.seed, r));
            const double truth = draw.truth[k] + s.truth_shift;
            const PluginEstimate plugin = prepare(scenario.spec, draw.data, with_influence);
            std::map<Eigen::Index, ReplicateTrace> traces;
            Rep out;
            for (const Slot& slot : slots) {
                const ReplicateTrace* trace = nullptr;
                if (needs_trace(slot.method)) {
                    auto it = traces.find(slot.B);
                    if (it == traces.end()) {
                        ReplicateOptions opts;
                        opts.repetition = r;
                        it = traces
                                 .emplace(slot.B, run_replicates(scenario.spec, draw.data, plugin, slot.B,
                                                                 boot_policy(s.seed, slot.B, 0), opts))
                                 .first;
                    }
                    trace = &it->second;
                }
                const Interval iv = intervals_from_trace(slot.method, plugin, trace, s.alpha)[static_cast<std::size_t>(k)];
                out.push_back({slot.method, slot.B, static_cast<Eigen::Index>(r), plugin.point[k], iv.lower, iv.upper,
                               truth, iv.contains(truth)});
            }
            return out;
        },
        [&](std::size_t, Rep& rep) {
            for (auto& rec : rep) report.records.push_back(rec);
        });

    for (const Slot& slot : slots) {
        double covered = 0, sum = 0, sum_sq = 0;
        Eigen::Index count = 0;
        for (const auto& rec : report.records) {
            if (rec.method != slot.method || rec.B != slot.B) continue;
            const double w = rec.upper - rec.lower;
            covered += rec.covered ? 1.0 : 0.0;
            sum += w;
            sum_sq += w * w;
            ++count;
        }
        const double nrec = static_cast<double>(count);
        const double mean = sum / nrec;
        const double var = count > 1 ? std::max(0.0, (sum_sq - nrec * mean * mean) / (nrec - 1.0)) : 0.0;
        report.summary.push_back({slot.method, slot.B, count, covered / nrec, mean, std::sqrt(var)});
    }
    return report;
}

// Debiasing ---------------------------------------------------------------------

const BiasSummary& BiasReport::find(Method m, Eigen::Index B) const
{
    for (const auto& s : summary)
        if (s.method == m && (m == Method::naive || s.B == B)) return s;
    throw std::out_of_range(std::string("bias report has no row for ") + method_name(m) + " B=" + std::to_string(B));
}

BiasReport run_debias(const Scenario& scenario, const DebiasSettings& s)
{
    if (s.R < 1 || s.repeats < 1) throw std::invalid_argument("debias: R and repeats must be positive");
    for (Method m : s.methods)
        if (m != Method::naive && m != Method::standard && m != Method::orthogonal)
            throw std::invalid_argument(std::string("debias: method '") + method_name(m) + "' does not debias");
    for (Eigen::Index B : s.B)
        if (B < 1) throw std::invalid_argument("debias: B must be at least 1");
    const bool with_influence = needs_influence(s.methods);
    const Eigen::Index p = scenario.spec.output_dim;

    struct Slot {
        Method method;
        Eigen::Index B;
        Eigen::Index repeat;
    };
    std::vector<Slot> slots;
    for (Method m : s.methods) {
        if (m == Method::naive) {
            slots.push_back({m, 0, 0});
            continue;
        }
        for (Eigen::Index B : s.B)
            for (Eigen::Index k = 0; k < s.repeats; ++k) slots.push_back({m, B, k});
    }

    struct Acc {
        Eigen::VectorXd sum;
        double sum_sq = 0;
        double sum_abs = 0;
    };
    std::vector<Acc> acc(slots.size(), Acc{Eigen::VectorXd::Zero(p)});
    using Errors = std::vector<Eigen::VectorXd>;

    ordered_chunks<Errors>(
        static_cast<std::size_t>(s.R), s.exec,
        [&](std::size_t r) {
            const Draw draw = scenario.draw(s.n, data_seed(s.seed, r));
            const PluginEstimate plugin = prepare(scenario.spec, draw.data, with_influence);
            Errors out;
            out.reserve(slots.size());
            for (const Slot& slot : slots) {
                if (slot.method == Method::naive) {
                    out.push_back(plugin.point - draw.truth);
                    continue;
                }
                ReplicateOptions opts;
                opts.repetition = r;
                const ReplicateTrace trace = run_replicates(scenario.spec, draw.data, plugin, slot.B,
                                                            boot_policy(s.seed, slot.B, slot.repeat), opts);
                const Eigen::VectorXd est = slot.method == Method::orthogonal ? ob_debias(trace, plugin.point)
                                                                              : sb_debias(trace, plugin.point);
                out.push_back(est - draw.truth);
            }
            return out;
        },
        [&](std::size_t, Errors& errs) {
            for (std::size_t j = 0; j < slots.size(); ++j) {
                acc[j].sum += errs[j];
                acc[j].sum_sq += errs[j].squaredNorm();
                acc[j].sum_abs += errs[j].norm();
            }
        });

    BiasReport report;
    report.n = s.n;
    const double R = static_cast<double>(s.R);
    std::size_t j = 0;
    while (j < slots.size()) {
        const Method m = slots[j].method;
        const Eigen::Index B = slots[j].B;
        std::vector<double> bias, rmse, rmse_total, abs_total;
        double pooled_sq = 0;
        for (; j < slots.size() && slots[j].method == m && slots[j].B == B; ++j) {
            const Eigen::VectorXd mean_err = acc[j].sum / R;
            bias.push_back(p == 1 ? mean_err[0] : mean_err.norm());
            rmse.push_back(std::sqrt(acc[j].sum_sq / R));
            rmse_total.push_back(std::sqrt(acc[j].sum_sq));
            abs_total.push_back(acc[j].sum_abs);
            pooled_sq += acc[j].sum_sq;
        }
        const auto repeats = static_cast<Eigen::Index>(bias.size());
        double bias_mean = 0;
        for (double b : bias) bias_mean += b;
        bias_mean /= static_cast<double>(repeats);
        report.summary.push_back({m, B, s.R, repeats, bias_mean, quantile(bias, 0.05), quantile(bias, 0.5),
                                  quantile(bias, 0.95), std::sqrt(pooled_sq / (R * static_cast<double>(repeats))),
                                  quantile(rmse, 0.05), quantile(rmse, 0.5), quantile(rmse, 0.95),
                                  quantile(rmse_total, 0.5), quantile(abs_total, 0.5)});
    }
    return report;
}

// Scaling -----------------------------------------------------------------------

const ScalingFit& ScalingReport::fit(const std::string& target, Method m) const
{
    for (const auto& f : fits)
        if (f.target == target && f.method == m) return f;
    throw std::out_of_range("scaling report has no fit for " + target + "/" + method_name(m));
}

ScalingFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_log_log: need at least two points");
    const auto k = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= k;
    my /= k;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    ScalingFit fit{};
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = std::log(y[i]) - (fit.intercept + fit.slope * std::log(x[i]));
        ssr += e * e;
    }
    fit.slope_se = x.size() > 2 ? std::sqrt(ssr / (k - 2.0) / sxx) : 0.0;
    return fit;
}

ScalingReport run_scaling(const Scenario& scenario, const ScalingSettings& s)
{
    if (s.n.size() < 2) throw std::invalid_argument("scaling: need at least two sample sizes");
    if (s.B < 2) throw std::invalid_argument("scaling: B must be at least 2 for the variance estimators");
    if (s.seeds < 2) throw std::invalid_argument("scaling: need at least two seeds");
    const Eigen::Index k = scenario.component;

    // Fixed data per n.
    std::vector<Draw> draws;
    std::vector<PluginEstimate> plugins;
    for (std::size_t i = 0; i < s.n.size(); ++i) {
        draws.push_back(scenario.draw(s.n[i], data_seed(s.seed, i)));
        plugins.push_back(prepare(scenario.spec, draws.back().data, true));
    }

    constexpr int kEstimators = 4;  // ob debias, sb debias, ob variance, sb variance
    const std::size_t S = static_cast<std::size_t>(s.seeds);
    std::vector<std::array<double, kEstimators>> values(s.n.size() * S);
    parallel_for(values.size(), s.exec, [&](std::size_t idx) {
        const std::size_t i = idx / S;
        const std::size_t seed = idx % S;
        ReplicateOptions opts;
        opts.repetition = seed;
        const ReplicateTrace trace = run_replicates(scenario.spec, draws[i].data, plugins[i], s.B,
                                                    boot_policy(s.seed, s.B, static_cast<Eigen::Index>(i)), opts);
        values[idx] = {ob_debias(trace, plugins[i].point)[k], sb_debias(trace, plugins[i].point)[k],
                       ob_variance(trace, plugins[i].summary)[k], sb_variance(trace)[k]};
    });

    ScalingReport report;
    report.B = s.B;
    report.seeds = s.seeds;
    const std::array<std::pair<const char*, Method>, kEstimators> labels{{{"debias", Method::orthogonal},
                                                                          {"debias", Method::standard},
                                                                          {"variance", Method::orthogonal},
                                                                          {"variance", Method::standard}}};
    for (int e = 0; e < kEstimators; ++e) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < s.n.size(); ++i) {
            double mean = 0;
            for (std::size_t seed = 0; seed < S; ++seed) mean += values[i * S + seed][e];
            mean /= static_cast<double>(S);
            double var = 0;
            for (std::size_t seed = 0; seed < S; ++seed) {
                const double d = values[i * S + seed][e] - mean;
                var += d * d;
            }
            var /= static_cast<double>(S - 1);
            report.points.push_back({labels[e].first, labels[e].second, s.n[i], var, mean});
            xs.push_back(static_cast<double>(s.n[i]));
            ys.push_back(var);
        }
        ScalingFit fit{};
        const bool positive = std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; });
        if (positive) {
            fit = fit_log_log(xs, ys);
        } else {
            fit.slope = fit.slope_se = fit.intercept = std::numeric_limits<double>::quiet_NaN();
        }
        fit.target = labels[e].first;
        fit.method = labels[e].second;
        report.fits.push_back(fit);
    }
    return report;
}

// Prediction intervals ------------------------------------------------------------

PiReport run_pi(const Scenario& scenario, const PiSettings& s)
{
    if (s.n_test < 1) throw std::invalid_argument("pi: n_test must be positive");
    const Draw train = scenario.draw(s.n, data_seed(s.seed, 0));
    const Draw test = scenario.draw(s.n_test, SeedPolicy{s.seed}.substream(kTestStream).derive(0, 0, 0));
    if (train.data.num_blocks() != 1) throw std::invalid_argument("pi: generator must produce one [X | y] block");
    const Eigen::Index d = train.data.dim(0) - 1;
    if (d < 1) throw std::invalid_argument("pi: generator must produce one [X | y] block");
    const LinearModel model(d, s.model);
    const Eigen::MatrixXd& test_block = test.data.block(0);
    const SeedPolicy boot = boot_policy(s.seed, s.B, 0);

    PiReport report;
    report.n = s.n;
    report.B = s.B;
    report.records.resize(static_cast<std::size_t>(s.n_test));
    parallel_for(report.records.size(), s.exec, [&](std::size_t t) {
        const auto row = static_cast<Eigen::Index>(t);
        const Eigen::RowVectorXd x = test_block.row(row).head(d);
        ReplicateOptions opts;
        opts.repetition = t;
        const PredictionInterval pi = ob_pi(model, train.data, x, s.B, s.alpha, boot, opts);
        const double y = test_block(row, d);
        report.records[t] = {row,
                             pi.interval.center,
                             pi.interval.lower,
                             pi.interval.upper,
                             y,
                             pi.s2,
                             pi.sigma2,
                             pi.context.oob_fraction(s.n),
                             pi.interval.contains(y)};
    });

    double covered = 0, width = 0, oob = 0;
    for (const auto& rec : report.records) {
        covered += rec.covered ? 1.0 : 0.0;
        width += rec.upper - rec.lower;
        oob += rec.oob_fraction;
    }
    const double nt = static_cast<double>(s.n_test);
    report.coverage = covered / nt;
    report.width_mean = width / nt;
    report.oob_fraction = oob / nt;
    return report;
}

// One-shot estimation -------------------------------------------------------------

std::vector<EstimateRow> run_estimate(const FunctionalSpec& spec, const Dataset& data, const EstimateSettings& s)
{
    const bool with_influence = needs_influence(s.methods);
    const PluginEstimate plugin = prepare(spec, data, with_influence);
    std::optional<ReplicateTrace> trace;
    if (std::any_of(s.methods.begin(), s.methods.end(), needs_trace)) {
        ReplicateOptions opts;
        opts.exec = s.exec;
        trace = run_replicates(spec, data, plugin, s.B, SeedPolicy{s.seed}.substream(kBootStream), opts);
    }

    std::vector<EstimateRow> rows;
    for (Method m : s.methods) {
        const EstimateReport rep = make_report(m, plugin, needs_trace(m) ? &*trace : nullptr);
        for (Eigen::Index k = 0; k < spec.output_dim; ++k) {
            EstimateRow row{m, needs_trace(m) ? s.B : 0, k, plugin.point[k], rep.point[k], {}, {}, {}, false};
            if (rep.s2) {
                row.s2 = (*rep.s2)[k];
                const Interval iv = make_interval(m, plugin.point[k], *row.s2, s.alpha, rep.B);
                row.lower = iv.lower;
                row.upper = iv.upper;
            }
            if (!rep.diagnostics.jackknife_fallback.empty())
                row.jackknife_fallback = rep.diagnostics.jackknife_fallback[static_cast<std::size_t>(k)];
            rows.push_back(row);
        }
    }
    return rows;
}

// Serialization ---------------------------------------------------------------

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string opt(const std::optional<double>& v)
{
    return v ? format_double(*v) : std::string();
}

nlohmann::json num(double v)
{
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string coverage_csv(const CoverageReport& report)
{
    std::ostringstream out;
    out << "method,B,n,repetition,estimate,lower,upper,width,truth,covered\n";
    for (const auto& r : report.records)
        out << method_name(r.method) << ',' << r.B << ',' << report.n << ',' << r.repetition << ','
            << format_double(r.estimate) << ',' << format_double(r.lower) << ',' << format_double(r.upper) << ','
            << format_double(r.upper - r.lower) << ',' << format_double(r.truth) << ',' << (r.covered ? 1 : 0)
            << '\n';
    return out.str();
}

std::string coverage_summary_csv(const CoverageReport& report)
{
    std::ostringstream out;
    out << "method,B,n,R,coverage,width_mean,width_sd\n";
    for (const auto& s : report.summary)
        out << method_name(s.method) << ',' << s.B << ',' << report.n << ',' << s.R << ',' << format_double(s.coverage)
            << ',' << format_double(s.width_mean) << ',' << format_double(s.width_sd) << '\n';
    return out.str();
}

nlohmann::json coverage_json(const CoverageReport& report)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : report.summary)
        rows.push_back({{"method", method_name(s.method)},
                        {"B", s.B},
                        {"R", s.R},
                        {"coverage", num(s.coverage)},
                        {"width_mean", num(s.width_mean)},
                        {"width_sd", num(s.width_sd)}});
    return {{"kind", "coverage"},
            {"n", report.n},
            {"summary", rows},
            {"notes", "width_sd is the standard deviation of the interval width across data repetitions"}};
}

std::string bias_csv(const BiasReport& report)
{
    std::ostringstream out;
    out << "method,B,n,R,repeats,bias_mean,bias_p05,bias_p50,bias_p95,rmse,rmse_p05,rmse_p50,rmse_p95,"
           "rmse_total_p50,abs_total_p50\n";
    for (const auto& s : report.summary)
        out << method_name(s.method) << ',' << s.B << ',' << report.n << ',' << s.R << ',' << s.repeats << ','
            << format_double(s.bias_mean) << ',' << format_double(s.bias_p05) << ',' << format_double(s.bias_p50)
            << ',' << format_double(s.bias_p95) << ',' << format_double(s.rmse) << ',' << format_double(s.rmse_p05)
            << ',' << format_double(s.rmse_p50) << ',' << format_double(s.rmse_p95) << ','
            << format_double(s.rmse_total_p50) << ',' << format_double(s.abs_total_p50) << '\n';
    return out.str();
}

nlohmann::json bias_json(const BiasReport& report)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : report.summary)
        rows.push_back({{"method", method_name(s.method)},
                        {"B", s.B},
                        {"R", s.R},
                        {"repeats", s.repeats},
                        {"bias_mean", num(s.bias_mean)},
                        {"bias_p05", num(s.bias_p05)},
                        {"bias_p50", num(s.bias_p50)},
                        {"bias_p95", num(s.bias_p95)},
                        {"rmse", num(s.rmse)},
                        {"rmse_total_p50", num(s.rmse_total_p50)},
                        {"abs_total_p50", num(s.abs_total_p50)}});
    return {{"kind", "debias"},
            {"n", report.n},
            {"summary", rows},
            {"notes", "percentiles are across independent bootstrap repeats; rmse_total and abs_total are "
                      "sqrt(sum e^2) and sum |e| over repetitions"}};
}

std::string scaling_csv(const ScalingReport& report)
{
    std::ostringstream out;
    out << "target,method,n,B,seeds,sim_variance,mean\n";
    for (const auto& p : report.points)
        out << p.target << ',' << method_name(p.method) << ',' << p.n << ',' << report.B << ',' << report.seeds << ','
            << format_double(p.sim_variance) << ',' << format_double(p.mean) << '\n';
    return out.str();
}

std::string scaling_fit_csv(const ScalingReport& report)
{
    std::ostringstream out;
    out << "target,method,slope,slope_se,intercept\n";
    for (const auto& f : report.fits)
        out << f.target << ',' << method_name(f.method) << ',' << format_double(f.slope) << ','
            << format_double(f.slope_se) << ',' << format_double(f.intercept) << '\n';
    return out.str();
}

nlohmann::json scaling_json(const ScalingReport& report)
{
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : report.fits)
        fits.push_back({{"target", f.target},
                        {"method", method_name(f.method)},
                        {"slope", num(f.slope)},
                        {"slope_se", num(f.slope_se)},
                        {"intercept", num(f.intercept)}});
    return {{"kind", "scaling"}, {"B", report.B}, {"seeds", report.seeds}, {"fits", fits}};
}

std::string pi_csv(const PiReport& report)
{
    std::ostringstream out;
    out << "test_index,prediction,lower,upper,width,target,s2,sigma2,oob_fraction,covered\n";
    for (const auto& r : report.records)
        out << r.test_index << ',' << format_double(r.prediction) << ',' << format_double(r.lower) << ','
            << format_double(r.upper) << ',' << format_double(r.upper - r.lower) << ',' << format_double(r.target)
            << ',' << format_double(r.s2) << ',' << format_double(r.sigma2) << ',' << format_double(r.oob_fraction)
            << ',' << (r.covered ? 1 : 0) << '\n';
    return out.str();
}

nlohmann::json pi_json(const PiReport& report)
{
    return {{"kind", "pi"},
            {"n", report.n},
            {"B", report.B},
            {"n_test", report.records.size()},
            {"coverage", num(report.coverage)},
            {"width_mean", num(report.width_mean)},
            {"oob_fraction", num(report.oob_fraction)},
            {"notes", "sigma2 is the mean out-of-bag residual mean square over replicates with a non-empty "
                      "out-of-bag set"}};
}

std::string estimate_csv(const std::vector<EstimateRow>& rows)
{
    std::ostringstream out;
    out << "method,B,component,plugin,estimate,s2,lower,upper,jackknife_fallback\n";
    for (const auto& r : rows)
        out << method_name(r.method) << ',' << r.B << ',' << r.component << ',' << format_double(r.plugin) << ','
            << format_double(r.estimate) << ',' << opt(r.s2) << ',' << opt(r.lower) << ',' << opt(r.upper) << ','
            << (r.jackknife_fallback ? 1 : 0) << '\n';
    return out.str();
}

}  // namespace orthoboot
