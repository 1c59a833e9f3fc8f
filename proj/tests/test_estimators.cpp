#include "orthoboot/estimators.hpp"

#include "reference.hpp"

#include <doctest.h>

using namespace orthoboot;

namespace {

Dataset scalar_data(Eigen::Index n, std::uint64_t seed)
{
    Rng rng(seed);
    Eigen::MatrixXd x(n, 1);
    for (Eigen::Index j = 0; j < n; ++j) x(j, 0) = rng.exponential();
    return Dataset({x});
}

Dataset vector_data(Eigen::Index n, Eigen::Index d, std::uint64_t seed)
{
    Rng rng(seed);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < d; ++k) x(j, k) = 0.2 + rng.normal();
    return Dataset({x});
}

ReplicateTrace random_trace(Eigen::Index B, Eigen::Index p, Rng& rng)
{
    ReplicateTrace t;
    t.phi.resize(B, p);
    t.linear.resize(B, p);
    for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index k = 0; k < p; ++k) {
            t.linear(b, k) = rng.normal();
            t.phi(b, k) = 3.0 + t.linear(b, k) + 0.1 * rng.normal();
        }
    return t;
}

// The orthogonal variance estimator written out with scalar loops.
double ob_variance_oracle(const ReplicateTrace& t, Eigen::Index k, double closed_form)
{
    const auto B = t.replicates();
    double r_bar = 0, i_bar = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
        r_bar += t.phi(b, k) - t.linear(b, k);
        i_bar += t.linear(b, k);
    }
    r_bar /= B;
    i_bar /= B;
    double orth = 0, cross = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
        const double r = t.phi(b, k) - t.linear(b, k) - r_bar;
        orth += r * r;
        cross += r * (t.linear(b, k) - i_bar);
    }
    return closed_form + orth / B + 2.0 * cross / B;
}

}  // namespace

TEST_CASE("linear functional: replicate identity and exact estimators")
{
    const auto spec = make_mean_functional(2);
    const Dataset data = vector_data(30, 2, 1);
    const PluginEstimate plugin = prepare(spec, data);
    const Eigen::MatrixXd& X = data.block(0);
    const Eigen::MatrixXd centred = X.rowwise() - X.colwise().mean();
    const Eigen::VectorXd sigma2_over_n = centred.colwise().squaredNorm().transpose() / (30.0 * 30.0);

    CHECK(ref::rel_err(plugin.summary.nonorthogonal_variance, sigma2_over_n) < 1e-12);
    const ReplicateTrace one = run_replicates(spec, data, plugin, 1, SeedPolicy{4});
    CHECK(ref::rel_err(Eigen::VectorXd((one.phi.row(0) - plugin.point.transpose()).transpose()),
                       Eigen::VectorXd(one.linear.row(0).transpose())) < 1e-12);

    for (std::uint64_t s = 0; s < 20; ++s) {
        const ReplicateTrace t = run_replicates(spec, data, plugin, 2 + static_cast<Eigen::Index>(s % 5), SeedPolicy{s});
        CHECK(ref::rel_err(ob_debias(t, plugin.point), plugin.point) < 1e-12);
        CHECK(ref::rel_err(ob_variance(t, plugin.summary), sigma2_over_n) < 1e-12);
    }
}

TEST_CASE("ij variance of the mean over {1,2,3}")
{
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    const PluginEstimate plugin = prepare(make_mean_functional(1), Dataset({x}));
    CHECK(ij_variance(plugin.summary)[0] == doctest::Approx(2.0 / 9.0));
}

TEST_CASE("traces are reproducible and thread-count independent")
{
    const auto spec = make_mean_norm_sq_functional();
    const Dataset data = vector_data(40, 5, 2);
    const PluginEstimate plugin = prepare(spec, data);
    ReplicateOptions serial, threaded;
    serial.repetition = threaded.repetition = 3;
    threaded.exec.threads = 8;
    const ReplicateTrace a = run_replicates(spec, data, plugin, 50, SeedPolicy{8}, serial);
    const ReplicateTrace b = run_replicates(spec, data, plugin, 50, SeedPolicy{8}, serial);
    const ReplicateTrace c = run_replicates(spec, data, plugin, 50, SeedPolicy{8}, threaded);
    CHECK(a.phi == b.phi);
    CHECK(a.phi == c.phi);
    CHECK(a.linear == c.linear);
    CHECK(a.seeds == c.seeds);
    const ReplicateTrace d = run_replicates(spec, data, plugin, 50, SeedPolicy{9}, serial);
    CHECK(a.phi != d.phi);
}

TEST_CASE("blocks are resampled independently")
{
    const Dataset one = scalar_data(10, 1);
    const Dataset two({one.block(0), scalar_data(7, 2).block(0)});
    const SeedPolicy seeds{5};
    for (std::uint64_t b = 0; b < 10; ++b) {
        const auto d1 = resample_all(one, seeds, 0, b);
        const auto d2 = resample_all(two, seeds, 0, b);
        CHECK(d1[0] == d2[0]);
        CHECK(d2[1] == resample(EmpiricalDistribution::original(1, 7), seeds.derive(0, b, 1)));
    }
}

TEST_CASE("kept resamples reproduce the replicate values")
{
    const auto spec = make_variance_functional();
    const Dataset data = scalar_data(25, 3);
    const PluginEstimate plugin = prepare(spec, data);
    ReplicateOptions opts;
    opts.keep_resamples = true;
    const ReplicateTrace t = run_replicates(spec, data, plugin, 6, SeedPolicy{1}, opts);
    for (Eigen::Index b = 0; b < 6; ++b) {
        const auto& dists = t.resamples[static_cast<std::size_t>(b)];
        CHECK(eval_functional(spec, data, dists)[0] == t.phi(b, 0));
        const Eigen::VectorXd w = dists[0].weights();
        CHECK(w.dot(plugin.influence[0].col(0)) == doctest::Approx(t.linear(b, 0)).epsilon(1e-12));
    }
}

TEST_CASE("degenerate control variate reduces to the standard bootstrap")
{
    Rng rng(4);
    ReplicateTrace t = random_trace(7, 3, rng);
    t.linear.setZero();
    const Eigen::VectorXd point = Eigen::VectorXd::Constant(3, 2.5);
    CHECK(ob_debias(t, point) == sb_debias(t, point));
    const InfluenceSummary zero{Eigen::VectorXd::Zero(3)};
    CHECK(ref::rel_err(ob_variance(t, zero), sb_variance(t)) < 1e-14);
}

TEST_CASE("standard bootstrap special cases")
{
    ReplicateTrace t;
    t.phi.resize(2, 1);
    t.linear = Eigen::MatrixXd::Zero(2, 1);
    t.phi << 1.0, 4.0;
    CHECK(sb_variance(t)[0] == doctest::Approx(2.25));
    t.phi << 5.0, 5.0;
    CHECK(sb_variance(t)[0] == 0.0);
    CHECK(sb_debias(t, Eigen::VectorXd::Constant(1, 5.0))[0] == 5.0);

    ReplicateTrace single;
    single.phi = Eigen::MatrixXd::Constant(1, 1, 1.5);
    single.linear = Eigen::MatrixXd::Zero(1, 1);
    CHECK(sb_debias(single, Eigen::VectorXd::Constant(1, 1.5))[0] == 1.5);
    CHECK_THROWS_WITH(sb_variance(single), "insufficient replicates");
    CHECK_THROWS_WITH(ob_variance(single, InfluenceSummary{Eigen::VectorXd::Zero(1)}), "insufficient replicates");
    CHECK_NOTHROW(ob_debias(single, Eigen::VectorXd::Constant(1, 1.5)));
}

TEST_CASE("ob variance matches the loop oracle and the decomposition identity")
{
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index B = 2 + trial % 9;
        const ReplicateTrace t = random_trace(B, 2, rng);
        const InfluenceSummary s{Eigen::Vector2d(0.3 + rng.uniform01(), 0.1)};
        const Eigen::VectorXd got = ob_variance(t, s);
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(ref::rel_err(got[k], ob_variance_oracle(t, k, s.nonorthogonal_variance[k])) < 1e-12);

            // Replacing the closed form by the empirical variance of I^b gives sb_variance exactly.
            double i_bar = 0;
            for (Eigen::Index b = 0; b < B; ++b) i_bar += t.linear(b, k);
            i_bar /= static_cast<double>(B);
            double i_var = 0;
            for (Eigen::Index b = 0; b < B; ++b) i_var += (t.linear(b, k) - i_bar) * (t.linear(b, k) - i_bar);
            i_var /= static_cast<double>(B);
            const double expanded = ob_variance_oracle(t, k, i_var);
            CHECK(ref::rel_err(expanded, sb_variance(t)[k]) < 1e-12);
        }
    }
}

TEST_CASE("improved variance falls back to the jackknife term")
{
    ReplicateTrace t;
    t.phi.resize(2, 2);
    t.linear.resize(2, 2);
    // Component 0: orthogonal part perfectly anti-correlated with I, so S1^2 < 0.
    t.linear << 1.0, 0.0, -1.0, 0.0;
    t.phi << 0.0, 1.0, 0.0, 2.0;
    const InfluenceSummary s{Eigen::Vector2d(0.1, 0.1)};
    const Eigen::VectorXd raw = ob_variance(t, s);
    CHECK(raw[0] < 0.0);
    CHECK(raw[1] > 0.0);
    const Eigen::VectorXd improved = ob_variance_improved(t, s);
    CHECK(improved[0] == 0.1);
    CHECK(improved[1] == raw[1]);

    PluginEstimate plugin;
    plugin.point = Eigen::Vector2d(0.0, 1.0);
    plugin.summary = s;
    plugin.influence = {Eigen::MatrixXd::Zero(1, 2)};
    const EstimateReport rep = make_report(Method::orthogonal, plugin, &t);
    REQUIRE(rep.s2);
    CHECK((*rep.s2)[0] == 0.1);
    CHECK(rep.diagnostics.jackknife_fallback == std::vector<bool>{true, false});
    REQUIRE(rep.diagnostics.raw_s2);
    CHECK((*rep.diagnostics.raw_s2)[0] == raw[0]);
}

TEST_CASE("improved and jackknife variances are never negative")
{
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        ReplicateTrace t = random_trace(2 + trial % 4, 1, rng);
        t.phi = -3.0 * t.linear + t.phi;
        const InfluenceSummary s{Eigen::VectorXd::Constant(1, rng.uniform01())};
        CHECK(ob_variance_improved(t, s)[0] >= 0.0);
        CHECK(ij_variance(s)[0] >= 0.0);
    }
}

TEST_CASE("reports per method")
{
    const auto spec = make_variance_functional();
    const Dataset data = scalar_data(50, 6);
    const PluginEstimate plugin = prepare(spec, data);
    const ReplicateTrace t = run_replicates(spec, data, plugin, 5, SeedPolicy{2});

    const EstimateReport naive = make_report(Method::naive, plugin, nullptr);
    CHECK(!naive.s2);
    CHECK(naive.point == plugin.point);
    const EstimateReport ij = make_report(Method::jackknife, plugin, nullptr);
    CHECK((*ij.s2)[0] == plugin.summary.nonorthogonal_variance[0]);
    const EstimateReport cheap = make_report(Method::cheap, plugin, &t);
    CHECK(cheap.point == plugin.point);
    CHECK((*cheap.s2)[0] == cheap_spread(t, plugin.point)[0]);
    const EstimateReport sb = make_report(Method::standard, plugin, &t);
    CHECK(sb.point == sb_debias(t, plugin.point));
    CHECK(sb.B == 5);
    const EstimateReport ob = make_report(Method::orthogonal, plugin, &t);
    CHECK(ob.point == ob_debias(t, plugin.point));
    CHECK(ob.diagnostics.mean_orthogonal[0] ==
          doctest::Approx(ob.diagnostics.mean_phi[0] - ob.diagnostics.mean_linear[0]));
    CHECK_THROWS(make_report(Method::orthogonal, plugin, nullptr));
    CHECK_THROWS(make_report(Method::orthogonal, prepare(spec, data, false), &t));
}

TEST_CASE("method names")
{
    for (Method m : {Method::naive, Method::standard, Method::orthogonal, Method::jackknife, Method::cheap})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_WITH(parse_method("bca"), doctest::Contains("ob"));
    CHECK(method_names().size() == 5);
}

TEST_CASE("replicate errors carry the replicate index")
{
    FunctionalSpec spec;
    spec.name = "fragile";
    spec.evaluate = [](const Dataset&, WeightsView w) -> Eigen::VectorXd {
        if (w[0][0] > 0.6) throw std::domain_error("heavy first point");
        return Eigen::VectorXd::Zero(1);
    };
    const Dataset data = scalar_data(2, 1);
    const PluginEstimate plugin = prepare(spec, data, false);
    try {
        run_replicates(spec, data, plugin, 64, SeedPolicy{1});
        FAIL("expected a replicate error");
    } catch (const ReplicateError& e) {
        CHECK(std::string(e.what()).find("replicate " + std::to_string(e.replicate()) + ": heavy first point") == 0);
        const auto d = resample_all(data, SeedPolicy{1}, 0, static_cast<std::uint64_t>(e.replicate()));
        CHECK(d[0].counts()[0] == 2);
    }
}

TEST_CASE("orthogonal variance has far smaller simulation variance than the standard bootstrap")
{
    const auto spec = make_mean_norm_sq_functional();
    // The variance ratio shrinks like 1/n; at n = 1600, d = 5 it is about 0.02.
    const Dataset data = vector_data(1600, 5, 21);
    const PluginEstimate plugin = prepare(spec, data);
    std::vector<double> ob, sb;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const ReplicateTrace t = run_replicates(spec, data, plugin, 4, SeedPolicy{s});
        ob.push_back(ob_variance(t, plugin.summary)[0]);
        sb.push_back(sb_variance(t)[0]);
    }
    auto var = [](const std::vector<double>& v) {
        double m = 0, q = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        for (double x : v) q += (x - m) * (x - m);
        return q / static_cast<double>(v.size() - 1);
    };
    CHECK(var(ob) < 0.1 * var(sb));

    // At large B the two estimators agree on the bootstrap variance.
    const ReplicateTrace big = run_replicates(spec, data, plugin, 4000, SeedPolicy{99});
    CHECK(ref::rel_err(ob_variance(big, plugin.summary)[0], sb_variance(big)[0]) < 0.1);
}
