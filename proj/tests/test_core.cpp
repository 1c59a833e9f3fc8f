#include "orthoboot/core.hpp"
#include "orthoboot/parallel.hpp"

#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_set>

using namespace orthoboot;

TEST_CASE("dataset validation")
{
    CHECK_THROWS(Dataset(std::vector<Eigen::MatrixXd>{}));
    CHECK_THROWS(Dataset({Eigen::MatrixXd(0, 1)}));
    Eigen::MatrixXd bad(2, 1);
    bad << 1.0, std::nan("");
    CHECK_THROWS(Dataset({bad}));
    Dataset ok({Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Zero(4, 1)});
    CHECK(ok.num_blocks() == 2);
    CHECK(ok.size(1) == 4);
    CHECK(ok.dim(0) == 2);
    CHECK(ok.name(1) == "block1");
}

TEST_CASE("empirical distribution counts must sum to n")
{
    CHECK_THROWS(EmpiricalDistribution(0, {1, 1, 0}));
    CHECK(EmpiricalDistribution(0, {1, 1, 1}) == EmpiricalDistribution::original(0, 3));
    CHECK_NOTHROW(EmpiricalDistribution(0, {3, 0, 0}));
    const auto w = EmpiricalDistribution(0, {2, 1, 0}).weights();
    CHECK(w.sum() == doctest::Approx(1.0));
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("resample of a single point")
{
    for (std::uint64_t s = 0; s < 20; ++s)
        CHECK(resample(EmpiricalDistribution::original(0, 1), s).counts() == std::vector<std::uint32_t>{1});
}

TEST_CASE("resample output is pinned")
{
    const auto d = resample(EmpiricalDistribution::original(0, 3), 12345);
    CHECK(d.counts() == std::vector<std::uint32_t>{0, 2, 1});
    CHECK(SeedPolicy{42}.derive(1, 2, 3) == 4591807362961508349ULL);
    Rng rng(7);
    CHECK(rng.uniform01() == 0.75438530415285798);
    CHECK(rng.normal() == 1.8071158852648874);
    CHECK(rng.uniform_index(10) == 8);
}

TEST_CASE("resample frequency of [2,0] at n=2")
{
    const SeedPolicy policy{99};
    const auto base = EmpiricalDistribution::original(0, 2);
    int hits = 0;
    const int R = 100000;
    for (int r = 0; r < R; ++r)
        if (resample(base, policy.derive(r, 0, 0)).counts() == std::vector<std::uint32_t>{2, 0}) ++hits;
    CHECK(static_cast<double>(hits) / R == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("marginal counts follow Binomial(n, 1/n)")
{
    const std::size_t n = 10;
    const int R = 100000;
    const auto base = EmpiricalDistribution::original(0, n);
    const SeedPolicy policy{2024};
    std::vector<double> observed(n + 1, 0.0);
    for (int r = 0; r < R; ++r) observed[resample(base, policy.derive(r, 0, 0)).counts()[3]] += 1.0;

    boost::math::binomial_distribution<double> binom(static_cast<double>(n), 1.0 / n);
    // Pool the tail so every expected count is at least 5.
    double chi2 = 0.0, tail_obs = 0.0, tail_exp = 0.0;
    int cells = 0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double expected = R * boost::math::pdf(binom, static_cast<double>(k));
        if (expected < 5.0) {
            tail_obs += observed[k];
            tail_exp += expected;
            continue;
        }
        chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
        ++cells;
    }
    if (tail_exp > 0) {
        chi2 += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
        ++cells;
    }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(cells - 1), chi2));
    CHECK(p > 0.001);
}

TEST_CASE("derived seeds")
{
    const SeedPolicy policy{7};
    CHECK(policy.derive(3, 4, 5) == policy.derive(3, 4, 5));
    CHECK(policy.derive(0, 0, 0) != policy.derive(0, 0, 1));
    CHECK(policy.derive(0, 1, 0) != policy.derive(1, 0, 0));
    CHECK(derive_seed(policy, 1, 2, 3) == policy.derive(1, 2, 3));
    CHECK(policy.substream(1).base_seed != policy.substream(2).base_seed);

    std::unordered_set<std::uint64_t> seen;
    seen.reserve(1 << 21);
    for (std::uint64_t r = 0; r < 1000; ++r)
        for (std::uint64_t b = 0; b < 1000; ++b) seen.insert(policy.derive(r, b, 0));
    CHECK(seen.size() == 1000000);
}

TEST_CASE("weighted mean")
{
    Eigen::MatrixXd x(2, 1);
    x << 1, 3;
    CHECK(weighted_mean(x, EmpiricalDistribution::original(0, 2))[0] == 2.0);
    CHECK(weighted_mean(x, EmpiricalDistribution(0, {2, 0}))[0] == 1.0);
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(5, 3);
    CHECK(weighted_mean(y, EmpiricalDistribution::original(0, 5)).isApprox(y.colwise().mean().transpose()));
}

TEST_CASE("rng transforms")
{
    Rng rng(1);
    double sum = 0, sum_sq = 0, exp_sum = 0;
    const int N = 200000;
    for (int k = 0; k < N; ++k) {
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
        exp_sum += rng.exponential();
    }
    CHECK(sum / N == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(sum_sq / N == doctest::Approx(1.0).epsilon(0.02));
    CHECK(exp_sum / N == doctest::Approx(1.0).epsilon(0.02));
    for (int k = 0; k < 1000; ++k) {
        const double u = rng.uniform01();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(rng.uniform_index(7) < 7);
    }
    CHECK_THROWS(rng.uniform_index(0));
}

TEST_CASE("resampling is independent of thread count")
{
    const auto base = EmpiricalDistribution::original(0, 50);
    const SeedPolicy policy{5};
    auto run = [&](unsigned threads) {
        std::vector<std::vector<std::uint32_t>> out(64);
        parallel_for(out.size(), Execution{threads}, [&](std::size_t b) { out[b] = resample(base, policy.derive(0, b, 0)).counts(); });
        return out;
    };
    CHECK(run(1) == run(8));
}

TEST_CASE("parallel_for propagates the first failing index")
{
    try {
        parallel_for(100, Execution{4}, [](std::size_t k) {
            if (k == 17 || k == 60) throw std::runtime_error("fail " + std::to_string(k));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "fail 17");
    }
}

TEST_CASE("csv loading")
{
    const auto dir = std::filesystem::temp_directory_path() / "orthoboot_test_csv";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "a.csv") << "x,y\n1,2\n3,4.5\n";
        std::ofstream(dir / "b.csv") << "1.5\n-2\n";
        std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
        std::ofstream(dir / "text.csv") << "1,2\n3,abc\n";
    }
    const Eigen::MatrixXd a = load_block_csv(dir / "a.csv");
    CHECK(a.rows() == 2);
    CHECK(a(1, 1) == 4.5);
    const Eigen::MatrixXd b = load_block_csv(dir / "b.csv");
    CHECK(b.rows() == 2);
    CHECK(b(1, 0) == -2.0);
    CHECK_THROWS_WITH_AS(load_block_csv(dir / "ragged.csv"), doctest::Contains("ragged.csv:2: expected 2 columns"), std::runtime_error);
    CHECK_THROWS(load_block_csv(dir / "text.csv"));
    CHECK_THROWS(load_block_csv(dir / "missing.csv"));
    const std::vector<std::filesystem::path> paths{dir / "a.csv", dir / "b.csv"};
    const Dataset data = load_dataset_csv(paths);
    CHECK(data.num_blocks() == 2);
    CHECK(data.name(0) == "a");
}
