// experiments.hpp
//
// Data generators with known ground truth, and the repetition harness for
// coverage, debiasing, simulation-variance scaling, prediction intervals and
// one-shot estimation on user data.
//
// Seeding: repetition r draws its data from seed.substream(kDataStream) and
// its bootstrap replicates from a substream keyed by (B, repeat). Nothing
// depends on how repetitions are scheduled across threads.
//
// Ground truths:
//   folded_normal + variance             1 - 2/pi
//   double_exponential + variance        2
//   bivariate_lognormal + correlation    (e^rho - 1)/(e - 1), 0.37754 at rho = 0.5
//   gaussian_vector + mean_norm_sq       d m^2          (1.0 at d = 25, m = 0.2)
//   gaussian_vector + mean_norm_4        (d m^2)^2
//   dirichlet_categorical + entropy      -sum p log p of the p drawn for that repetition
//   qp_rhs + qp_argmin                   argmin at the unperturbed b*
//   linreg + linreg_coeff                generating coefficient

#pragma once

#include "orthoboot/estimators.hpp"
#include "orthoboot/intervals.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace orthoboot {

inline constexpr std::uint64_t kDataStream = 0xda7a;
inline constexpr std::uint64_t kBootStream = 0xb007;
inline constexpr std::uint64_t kTestStream = 0x7e57;

// Samplers --------------------------------------------------------------------

Eigen::MatrixXd sample_folded_normal(Eigen::Index n, Rng& rng);
Eigen::MatrixXd sample_double_exponential(Eigen::Index n, Rng& rng);
Eigen::MatrixXd sample_bivariate_lognormal(Eigen::Index n, double rho, Rng& rng);
Eigen::MatrixXd sample_gaussian_vector(Eigen::Index n, const Eigen::VectorXd& mean, Rng& rng);
Eigen::VectorXd sample_dirichlet_uniform(Eigen::Index d, Rng& rng);
Eigen::MatrixXd sample_categorical(Eigen::Index n, const Eigen::VectorXd& p, Rng& rng);
Eigen::VectorXd sample_unit_sphere(Eigen::Index d, Rng& rng);

double lognormal_correlation(double rho);
double entropy_of(const Eigen::VectorXd& p);

struct Draw {
    Dataset data;
    Eigen::VectorXd truth;
};

// A generator paired with the functional it is benchmarked on.
struct Scenario {
    std::string generator;
    std::string functional;
    FunctionalSpec spec;
    std::function<Draw(Eigen::Index n, std::uint64_t seed)> draw;
    Eigen::Index component = 0;  // component scored by coverage runs
};

std::vector<std::string> generator_names();
Scenario make_scenario(const std::string& generator, const nlohmann::json& generator_params,
                       const std::string& functional, const nlohmann::json& functional_params);

// Coverage ----------------------------------------------------------------------

struct CoverageSettings {
    Eigen::Index n = 1000;
    std::vector<Eigen::Index> B{2};
    std::vector<Method> methods{Method::standard, Method::cheap, Method::orthogonal, Method::jackknife};
    Eigen::Index R = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    double truth_shift = 0.0;  // added to the truth; testing aid
    Execution exec{1};
};

struct CoverageRecord {
    Method method;
    Eigen::Index B;  // 0 for ij
    Eigen::Index repetition;
    double estimate, lower, upper, truth;
    bool covered;
};

struct CoverageSummary {
    Method method;
    Eigen::Index B;
    Eigen::Index R;
    double coverage;
    double width_mean;
    double width_sd;  // across repetitions
};

struct CoverageReport {
    Eigen::Index n = 0;
    std::vector<CoverageRecord> records;
    std::vector<CoverageSummary> summary;

    const CoverageSummary& find(Method m, Eigen::Index B) const;
};

CoverageReport run_coverage(const Scenario& scenario, const CoverageSettings& settings);

// Debiasing ---------------------------------------------------------------------

struct DebiasSettings {
    Eigen::Index n = 100;
    std::vector<Eigen::Index> B{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<Method> methods{Method::naive, Method::standard, Method::orthogonal};
    Eigen::Index R = 1000;
    Eigen::Index repeats = 10;  // independent bootstrap procedures per data set
    std::uint64_t seed = 0;
    Execution exec{1};
};

// Errors e_r = estimate_r - truth_r. For vector outputs "bias" is the norm of
// the mean error and squared errors are squared norms.
struct BiasSummary {
    Method method;
    Eigen::Index B;  // 0 for naive
    Eigen::Index R;
    Eigen::Index repeats;
    double bias_mean;                  // over all repeats
    double bias_p05, bias_p50, bias_p95;   // across repeats
    double rmse;                       // sqrt(mean e^2) pooled over repeats
    double rmse_p05, rmse_p50, rmse_p95;
    double rmse_total_p50;             // median over repeats of sqrt(sum_r e^2)
    double abs_total_p50;              // median over repeats of sum_r |e|
};

struct BiasReport {
    Eigen::Index n = 0;
    std::vector<BiasSummary> summary;

    const BiasSummary& find(Method m, Eigen::Index B) const;
};

BiasReport run_debias(const Scenario& scenario, const DebiasSettings& settings);

// Scaling -----------------------------------------------------------------------

struct ScalingSettings {
    std::vector<Eigen::Index> n{50, 100, 200, 400, 800, 1600, 3200};
    Eigen::Index B = 4;
    Eigen::Index seeds = 200;
    std::uint64_t seed = 0;
    Execution exec{1};
};

struct ScalingPoint {
    std::string target;  // "debias" or "variance"
    Method method;
    Eigen::Index n;
    double sim_variance;  // variance over seeds, fixed data
    double mean;
};

struct ScalingFit {
    std::string target;
    Method method;
    double slope;
    double slope_se;
    double intercept;
};

struct ScalingReport {
    Eigen::Index B = 0;
    Eigen::Index seeds = 0;
    std::vector<ScalingPoint> points;
    std::vector<ScalingFit> fits;

    const ScalingFit& fit(const std::string& target, Method m) const;
};

ScalingReport run_scaling(const Scenario& scenario, const ScalingSettings& settings);

// Least-squares line through (log x, log y); slope standard error from the residuals.
ScalingFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y);

// Prediction intervals ------------------------------------------------------------

struct PiSettings {
    Eigen::Index n = 500;
    Eigen::Index n_test = 500;
    Eigen::Index B = 5;
    double alpha = 0.05;
    LinearModelOptions model{};
    std::uint64_t seed = 0;
    Execution exec{1};
};

struct PiRecord {
    Eigen::Index test_index;
    double prediction, lower, upper, target, s2, sigma2, oob_fraction;
    bool covered;
};

struct PiReport {
    Eigen::Index n = 0;
    Eigen::Index B = 0;
    std::vector<PiRecord> records;
    double coverage = 0;
    double width_mean = 0;
    double oob_fraction = 0;
};

// The scenario's generator must produce [X | y] regression blocks.
PiReport run_pi(const Scenario& scenario, const PiSettings& settings);

// One-shot estimation on user data ----------------------------------------------

struct EstimateSettings {
    std::vector<Method> methods{Method::naive, Method::standard, Method::orthogonal, Method::jackknife, Method::cheap};
    Eigen::Index B = 2;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    Execution exec{1};
};

struct EstimateRow {
    Method method;
    Eigen::Index B;
    Eigen::Index component;
    double plugin, estimate;
    std::optional<double> s2, lower, upper;
    bool jackknife_fallback = false;
};

std::vector<EstimateRow> run_estimate(const FunctionalSpec& spec, const Dataset& data, const EstimateSettings& settings);

// Serialization ---------------------------------------------------------------

// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

std::string coverage_csv(const CoverageReport& report);
std::string coverage_summary_csv(const CoverageReport& report);
nlohmann::json coverage_json(const CoverageReport& report);

std::string bias_csv(const BiasReport& report);
nlohmann::json bias_json(const BiasReport& report);

std::string scaling_csv(const ScalingReport& report);
std::string scaling_fit_csv(const ScalingReport& report);
nlohmann::json scaling_json(const ScalingReport& report);

std::string pi_csv(const PiReport& report);
nlohmann::json pi_json(const PiReport& report);

std::string estimate_csv(const std::vector<EstimateRow>& rows);

}  // namespace orthoboot
