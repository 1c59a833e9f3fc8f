// intervals.hpp
//
// Normal-theory confidence intervals phi_hat +/- q * sqrt(S^2) for each
// estimator, and the pivot prediction interval with out-of-bag irreducible
// error.
//
//   ob     q = z_{1-a/2}, S^2 = improved orthogonal variance (never negative)
//   sb     q = z_{1-a/2}, S^2 = (1/B) sum (phi^b - phi_bar)^2
//   ij     q = z_{1-a/2}, S^2 = closed-form influence variance
//   cheap  q = t_{B,1-a/2}, S^2 = (1/B) sum (phi^b - phi_hat)^2
//
// Quantiles come from Boost.Math.

#pragma once

#include "orthoboot/estimators.hpp"

#include <vector>

namespace orthoboot {

struct Interval {
    double lower = 0;
    double upper = 0;
    double center = 0;
    double half_width = 0;
    Method method = Method::orthogonal;
    double alpha = 0.05;

    double width() const noexcept { return upper - lower; }
    bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

double normal_quantile(double p);
double student_t_quantile(double p, double dof);

// Multiplier for a two-sided 1 - alpha interval of `method` with B replicates.
double interval_quantile(Method method, double alpha, Eigen::Index B);

Interval make_interval(Method method, double center, double s2, double alpha, Eigen::Index B);

// One interval per output component from an existing trace (null for ij).
std::vector<Interval> intervals_from_trace(Method method, const PluginEstimate& plugin, const ReplicateTrace* trace,
                                           double alpha);

std::vector<Interval> ob_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                            const SeedPolicy& seeds, const ReplicateOptions& opts = {});
std::vector<Interval> sb_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                            const SeedPolicy& seeds, const ReplicateOptions& opts = {});
std::vector<Interval> ij_ci(const FunctionalSpec& spec, const Dataset& data, double alpha);
std::vector<Interval> cheap_ci(const FunctionalSpec& spec, const Dataset& data, Eigen::Index B, double alpha,
                               const SeedPolicy& seeds, const ReplicateOptions& opts = {});

// Per-replicate refit bookkeeping for the prediction interval.
struct PredictionContext {
    std::vector<std::vector<Eigen::Index>> out_of_bag;  // indices with resample count 0
    Eigen::VectorXd refit_predictions;                 // f^b(x_test)
    Eigen::VectorXd oob_mse;                           // sigma_b^2; NaN when the OOB set is empty
    Eigen::Index empty_oob = 0;

    // Mean |OOB| / n over replicates.
    double oob_fraction(Eigen::Index n) const;
};

struct PredictionInterval {
    Interval interval;
    double s2 = 0;       // improved orthogonal variance of f(x_test)
    double raw_s2 = 0;   // before the jackknife fallback
    double sigma2 = 0;   // mean sigma_b^2 over replicates with non-empty OOB sets
    PredictionContext context;
};

// `data` holds one [X | y] block. Replicate b of repetition r uses the same
// seeds as run_replicates would.
PredictionInterval ob_pi(const LinearModel& model, const Dataset& data, const Eigen::RowVectorXd& x_test,
                         Eigen::Index B, double alpha, const SeedPolicy& seeds, const ReplicateOptions& opts = {});

}  // namespace orthoboot
