// estimators.hpp
//
// Replicate engine plus the debiasing and variance estimators built on it:
// Standard Bootstrap, Orthogonal Bootstrap (raw and improved), Infinitesimal
// Jackknife. All replicate moments use the 1/B convention. Vector-valued
// functionals are handled componentwise.

#pragma once

#include "orthoboot/core.hpp"
#include "orthoboot/functionals.hpp"
#include "orthoboot/parallel.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orthoboot {

enum class Method { naive, standard, orthogonal, jackknife, cheap };

const char* method_name(Method m) noexcept;
Method parse_method(const std::string& name);  // "naive", "sb", "ob", "ij", "cheap"
std::vector<std::string> method_names();

// sum_i (1/n_i^2) sum_j I_i(X_ij)^2, the closed-form bootstrap variance of
// the linear part.
struct InfluenceSummary {
    Eigen::VectorXd nonorthogonal_variance;
};

// Everything computed once at the original empirical measure.
struct PluginEstimate {
    Eigen::VectorXd point;
    std::vector<Eigen::MatrixXd> influence;  // per block, n_i x p; empty without influence
    InfluenceSummary summary;

    bool has_influence() const noexcept { return !influence.empty(); }
};

// with_influence=false skips the influence tables (SB/Cheap only).
PluginEstimate prepare(const FunctionalSpec& spec, const Dataset& data, bool with_influence = true);

struct ReplicateTrace {
    Eigen::MatrixXd phi;       // B x p, phi(F^b)
    Eigen::MatrixXd linear;    // B x p, sum_i (1/n_i) sum_j I_i(x^b_ij); zero without influence
    std::vector<std::vector<std::uint64_t>> seeds;   // [b][i]
    std::vector<std::vector<EmpiricalDistribution>> resamples;  // kept on request

    Eigen::Index replicates() const noexcept { return phi.rows(); }
};

struct ReplicateOptions {
    std::uint64_t repetition = 0;
    bool keep_resamples = false;
    Execution exec{1};
};

class ReplicateError : public std::runtime_error {
public:
    ReplicateError(Eigen::Index replicate, const std::string& what);
    Eigen::Index replicate() const noexcept { return replicate_; }

private:
    Eigen::Index replicate_;
};

// Resamples every block of `data` for replicate b with seeds derive(r, b, i).
std::vector<EmpiricalDistribution> resample_all(const Dataset& data, const SeedPolicy& seeds, std::uint64_t r,
                                                std::uint64_t b);

ReplicateTrace run_replicates(const FunctionalSpec& spec, const Dataset& data, const PluginEstimate& plugin,
                              Eigen::Index B, const SeedPolicy& seeds, const ReplicateOptions& opts = {});

// 2 phi_hat - mean_b (phi^b - I^b)
Eigen::VectorXd ob_debias(const ReplicateTrace& trace, const Eigen::VectorXd& point);
// 2 phi_hat - mean_b phi^b
Eigen::VectorXd sb_debias(const ReplicateTrace& trace, const Eigen::VectorXd& point);

// Closed form + (1/B) sum (R^b - R_bar)^2 + (2/B) sum (R^b - R_bar)(I^b - I_bar),
// R = phi - I. May be negative.
Eigen::VectorXd ob_variance(const ReplicateTrace& trace, const InfluenceSummary& summary);
// ob_variance where non-negative, otherwise the jackknife term.
Eigen::VectorXd ob_variance_improved(const ReplicateTrace& trace, const InfluenceSummary& summary);
// (1/B) sum (phi^b - phi_bar)^2
Eigen::VectorXd sb_variance(const ReplicateTrace& trace);
Eigen::VectorXd ij_variance(const InfluenceSummary& summary);
// (1/B) sum (phi^b - phi_hat)^2, the Cheap Bootstrap spread (centred at phi_hat).
Eigen::VectorXd cheap_spread(const ReplicateTrace& trace, const Eigen::VectorXd& point);

struct EstimateDiagnostics {
    Eigen::VectorXd mean_phi;
    Eigen::VectorXd mean_linear;
    Eigen::VectorXd mean_orthogonal;
    std::optional<Eigen::VectorXd> raw_s2;   // ob_variance before the fallback
    std::vector<bool> jackknife_fallback;    // per component
};

struct EstimateReport {
    Method method = Method::naive;
    Eigen::Index B = 0;
    Eigen::VectorXd point;                 // debiased (naive: plug-in)
    std::optional<Eigen::VectorXd> s2;     // variance of the plug-in, when the method yields one
    EstimateDiagnostics diagnostics;
};

// Combines debiasing and variance for one method over an existing trace.
// `trace` may be null for naive and jackknife.
EstimateReport make_report(Method method, const PluginEstimate& plugin, const ReplicateTrace* trace);

}  // namespace orthoboot
