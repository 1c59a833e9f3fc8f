// core.hpp
//
// Datasets, empirical distributions over a data block, label-derived seeding
// and uniform resampling with replacement.
//
// Reproducibility contract:
//  - Random streams come from std::mt19937_64, whose output sequence is fixed
//    by the C++ standard. The distribution transforms on top of it (uniform
//    index, uniform real, normal, exponential) are implemented here rather
//    than taken from <random>, whose distributions are implementation-defined.
//  - Every stream is seeded by derive_seed(base, r, b, i), a chained
//    SplitMix64 finalizer over the label tuple. Nothing depends on the order
//    in which replicates or repetitions are executed.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace orthoboot {

inline constexpr const char* kRngName = "mt19937_64+splitmix64-labels";

// One n_i x d_i block per input distribution; rows are observations.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<Eigen::MatrixXd> blocks, std::vector<std::string> names = {});

    std::size_t num_blocks() const noexcept { return blocks_.size(); }
    const Eigen::MatrixXd& block(std::size_t i) const { return blocks_.at(i); }
    const std::vector<Eigen::MatrixXd>& blocks() const noexcept { return blocks_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Eigen::Index size(std::size_t i) const { return blocks_.at(i).rows(); }
    Eigen::Index dim(std::size_t i) const { return blocks_.at(i).cols(); }

private:
    std::vector<Eigen::MatrixXd> blocks_;
    std::vector<std::string> names_;
};

// Multiplicity counts over the support points of one block. The original
// empirical distribution has every count equal to one.
class EmpiricalDistribution {
public:
    EmpiricalDistribution(std::size_t block_index, std::vector<std::uint32_t> counts);

    static EmpiricalDistribution original(std::size_t block_index, std::size_t n);

    std::size_t block_index() const noexcept { return block_index_; }
    const std::vector<std::uint32_t>& counts() const noexcept { return counts_; }
    std::size_t size() const noexcept { return counts_.size(); }

    // counts / n, sums to one.
    Eigen::VectorXd weights() const;

    bool operator==(const EmpiricalDistribution&) const = default;

private:
    std::size_t block_index_;
    std::vector<std::uint32_t> counts_;
};

// Per-block probability weights handed to functionals. Each vector sums to
// one; entries may be fractional (and, for finite-difference oracles, signed).
using Weights = std::vector<Eigen::VectorXd>;
using WeightsView = std::span<const Eigen::VectorXd>;

Weights uniform_weights(const Dataset& data);
Weights to_weights(std::span<const EmpiricalDistribution> dists);

std::uint64_t splitmix64(std::uint64_t x) noexcept;

struct SeedPolicy {
    std::uint64_t base_seed = 0;

    // Stream for repetition r, replicate b, block i.
    std::uint64_t derive(std::uint64_t r, std::uint64_t b, std::uint64_t i) const noexcept;
    // Independent policy for a different purpose (data generation, bootstrap
    // repeat k, ...).
    SeedPolicy substream(std::uint64_t label) const noexcept;
};

std::uint64_t derive_seed(const SeedPolicy& policy, std::uint64_t r, std::uint64_t b, std::uint64_t i) noexcept;

// Thin wrapper over mt19937_64 with portable transforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on {0, ..., n-1}; Lemire's multiply-shift with rejection.
    std::uint64_t uniform_index(std::uint64_t n);
    // Uniform on [0, 1) with 53 random bits.
    double uniform01();
    // Standard normal via Box-Muller; the sine branch is cached.
    double normal();
    double exponential();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// n uniform-with-replacement index draws over the support of `dist`,
// returned as counts. `dist` must be the original distribution.
EmpiricalDistribution resample(const EmpiricalDistribution& dist, std::uint64_t seed);

Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& block, const EmpiricalDistribution& dist);
Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights);

// One block per file; header row optional; columns are coordinates.
Eigen::MatrixXd load_block_csv(const std::filesystem::path& path);
Dataset load_dataset_csv(std::span<const std::filesystem::path> paths);

}  // namespace orthoboot
