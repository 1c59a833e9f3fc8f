#include "orthoboot/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace orthoboot {

Dataset::Dataset(std::vector<Eigen::MatrixXd> blocks, std::vector<std::string> names)
    : blocks_(std::move(blocks)), names_(std::move(names))
{
    if (blocks_.empty())
        throw std::invalid_argument("dataset needs at least one block");
    if (names_.empty()) {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            names_.push_back("block" + std::to_string(i));
    }
    if (names_.size() != blocks_.size())
        throw std::invalid_argument("dataset: block_names length does not match block count");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        if (b.rows() < 1 || b.cols() < 1)
            throw std::invalid_argument("dataset: block '" + names_[i] + "' is empty");
        if (!b.allFinite())
            throw std::invalid_argument("dataset: block '" + names_[i] + "' has non-finite values");
    }
}

EmpiricalDistribution::EmpiricalDistribution(std::size_t block_index, std::vector<std::uint32_t> counts)
    : block_index_(block_index), counts_(std::move(counts))
{
    if (counts_.empty())
        throw std::invalid_argument("empirical distribution over an empty block");
    std::uint64_t total = 0;
    for (auto c : counts_) total += c;
    if (total != counts_.size())
        throw std::invalid_argument("empirical distribution counts must sum to the block size");
}

EmpiricalDistribution EmpiricalDistribution::original(std::size_t block_index, std::size_t n)
{
    return EmpiricalDistribution(block_index, std::vector<std::uint32_t>(n, 1u));
}

Eigen::VectorXd EmpiricalDistribution::weights() const
{
    const double inv_n = 1.0 / static_cast<double>(counts_.size());
    Eigen::VectorXd w(static_cast<Eigen::Index>(counts_.size()));
    for (std::size_t j = 0; j < counts_.size(); ++j)
        w[static_cast<Eigen::Index>(j)] = counts_[j] * inv_n;
    return w;
}

Weights uniform_weights(const Dataset& data)
{
    Weights w;
    w.reserve(data.num_blocks());
    for (std::size_t i = 0; i < data.num_blocks(); ++i) {
        const auto n = data.size(i);
        w.push_back(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
    }
    return w;
}

Weights to_weights(std::span<const EmpiricalDistribution> dists)
{
    Weights w;
    w.reserve(dists.size());
    for (const auto& d : dists) w.push_back(d.weights());
    return w;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t SeedPolicy::derive(std::uint64_t r, std::uint64_t b, std::uint64_t i) const noexcept
{
    // Each stage is a bijection of the incoming label for a fixed prefix.
    std::uint64_t h = splitmix64(base_seed);
    h = splitmix64(h ^ r);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ i);
    return h;
}

SeedPolicy SeedPolicy::substream(std::uint64_t label) const noexcept
{
    return SeedPolicy{splitmix64(splitmix64(base_seed ^ 0x5eedf00dULL) ^ label)};
}

std::uint64_t derive_seed(const SeedPolicy& policy, std::uint64_t r, std::uint64_t b, std::uint64_t i) noexcept
{
    return policy.derive(r, b, i);
}

std::uint64_t Rng::uniform_index(std::uint64_t n)
{
    if (n == 0) throw std::invalid_argument("uniform_index over an empty range");
    __extension__ using u128 = unsigned __int128;
    u128 m = static_cast<u128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<u128>(engine_()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::uniform01()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::exponential()
{
    return -std::log(1.0 - uniform01());
}

EmpiricalDistribution resample(const EmpiricalDistribution& dist, std::uint64_t seed)
{
    const std::size_t n = dist.size();
    std::vector<std::uint32_t> counts(n, 0u);
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j)
        ++counts[rng.uniform_index(n)];
    return EmpiricalDistribution(dist.block_index(), std::move(counts));
}

Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& block, const Eigen::VectorXd& weights)
{
    if (weights.size() != block.rows())
        throw std::invalid_argument("weighted_mean: weight length does not match block rows");
    return block.transpose() * weights;
}

Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& block, const EmpiricalDistribution& dist)
{
    return weighted_mean(block, dist.weights());
}

namespace {

bool parse_double(std::string_view field, double& out)
{
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
        field.remove_suffix(1);
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

}  // namespace

Eigen::MatrixXd load_block_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path.string());

    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t k = 0; k < fields.size(); ++k)
            numeric = numeric && parse_double(fields[k], row[k]);
        if (!numeric) {
            if (rows == 0 && cols == 0) {  // header row
                cols = fields.size();
                continue;
            }
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        if (cols == 0) cols = row.size();
        if (row.size() != cols)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(cols) + " columns, found " + std::to_string(row.size()));
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("CSV file has no observations: " + path.string());

    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
    return block;
}

Dataset load_dataset_csv(std::span<const std::filesystem::path> paths)
{
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<std::string> names;
    for (const auto& p : paths) {
        blocks.push_back(load_block_csv(p));
        names.push_back(p.stem().string());
    }
    return Dataset(std::move(blocks), std::move(names));
}

}  // namespace orthoboot
