// Internal: typed reads from a JSON parameter table with unknown-key rejection.
#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <set>
#include <stdexcept>
#include <string>

namespace orthoboot::detail {

class ParamReader {
public:
    ParamReader(std::string owner, const nlohmann::json& json) : owner_(std::move(owner)), json_(json)
    {
        if (!json_.is_null() && !json_.is_object())
            throw std::invalid_argument(owner_ + ": parameters must be a table");
    }

    template <typename T>
    T get(const std::string& key, T fallback)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        try {
            return json_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument(owner_ + ": parameter '" + key + "' has the wrong type");
        }
    }

    bool has(const std::string& key) const { return json_.is_object() && json_.contains(key); }

    Eigen::MatrixXd matrix(const std::string& key)
    {
        seen_.insert(key);
        if (!has(key)) throw std::invalid_argument(owner_ + ": missing parameter '" + key + "'");
        const auto& rows = json_.at(key);
        if (!rows.is_array() || rows.empty() || !rows[0].is_array())
            throw std::invalid_argument(owner_ + ": parameter '" + key + "' must be a non-empty array of rows");
        Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].is_array() || rows[i].size() != rows[0].size())
                throw std::invalid_argument(owner_ + ": parameter '" + key + "' has ragged rows");
            for (std::size_t j = 0; j < rows[i].size(); ++j) {
                if (!rows[i][j].is_number())
                    throw std::invalid_argument(owner_ + ": parameter '" + key + "' must be numeric");
                M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
            }
        }
        return M;
    }

    void finish() const
    {
        if (!json_.is_object()) return;
        for (const auto& item : json_.items())
            if (!seen_.count(item.key()))
                throw std::invalid_argument(owner_ + ": unknown parameter '" + item.key() + "'");
    }

private:
    std::string owner_;
    const nlohmann::json& json_;
    std::set<std::string> seen_;
};

}  // namespace orthoboot::detail
