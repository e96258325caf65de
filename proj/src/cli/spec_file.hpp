#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace metagap::cli {

/**
 * Loads an experiment spec. Files ending in .json are parsed as JSON;
 * everything else goes through a small TOML reader covering the subset the
 * shipped specs use: comments, [section] / [section.sub] headers, and
 * key = value lines where value is a string, number, boolean, or a flat
 * array of those. Unsupported syntax raises ValidationError.
 */
nlohmann::json load_spec_file(const std::string& path);

/// Parses TOML-subset text directly (exposed for tests).
nlohmann::json parse_toml_subset(const std::string& text);

/**
 * Typed read-only view over a spec tree with dotted-path lookups
 * ("algo.alpha"). Missing paths fall back to the provided default; present
 * paths of the wrong type raise ValidationError naming the path.
 */
class SpecView {
public:
    explicit SpecView(nlohmann::json spec) : spec_(std::move(spec)) {}

    double number(const std::string& path, double fallback) const;
    long long integer(const std::string& path, long long fallback) const;
    std::string text(const std::string& path, const std::string& fallback) const;
    std::vector<double> numbers(const std::string& path,
                                std::vector<double> fallback) const;
    std::vector<long long> integers(const std::string& path,
                                    std::vector<long long> fallback) const;
    bool has(const std::string& path) const;

    const nlohmann::json& tree() const { return spec_; }

private:
    const nlohmann::json* find(const std::string& path) const;

    nlohmann::json spec_;
};

}  // namespace metagap::cli
