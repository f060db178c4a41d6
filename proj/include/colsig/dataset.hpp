#pragma once

// Community-weighted sampling over a signature manifest.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "colsig/error.hpp"

namespace colsig {

enum class Community { University, City };

inline std::string to_string(Community c) { return c == Community::University ? "university" : "city"; }

inline Community parse_community(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "university") return Community::University;
    if (s == "city") return Community::City;
    throw Error(ErrorKind::Parameter, "unknown community label '" + s + "'");
}

struct ManifestEntry {
    std::string path;
    std::string source_id;
    Community community = Community::University;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Manifest files hold one tab-separated record per line in the fixed
/// order `path<TAB>source_id<TAB>community`. Blank lines and `#` comments
/// are skipped.
inline std::vector<ManifestEntry> parse_manifest(std::istream& in) {
    std::vector<ManifestEntry> out;
    std::unordered_set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 3)
            throw Error(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
        ManifestEntry e{fields[0], fields[1], parse_community(fields[2])};
        if (!ids.insert(e.source_id).second)
            throw Error(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": duplicate source_id '" +
                                               e.source_id + "'");
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open manifest '" + path.string() + "'");
    return parse_manifest(in);
}

inline void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries) {
    for (const auto& e : entries) out << e.path << '\t' << e.source_id << '\t' << to_string(e.community) << '\n';
}

struct SamplingPlan {
    std::vector<ManifestEntry> entries;
    Community target_community = Community::University;
    double upweight = 1.0;
    std::vector<double> probabilities;
};

inline SamplingPlan build_plan(std::vector<ManifestEntry> entries, Community target, double upweight) {
    require(!entries.empty(), ErrorKind::Parameter, "cannot build a sampling plan from an empty manifest");
    require(upweight >= 1.0, ErrorKind::Parameter, "upweight must be >= 1");
    double total = 0.0;
    for (const auto& e : entries) total += e.community == target ? upweight : 1.0;
    SamplingPlan plan{std::move(entries), target, upweight, {}};
    plan.probabilities.reserve(plan.entries.size());
    for (const auto& e : plan.entries) plan.probabilities.push_back((e.community == target ? upweight : 1.0) / total);
    return plan;
}

/// Weighted i.i.d. draws with replacement.
inline std::vector<std::size_t> sample_batch_indices(const SamplingPlan& plan, std::size_t batch_size,
                                                     std::mt19937_64& rng) {
    std::discrete_distribution<std::size_t> dist(plan.probabilities.begin(), plan.probabilities.end());
    std::vector<std::size_t> out(batch_size);
    for (auto& i : out) i = dist(rng);
    return out;
}

inline std::vector<std::size_t> sample_batch_indices(const SamplingPlan& plan, std::size_t batch_size,
                                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_batch_indices(plan, batch_size, rng);
}

inline nlohmann::json to_json(const SamplingPlan& plan) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        const auto& e = plan.entries[i];
        entries.push_back({{"path", e.path},
                           {"source_id", e.source_id},
                           {"community", to_string(e.community)},
                           {"probability", plan.probabilities[i]}});
    }
    return {{"target_community", to_string(plan.target_community)}, {"upweight", plan.upweight}, {"entries", entries}};
}

/// Probabilities are recomputed from the labels, never trusted from disk.
inline SamplingPlan plan_from_json(const nlohmann::json& j) {
    try {
        std::vector<ManifestEntry> entries;
        for (const auto& e : j.at("entries"))
            entries.push_back({e.at("path").get<std::string>(), e.at("source_id").get<std::string>(),
                               parse_community(e.at("community").get<std::string>())});
        return build_plan(std::move(entries), parse_community(j.at("target_community").get<std::string>()),
                          j.at("upweight").get<double>());
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed plan: ") + ex.what());
    }
}

} // namespace colsig
