#pragma once

#include <nlohmann/json.hpp>

#include "visage/pca.hpp"

namespace visage {

// KNN-based beautification baseline: search the attractive geometry domain
// for the K nearest codes and blend them by inverse distance.
struct GeometryBank {
    std::vector<GeometryCode> codes;
    std::vector<std::string> ids;

    void validate() const {
        if (codes.empty()) throw DegenerateInput("geometry bank: empty");
        if (!ids.empty() && ids.size() != codes.size())
            throw ParseError("geometry bank: id/code count mismatch");
        for (const auto& c : codes)
            if (c.size() != codes[0].size())
                throw ShapeError("geometry bank: inconsistent code dimensions");
    }
};

namespace detail {

inline std::vector<std::pair<double, std::size_t>> ranked_distances(const GeometryBank& bank,
                                                                    const GeometryCode& query) {
    bank.validate();
    if (query.size() != bank.codes[0].size())
        throw ShapeError("geometry bank: query dimension mismatch");
    std::vector<std::pair<double, std::size_t>> ranked(bank.codes.size());
    for (std::size_t i = 0; i < bank.codes.size(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double d = query[j] - bank.codes[i][j];
            sq += d * d;
        }
        ranked[i] = {std::sqrt(sq), i};
    }
    // Ties in distance break toward the earlier bank entry.
    std::sort(ranked.begin(), ranked.end());
    return ranked;
}

}  // namespace detail

// Inverse-distance-weighted mean of the K nearest bank codes. A query that
// coincides with a bank element short-circuits to that element.
inline GeometryCode knn_enhance(const GeometryBank& bank, const GeometryCode& query,
                                std::size_t k = 3) {
    const auto ranked = detail::ranked_distances(bank, query);
    if (k == 0 || k > ranked.size())
        throw DegenerateInput("knn_enhance: K must be in [1, bank size]");
    if (ranked[0].first == 0.0) return bank.codes[ranked[0].second];
    double wsum = 0.0;
    GeometryCode out(query.size(), 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        const double w = 1.0 / ranked[r].first;
        wsum += w;
        const GeometryCode& c = bank.codes[ranked[r].second];
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * c[j];
    }
    for (double& v : out) v /= wsum;
    return out;
}

inline std::size_t nearest_reference_index(const GeometryBank& bank, const GeometryCode& query) {
    return detail::ranked_distances(bank, query)[0].second;
}

inline std::string nearest_reference(const GeometryBank& bank, const GeometryCode& query) {
    const std::size_t i = nearest_reference_index(bank, query);
    return bank.ids.empty() ? std::to_string(i) : bank.ids[i];
}

inline nlohmann::json bank_to_json(const GeometryBank& bank) {
    nlohmann::json j;
    j["version"] = 1;
    j["codes"] = bank.codes;
    j["ids"] = bank.ids;
    return j;
}

inline GeometryBank bank_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw ParseError("geometry bank file: missing or unsupported version");
    GeometryBank bank;
    bank.codes = j.at("codes").get<std::vector<GeometryCode>>();
    if (j.contains("ids")) bank.ids = j["ids"].get<std::vector<std::string>>();
    bank.validate();
    return bank;
}

}  // namespace visage
