#include "saelab/feature_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab {

std::vector<std::pair<std::string, double>> top_activating_tokens(const TokenActivations& ta, std::size_t k,
                                                                  std::size_t top_n) {
    if (static_cast<std::size_t>(ta.activations.rows()) != ta.tokens.size())
        throw InvalidArgument(fmt::format("{} tokens but {} activation rows", ta.tokens.size(), ta.activations.rows()));
    if (k >= static_cast<std::size_t>(ta.activations.cols()))
        throw InvalidArgument(fmt::format("feature {} out of range [0, {})", k, ta.activations.cols()));
    if (top_n == 0) throw InvalidArgument("top_n must be >= 1");

    std::vector<std::size_t> positions;
    for (std::size_t t = 0; t < ta.tokens.size(); ++t)
        if (ta.activations(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) != 0.0) positions.push_back(t);
    auto value = [&](std::size_t t) {
        return ta.activations(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
    };
    std::stable_sort(positions.begin(), positions.end(),
                     [&](std::size_t a, std::size_t b) { return value(a) > value(b); });
    positions.resize(std::min(positions.size(), top_n));

    std::vector<std::pair<std::string, double>> out;
    for (std::size_t t : positions) out.emplace_back(ta.tokens[t], value(t));
    return out;
}

Pooling parse_pooling(std::string_view s) {
    if (s == "max") return Pooling::Max;
    if (s == "mean") return Pooling::Mean;
    throw ConfigError(fmt::format("unknown pooling '{}' (expected max or mean)", s));
}

std::vector<std::size_t> top_fraction_features(const Vector& acts, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw InvalidArgument(fmt::format("fraction must be in (0, 1], got {}", fraction));
    const std::size_t n = static_cast<std::size_t>(acts.size());
    const auto count = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count), ids.end(),
                      [&](std::size_t a, std::size_t b) {
                          double va = acts(static_cast<Eigen::Index>(a));
                          double vb = acts(static_cast<Eigen::Index>(b));
                          return va != vb ? va > vb : a < b;
                      });
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::size_t> top_fraction_features(const Matrix& acts, double fraction, Pooling pooling) {
    if (acts.rows() == 0) throw InvalidArgument("top_fraction_features: no positions to pool");
    Vector pooled = pooling == Pooling::Max ? Vector(acts.colwise().maxCoeff().transpose())
                                            : Vector(acts.colwise().mean().transpose());
    return top_fraction_features(pooled, fraction);
}

OverlapResult feature_overlap(const Matrix& a, const Matrix& b, double fraction, Pooling pooling) {
    if (a.cols() != b.cols())
        throw InvalidArgument(fmt::format("feature_overlap: n mismatch ({} vs {})", a.cols(), b.cols()));
    OverlapResult r;
    r.top_fraction = fraction;
    r.n = static_cast<std::size_t>(a.cols());
    r.set_a = top_fraction_features(a, fraction, pooling);
    r.set_b = top_fraction_features(b, fraction, pooling);
    std::vector<std::size_t> common;
    std::set_intersection(r.set_a.begin(), r.set_a.end(), r.set_b.begin(), r.set_b.end(), std::back_inserter(common));
    r.intersection = common.size();
    std::size_t uni = r.set_a.size() + r.set_b.size() - r.intersection;
    r.jaccard = uni == 0 ? 0.0 : static_cast<double>(r.intersection) / static_cast<double>(uni);
    return r;
}

nlohmann::json OverlapResult::to_json() const {
    return {{"top_fraction", top_fraction}, {"n", n},          {"jaccard", jaccard},
            {"intersection", intersection}, {"a_size", set_a.size()}, {"b_size", set_b.size()}};
}

std::vector<std::pair<std::string, double>> idf_keyword_rank(const std::vector<std::vector<std::string>>& docs) {
    if (docs.empty()) throw InvalidArgument("idf_keyword_rank: no documents");
    std::map<std::string, std::size_t> df;
    for (const auto& doc : docs) {
        std::set<std::string> seen;
        for (const auto& word : doc) {
            std::string folded = word;
            std::transform(folded.begin(), folded.end(), folded.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            seen.insert(std::move(folded));
        }
        for (const auto& w : seen) ++df[w];
    }
    const double n_docs = static_cast<double>(docs.size());
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [word, count] : df) out.emplace_back(word, std::log(n_docs / static_cast<double>(count)));
    // df is keyed alphabetically, so a stable sort keeps ties in alphabetical order.
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

}  // namespace saelab
