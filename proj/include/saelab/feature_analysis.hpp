#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "saelab/types.hpp"

namespace saelab {

struct TokenActivations {
    std::vector<std::string> tokens;
    Matrix activations;  // T x n
};

/// Tokens ranked by activation of feature k (descending, ties by position);
/// zero-activation tokens are dropped.
std::vector<std::pair<std::string, double>> top_activating_tokens(const TokenActivations& ta, std::size_t k,
                                                                  std::size_t top_n);

enum class Pooling { Max, Mean };
Pooling parse_pooling(std::string_view s);

/// ceil(fraction * n) feature ids with the largest pooled activation, ties to the lowest id.
/// Returned ids are sorted ascending.
std::vector<std::size_t> top_fraction_features(const Vector& acts, double fraction);
std::vector<std::size_t> top_fraction_features(const Matrix& acts, double fraction, Pooling pooling = Pooling::Max);

struct OverlapResult {
    double top_fraction = 0.0;
    std::size_t n = 0;
    std::vector<std::size_t> set_a;
    std::vector<std::size_t> set_b;
    std::size_t intersection = 0;
    double jaccard = 0.0;

    nlohmann::json to_json() const;
};

OverlapResult feature_overlap(const Matrix& a, const Matrix& b, double fraction, Pooling pooling = Pooling::Max);

/// idf(w) = ln(N / df(w)) over case-folded keywords; descending, ties alphabetical.
std::vector<std::pair<std::string, double>> idf_keyword_rank(const std::vector<std::vector<std::string>>& docs);

}  // namespace saelab
