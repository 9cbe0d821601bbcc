#pragma once

#include "stscq/codebook.hpp"
#include "stscq/error.hpp"
#include "stscq/types.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace stscq {

struct QuantizedImage {
    int group_index = 0;
    std::vector<std::uint32_t> indices;

    friend bool operator==(const QuantizedImage&, const QuantizedImage&) = default;
};

struct CodeMatch {
    int index = 0;
    double squared_error = 0.0;
};

struct GroupMatch {
    std::vector<std::uint32_t> indices;
    double total_error = 0.0;
};

struct QuantizeOptions {
    /// Abandon a candidate once its partial distance reaches the running
    /// best. Produces identical indices and errors to the full scan.
    bool partial_distance = false;
};

inline CodeMatch quantize_one(std::span<const double> z, const Codebook& cb, QuantizeOptions opts = {})
{
    const int d = cb.dim();
    require(static_cast<int>(z.size()) == d, ErrorCode::DimensionMismatch,
            "vector of length " + std::to_string(z.size()) + " against codebook of dimension " + std::to_string(d));
    CodeMatch best{0, std::numeric_limits<double>::infinity()};
    for (int k = 0; k < cb.K(); ++k) {
        const double* e = cb.codes.row(k).data();
        double s = 0.0;
        bool abandoned = false;
        for (int j = 0; j < d; ++j) {
            const double diff = z[j] - e[j];
            s += diff * diff;
            if (opts.partial_distance && s >= best.squared_error) {
                abandoned = true;
                break;
            }
        }
        // Strict comparison keeps the lowest index on ties.
        if (!abandoned && s < best.squared_error)
            best = {k, s};
    }
    return best;
}

inline std::span<const double> token_row(const TokenMatrix& tokens, int t)
{
    return {tokens.data() + static_cast<std::size_t>(t) * tokens.cols(), static_cast<std::size_t>(tokens.cols())};
}

inline GroupMatch quantize_group(const TokenMatrix& tokens, const TokenSpecificGroup& g, QuantizeOptions opts = {})
{
    require(tokens.rows() == g.T() && tokens.cols() == g.dim(), ErrorCode::ShapeMismatch,
            "tokens " + std::to_string(tokens.rows()) + "x" + std::to_string(tokens.cols()) + " vs group " +
                std::to_string(g.T()) + "x" + std::to_string(g.dim()));
    GroupMatch out;
    out.indices.resize(g.T());
    for (int t = 0; t < g.T(); ++t) {
        const auto m = quantize_one(token_row(tokens, t), g.sub(t), opts);
        out.indices[t] = static_cast<std::uint32_t>(m.index);
        out.total_error += m.squared_error;
    }
    return out;
}

inline void check_pool_shape(const TokenMatrix& tokens, const CodebookPool& pool)
{
    require(tokens.rows() == pool.T() && tokens.cols() == pool.dim(), ErrorCode::ShapeMismatch,
            "tokens " + std::to_string(tokens.rows()) + "x" + std::to_string(tokens.cols()) + " vs pool " +
                std::to_string(pool.T()) + "x" + std::to_string(pool.dim()));
}

/// Total quantization error of `tokens` under every group of the pool.
inline std::vector<double> group_errors(const TokenMatrix& tokens, const CodebookPool& pool, QuantizeOptions opts = {})
{
    check_pool_shape(tokens, pool);
    std::vector<double> errors(pool.M());
    for (int i = 0; i < pool.M(); ++i)
        errors[i] = quantize_group(tokens, pool.group(i), opts).total_error;
    return errors;
}

inline TokenMatrix dequantize(const QuantizedImage& q, const CodebookPool& pool)
{
    require(q.group_index >= 0 && q.group_index < pool.M(), ErrorCode::IndexOutOfRange,
            "group index " + std::to_string(q.group_index) + " outside [0, " + std::to_string(pool.M()) + ")");
    require(static_cast<int>(q.indices.size()) == pool.T(), ErrorCode::IndexOutOfRange,
            "expected " + std::to_string(pool.T()) + " indices, got " + std::to_string(q.indices.size()));
    const auto& g = pool.group(q.group_index);
    TokenMatrix tokens(pool.T(), pool.dim());
    for (int t = 0; t < pool.T(); ++t) {
        require(q.indices[t] < static_cast<std::uint32_t>(pool.K()), ErrorCode::IndexOutOfRange,
                "code index " + std::to_string(q.indices[t]) + " outside [0, " + std::to_string(pool.K()) + ")");
        tokens.row(t) = g.sub(t).codes.row(q.indices[t]);
    }
    return tokens;
}

} // namespace stscq
