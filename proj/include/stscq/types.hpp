#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace stscq {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// T x d matrix of continuous latent tokens for one image, one token per row.
using TokenMatrix = RowMatrix;

/// Smallest b with 2^b >= n; 0 for n <= 1.
constexpr unsigned ceil_log2(std::uint64_t n) noexcept
{
    unsigned bits = 0;
    while (bits < 64 && (std::uint64_t{1} << bits) < n)
        ++bits;
    return bits;
}

inline bool all_finite(const RowMatrix& m) { return m.allFinite(); }

} // namespace stscq
