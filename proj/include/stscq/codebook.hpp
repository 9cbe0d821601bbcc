#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/error.hpp"
#include "stscq/random.hpp"
#include "stscq/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stscq {

/// K code vectors of dimension d, one per row.
struct Codebook {
    RowMatrix codes;

    Codebook() = default;
    explicit Codebook(RowMatrix c) : codes(std::move(c))
    {
        require(codes.rows() >= 1, ErrorCode::InvalidArgument, "codebook needs at least one code");
    }
    Codebook(int K, int d) : Codebook(RowMatrix::Zero(K, d)) {}

    int K() const noexcept { return static_cast<int>(codes.rows()); }
    int dim() const noexcept { return static_cast<int>(codes.cols()); }
    unsigned bit_width() const noexcept { return ceil_log2(static_cast<std::uint64_t>(K())); }

    friend bool operator==(const Codebook& a, const Codebook& b)
    {
        return a.codes.rows() == b.codes.rows() && a.codes.cols() == b.codes.cols() && a.codes == b.codes;
    }
};

/// One sub-codebook per token position. A token-shared group stores a single
/// codebook that every position refers to.
class TokenSpecificGroup {
public:
    TokenSpecificGroup() = default;

    static TokenSpecificGroup shared(Codebook book, int T)
    {
        require(T >= 1, ErrorCode::InvalidArgument, "token count must be positive");
        TokenSpecificGroup g;
        g.T_ = T;
        g.token_shared_ = true;
        g.books_.push_back(std::move(book));
        return g;
    }

    static TokenSpecificGroup specific(std::vector<Codebook> books)
    {
        require(!books.empty(), ErrorCode::InvalidArgument, "group needs at least one sub-codebook");
        for (const auto& b : books)
            require(b.K() == books.front().K() && b.dim() == books.front().dim(), ErrorCode::ShapeMismatch,
                    "sub-codebooks must share K and d");
        TokenSpecificGroup g;
        g.T_ = static_cast<int>(books.size());
        g.token_shared_ = false;
        g.books_ = std::move(books);
        return g;
    }

    int T() const noexcept { return T_; }
    int K() const noexcept { return books_.front().K(); }
    int dim() const noexcept { return books_.front().dim(); }
    bool token_shared() const noexcept { return token_shared_; }

    const Codebook& sub(int t) const { return books_[token_shared_ ? 0 : t]; }
    Codebook& sub(int t) { return books_[token_shared_ ? 0 : t]; }

    /// Distinct codebooks backing this group (1 when token-shared, else T).
    std::span<const Codebook> books() const noexcept { return books_; }
    std::span<Codebook> books() noexcept { return books_; }

    friend bool operator==(const TokenSpecificGroup&, const TokenSpecificGroup&) = default;

private:
    int T_ = 0;
    bool token_shared_ = true;
    std::vector<Codebook> books_;
};

/// M switchable groups with uniform (T, K, d).
class CodebookPool {
public:
    CodebookPool() = default;

    explicit CodebookPool(std::vector<TokenSpecificGroup> groups) : groups_(std::move(groups))
    {
        require(!groups_.empty(), ErrorCode::InvalidArgument, "pool needs at least one group");
        const auto& g0 = groups_.front();
        for (const auto& g : groups_)
            require(g.T() == g0.T() && g.K() == g0.K() && g.dim() == g0.dim() && g.token_shared() == g0.token_shared(),
                    ErrorCode::ShapeMismatch, "groups must share T, K, d and the token-shared flag");
    }

    int M() const noexcept { return static_cast<int>(groups_.size()); }
    int T() const noexcept { return groups_.front().T(); }
    int K() const noexcept { return groups_.front().K(); }
    int dim() const noexcept { return groups_.front().dim(); }
    bool token_shared() const noexcept { return groups_.front().token_shared(); }

    unsigned router_bits() const noexcept { return ceil_log2(static_cast<std::uint64_t>(M())); }
    unsigned index_bits() const noexcept { return ceil_log2(static_cast<std::uint64_t>(K())); }
    std::uint64_t bits_per_image() const noexcept
    {
        return static_cast<std::uint64_t>(T()) * index_bits() + router_bits();
    }

    const TokenSpecificGroup& group(int i) const { return groups_[i]; }
    TokenSpecificGroup& group(int i) { return groups_[i]; }
    std::span<const TokenSpecificGroup> groups() const noexcept { return groups_; }

    friend bool operator==(const CodebookPool&, const CodebookPool&) = default;

private:
    std::vector<TokenSpecificGroup> groups_;
};

struct UtilizationStats {
    std::vector<double> per_token_rates;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

/// Per-token code-usage counts, T x K.
class UsageCounts {
public:
    UsageCounts(int T, int K) : T_(T), K_(K), counts_(static_cast<std::size_t>(T) * K, 0) {}

    void add(int t, int code) { ++counts_[static_cast<std::size_t>(t) * K_ + code]; }
    std::uint64_t at(int t, int code) const { return counts_[static_cast<std::size_t>(t) * K_ + code]; }
    std::span<const std::uint64_t> token(int t) const
    {
        return std::span(counts_).subspan(static_cast<std::size_t>(t) * K_, K_);
    }
    void clear() { std::fill(counts_.begin(), counts_.end(), 0); }

    int T() const noexcept { return T_; }
    int K() const noexcept { return K_; }

private:
    int T_;
    int K_;
    std::vector<std::uint64_t> counts_;
};

inline UtilizationStats utilization(const UsageCounts& usage)
{
    require(usage.T() >= 1 && usage.K() >= 1, ErrorCode::InvalidArgument, "empty usage table");
    UtilizationStats s;
    for (int t = 0; t < usage.T(); ++t) {
        const auto row = usage.token(t);
        const auto used = std::count_if(row.begin(), row.end(), [](std::uint64_t c) { return c > 0; });
        s.per_token_rates.push_back(100.0 * static_cast<double>(used) / usage.K());
    }
    const auto& r = s.per_token_rates;
    s.min = *std::min_element(r.begin(), r.end());
    s.max = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double v : r)
        sum += v;
    s.mean = sum / r.size();
    double var = 0.0;
    for (double v : r)
        var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / r.size());
    return s;
}

namespace detail {

inline double squared_distance(const double* a, const double* b, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

} // namespace detail

struct KMeansOptions {
    int min_iterations = 10;
    int max_iterations = 100;
};

/// k-means++ seeding followed by Lloyd iterations on the rows of `samples`.
inline Codebook init_kmeanspp(const RowMatrix& samples, int K, std::uint64_t seed, KMeansOptions opts = {})
{
    require(K >= 1, ErrorCode::InvalidArgument, "K must be positive");
    const auto n = samples.rows();
    const int d = static_cast<int>(samples.cols());
    require(n >= K, ErrorCode::TooFewSamples,
            std::to_string(n) + " samples cannot seed " + std::to_string(K) + " codes");

    Rng rng(seed);
    RowMatrix centers(K, d);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

    auto absorb = [&](int c, Eigen::Index row) {
        centers.row(c) = samples.row(row);
        for (Eigen::Index i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], detail::squared_distance(samples.row(i).data(), centers.row(c).data(), d));
    };

    absorb(0, static_cast<Eigen::Index>(rng.index(n)));
    for (int c = 1; c < K; ++c) {
        double total = 0.0;
        for (double w : nearest)
            total += w;
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += nearest[i];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
            while (nearest[pick] == 0.0 && pick > 0)
                --pick;
        } else {
            pick = static_cast<Eigen::Index>(rng.index(n));
        }
        absorb(c, pick);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < K; ++c) {
                const double dist = detail::squared_distance(samples.row(i).data(), centers.row(c).data(), d);
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        RowMatrix sums = RowMatrix::Zero(K, d);
        std::vector<Eigen::Index> counts(K, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[i]) += samples.row(i);
            ++counts[assign[i]];
        }
        for (int c = 0; c < K; ++c)
            if (counts[c] > 0)
                centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        if (!changed && iter + 1 >= opts.min_iterations)
            break;
    }
    return Codebook(std::move(centers));
}

/// T independent copies of `shared`, one per token position.
inline TokenSpecificGroup derive_token_specific(const Codebook& shared, int T)
{
    require(T >= 1, ErrorCode::InvalidArgument, "token count must be positive");
    return TokenSpecificGroup::specific(std::vector<Codebook>(static_cast<std::size_t>(T), shared));
}

inline CodebookPool derive_token_specific(const CodebookPool& pool)
{
    std::vector<TokenSpecificGroup> groups;
    for (const auto& g : pool.groups())
        groups.push_back(g.token_shared() ? derive_token_specific(g.sub(0), g.T()) : g);
    return CodebookPool(std::move(groups));
}

/// Moves every code with zero usage onto a randomly drawn sample plus
/// Gaussian noise of scale `noise`. Returns the number of codes moved.
inline int reseed_dead_codes(Codebook& book, std::span<const std::uint64_t> usage, const RowMatrix& candidates,
                             Rng& rng, double noise = 1e-3)
{
    if (candidates.rows() == 0)
        return 0;
    int moved = 0;
    for (int k = 0; k < book.K(); ++k) {
        if (usage[k] > 0)
            continue;
        const auto row = static_cast<Eigen::Index>(rng.index(candidates.rows()));
        for (int j = 0; j < book.dim(); ++j)
            book.codes(k, j) = candidates(row, j) + noise * rng.normal();
        ++moved;
    }
    return moved;
}

// Pool file: "STSCQPOOL", version u8, M u16, T u16, K u32, d u16,
// token_shared u8, then codes as f64 LE in (group, token, code, dim) order.
// Token-shared pools still write all T token slots.

inline std::vector<std::uint8_t> serialize_pool(const CodebookPool& pool)
{
    io::ByteWriter w;
    w.magic("STSCQPOOL");
    w.u8(1);
    w.u16(static_cast<std::uint16_t>(pool.M()));
    w.u16(static_cast<std::uint16_t>(pool.T()));
    w.u32(static_cast<std::uint32_t>(pool.K()));
    w.u16(static_cast<std::uint16_t>(pool.dim()));
    w.u8(pool.token_shared() ? 1 : 0);
    for (const auto& g : pool.groups())
        for (int t = 0; t < g.T(); ++t) {
            const auto& codes = g.sub(t).codes;
            for (Eigen::Index k = 0; k < codes.rows(); ++k)
                for (Eigen::Index j = 0; j < codes.cols(); ++j)
                    w.f64(codes(k, j));
        }
    return w.take();
}

inline CodebookPool deserialize_pool(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    require(r.magic("STSCQPOOL"), ErrorCode::BadMagic, "not a codebook pool file");
    const auto version = r.u8();
    require(version == 1, ErrorCode::BadVersion, "unsupported pool version " + std::to_string(version));
    const int M = r.u16();
    const int T = r.u16();
    const auto K = r.u32();
    const int d = r.u16();
    const bool shared = r.u8() != 0;
    require(M >= 1 && T >= 1 && K >= 1 && d >= 1, ErrorCode::BadFormat, "zero-sized pool header");
    const std::size_t expected = std::size_t{8} * M * T * K * d;
    require(r.remaining() >= expected, ErrorCode::Truncated, "pool payload is truncated");

    std::vector<TokenSpecificGroup> groups;
    for (int g = 0; g < M; ++g) {
        std::vector<Codebook> books;
        for (int t = 0; t < T; ++t) {
            RowMatrix codes(K, d);
            for (std::uint32_t k = 0; k < K; ++k)
                for (int j = 0; j < d; ++j)
                    codes(k, j) = r.f64();
            books.emplace_back(std::move(codes));
        }
        if (shared) {
            for (const auto& b : books)
                require(b == books.front(), ErrorCode::BadFormat, "token-shared pool has differing token slots");
            groups.push_back(TokenSpecificGroup::shared(std::move(books.front()), T));
        } else {
            groups.push_back(TokenSpecificGroup::specific(std::move(books)));
        }
    }
    r.expect_end();
    return CodebookPool(std::move(groups));
}

inline void save_pool(const std::string& path, const CodebookPool& pool) { io::write_file(path, serialize_pool(pool)); }
inline CodebookPool load_pool(const std::string& path) { return deserialize_pool(io::read_file(path)); }

} // namespace stscq
