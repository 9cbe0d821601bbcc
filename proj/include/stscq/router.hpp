#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/codebook.hpp"
#include "stscq/error.hpp"
#include "stscq/quantizer.hpp"
#include "stscq/random.hpp"
#include "stscq/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stscq {

/// Mean-pooled tokens -> ReLU hidden layer -> M logits.
struct RouterParams {
    RowMatrix W1;  // h x d
    Vector b1;     // h
    RowMatrix W2;  // M x h
    Vector b2;     // M

    int d() const noexcept { return static_cast<int>(W1.cols()); }
    int hidden() const noexcept { return static_cast<int>(W1.rows()); }
    int M() const noexcept { return static_cast<int>(W2.rows()); }

    static RouterParams zeros(int d, int h, int M)
    {
        return {RowMatrix::Zero(h, d), Vector::Zero(h), RowMatrix::Zero(M, h), Vector::Zero(M)};
    }

    std::size_t parameter_count() const
    {
        return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size());
    }

    /// Visits every scalar parameter in file order (W1, b1, W2, b2).
    template <typename F>
    void for_each(F&& f)
    {
        for (Eigen::Index i = 0; i < W1.size(); ++i)
            f(W1.data()[i]);
        for (Eigen::Index i = 0; i < b1.size(); ++i)
            f(b1.data()[i]);
        for (Eigen::Index i = 0; i < W2.size(); ++i)
            f(W2.data()[i]);
        for (Eigen::Index i = 0; i < b2.size(); ++i)
            f(b2.data()[i]);
    }

    template <typename F>
    void for_each(F&& f) const
    {
        const_cast<RouterParams*>(this)->for_each([&](double& v) { f(static_cast<const double&>(v)); });
    }

    /// this += scale * other, parameter-wise.
    void add_scaled(const RouterParams& other, double scale)
    {
        W1 += scale * other.W1;
        b1 += scale * other.b1;
        W2 += scale * other.W2;
        b2 += scale * other.b2;
    }

    bool all_finite() const { return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite(); }

    friend bool operator==(const RouterParams&, const RouterParams&) = default;
};

/// He-style random initialisation with zero biases.
inline RouterParams init_router(int d, int h, int M, std::uint64_t seed)
{
    require(d >= 1 && h >= 1 && M >= 1, ErrorCode::InvalidArgument, "router sizes must be positive");
    Rng rng(seed);
    RouterParams p = RouterParams::zeros(d, h, M);
    const double s1 = std::sqrt(2.0 / d);
    const double s2 = std::sqrt(1.0 / h);
    for (Eigen::Index i = 0; i < p.W1.size(); ++i)
        p.W1.data()[i] = s1 * rng.normal();
    for (Eigen::Index i = 0; i < p.W2.size(); ++i)
        p.W2.data()[i] = s2 * rng.normal();
    return p;
}

struct RoutingDistribution {
    Vector probs;

    int M() const noexcept { return static_cast<int>(probs.size()); }

    static RoutingDistribution uniform(int M) { return {Vector::Constant(M, 1.0 / M)}; }
    static RoutingDistribution one_hot(int M, int i)
    {
        RoutingDistribution r{Vector::Zero(M)};
        r.probs(i) = 1.0;
        return r;
    }
};

inline constexpr double kLogFloor = 1e-12;

/// p * ln(p) with 0 ln 0 = 0 and p clamped away from zero inside the log.
inline double xlogx(double p) { return p <= 0.0 ? 0.0 : p * std::log(std::max(p, kLogFloor)); }

inline Vector mean_pool(const TokenMatrix& tokens) { return tokens.colwise().mean().transpose(); }

struct RouterActivations {
    Vector pooled;
    Vector pre;
    Vector hidden;
    Vector logits;
    Vector probs;
};

inline Vector softmax(const Vector& logits)
{
    Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    return p / p.sum();
}

inline RouterActivations router_forward(const Vector& pooled, const RouterParams& p)
{
    require(pooled.size() == p.d(), ErrorCode::DimensionMismatch,
            "pooled input of length " + std::to_string(pooled.size()) + " vs router dimension " + std::to_string(p.d()));
    RouterActivations a;
    a.pooled = pooled;
    a.pre = p.W1 * pooled + p.b1;
    a.hidden = a.pre.cwiseMax(0.0);
    a.logits = p.W2 * a.hidden + p.b2;
    a.probs = softmax(a.logits);
    return a;
}

/// Lowest index among the maxima.
inline int argmax_lowest(const Vector& v)
{
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best))
            best = i;
    return best;
}

struct LearnedRoute {
    int group_index = 0;
    RoutingDistribution dist;
};

inline LearnedRoute route_learned(const TokenMatrix& tokens, const RouterParams& p)
{
    require(tokens.cols() == p.d(), ErrorCode::DimensionMismatch,
            "token dimension " + std::to_string(tokens.cols()) + " vs router dimension " + std::to_string(p.d()));
    auto a = router_forward(mean_pool(tokens), p);
    return {argmax_lowest(a.probs), {std::move(a.probs)}};
}

/// Group with the minimal total quantization error; lowest index on ties.
inline int route_naive(const TokenMatrix& tokens, const CodebookPool& pool, QuantizeOptions opts = {})
{
    const auto errors = group_errors(tokens, pool, opts);
    int best = 0;
    for (int i = 1; i < static_cast<int>(errors.size()); ++i)
        if (errors[i] < errors[best])
            best = i;
    return best;
}

enum class RoutingPolicy { NearestNeighbor, CodebookRouting };

inline std::string_view to_string(RoutingPolicy p) { return p == RoutingPolicy::NearestNeighbor ? "nn" : "cr"; }

inline RoutingPolicy parse_policy(std::string_view s)
{
    if (s == "nn" || s == "NN")
        return RoutingPolicy::NearestNeighbor;
    if (s == "cr" || s == "CR")
        return RoutingPolicy::CodebookRouting;
    throw Error(ErrorCode::InvalidArgument, "unknown routing policy '" + std::string(s) + "'");
}

inline void check_router_for_pool(const RouterParams* router, const CodebookPool& pool)
{
    require(router != nullptr, ErrorCode::UntrainedRouter, "codebook routing requires a trained router");
    require(router->M() == pool.M() && router->d() == pool.dim(), ErrorCode::UntrainedRouter,
            "router shape (d=" + std::to_string(router->d()) + ", M=" + std::to_string(router->M()) +
                ") does not match the pool");
}

inline QuantizedImage quantize_routed(const TokenMatrix& tokens, const CodebookPool& pool, RoutingPolicy policy,
                                      const RouterParams* router = nullptr, QuantizeOptions opts = {})
{
    check_pool_shape(tokens, pool);
    QuantizedImage q;
    if (policy == RoutingPolicy::NearestNeighbor) {
        q.group_index = route_naive(tokens, pool, opts);
    } else {
        check_router_for_pool(router, pool);
        q.group_index = route_learned(tokens, *router).group_index;
    }
    q.indices = quantize_group(tokens, pool.group(q.group_index), opts).indices;
    return q;
}

// Routing losses. All logarithms are natural.

/// Negative entropy of the batch-mean routing distribution.
inline double loss_entropy(std::span<const RoutingDistribution> batch)
{
    require(!batch.empty(), ErrorCode::EmptyBatch, "entropy loss needs at least one distribution");
    const int M = batch.front().M();
    Vector mean = Vector::Zero(M);
    for (const auto& dist : batch) {
        require(dist.M() == M, ErrorCode::LengthMismatch, "distributions of differing length in batch");
        mean += dist.probs;
    }
    mean /= static_cast<double>(batch.size());
    double s = 0.0;
    for (int i = 0; i < M; ++i)
        s += xlogx(mean(i));
    return s;
}

inline double loss_decisive(const RoutingDistribution& dist)
{
    const int M = dist.M();
    double s = 0.0;
    for (int i = 0; i < M; ++i)
        s += xlogx(dist.probs(i));
    return -s / M;
}

/// Probability-weighted centered quantization errors; errors are constants.
inline double loss_quant_guided(const RoutingDistribution& dist, std::span<const double> errors)
{
    const int M = dist.M();
    require(static_cast<int>(errors.size()) == M, ErrorCode::LengthMismatch,
            std::to_string(errors.size()) + " errors for " + std::to_string(M) + " groups");
    double mean = 0.0;
    for (double e : errors)
        mean += e;
    mean /= M;
    double s = 0.0;
    for (int i = 0; i < M; ++i)
        s += dist.probs(i) * (errors[i] - mean);
    return s / M;
}

struct RouterLossWeights {
    double entropy = 0.1;   // lambda_1
    double decisive = 0.1;  // lambda_2
};

/// L_qua + lambda_1 L_ent + lambda_2 L_dec with L_qua and L_dec averaged over the batch.
inline double loss_router(std::span<const RoutingDistribution> dists, std::span<const std::vector<double>> errors,
                          RouterLossWeights w)
{
    require(!dists.empty(), ErrorCode::EmptyBatch, "router loss needs a non-empty batch");
    require(dists.size() == errors.size(), ErrorCode::LengthMismatch, "one error vector per distribution required");
    double qua = 0.0;
    double dec = 0.0;
    for (std::size_t n = 0; n < dists.size(); ++n) {
        qua += loss_quant_guided(dists[n], errors[n]);
        dec += loss_decisive(dists[n]);
    }
    const double N = static_cast<double>(dists.size());
    return qua / N + w.entropy * loss_entropy(dists) + w.decisive * dec / N;
}

struct RouterLossResult {
    double loss = 0.0;
    RouterParams grad;
    std::vector<RoutingDistribution> dists;
};

/// Router loss on a batch of pooled inputs together with its exact gradient
/// with respect to every router weight.
inline RouterLossResult router_loss_and_grad(const RouterParams& p, std::span<const Vector> pooled,
                                             std::span<const std::vector<double>> errors, RouterLossWeights w)
{
    require(!pooled.empty(), ErrorCode::EmptyBatch, "router loss needs a non-empty batch");
    require(pooled.size() == errors.size(), ErrorCode::LengthMismatch, "one error vector per input required");
    const int M = p.M();
    const double N = static_cast<double>(pooled.size());

    std::vector<RouterActivations> acts;
    acts.reserve(pooled.size());
    RouterLossResult out;
    for (const auto& x : pooled) {
        acts.push_back(router_forward(x, p));
        out.dists.push_back({acts.back().probs});
    }
    out.loss = loss_router(out.dists, errors, w);

    Vector mean = Vector::Zero(M);
    for (const auto& a : acts)
        mean += a.probs;
    mean /= N;
    Vector d_mean(M);
    for (int i = 0; i < M; ++i)
        d_mean(i) = mean(i) > 0.0 ? std::log(std::max(mean(i), kLogFloor)) + (mean(i) >= kLogFloor ? 1.0 : 0.0) : 0.0;

    out.grad = RouterParams::zeros(p.d(), p.hidden(), M);
    for (std::size_t n = 0; n < acts.size(); ++n) {
        const auto& a = acts[n];
        const auto& e = errors[n];
        double e_mean = 0.0;
        for (double v : e)
            e_mean += v;
        e_mean /= M;

        // dL/dg for this sample.
        Vector dg(M);
        for (int i = 0; i < M; ++i) {
            const double g = a.probs(i);
            const double d_dec = g > 0.0 ? std::log(std::max(g, kLogFloor)) + (g >= kLogFloor ? 1.0 : 0.0) : 0.0;
            dg(i) = ((e[i] - e_mean) / M - w.decisive * d_dec / M + w.entropy * d_mean(i)) / N;
        }
        // Softmax backward.
        const double inner = a.probs.dot(dg);
        const Vector dlogits = a.probs.cwiseProduct((dg.array() - inner).matrix());

        out.grad.W2.noalias() += dlogits * a.hidden.transpose();
        out.grad.b2 += dlogits;
        Vector dhidden = p.W2.transpose() * dlogits;
        for (Eigen::Index j = 0; j < dhidden.size(); ++j)
            if (a.pre(j) <= 0.0)
                dhidden(j) = 0.0;
        out.grad.W1.noalias() += dhidden * a.pooled.transpose();
        out.grad.b1 += dhidden;
    }
    return out;
}

// Router file: "STSCQRTR", version u8, d u16, h u16, M u16, then W1, b1,
// W2, b2 as f64 LE (matrices row-major).

inline std::vector<std::uint8_t> serialize_router(const RouterParams& p)
{
    io::ByteWriter w;
    w.magic("STSCQRTR");
    w.u8(1);
    w.u16(static_cast<std::uint16_t>(p.d()));
    w.u16(static_cast<std::uint16_t>(p.hidden()));
    w.u16(static_cast<std::uint16_t>(p.M()));
    p.for_each([&](double v) { w.f64(v); });
    return w.take();
}

inline RouterParams deserialize_router(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    require(r.magic("STSCQRTR"), ErrorCode::BadMagic, "not a router file");
    const auto version = r.u8();
    require(version == 1, ErrorCode::BadVersion, "unsupported router version " + std::to_string(version));
    const int d = r.u16();
    const int h = r.u16();
    const int M = r.u16();
    require(d >= 1 && h >= 1 && M >= 1, ErrorCode::BadFormat, "zero-sized router header");
    RouterParams p = RouterParams::zeros(d, h, M);
    p.for_each([&](double& v) { v = r.f64(); });
    r.expect_end();
    return p;
}

inline void save_router(const std::string& path, const RouterParams& p) { io::write_file(path, serialize_router(p)); }
inline RouterParams load_router(const std::string& path) { return deserialize_router(io::read_file(path)); }

} // namespace stscq
