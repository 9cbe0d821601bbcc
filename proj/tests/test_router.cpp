#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace stscq;

namespace {

std::vector<RoutingDistribution> as_dists(const std::vector<oracle::Vec>& v)
{
    std::vector<RoutingDistribution> out;
    for (const auto& p : v)
        out.push_back({Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()))});
    return out;
}

oracle::Vec random_simplex(oracle::Gen& g, int M)
{
    oracle::Vec p(M);
    double s = 0.0;
    for (double& v : p) {
        v = g.coin(0.2) ? 0.0 : g.real(0.0, 1.0);
        s += v;
    }
    if (s == 0.0) {
        p[0] = 1.0;
        return p;
    }
    for (double& v : p)
        v /= s;
    return p;
}

} // namespace

TEST(RouteLearned, ZeroOutputLayerGivesUniform)
{
    auto p = init_router(3, 5, 6, 1);
    p.W2.setZero();
    oracle::Gen g(1);
    const auto r = route_learned(g.matrix(4, 3, false), p);
    EXPECT_EQ(r.group_index, 0);
    for (int i = 0; i < 6; ++i)
        EXPECT_NEAR(r.dist.probs(i), 1.0 / 6, 1e-15);
}

TEST(RouteLearned, DominantBias)
{
    for (int M = 1; M <= 16; ++M) {
        auto p = RouterParams::zeros(2, 4, M);
        p.b2(0) = 10.0;
        const auto r = route_learned(TokenMatrix::Ones(3, 2), p);
        EXPECT_EQ(r.group_index, 0);
        EXPECT_GT(r.dist.probs(0), 0.99);
    }
}

TEST(RouteLearned, MatchesLoopForwardAndSumsToOne)
{
    oracle::Gen g(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = g.integer(1, 8), h = g.integer(1, 16), M = g.integer(1, 12);
        const auto p = init_router(d, h, M, trial);
        const TokenMatrix z = g.matrix(g.integer(1, 6), d, false);
        const auto r = route_learned(z, p);
        const auto expect = oracle::router_probs(z, p);
        double sum = 0.0;
        for (int i = 0; i < M; ++i) {
            EXPECT_NEAR(r.dist.probs(i), expect[i], 1e-12);
            sum += r.dist.probs(i);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    try {
        route_learned(TokenMatrix::Zero(2, 3), init_router(4, 2, 2, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(RouteNaive, PicksExactGroupAndMinimizesError)
{
    oracle::Gen g(3);
    auto pool = g.pool(4, 3, 5, 2, false, false);
    TokenMatrix z(3, 2);
    for (int t = 0; t < 3; ++t)
        z.row(t) = pool.group(2).sub(t).codes.row(t);
    EXPECT_EQ(route_naive(z, pool), 2);

    for (int trial = 0; trial < 100; ++trial) {
        const TokenMatrix r = g.matrix(3, 2, false);
        const int chosen = route_naive(r, pool);
        const auto errs = group_errors(r, pool);
        for (int i = 0; i < 4; ++i)
            EXPECT_LE(errs[chosen], errs[i]);
    }
    const auto single = g.pool(1, 3, 5, 2, true, false);
    EXPECT_EQ(route_naive(g.matrix(3, 2, false), single), 0);
}

TEST(LossEntropy, KnownValues)
{
    const std::vector<RoutingDistribution> uniform{RoutingDistribution::uniform(16)};
    EXPECT_NEAR(loss_entropy(uniform), -std::log(16.0), 1e-12);
    const std::vector<RoutingDistribution> hot{RoutingDistribution::one_hot(5, 3)};
    EXPECT_EQ(loss_entropy(hot), 0.0);
    const std::vector<RoutingDistribution> opposite{RoutingDistribution::one_hot(2, 0),
                                                    RoutingDistribution::one_hot(2, 1)};
    EXPECT_NEAR(loss_entropy(opposite), -std::log(2.0), 1e-12);
    try {
        loss_entropy(std::vector<RoutingDistribution>{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
    }
}

TEST(LossDecisive, KnownValues)
{
    EXPECT_EQ(loss_decisive(RoutingDistribution::one_hot(7, 2)), 0.0);
    EXPECT_NEAR(loss_decisive(RoutingDistribution::uniform(16)), std::log(16.0) / 16, 1e-12);
    EXPECT_NEAR(loss_decisive(RoutingDistribution::uniform(2)), std::log(2.0) / 2, 1e-12);
}

TEST(LossQuantGuided, KnownValues)
{
    oracle::Gen g(4);
    const std::vector<double> equal(6, 3.5);
    const auto p = random_simplex(g, 6);
    EXPECT_NEAR(loss_quant_guided(as_dists({p})[0], equal), 0.0, 1e-15);
    const std::vector<double> errs{1.0, 5.0, 2.0, 9.0};
    EXPECT_NEAR(loss_quant_guided(RoutingDistribution::uniform(4), errs), 0.0, 1e-15);

    double best = std::numeric_limits<double>::infinity();
    int best_i = -1;
    for (int i = 0; i < 4; ++i) {
        const double v = loss_quant_guided(RoutingDistribution::one_hot(4, i), errs);
        if (v < best) {
            best = v;
            best_i = i;
        }
    }
    EXPECT_EQ(best_i, 0);
    EXPECT_NEAR(best, (1.0 - 17.0 / 4) / 4, 1e-15);
    try {
        loss_quant_guided(RoutingDistribution::uniform(3), errs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
}

TEST(LossRouter, CompositeCases)
{
    const std::vector<RoutingDistribution> u{RoutingDistribution::uniform(16)};
    const std::vector<std::vector<double>> e{std::vector<double>(16, 2.0)};
    EXPECT_NEAR(loss_router(u, e, {1.0, 1.0}), -2.599302, 1e-6);

    oracle::Gen g(5);
    std::vector<oracle::Vec> dists;
    std::vector<std::vector<double>> errors;
    for (int n = 0; n < 7; ++n) {
        dists.push_back(random_simplex(g, 5));
        std::vector<double> ev(5);
        for (double& v : ev)
            v = g.real(0.0, 10.0);
        errors.push_back(ev);
    }
    const auto d = as_dists(dists);
    double qua = 0.0, dec = 0.0;
    for (int n = 0; n < 7; ++n) {
        qua += oracle::quant_guided(dists[n], errors[n]);
        dec += oracle::decisive(dists[n]);
    }
    EXPECT_NEAR(loss_router(d, errors, {0.0, 0.0}), qua / 7, 1e-12);
    const double expect = qua / 7 + 0.3 * oracle::neg_entropy_of_mean(dists) + 0.7 * dec / 7;
    EXPECT_NEAR(loss_router(d, errors, {0.3, 0.7}), expect, 1e-12);
}

TEST(LossProperties, BoundsAndShiftInvariance)
{
    oracle::Gen g(6);
    for (int trial = 0; trial < 300; ++trial) {
        const int M = g.integer(1, 16);
        const auto p = random_simplex(g, M);
        const auto d = as_dists({p});
        const double ent = loss_entropy(d);
        const double dec = loss_decisive(d[0]);
        EXPECT_GE(ent, -std::log(static_cast<double>(M)) - 1e-12);
        EXPECT_LE(ent, 1e-12);
        EXPECT_GE(dec, -1e-12);
        EXPECT_LE(dec, std::log(static_cast<double>(M)) / M + 1e-12);

        std::vector<double> e(M), shifted(M);
        const double c = g.real(-50.0, 50.0);
        for (int i = 0; i < M; ++i) {
            e[i] = g.real(0.0, 10.0);
            shifted[i] = e[i] + c;
        }
        EXPECT_NEAR(loss_quant_guided(d[0], e), loss_quant_guided(d[0], shifted), 1e-10);
    }
}

TEST(LossGradient, MatchesFiniteDifferences)
{
    oracle::Gen g(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = g.integer(1, 6), h = g.integer(2, 12), M = g.integer(2, 8), N = g.integer(1, 6);
        auto p = init_router(d, h, M, 100 + trial);
        for (Eigen::Index i = 0; i < p.b1.size(); ++i)
            p.b1(i) = g.real(-0.5, 0.5);
        for (Eigen::Index i = 0; i < p.b2.size(); ++i)
            p.b2(i) = g.real(-0.5, 0.5);
        std::vector<Vector> pooled;
        std::vector<oracle::Vec> errors;
        for (int n = 0; n < N; ++n) {
            Vector x(d);
            for (int j = 0; j < d; ++j)
                x(j) = g.real(-2.0, 2.0);
            pooled.push_back(x);
            oracle::Vec e(M);
            for (double& v : e)
                v = g.real(0.0, 5.0);
            errors.push_back(e);
        }
        const RouterLossWeights w{g.real(0.0, 2.0), g.real(0.0, 2.0)};
        EXPECT_LE(oracle::gradient_relative_error(p, pooled, errors, w, 1e-5), 1e-4);
    }
}

TEST(RouterFile, RoundTrip)
{
    const auto p = init_router(3, 7, 5, 9);
    const auto bytes = serialize_router(p);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "STSCQRTR");
    EXPECT_EQ(bytes.size(), 8u + 1 + 6 + 8 * p.parameter_count());
    EXPECT_EQ(deserialize_router(bytes), p);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(deserialize_router(extra), Error);
}

TEST(Policy, ParseAndPrint)
{
    EXPECT_EQ(parse_policy("nn"), RoutingPolicy::NearestNeighbor);
    EXPECT_EQ(parse_policy("CR"), RoutingPolicy::CodebookRouting);
    EXPECT_EQ(to_string(RoutingPolicy::CodebookRouting), "cr");
    EXPECT_THROW(parse_policy("best"), Error);
}
