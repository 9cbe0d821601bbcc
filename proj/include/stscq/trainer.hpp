#pragma once

#include "stscq/codebook.hpp"
#include "stscq/dataset.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/latent_transform.hpp"
#include "stscq/quantizer.hpp"
#include "stscq/random.hpp"
#include "stscq/router.hpp"
#include "stscq/types.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace stscq {

struct TrainConfig {
    int M = 8;
    int K = 16;
    int T = 16;
    int d = 8;
    int s = 0;  // K = N / 2^s relative to a reference single codebook of size N; recorded only
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double learning_rate = 1e-2;
    int batch_size = 32;
    int steps_stage1 = 2000;
    int steps_stage2 = 8000;
    int steps_stage3 = 2000;
    std::uint64_t seed = 0;
    int dead_code_epochs = 1;
    int router_hidden = 64;
    double commitment_weight = 0.0;
    int log_interval = 100;

    void validate() const
    {
        require(M >= 1 && K >= 1 && T >= 1 && d >= 1 && batch_size >= 1 && dead_code_epochs >= 1 &&
                    router_hidden >= 1 && log_interval >= 1,
                ErrorCode::InvalidArgument, "training counts must be positive");
        require(s >= 0 && steps_stage1 >= 0 && steps_stage2 >= 0 && steps_stage3 >= 0, ErrorCode::InvalidArgument,
                "step budgets and s must be non-negative");
        require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument,
                "learning rate must be positive");
        require(lambda1 >= 0.0 && lambda2 >= 0.0 && commitment_weight >= 0.0, ErrorCode::InvalidArgument,
                "loss weights must be non-negative");
        require(M <= 65535 && T <= 65535 && d <= 65535, ErrorCode::InvalidArgument, "sizes exceed file format limits");
    }

    RouterLossWeights router_weights() const { return {lambda1, lambda2}; }
};

struct StageReport {
    int stage = 0;
    int steps = 0;
    std::vector<double> loss_curve;   // mean objective per log interval
    std::vector<double> quant_curve;  // mean selected-group quantization error per log interval
    double initial_error = 0.0;       // mean NN-routed quantization error per sample before the stage
    double final_error = 0.0;         // ... and after
    double initial_pixel_mse = 0.0;   // stage 3 only
    double final_pixel_mse = 0.0;     // stage 3 only
    UtilizationStats utilization;
    std::vector<std::uint64_t> routing_histogram;
    std::uint64_t reseeded_codes = 0;
    double wall_clock_seconds = 0.0;
};

struct StageResult {
    CodebookPool pool;
    RouterParams router;
    StageReport report;
};

struct Stage3Result {
    PcaTransform pca;
    StageReport report;
};

/// Mean NN-routed total quantization error per sample.
inline double mean_quant_error(const TokenCorpus& corpus, const CodebookPool& pool)
{
    double sum = 0.0;
    for (const auto& z : corpus.samples) {
        const auto errs = group_errors(z, pool);
        double best = errs.front();
        for (double e : errs)
            best = std::min(best, e);
        sum += best;
    }
    return sum / static_cast<double>(corpus.size());
}

/// Per-token usage across the whole pool: code id = group * K + code.
inline UsageCounts pool_usage(const TokenCorpus& corpus, const CodebookPool& pool, RoutingPolicy policy,
                              const RouterParams* router, std::vector<std::uint64_t>* histogram = nullptr)
{
    UsageCounts usage(pool.T(), pool.M() * pool.K());
    if (histogram)
        histogram->assign(pool.M(), 0);
    for (const auto& z : corpus.samples) {
        const auto q = quantize_routed(z, pool, policy, router);
        if (histogram)
            ++(*histogram)[q.group_index];
        for (int t = 0; t < pool.T(); ++t)
            usage.add(t, q.group_index * pool.K() + static_cast<int>(q.indices[t]));
    }
    return usage;
}

namespace detail {

inline void check_corpus(const TokenCorpus& corpus, const TrainConfig& cfg)
{
    corpus.validate();
    require(corpus.T() == cfg.T && corpus.d() == cfg.d, ErrorCode::ShapeMismatch,
            "corpus tokens are " + std::to_string(corpus.T()) + "x" + std::to_string(corpus.d()) + ", config expects " +
                std::to_string(cfg.T) + "x" + std::to_string(cfg.d));
}

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(p[i - 1], p[rng.index(i)]);
    return p;
}

inline void check_finite(double loss, const RouterParams& router, const CodebookPool& pool, int step)
{
    bool ok = std::isfinite(loss) && router.all_finite();
    for (const auto& g : pool.groups())
        for (const auto& b : g.books())
            ok = ok && b.codes.allFinite();
    require(ok, ErrorCode::DivergenceDetected, "non-finite value at step " + std::to_string(step));
}

inline void finish_report(StageReport& report, const TokenCorpus& corpus, const CodebookPool& pool)
{
    report.final_error = mean_quant_error(corpus, pool);
    report.utilization = utilization(pool_usage(corpus, pool, RoutingPolicy::NearestNeighbor, nullptr,
                                                &report.routing_histogram));
}

/// Mini-batch training of codebooks and router. Images are routed by the
/// learned router; only the selected group's nearest codes receive gradient.
/// Token-shared groups update their single codebook from every token.
inline void train_switchable(const TokenCorpus& corpus, CodebookPool& pool, RouterParams& router,
                             const TrainConfig& cfg, int steps, StageReport& report, Rng& rng)
{
    const int M = pool.M();
    const int K = pool.K();
    const int T = pool.T();
    const int d = pool.dim();
    const std::size_t N = corpus.size();
    const int B = static_cast<int>(std::min<std::size_t>(cfg.batch_size, N));
    const std::size_t steps_per_epoch = (N + B - 1) / B;
    const int books_per_group = pool.token_shared() ? 1 : T;
    const auto weights = cfg.router_weights();

    std::vector<std::vector<RowMatrix>> grads(M, std::vector<RowMatrix>(books_per_group, RowMatrix::Zero(K, d)));
    std::vector<UsageCounts> usage(M, UsageCounts(books_per_group, K));
    std::vector<std::vector<std::size_t>> routed(M);

    std::vector<std::size_t> order = shuffled(N, rng);
    std::size_t cursor = 0;
    int epoch = 0;
    double window_loss = 0.0;
    double window_quant = 0.0;
    int window = 0;

    std::vector<std::size_t> batch(B);
    std::vector<Vector> pooled(B);
    std::vector<std::vector<double>> errors(B);

    for (int step = 0; step < steps; ++step) {
        const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / steps));

        for (int n = 0; n < B; ++n) {
            if (cursor == N) {
                order = shuffled(N, rng);
                cursor = 0;
            }
            batch[n] = order[cursor++];
            const auto& z = corpus.samples[batch[n]];
            pooled[n] = mean_pool(z);
            errors[n] = group_errors(z, pool);
        }

        auto rl = router_loss_and_grad(router, pooled, errors, weights);

        for (auto& g : grads)
            for (auto& m : g)
                m.setZero();
        double quant = 0.0;
        for (int n = 0; n < B; ++n) {
            const int i = argmax_lowest(rl.dists[n].probs);
            const auto& z = corpus.samples[batch[n]];
            auto& group = pool.group(i);
            routed[i].push_back(batch[n]);
            for (int t = 0; t < T; ++t) {
                const int book = pool.token_shared() ? 0 : t;
                const auto m = quantize_one(token_row(z, t), group.sub(t));
                grads[i][book].row(m.index) -= 2.0 * (z.row(t) - group.sub(t).codes.row(m.index));
                usage[i].add(book, m.index);
                quant += m.squared_error;
            }
        }

        for (int i = 0; i < M; ++i)
            for (int b = 0; b < books_per_group; ++b)
                pool.group(i).books()[b].codes -= (lr / B) * grads[i][b];

        router.add_scaled(rl.grad, -lr);

        // Commitment pulls only on the frozen encoder, so it adds to the
        // objective without contributing gradient here.
        const double loss = (1.0 + cfg.commitment_weight) * quant / B + rl.loss;
        check_finite(loss, router, pool, step);
        window_loss += loss;
        window_quant += quant / B;
        if (++window == cfg.log_interval || step + 1 == steps) {
            report.loss_curve.push_back(window_loss / window);
            report.quant_curve.push_back(window_quant / window);
            window_loss = window_quant = 0.0;
            window = 0;
        }

        if ((step + 1) % steps_per_epoch == 0) {
            ++epoch;
            if (epoch % cfg.dead_code_epochs == 0) {
                for (int i = 0; i < M; ++i) {
                    if (routed[i].empty())
                        continue;
                    for (int b = 0; b < books_per_group; ++b) {
                        const auto counts = usage[i].token(b);
                        if (std::find(counts.begin(), counts.end(), std::uint64_t{0}) == counts.end())
                            continue;
                        const RowMatrix candidates =
                            pool.token_shared() ? corpus.all_rows(routed[i]) : corpus.token_rows(b, routed[i]);
                        report.reseeded_codes += reseed_dead_codes(pool.group(i).books()[b], counts, candidates, rng);
                    }
                }
                for (auto& u : usage)
                    u.clear();
                for (auto& r : routed)
                    r.clear();
            }
        }
    }
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// Stage 1: switchable token-shared codebooks plus router. Group i starts
/// from k-means++ on the i-th of M disjoint random shards of the corpus.
inline StageResult stage1(const TokenCorpus& corpus, const TrainConfig& cfg)
{
    cfg.validate();
    detail::check_corpus(corpus, cfg);
    const auto start = std::chrono::steady_clock::now();
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);

    const auto order = detail::shuffled(corpus.size(), rng);
    require(corpus.size() >= static_cast<std::size_t>(cfg.M), ErrorCode::TooFewSamples,
            "need at least one sample per group");
    std::vector<TokenSpecificGroup> groups;
    for (int g = 0; g < cfg.M; ++g) {
        const std::size_t lo = corpus.size() * g / cfg.M;
        const std::size_t hi = corpus.size() * (g + 1) / cfg.M;
        const std::vector<std::size_t> shard(order.begin() + lo, order.begin() + hi);
        groups.push_back(TokenSpecificGroup::shared(
            init_kmeanspp(corpus.all_rows(shard), cfg.K, cfg.seed * 1000003ull + g + 17), cfg.T));
    }

    StageResult out{CodebookPool(std::move(groups)), init_router(cfg.d, cfg.router_hidden, cfg.M, cfg.seed + 7), {}};
    out.report.stage = 1;
    out.report.steps = cfg.steps_stage1;
    out.report.initial_error = mean_quant_error(corpus, out.pool);
    detail::train_switchable(corpus, out.pool, out.router, cfg, cfg.steps_stage1, out.report, rng);
    detail::finish_report(out.report, corpus, out.pool);
    out.report.wall_clock_seconds = detail::elapsed_seconds(start);
    return out;
}

/// Stage 2: token-specific refinement initialised from a stage-1 pool.
inline StageResult stage2(const TokenCorpus& corpus, const CodebookPool& shared_pool, const RouterParams& router,
                          const TrainConfig& cfg)
{
    cfg.validate();
    detail::check_corpus(corpus, cfg);
    require(shared_pool.token_shared(), ErrorCode::StageOrderError, "stage 2 requires a token-shared stage-1 pool");
    check_pool_shape(corpus.samples.front(), shared_pool);
    check_router_for_pool(&router, shared_pool);
    const auto start = std::chrono::steady_clock::now();
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 2);

    StageResult out{derive_token_specific(shared_pool), router, {}};
    out.report.stage = 2;
    out.report.steps = cfg.steps_stage2;
    out.report.initial_error = mean_quant_error(corpus, out.pool);
    detail::train_switchable(corpus, out.pool, out.router, cfg, cfg.steps_stage2, out.report, rng);
    detail::finish_report(out.report, corpus, out.pool);
    out.report.wall_clock_seconds = detail::elapsed_seconds(start);
    return out;
}

/// Least-squares refit of the decoder map (token -> patch, affine) from the
/// given latents to the patches of the matching images. The encoder side of
/// the transform is left untouched.
inline PcaTransform refit_decoder(std::span<const TokenMatrix> latents, std::span<const ImageBuffer> images,
                                  const PcaTransform& pca)
{
    require(!images.empty(), ErrorCode::EmptyCorpus, "decoder refit needs images");
    require(latents.size() == images.size(), ErrorCode::LengthMismatch, "one latent matrix per image required");
    const int d = pca.d;
    const int D = pca.patch_dim();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d + 1, D);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const RowMatrix patches = extract_patches(images[i], pca.patch_size);
        require(latents[i].rows() == patches.rows() && latents[i].cols() == d, ErrorCode::ShapeMismatch,
                "latents do not match the image patch grid");
        RowMatrix x(patches.rows(), d + 1);
        x.leftCols(d) = latents[i];
        x.col(d).setOnes();
        gram.noalias() += x.transpose() * x;
        cross.noalias() += x.transpose() * patches;
    }
    const Eigen::MatrixXd beta = gram.completeOrthogonalDecomposition().solve(cross);
    require(beta.allFinite(), ErrorCode::DivergenceDetected, "decoder refit produced non-finite weights");

    PcaTransform out = pca;
    out.decoder = beta.topRows(d).transpose();
    out.decoder_bias = beta.row(d).transpose();
    out.decoder_refit = true;
    return out;
}

inline double mean_pixel_mse(std::span<const TokenMatrix> latents, std::span<const ImageBuffer> images,
                             const PcaTransform& pca)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i)
        sum += mse(images[i], decode(latents[i], pca, images[i].width, images[i].height));
    return sum / static_cast<double>(images.size());
}

/// NN-routed quantized latents for every image.
inline std::vector<TokenMatrix> quantized_latents(std::span<const ImageBuffer> images, const CodebookPool& pool,
                                                  const PcaTransform& pca)
{
    std::vector<TokenMatrix> out;
    out.reserve(images.size());
    for (const auto& img : images)
        out.push_back(dequantize(quantize_routed(encode(img, pca), pool, RoutingPolicy::NearestNeighbor), pool));
    return out;
}

/// Stage 3: decoder refit against the frozen token-specific pool. The
/// closed-form least-squares solution is the fixed point of the gradient
/// iteration, so no step budget is consumed.
inline Stage3Result stage3(std::span<const ImageBuffer> images, const CodebookPool& pool, const PcaTransform& pca,
                           const TrainConfig& cfg)
{
    cfg.validate();
    require(!pool.token_shared(), ErrorCode::StageOrderError, "stage 3 requires the frozen stage-2 pool");
    require(!images.empty(), ErrorCode::EmptyCorpus, "stage 3 needs training images");
    const auto start = std::chrono::steady_clock::now();
    const auto latents = quantized_latents(images, pool, pca);

    Stage3Result out{refit_decoder(latents, images, pca), {}};
    auto& r = out.report;
    r.stage = 3;
    r.steps = 0;
    r.initial_pixel_mse = mean_pixel_mse(latents, images, pca);
    r.final_pixel_mse = mean_pixel_mse(latents, images, out.pca);
    require(std::isfinite(r.final_pixel_mse), ErrorCode::DivergenceDetected, "stage 3 reconstruction is non-finite");
    r.loss_curve = {r.initial_pixel_mse, r.final_pixel_mse};
    r.wall_clock_seconds = detail::elapsed_seconds(start);
    return out;
}

/// Encodes every image with the frozen encoder side of `pca`.
inline TokenCorpus encode_corpus(std::span<const ImageBuffer> images, const PcaTransform& pca,
                                 std::span<const int> labels = {})
{
    require(!images.empty(), ErrorCode::EmptyCorpus, "no images to encode");
    TokenCorpus c;
    c.width = images.front().width;
    c.height = images.front().height;
    for (const auto& img : images) {
        require(img.width == c.width && img.height == c.height, ErrorCode::ShapeMismatch,
                "training images must share dimensions");
        c.samples.push_back(encode(img, pca));
    }
    if (!labels.empty() && std::any_of(labels.begin(), labels.end(), [](int l) { return l != kNoLabel; }))
        c.labels.assign(labels.begin(), labels.end());
    return c;
}

} // namespace stscq
