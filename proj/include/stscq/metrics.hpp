#pragma once

#include "stscq/bitstream.hpp"
#include "stscq/codebook.hpp"
#include "stscq/dataset.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/latent_transform.hpp"
#include "stscq/parallel.hpp"
#include "stscq/quantizer.hpp"
#include "stscq/router.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stscq {

/// One rate-distortion measurement. Latent distortion is per token
/// dimension, pixel distortion per pixel per channel. Pixel fields are NaN
/// when only tokens were evaluated; bpp is NaN without a pixel size.
struct RdPoint {
    int M = 1;
    int K = 1;
    int T = 1;
    RoutingPolicy policy = RoutingPolicy::NearestNeighbor;
    std::uint64_t seed = 0;
    std::uint64_t bits = 0;
    double bpp = std::numeric_limits<double>::quiet_NaN();
    double latent_mse = 0.0;
    double pixel_mse = std::numeric_limits<double>::quiet_NaN();
    double psnr = std::numeric_limits<double>::quiet_NaN();
};

inline double psnr_from_mse(double mse) { return 10.0 * std::log10(1.0 / mse); }

struct EvalOptions {
    RoutingPolicy policy = RoutingPolicy::NearestNeighbor;
    const RouterParams* router = nullptr;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Per-sample total squared latent error under the chosen routing policy.
inline std::vector<double> latent_errors(const TokenCorpus& corpus, const CodebookPool& pool, const EvalOptions& opts)
{
    if (opts.policy == RoutingPolicy::CodebookRouting)
        check_router_for_pool(opts.router, pool);
    return parallel_map(corpus.size(), opts.threads, [&](std::size_t i) {
        const auto& z = corpus.samples[i];
        const auto q = quantize_routed(z, pool, opts.policy, opts.router);
        return quantize_group(z, pool.group(q.group_index)).total_error;
    });
}

namespace detail {

inline RdPoint rd_header(const CodebookPool& pool, const EvalOptions& opts)
{
    RdPoint p;
    p.M = pool.M();
    p.K = pool.K();
    p.T = pool.T();
    p.policy = opts.policy;
    p.seed = opts.seed;
    p.bits = payload_bits(pool.T(), pool.K(), pool.M());
    return p;
}

} // namespace detail

inline RdPoint eval_rd(const TokenCorpus& corpus, const CodebookPool& pool, const EvalOptions& opts)
{
    require(!corpus.empty(), ErrorCode::EmptyCorpus, "nothing to evaluate");
    RdPoint p = detail::rd_header(pool, opts);
    if (corpus.width > 0 && corpus.height > 0)
        p.bpp = bpp(pool.T(), pool.K(), pool.M(), corpus.width, corpus.height);
    double sum = 0.0;
    for (double e : latent_errors(corpus, pool, opts))
        sum += e;
    p.latent_mse = sum / (static_cast<double>(corpus.size()) * pool.T() * pool.dim());
    return p;
}

inline RdPoint eval_rd(std::span<const ImageBuffer> images, const PcaTransform& pca, const CodebookPool& pool,
                       const EvalOptions& opts)
{
    require(!images.empty(), ErrorCode::EmptyCorpus, "nothing to evaluate");
    if (opts.policy == RoutingPolicy::CodebookRouting)
        check_router_for_pool(opts.router, pool);
    RdPoint p = detail::rd_header(pool, opts);
    p.bpp = bpp(pool.T(), pool.K(), pool.M(), images.front().width, images.front().height);

    struct Sample {
        double latent = 0.0;
        double pixel = 0.0;
    };
    const auto per_image = parallel_map(images.size(), opts.threads, [&](std::size_t i) {
        const auto& img = images[i];
        const TokenMatrix z = encode(img, pca);
        const auto q = quantize_routed(z, pool, opts.policy, opts.router);
        const TokenMatrix zq = dequantize(q, pool);
        return Sample{(z - zq).squaredNorm(), mse(img, decode(zq, pca, img.width, img.height))};
    });
    double latent = 0.0;
    double pixel = 0.0;
    for (const auto& s : per_image) {
        latent += s.latent;
        pixel += s.pixel;
    }
    const double n = static_cast<double>(images.size());
    p.latent_mse = latent / (n * pool.T() * pool.dim());
    p.pixel_mse = pixel / n;
    p.psnr = psnr_from_mse(p.pixel_mse);
    return p;
}

struct RoutingHistogram {
    std::vector<std::uint64_t> counts;
    int label = kNoLabel;

    std::uint64_t total() const
    {
        std::uint64_t s = 0;
        for (auto c : counts)
            s += c;
        return s;
    }

    /// Natural-log entropy of the empirical routing distribution.
    double entropy() const
    {
        const double n = static_cast<double>(total());
        double h = 0.0;
        for (auto c : counts)
            if (c > 0) {
                const double p = c / n;
                h -= p * std::log(p);
            }
        return h;
    }

    int mode() const
    {
        int best = 0;
        for (int i = 1; i < static_cast<int>(counts.size()); ++i)
            if (counts[i] > counts[best])
                best = i;
        return best;
    }
};

/// Selected-group counts per label (every sample under kNoLabel when the
/// corpus is unlabelled).
inline std::map<int, RoutingHistogram> routing_histogram(const TokenCorpus& corpus, const CodebookPool& pool,
                                                         const EvalOptions& opts)
{
    if (opts.policy == RoutingPolicy::CodebookRouting)
        check_router_for_pool(opts.router, pool);
    const auto groups = parallel_map(corpus.size(), opts.threads, [&](std::size_t i) {
        return quantize_routed(corpus.samples[i], pool, opts.policy, opts.router).group_index;
    });
    std::map<int, RoutingHistogram> out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto& h = out[corpus.label(i)];
        if (h.counts.empty()) {
            h.counts.assign(pool.M(), 0);
            h.label = corpus.label(i);
        }
        ++h.counts[groups[i]];
    }
    return out;
}

inline RoutingHistogram merged(const std::map<int, RoutingHistogram>& per_label)
{
    RoutingHistogram all;
    for (const auto& [label, h] : per_label) {
        if (all.counts.empty())
            all.counts.assign(h.counts.size(), 0);
        for (std::size_t i = 0; i < h.counts.size(); ++i)
            all.counts[i] += h.counts[i];
    }
    return all;
}

/// Per-token utilization of one shared codebook versus a token-specific group.
inline std::pair<UtilizationStats, UtilizationStats> compare_utilization(const TokenCorpus& corpus,
                                                                         const Codebook& shared,
                                                                         const TokenSpecificGroup& tsc)
{
    require(!corpus.empty(), ErrorCode::EmptyCorpus, "nothing to evaluate");
    require(shared.K() == tsc.K() && shared.dim() == tsc.dim() && corpus.T() == tsc.T() && corpus.d() == tsc.dim(),
            ErrorCode::ShapeMismatch, "shared codebook, group and corpus must agree on K, T and d");
    UsageCounts a(tsc.T(), tsc.K());
    UsageCounts b(tsc.T(), tsc.K());
    for (const auto& z : corpus.samples)
        for (int t = 0; t < tsc.T(); ++t) {
            a.add(t, quantize_one(token_row(z, t), shared).index);
            b.add(t, quantize_one(token_row(z, t), tsc.sub(t)).index);
        }
    return {utilization(a), utilization(b)};
}

/// Two-row utilization table (Min/Max/Mean/STD, percent).
inline std::string format_utilization(const UtilizationStats& shared, const UtilizationStats& specific, double bpp_value)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "Method          bpp     Min    Max    Mean   STD\n";
    auto row = [&](const char* name, const UtilizationStats& s) {
        os << std::left << std::setw(16) << name << std::setprecision(4) << bpp_value << std::setprecision(2) << "  "
           << s.min << "  " << s.max << "  " << s.mean << "  " << s.std << "\n";
    };
    row("Global-shared", shared);
    row("Token-specific", specific);
    return os.str();
}

inline constexpr const char* kRdCsvHeader = "M,K,T,policy,seed,bpp,latent_mse,pixel_mse,psnr";

inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_rd_csv(std::ostream& os, std::span<const RdPoint> points)
{
    os << kRdCsvHeader << "\n";
    for (const auto& p : points)
        os << p.M << ',' << p.K << ',' << p.T << ',' << to_string(p.policy) << ',' << p.seed << ','
           << format_number(p.bpp) << ',' << format_number(p.latent_mse) << ',' << format_number(p.pixel_mse) << ','
           << format_number(p.psnr) << "\n";
}

/// gnuplot script plotting latent MSE against M for each policy in `csv_file`.
inline std::string gnuplot_script(const std::string& csv_file)
{
    std::ostringstream os;
    os << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set logscale x 2\n"
       << "set xlabel 'codebook groups (M)'\n"
       << "set ylabel 'latent MSE'\n"
       << "plot '" << csv_file << "' using 1:(stringcolumn(4) eq 'nn' ? $7 : 1/0) with linespoints title 'NN', \\\n"
       << "     '" << csv_file << "' using 1:(stringcolumn(4) eq 'cr' ? $7 : 1/0) with linespoints title 'CR'\n";
    return os.str();
}

} // namespace stscq
