#pragma once

#include "stscq/dataset.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/random.hpp"
#include "stscq/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace stscq {

/// Attribute-clustered token data. Cluster c has a mean vector for every
/// token position; a sample of cluster c is those means plus isotropic noise.
/// Sample n belongs to cluster n % clusters.
struct TokenMixtureSpec {
    int clusters = 8;
    double separation = 4.0;  // scale of the per-(cluster, token) means
    double sigma = 0.5;
    int T = 16;
    int d = 8;
    int samples = 2048;
    std::uint64_t seed = 0;

    void validate() const
    {
        require(clusters >= 1 && T >= 1 && d >= 1 && samples >= 1, ErrorCode::BadSpec,
                "mixture counts must be positive");
        require(separation >= 0.0 && sigma >= 0.0 && std::isfinite(separation) && std::isfinite(sigma),
                ErrorCode::BadSpec, "separation and sigma must be finite and non-negative");
    }
};

struct TokenMixture {
    std::vector<TokenMatrix> means;  // one T x d matrix per cluster
    TokenCorpus corpus;
};

inline std::vector<TokenMatrix> mixture_means(const TokenMixtureSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    std::vector<TokenMatrix> means;
    for (int c = 0; c < spec.clusters; ++c) {
        TokenMatrix m(spec.T, spec.d);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = spec.separation * rng.normal();
        means.push_back(std::move(m));
    }
    return means;
}

/// Draws `spec.samples` samples; `stream` offsets the noise so that held-out
/// sets share cluster means but not noise.
inline TokenMixture make_token_mixture(const TokenMixtureSpec& spec, std::uint64_t stream = 0)
{
    TokenMixture out;
    out.means = mixture_means(spec);
    Rng rng(spec.seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull + stream);
    for (int n = 0; n < spec.samples; ++n) {
        const int c = n % spec.clusters;
        TokenMatrix s = out.means[c];
        for (Eigen::Index i = 0; i < s.size(); ++i)
            s.data()[i] += spec.sigma * rng.normal();
        out.corpus.samples.push_back(std::move(s));
        out.corpus.labels.push_back(c);
    }
    return out;
}

/// Procedural images with a class attribute: each class owns a smooth
/// pattern (oriented sinusoids plus a base level); every image perturbs
/// amplitude and phase and adds pixel noise.
struct ImageSetSpec {
    int clusters = 8;
    int width = 32;
    int height = 32;
    int channels = 1;
    int samples = 256;
    double noise = 0.02;
    double jitter = 0.15;
    std::uint64_t seed = 0;

    void validate() const
    {
        require(clusters >= 1 && samples >= 1, ErrorCode::BadSpec, "image counts must be positive");
        require(width >= 1 && height >= 1 && width <= 65535 && height <= 65535, ErrorCode::BadSpec,
                "image dimensions out of range");
        require(channels == 1 || channels == 3, ErrorCode::BadSpec, "channels must be 1 or 3");
        require(noise >= 0.0 && jitter >= 0.0, ErrorCode::BadSpec, "noise and jitter must be non-negative");
    }
};

struct LabelledImages {
    std::vector<ImageBuffer> images;
    std::vector<int> labels;
};

inline LabelledImages make_image_set(const ImageSetSpec& spec, std::uint64_t stream = 0)
{
    spec.validate();
    struct Wave {
        double fx, fy, phase, amp;
    };
    struct Pattern {
        double base[3];
        std::vector<Wave> waves;
    };
    constexpr double two_pi = 2.0 * std::numbers::pi;

    Rng class_rng(spec.seed);
    std::vector<Pattern> patterns;
    for (int c = 0; c < spec.clusters; ++c) {
        Pattern p;
        for (double& b : p.base)
            b = class_rng.uniform(0.3, 0.7);
        for (int w = 0; w < 3; ++w)
            p.waves.push_back({class_rng.uniform(0.5, 3.0), class_rng.uniform(0.5, 3.0), class_rng.uniform(0.0, two_pi),
                               class_rng.uniform(0.05, 0.12)});
        patterns.push_back(std::move(p));
    }

    Rng rng(spec.seed * 0x9E3779B97F4A7C15ull + 0x1B873593ull + stream);
    LabelledImages out;
    for (int n = 0; n < spec.samples; ++n) {
        const int c = n % spec.clusters;
        const auto& p = patterns[c];
        std::vector<Wave> waves = p.waves;
        for (auto& w : waves) {
            w.amp *= 1.0 + spec.jitter * rng.normal();
            w.phase += spec.jitter * rng.normal();
        }
        const double shift = 0.05 * rng.normal();
        ImageBuffer img(spec.width, spec.height, spec.channels);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const double u = static_cast<double>(x) / spec.width;
                const double v = static_cast<double>(y) / spec.height;
                double s = 0.0;
                for (const auto& w : waves)
                    s += w.amp * std::sin(two_pi * (w.fx * u + w.fy * v) + w.phase);
                for (int ch = 0; ch < spec.channels; ++ch) {
                    const double value = p.base[ch] + shift + s * (1.0 - 0.2 * ch) + spec.noise * rng.normal();
                    img.at(x, y, ch) = std::clamp(value, 0.0, 1.0);
                }
            }
        out.images.push_back(std::move(img));
        out.labels.push_back(c);
    }
    return out;
}

} // namespace stscq
