#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace stscq;

namespace {

ImageBuffer random_image(oracle::Gen& g, int w, int h, int c)
{
    ImageBuffer img(w, h, c);
    for (double& v : img.data)
        v = g.real(0.0, 1.0);
    return img;
}

std::vector<ImageBuffer> random_corpus(std::uint64_t seed, int n, int w, int h, int c)
{
    oracle::Gen g(seed);
    std::vector<ImageBuffer> out;
    for (int i = 0; i < n; ++i)
        out.push_back(random_image(g, w, h, c));
    return out;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace

TEST(Patches, RasterOrderAndChannelLayout)
{
    ImageBuffer img(4, 2, 3);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = 100 * y + 10 * x + c;
    const RowMatrix p = extract_patches(img, 2);
    ASSERT_EQ(p.rows(), 2);
    ASSERT_EQ(p.cols(), 12);
    // second patch covers x in {2,3}; layout (py, px, channel)
    EXPECT_EQ(p(1, 0), 20);
    EXPECT_EQ(p(1, 1), 21);
    EXPECT_EQ(p(1, 3), 30);
    EXPECT_EQ(p(1, 6), 120);
    const ImageBuffer back = assemble_patches(p, 2, 3, 4, 2);
    EXPECT_EQ(back.data, img.data);
}

TEST(FitPca, TokenCountFromGeometry)
{
    PcaTransform t;
    t.patch_size = 16;
    EXPECT_EQ(t.token_count(256, 256), 256);
    EXPECT_EQ(t.token_count(64, 32), 8);
    EXPECT_THROW(t.token_count(250, 256), Error);
}

TEST(FitPca, BasisIsOrthonormal)
{
    const auto corpus = random_corpus(1, 6, 16, 16, 3);
    const auto t = fit_pca(corpus, 4, 10);
    ASSERT_EQ(t.basis.rows(), 10);
    ASSERT_EQ(t.basis.cols(), 48);
    const Eigen::MatrixXd gram = t.basis * t.basis.transpose();
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitPca, Errors)
{
    EXPECT_THROW(fit_pca(std::vector<ImageBuffer>{}, 4, 2), Error);
    const auto corpus = random_corpus(2, 2, 8, 8, 1);
    try {
        fit_pca(corpus, 4, 17);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionTooLarge);
    }
    const auto odd = random_corpus(3, 1, 10, 8, 1);
    try {
        fit_pca(odd, 4, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonDivisibleImage);
    }
}

TEST(FitPca, ConstantCorpusGivesZeroTokens)
{
    std::vector<ImageBuffer> corpus(3, ImageBuffer(8, 8, 1, 0.4));
    const auto t = fit_pca(corpus, 4, 3);
    for (int i = 0; i < t.mean.size(); ++i)
        EXPECT_NEAR(t.mean(i), 0.4, 1e-12);
    const TokenMatrix z = encode(corpus[0], t);
    EXPECT_EQ(z.rows(), 4);
    EXPECT_LE(z.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitPca, RankTwoCorpusReconstructsExactly)
{
    oracle::Gen g(5);
    const int P = 4;
    RowMatrix atoms(2, P * P);
    for (Eigen::Index i = 0; i < atoms.size(); ++i)
        atoms.data()[i] = g.real(-0.1, 0.1);
    std::vector<ImageBuffer> corpus;
    for (int n = 0; n < 8; ++n) {
        RowMatrix patches(4, P * P);
        for (int r = 0; r < 4; ++r)
            patches.row(r) = 0.5 * RowMatrix::Ones(1, P * P) + g.real(-1, 1) * atoms.row(0) + g.real(-1, 1) * atoms.row(1);
        corpus.push_back(assemble_patches(patches, P, 1, 8, 8));
    }
    const auto t = fit_pca(corpus, P, 2);
    for (const auto& img : corpus)
        EXPECT_LE(max_abs_diff(decode(encode(img, t), t, 8, 8), img), 1e-6);
}

TEST(Encode, ShapesAndMeanImage)
{
    const auto corpus = random_corpus(7, 3, 32, 32, 1);
    const auto t = fit_pca(corpus, 8, 16);
    const TokenMatrix z = encode(corpus[0], t);
    EXPECT_EQ(z.rows(), 16);
    EXPECT_EQ(z.cols(), 16);

    RowMatrix patches(16, 64);
    for (int r = 0; r < 16; ++r)
        patches.row(r) = t.mean.transpose();
    const ImageBuffer mean_img = assemble_patches(patches, 8, 1, 32, 32);
    EXPECT_LE(encode(mean_img, t).cwiseAbs().maxCoeff(), 1e-12);

    const ImageBuffer tiled = decode(TokenMatrix::Zero(16, 16), t, 32, 32);
    EXPECT_LE(max_abs_diff(tiled, mean_img), 1e-12);
}

TEST(Encode, MatchesIndependentProjection)
{
    const auto corpus = random_corpus(8, 4, 16, 16, 1);
    const auto t = fit_pca(corpus, 4, 5);
    oracle::Gen g(9);
    const ImageBuffer img = random_image(g, 16, 16, 1);
    const TokenMatrix z = encode(img, t);
    const ImageBuffer rec = decode(z, t, 16, 16);
    // per-patch least-squares projection onto the span of the basis rows
    for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px) {
            Eigen::VectorXd v(16);
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    v(y * 4 + x) = img.at(px * 4 + x, py * 4 + y, 0) - t.mean(y * 4 + x);
            const Eigen::MatrixXd B = t.basis.transpose();
            const Eigen::VectorXd coef = B.colPivHouseholderQr().solve(v);
            const Eigen::VectorXd proj = B * coef + t.mean;
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    EXPECT_NEAR(rec.at(px * 4 + x, py * 4 + y, 0), std::clamp(proj(y * 4 + x), 0.0, 1.0), 1e-9);
        }
}

TEST(Encode, FullRankRoundTripAndProjectionProperty)
{
    const auto corpus = random_corpus(10, 5, 8, 8, 3);
    const auto full = fit_pca(corpus, 2, 12);
    for (const auto& img : corpus)
        EXPECT_LE(max_abs_diff(decode(encode(img, full), full, 8, 8), img), 1e-6);

    const auto low = fit_pca(corpus, 2, 4);
    for (const auto& img : corpus) {
        const TokenMatrix z = encode(img, low);
        // unclamped path, so the projection identity is exact
        const ImageBuffer back = assemble_patches(reconstruct_patches(z, low), 2, 3, 8, 8);
        EXPECT_LE((encode(back, low) - z).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Encode, ErrorNonIncreasingInDimension)
{
    const auto corpus = random_corpus(11, 6, 8, 8, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= 16; ++d) {
        const auto t = fit_pca(corpus, 4, d);
        double err = 0.0;
        for (const auto& img : corpus) {
            const RowMatrix rec = reconstruct_patches(encode(img, t), t);
            err += (rec - extract_patches(img, 4)).squaredNorm();
        }
        EXPECT_LE(err, prev + 1e-9);
        prev = err;
    }
}

TEST(Encode, ConcurrentCallsAgree)
{
    const auto corpus = random_corpus(12, 8, 16, 16, 1);
    const auto t = fit_pca(corpus, 4, 6);
    const auto serial = parallel_map(corpus.size(), 1, [&](std::size_t i) { return encode(corpus[i], t); });
    const auto threaded = parallel_map(corpus.size(), 4, [&](std::size_t i) { return encode(corpus[i], t); });
    for (std::size_t i = 0; i < corpus.size(); ++i)
        EXPECT_EQ(serial[i], threaded[i]);
}

TEST(Decode, ShapeMismatch)
{
    const auto corpus = random_corpus(13, 2, 8, 8, 1);
    const auto t = fit_pca(corpus, 4, 3);
    EXPECT_THROW(decode(TokenMatrix::Zero(3, 3), t, 8, 8), Error);
}

TEST(PcaFile, RoundTripBothVersions)
{
    const auto corpus = random_corpus(14, 3, 8, 8, 3);
    auto t = fit_pca(corpus, 4, 5);
    const auto bytes = serialize_pca(t);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "STSCQPCA");
    EXPECT_EQ(bytes[8], 1);
    const auto back = deserialize_pca(bytes);
    EXPECT_EQ(back.basis, t.basis);
    EXPECT_EQ(back.mean, t.mean);
    EXPECT_FALSE(back.decoder_refit);

    t.decoder(0, 0) += 0.5;
    t.decoder_refit = true;
    const auto refit = deserialize_pca(serialize_pca(t));
    EXPECT_TRUE(refit.decoder_refit);
    EXPECT_EQ(refit.decoder, t.decoder);
    EXPECT_EQ(refit.decoder_bias, t.decoder_bias);

    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_pca(bad), Error);
    bad = bytes;
    bad.pop_back();
    EXPECT_THROW(deserialize_pca(bad), Error);
}

TEST(Pnm, RoundTripQuantizesTo8Bits)
{
    oracle::Gen g(15);
    for (int c : {1, 3}) {
        const ImageBuffer img = random_image(g, 5, 3, c);
        const auto bytes = encode_pnm(img);
        EXPECT_EQ(bytes[1], c == 1 ? '5' : '6');
        const ImageBuffer back = decode_pnm(bytes);
        EXPECT_EQ(back.width, 5);
        EXPECT_EQ(back.channels, c);
        EXPECT_LE(max_abs_diff(back, img), 0.5 / 255.0 + 1e-12);
        EXPECT_EQ(encode_pnm(back), bytes);
    }
    const std::string commented = "P5\n# note\n2 1\n255\n";
    std::vector<std::uint8_t> raw(commented.begin(), commented.end());
    raw.push_back(0);
    raw.push_back(255);
    const ImageBuffer img = decode_pnm(raw);
    EXPECT_EQ(img.data, (std::vector<double>{0.0, 1.0}));
}
