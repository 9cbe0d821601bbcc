#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stscq {

/// Linear patch transform standing in for a frozen encoder/decoder pair.
///
/// The encoder side (mean, basis) is fit once by PCA and never changes. The
/// decoder side starts as the exact transpose of the encoder and may later be
/// refit by least squares against quantized latents; `decoder_refit` records
/// whether that happened so the file writer can pick the format version.
struct PcaTransform {
    int patch_size = 0;
    int channels = 1;
    int d = 0;
    Vector mean;            // length patch_dim()
    RowMatrix basis;        // d x patch_dim(), orthonormal rows
    RowMatrix decoder;      // patch_dim() x d
    Vector decoder_bias;    // length patch_dim()
    bool decoder_refit = false;

    int patch_dim() const noexcept { return patch_size * patch_size * channels; }

    int token_count(int width, int height) const
    {
        require(patch_size > 0 && width % patch_size == 0 && height % patch_size == 0, ErrorCode::NonDivisibleImage,
                std::to_string(width) + "x" + std::to_string(height) + " not divisible by patch size " +
                    std::to_string(patch_size));
        return (width / patch_size) * (height / patch_size);
    }

    void reset_decoder()
    {
        decoder = basis.transpose();
        decoder_bias = mean;
        decoder_refit = false;
    }
};

/// Patches of `img` as rows, raster order over the patch grid. Each row is
/// laid out (py, px, channel) with channel fastest.
inline RowMatrix extract_patches(const ImageBuffer& img, int patch_size)
{
    require(patch_size > 0 && img.width % patch_size == 0 && img.height % patch_size == 0,
            ErrorCode::NonDivisibleImage, "image not divisible by patch size");
    const int cols = img.width / patch_size;
    const int rows = img.height / patch_size;
    const int dim = patch_size * patch_size * img.channels;
    RowMatrix patches(rows * cols, dim);
    for (int gy = 0; gy < rows; ++gy)
        for (int gx = 0; gx < cols; ++gx) {
            auto row = patches.row(gy * cols + gx);
            int k = 0;
            for (int py = 0; py < patch_size; ++py)
                for (int px = 0; px < patch_size; ++px)
                    for (int c = 0; c < img.channels; ++c)
                        row(k++) = img.at(gx * patch_size + px, gy * patch_size + py, c);
        }
    return patches;
}

inline ImageBuffer assemble_patches(const RowMatrix& patches, int patch_size, int channels, int width, int height)
{
    const int cols = width / patch_size;
    ImageBuffer img(width, height, channels);
    for (Eigen::Index i = 0; i < patches.rows(); ++i) {
        const int gx = static_cast<int>(i) % cols;
        const int gy = static_cast<int>(i) / cols;
        int k = 0;
        for (int py = 0; py < patch_size; ++py)
            for (int px = 0; px < patch_size; ++px)
                for (int c = 0; c < channels; ++c)
                    img.at(gx * patch_size + px, gy * patch_size + py, c) = patches(i, k++);
    }
    return img;
}

inline PcaTransform fit_pca(std::span<const ImageBuffer> corpus, int patch_size, int d)
{
    require(!corpus.empty(), ErrorCode::EmptyCorpus, "PCA corpus is empty");
    require(patch_size > 0, ErrorCode::InvalidArgument, "patch size must be positive");
    const int channels = corpus.front().channels;
    const int dim = patch_size * patch_size * channels;
    require(d >= 1 && d <= dim, ErrorCode::DimensionTooLarge,
            "latent dimension " + std::to_string(d) + " outside [1, " + std::to_string(dim) + "]");

    std::vector<RowMatrix> all;
    all.reserve(corpus.size());
    Eigen::Index total = 0;
    for (const auto& img : corpus) {
        require(img.channels == channels, ErrorCode::ShapeMismatch, "mixed channel counts in corpus");
        all.push_back(extract_patches(img, patch_size));
        total += all.back().rows();
    }
    require(total >= d, ErrorCode::TooFewSamples, "fewer patches than latent dimensions");

    Vector mean = Vector::Zero(dim);
    for (const auto& p : all)
        mean += p.colwise().sum().transpose();
    mean /= static_cast<double>(total);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& p : all) {
        RowMatrix centered = p.rowwise() - mean.transpose();
        cov.noalias() += centered.transpose() * centered;
    }
    cov /= static_cast<double>(total);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    require(solver.info() == Eigen::Success, ErrorCode::DivergenceDetected, "eigendecomposition failed");

    PcaTransform t;
    t.patch_size = patch_size;
    t.channels = channels;
    t.d = d;
    t.mean = mean;
    t.basis.resize(d, dim);
    // Eigenvalues ascend; take the top-d directions, largest first, with the
    // sign fixed so the largest-magnitude component is positive.
    for (int i = 0; i < d; ++i) {
        Vector v = solver.eigenvectors().col(dim - 1 - i);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0)
            v = -v;
        t.basis.row(i) = v.transpose();
    }
    t.reset_decoder();
    return t;
}

inline TokenMatrix encode(const ImageBuffer& img, const PcaTransform& t)
{
    require(img.channels == t.channels, ErrorCode::ShapeMismatch, "channel count differs from transform");
    RowMatrix patches = extract_patches(img, t.patch_size);
    return (patches.rowwise() - t.mean.transpose()) * t.basis.transpose();
}

/// Unclamped linear reconstruction of every patch, one per row.
inline RowMatrix reconstruct_patches(const TokenMatrix& tokens, const PcaTransform& t)
{
    require(tokens.cols() == t.d, ErrorCode::ShapeMismatch, "token dimension differs from transform");
    RowMatrix patches = tokens * t.decoder.transpose();
    patches.rowwise() += t.decoder_bias.transpose();
    return patches;
}

inline ImageBuffer decode(const TokenMatrix& tokens, const PcaTransform& t, int width, int height)
{
    require(tokens.rows() == t.token_count(width, height), ErrorCode::ShapeMismatch,
            "token count does not match the patch grid");
    RowMatrix patches = reconstruct_patches(tokens, t).cwiseMax(0.0).cwiseMin(1.0);
    return assemble_patches(patches, t.patch_size, t.channels, width, height);
}

// File format: "STSCQPCA", version u8, patch_size u16, channels u8, d u16,
// mean then basis as f64 LE. Version 2 appends decoder bias and decoder
// matrix (patch_dim x d, row-major) after a refit.

inline std::vector<std::uint8_t> serialize_pca(const PcaTransform& t)
{
    io::ByteWriter w;
    w.magic("STSCQPCA");
    w.u8(t.decoder_refit ? 2 : 1);
    w.u16(static_cast<std::uint16_t>(t.patch_size));
    w.u8(static_cast<std::uint8_t>(t.channels));
    w.u16(static_cast<std::uint16_t>(t.d));
    for (Eigen::Index i = 0; i < t.mean.size(); ++i)
        w.f64(t.mean(i));
    for (Eigen::Index r = 0; r < t.basis.rows(); ++r)
        for (Eigen::Index c = 0; c < t.basis.cols(); ++c)
            w.f64(t.basis(r, c));
    if (t.decoder_refit) {
        for (Eigen::Index i = 0; i < t.decoder_bias.size(); ++i)
            w.f64(t.decoder_bias(i));
        for (Eigen::Index r = 0; r < t.decoder.rows(); ++r)
            for (Eigen::Index c = 0; c < t.decoder.cols(); ++c)
                w.f64(t.decoder(r, c));
    }
    return w.take();
}

inline PcaTransform deserialize_pca(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    require(r.magic("STSCQPCA"), ErrorCode::BadMagic, "not a PCA transform file");
    const auto version = r.u8();
    require(version == 1 || version == 2, ErrorCode::BadVersion, "unsupported PCA version " + std::to_string(version));
    PcaTransform t;
    t.patch_size = r.u16();
    t.channels = r.u8();
    t.d = r.u16();
    require(t.patch_size > 0 && (t.channels == 1 || t.channels == 3) && t.d >= 1 && t.d <= t.patch_dim(),
            ErrorCode::BadFormat, "inconsistent PCA header");
    const int dim = t.patch_dim();
    t.mean.resize(dim);
    for (int i = 0; i < dim; ++i)
        t.mean(i) = r.f64();
    t.basis.resize(t.d, dim);
    for (int i = 0; i < t.d; ++i)
        for (int j = 0; j < dim; ++j)
            t.basis(i, j) = r.f64();
    t.reset_decoder();
    if (version == 2) {
        for (int i = 0; i < dim; ++i)
            t.decoder_bias(i) = r.f64();
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < t.d; ++j)
                t.decoder(i, j) = r.f64();
        t.decoder_refit = true;
    }
    r.expect_end();
    return t;
}

inline void save_pca(const std::string& path, const PcaTransform& t) { io::write_file(path, serialize_pca(t)); }
inline PcaTransform load_pca(const std::string& path) { return deserialize_pca(io::read_file(path)); }

} // namespace stscq
