#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/error.hpp"
#include "stscq/image.hpp"
#include "stscq/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

namespace stscq {

inline constexpr int kNoLabel = -1;

/// A set of token matrices sharing (T, d), with optional integer labels and
/// the pixel size of the images they stand for (0 when there are none).
struct TokenCorpus {
    std::vector<TokenMatrix> samples;
    std::vector<int> labels;  // empty, or one per sample
    int width = 0;
    int height = 0;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    int T() const noexcept { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
    int d() const noexcept { return samples.empty() ? 0 : static_cast<int>(samples.front().cols()); }
    bool has_labels() const noexcept { return !labels.empty(); }
    int label(std::size_t i) const { return labels.empty() ? kNoLabel : labels[i]; }

    void validate() const
    {
        require(!samples.empty(), ErrorCode::EmptyCorpus, "token corpus is empty");
        for (const auto& s : samples) {
            require(s.rows() == T() && s.cols() == d(), ErrorCode::ShapeMismatch, "token matrices differ in shape");
            require(s.allFinite(), ErrorCode::BadFormat, "token corpus contains non-finite values");
        }
        require(labels.empty() || labels.size() == samples.size(), ErrorCode::LengthMismatch,
                "label count differs from sample count");
    }

    /// Rows of token position `t` across the selected samples.
    RowMatrix token_rows(int t, std::span<const std::size_t> which) const
    {
        RowMatrix out(static_cast<Eigen::Index>(which.size()), d());
        for (std::size_t i = 0; i < which.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = samples[which[i]].row(t);
        return out;
    }

    /// Every token of the selected samples stacked as rows.
    RowMatrix all_rows(std::span<const std::size_t> which) const
    {
        RowMatrix out(static_cast<Eigen::Index>(which.size()) * T(), d());
        Eigen::Index r = 0;
        for (auto i : which)
            for (int t = 0; t < T(); ++t)
                out.row(r++) = samples[i].row(t);
        return out;
    }
};

// Token corpus file: "STSCQTOK", version u8, N u32, T u16, d u16, width u16,
// height u16, has_labels u8, [labels as u32 two's complement], then values as
// f64 LE in (sample, token, dim) order.

inline std::vector<std::uint8_t> serialize_corpus(const TokenCorpus& c)
{
    c.validate();
    io::ByteWriter w;
    w.magic("STSCQTOK");
    w.u8(1);
    w.u32(static_cast<std::uint32_t>(c.size()));
    w.u16(static_cast<std::uint16_t>(c.T()));
    w.u16(static_cast<std::uint16_t>(c.d()));
    w.u16(static_cast<std::uint16_t>(c.width));
    w.u16(static_cast<std::uint16_t>(c.height));
    w.u8(c.has_labels() ? 1 : 0);
    for (int l : c.labels)
        w.u32(static_cast<std::uint32_t>(l));
    for (const auto& s : c.samples)
        for (Eigen::Index i = 0; i < s.size(); ++i)
            w.f64(s.data()[i]);
    return w.take();
}

inline TokenCorpus deserialize_corpus(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    require(r.magic("STSCQTOK"), ErrorCode::BadMagic, "not a token corpus file");
    const auto version = r.u8();
    require(version == 1, ErrorCode::BadVersion, "unsupported token corpus version " + std::to_string(version));
    const auto n = r.u32();
    const int T = r.u16();
    const int d = r.u16();
    TokenCorpus c;
    c.width = r.u16();
    c.height = r.u16();
    const bool labelled = r.u8() != 0;
    require(T >= 1 && d >= 1, ErrorCode::BadFormat, "zero-sized token corpus header");
    require(r.remaining() >= std::size_t{8} * n * T * d, ErrorCode::Truncated, "token corpus is truncated");
    if (labelled)
        for (std::uint32_t i = 0; i < n; ++i)
            c.labels.push_back(static_cast<int>(r.u32()));
    for (std::uint32_t i = 0; i < n; ++i) {
        TokenMatrix m(T, d);
        for (Eigen::Index k = 0; k < m.size(); ++k)
            m.data()[k] = r.f64();
        c.samples.push_back(std::move(m));
    }
    r.expect_end();
    c.validate();
    return c;
}

inline void save_corpus(const std::string& path, const TokenCorpus& c) { io::write_file(path, serialize_corpus(c)); }
inline TokenCorpus load_corpus(const std::string& path) { return deserialize_corpus(io::read_file(path)); }

inline bool is_token_corpus_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    char buf[8] = {};
    in.read(buf, 8);
    return in.gcount() == 8 && std::string(buf, 8) == "STSCQTOK";
}

/// Image list: one `path [label]` per line; relative paths resolve against the
/// manifest's directory. Blank lines and lines starting with '#' are skipped.
struct ImageManifest {
    std::vector<std::string> paths;
    std::vector<int> labels;  // kNoLabel where absent
};

inline ImageManifest read_manifest(const std::string& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open manifest " + path);
    const auto base = std::filesystem::path(path).parent_path();
    ImageManifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream fields(line);
        std::string file;
        fields >> file;
        if (file.empty())
            continue;
        int label = kNoLabel;
        if (!(fields >> label))
            label = kNoLabel;
        const std::filesystem::path p(file);
        m.paths.push_back((p.is_absolute() ? p : base / p).string());
        m.labels.push_back(label);
    }
    require(!m.paths.empty(), ErrorCode::EmptyCorpus, "manifest " + path + " lists no images");
    return m;
}

inline std::vector<ImageBuffer> load_images(const ImageManifest& m)
{
    std::vector<ImageBuffer> out;
    out.reserve(m.paths.size());
    for (const auto& p : m.paths)
        out.push_back(read_pnm(p));
    return out;
}

} // namespace stscq
