#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace stscq {

/// Row-major, channel-interleaved image with samples in [0,1].
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill)
    {
        require(w > 0 && h > 0, ErrorCode::InvalidArgument, "image dimensions must be positive");
        require(c == 1 || c == 3, ErrorCode::InvalidArgument, "channels must be 1 or 3");
    }

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    std::size_t sample_count() const noexcept { return data.size(); }
};

inline double mse(const ImageBuffer& a, const ImageBuffer& b)
{
    require(a.width == b.width && a.height == b.height && a.channels == b.channels,
            ErrorCode::ShapeMismatch, "image shapes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double diff = a.data[i] - b.data[i];
        sum += diff * diff;
    }
    return sum / static_cast<double>(a.data.size());
}

// Binary PGM (P5) / PPM (P6), maxval 255.

namespace detail {

inline std::size_t skip_pnm_space(const std::vector<std::uint8_t>& bytes, std::size_t pos)
{
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n')
                ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    return pos;
}

inline int read_pnm_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos)
{
    pos = skip_pnm_space(bytes, pos);
    require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorCode::BadFormat, "malformed PNM header");
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        require(value < (1L << 24), ErrorCode::BadFormat, "PNM header value too large");
        ++pos;
    }
    return static_cast<int>(value);
}

} // namespace detail

inline ImageBuffer decode_pnm(const std::vector<std::uint8_t>& bytes)
{
    require(bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'), ErrorCode::BadMagic,
            "expected binary PGM (P5) or PPM (P6)");
    const int channels = bytes[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    const int width = detail::read_pnm_int(bytes, pos);
    const int height = detail::read_pnm_int(bytes, pos);
    const int maxval = detail::read_pnm_int(bytes, pos);
    require(maxval == 255, ErrorCode::BadFormat, "only maxval 255 is supported");
    require(width > 0 && height > 0, ErrorCode::BadFormat, "empty image");
    require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::BadFormat, "missing raster separator");
    ++pos;

    ImageBuffer img(width, height, channels);
    require(bytes.size() - pos >= img.data.size(), ErrorCode::Truncated, "PNM raster is truncated");
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = bytes[pos + i] / 255.0;
    return img;
}

inline std::vector<std::uint8_t> encode_pnm(const ImageBuffer& img)
{
    const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                               std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size());
    for (double v : img.data)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return out;
}

inline ImageBuffer read_pnm(const std::string& path) { return decode_pnm(io::read_file(path)); }

inline void write_pnm(const std::string& path, const ImageBuffer& img) { io::write_file(path, encode_pnm(img)); }

} // namespace stscq
