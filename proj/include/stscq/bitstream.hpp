#pragma once

#include "stscq/binary_io.hpp"
#include "stscq/codebook.hpp"
#include "stscq/error.hpp"
#include "stscq/quantizer.hpp"
#include "stscq/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stscq {

/// MSB-first bit packer.
class BitWriter {
public:
    void write(std::uint32_t value, unsigned width)
    {
        for (unsigned i = width; i-- > 0;) {
            if (fill_ == 0)
                bytes_.push_back(0);
            if ((value >> i) & 1u)
                bytes_.back() |= static_cast<std::uint8_t>(0x80u >> fill_);
            fill_ = (fill_ + 1) & 7u;
            ++bits_;
        }
    }

    std::uint64_t bit_count() const noexcept { return bits_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    unsigned fill_ = 0;
    std::uint64_t bits_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t read(unsigned width)
    {
        require(pos_ + width <= bytes_.size() * 8, ErrorCode::Truncated, "bit payload is truncated");
        std::uint32_t v = 0;
        for (unsigned i = 0; i < width; ++i, ++pos_)
            v = (v << 1) | ((bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u);
        return v;
    }

    std::uint64_t position() const noexcept { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::uint64_t pos_ = 0;
};

inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 18;

struct StreamHeader {
    std::uint8_t version = kStreamVersion;
    std::uint16_t M = 1;
    std::uint32_t K = 1;
    std::uint16_t T = 1;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t channels = 0;

    friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

/// Exactly ceil(log2 M) + T * ceil(log2 K) bits.
constexpr std::uint64_t payload_bits(std::uint64_t T, std::uint64_t K, std::uint64_t M) noexcept
{
    return T * ceil_log2(K) + ceil_log2(M);
}

/// Token-only bits per pixel; header bytes are excluded.
constexpr double bpp(std::uint64_t T, std::uint64_t K, std::uint64_t M, std::uint64_t width, std::uint64_t height) noexcept
{
    return static_cast<double>(payload_bits(T, K, M)) / static_cast<double>(width * height);
}

/// Bits per pixel counting the stream header and byte padding as well.
constexpr double bpp_with_header(std::uint64_t T, std::uint64_t K, std::uint64_t M, std::uint64_t width,
                                 std::uint64_t height) noexcept
{
    const std::uint64_t bytes = kStreamHeaderBytes + (payload_bits(T, K, M) + 7) / 8;
    return static_cast<double>(bytes * 8) / static_cast<double>(width * height);
}

inline StreamHeader make_header(const CodebookPool& pool, int width = 0, int height = 0, int channels = 0)
{
    StreamHeader h;
    h.M = static_cast<std::uint16_t>(pool.M());
    h.K = static_cast<std::uint32_t>(pool.K());
    h.T = static_cast<std::uint16_t>(pool.T());
    h.width = static_cast<std::uint16_t>(width);
    h.height = static_cast<std::uint16_t>(height);
    h.channels = static_cast<std::uint8_t>(channels);
    return h;
}

inline std::vector<std::uint8_t> serialize(const QuantizedImage& q, const StreamHeader& header)
{
    require(header.M >= 1 && header.K >= 1, ErrorCode::RangeViolation, "header M and K must be positive");
    require(q.group_index >= 0 && static_cast<std::uint32_t>(q.group_index) < header.M, ErrorCode::RangeViolation,
            "group index " + std::to_string(q.group_index) + " outside [0, " + std::to_string(header.M) + ")");
    require(q.indices.size() == header.T, ErrorCode::RangeViolation,
            std::to_string(q.indices.size()) + " indices for T=" + std::to_string(header.T));

    io::ByteWriter w;
    w.magic("STSQ");
    w.u8(header.version);
    w.u16(header.M);
    w.u32(header.K);
    w.u16(header.T);
    w.u16(header.width);
    w.u16(header.height);
    w.u8(header.channels);
    auto out = w.take();

    BitWriter bits;
    bits.write(static_cast<std::uint32_t>(q.group_index), ceil_log2(header.M));
    const unsigned width = ceil_log2(header.K);
    for (auto idx : q.indices) {
        require(idx < header.K, ErrorCode::RangeViolation,
                "code index " + std::to_string(idx) + " outside [0, " + std::to_string(header.K) + ")");
        bits.write(idx, width);
    }
    const auto payload = bits.take();
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

struct ParsedStream {
    StreamHeader header;
    QuantizedImage image;
};

/// Decodes a stream without reference to a pool.
inline ParsedStream parse_stream(std::span<const std::uint8_t> bytes)
{
    io::ByteReader r(bytes);
    require(r.magic("STSQ"), ErrorCode::BadMagic, "not an STSQ stream");
    ParsedStream out;
    auto& h = out.header;
    h.version = r.u8();
    require(h.version == kStreamVersion, ErrorCode::BadVersion, "unsupported stream version " + std::to_string(h.version));
    h.M = r.u16();
    h.K = r.u32();
    h.T = r.u16();
    h.width = r.u16();
    h.height = r.u16();
    h.channels = r.u8();
    require(h.M >= 1 && h.K >= 1, ErrorCode::BadFormat, "header M and K must be positive");

    const std::uint64_t nbits = payload_bits(h.T, h.K, h.M);
    const std::uint64_t nbytes = (nbits + 7) / 8;
    const auto payload = r.rest();
    require(payload.size() >= nbytes, ErrorCode::Truncated,
            "payload has " + std::to_string(payload.size()) + " bytes, expected " + std::to_string(nbytes));
    require(payload.size() == nbytes, ErrorCode::TrailingBytes,
            std::to_string(payload.size() - nbytes) + " bytes after payload");

    BitReader bits(payload);
    out.image.group_index = static_cast<int>(bits.read(ceil_log2(h.M)));
    require(static_cast<std::uint32_t>(out.image.group_index) < h.M, ErrorCode::RangeViolation,
            "decoded group index out of range");
    const unsigned width = ceil_log2(h.K);
    out.image.indices.resize(h.T);
    for (auto& idx : out.image.indices) {
        idx = bits.read(width);
        require(idx < h.K, ErrorCode::RangeViolation, "decoded code index out of range");
    }
    const unsigned pad = static_cast<unsigned>(nbytes * 8 - nbits);
    require(bits.read(pad) == 0, ErrorCode::NonZeroPadding, "padding bits must be zero");
    return out;
}

inline QuantizedImage deserialize(std::span<const std::uint8_t> bytes, const CodebookPool& pool)
{
    auto parsed = parse_stream(bytes);
    const auto& h = parsed.header;
    require(h.M == pool.M() && h.K == static_cast<std::uint32_t>(pool.K()) && h.T == pool.T(),
            ErrorCode::HeaderMismatch,
            "stream (M=" + std::to_string(h.M) + ", K=" + std::to_string(h.K) + ", T=" + std::to_string(h.T) +
                ") does not match pool (M=" + std::to_string(pool.M()) + ", K=" + std::to_string(pool.K()) +
                ", T=" + std::to_string(pool.T()) + ")");
    return std::move(parsed.image);
}

} // namespace stscq
