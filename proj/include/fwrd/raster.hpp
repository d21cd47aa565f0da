// RDHM raster container: "RDHM", u16 version, u8 dtype, u32 height, width,
// channels, then a little-endian row-major (HWC) payload.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwrd/image.hpp"
#include "fwrd/slide.hpp"

namespace fwrd {

inline constexpr std::array<char, 4> kRasterMagic{'R', 'D', 'H', 'M'};
inline constexpr std::uint16_t kRasterVersion = 1;

enum class RasterType : std::uint8_t { u8 = 0, f32 = 1 };

struct RasterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decoded raster; exactly one of the payload vectors is populated.
struct Raster {
    RasterType type = RasterType::u8;
    std::uint32_t height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> u8;
    std::vector<float> f32;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(U) > in.size()) throw RasterError("truncated raster header");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<std::uint8_t>(in[pos + i])) << (8 * i);
    pos += sizeof(U);
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RasterError("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RasterError("cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RasterError("short write to " + path);
}

}  // namespace detail

inline std::string encode_raster(const Raster& r) {
    const std::size_t n = static_cast<std::size_t>(r.height) * r.width * r.channels;
    if ((r.type == RasterType::u8 ? r.u8.size() : r.f32.size()) != n)
        throw RasterError("raster payload size does not match its dimensions");
    std::string out(kRasterMagic.begin(), kRasterMagic.end());
    detail::put_le<std::uint16_t>(out, kRasterVersion);
    out.push_back(static_cast<char>(r.type));
    detail::put_le<std::uint32_t>(out, r.height);
    detail::put_le<std::uint32_t>(out, r.width);
    detail::put_le<std::uint32_t>(out, r.channels);
    if (r.type == RasterType::u8) {
        out.append(reinterpret_cast<const char*>(r.u8.data()), n);
    } else {
        out.reserve(out.size() + 4 * n);
        for (float v : r.f32) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline Raster decode_raster(const std::string& bytes) {
    if (bytes.size() < 4 || !std::equal(kRasterMagic.begin(), kRasterMagic.end(), bytes.begin()))
        throw RasterError("not an RDHM raster (bad magic)");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint16_t>(bytes, pos);
    if (version != kRasterVersion)
        throw RasterError("unsupported RDHM version " + std::to_string(version) + " (expected " +
                          std::to_string(kRasterVersion) + ")");
    const auto tag = detail::get_le<std::uint8_t>(bytes, pos);
    if (tag > 1) throw RasterError("unknown RDHM dtype tag " + std::to_string(tag));
    Raster r;
    r.type = static_cast<RasterType>(tag);
    r.height = detail::get_le<std::uint32_t>(bytes, pos);
    r.width = detail::get_le<std::uint32_t>(bytes, pos);
    r.channels = detail::get_le<std::uint32_t>(bytes, pos);
    const std::size_t n = static_cast<std::size_t>(r.height) * r.width * r.channels;
    const std::size_t elem = r.type == RasterType::u8 ? 1 : 4;
    if (bytes.size() - pos != n * elem)
        throw RasterError("RDHM payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                          std::to_string(n * elem));
    if (r.type == RasterType::u8) {
        r.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    } else {
        r.f32.resize(n);
        for (auto& v : r.f32) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
    }
    return r;
}

inline void write_raster(const std::string& path, const Raster& r) { detail::write_file(path, encode_raster(r)); }
inline Raster read_raster(const std::string& path) { return decode_raster(detail::read_file(path)); }

inline Raster to_raster(const ImageU8& im) {
    Raster r;
    r.type = RasterType::u8;
    r.height = static_cast<std::uint32_t>(im.height);
    r.width = static_cast<std::uint32_t>(im.width);
    r.channels = static_cast<std::uint32_t>(im.channels);
    r.u8 = im.pixels;
    return r;
}

inline Raster to_raster(const Heatmap& h) {
    Raster r;
    r.type = RasterType::f32;
    r.height = static_cast<std::uint32_t>(h.height);
    r.width = static_cast<std::uint32_t>(h.width);
    r.channels = 1;
    r.f32 = h.values;
    return r;
}

inline ImageU8 image_from_raster(const Raster& r) {
    if (r.type != RasterType::u8) throw RasterError("expected a u8 raster");
    ImageU8 im(r.height, r.width, r.channels);
    im.pixels = r.u8;
    return im;
}

inline Heatmap heatmap_from_raster(const Raster& r) {
    if (r.type != RasterType::f32 || r.channels != 1) throw RasterError("expected a single-channel f32 raster");
    return {r.height, r.width, r.f32};
}

inline void write_image(const std::string& path, const ImageU8& im) { write_raster(path, to_raster(im)); }
inline ImageU8 read_image(const std::string& path) { return image_from_raster(read_raster(path)); }
inline void write_heatmap(const std::string& path, const Heatmap& h) { write_raster(path, to_raster(h)); }
inline Heatmap read_heatmap(const std::string& path) { return heatmap_from_raster(read_raster(path)); }

}  // namespace fwrd
