// 8-bit interleaved images and masks shared by the slide pipeline and the model.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fwrd/tensor.hpp"

namespace fwrd {

/// Row-major, channel-interleaved (h, w, c) 8-bit raster.
struct ImageU8 {
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch = 0) {
        return pixels[(y * width + x) * channels + ch];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch = 0) const {
        return pixels[(y * width + x) * channels + ch];
    }

    ImageU8 crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
        if (y0 + h > height || x0 + w > width) throw std::out_of_range("crop window outside image");
        ImageU8 out(h, w, channels);
        for (std::size_t y = 0; y < h; ++y) {
            const std::uint8_t* src = &pixels[((y0 + y) * width + x0) * channels];
            std::copy(src, src + w * channels, &out.pixels[y * w * channels]);
        }
        return out;
    }

    bool operator==(const ImageU8&) const = default;
};

/// Per-channel input normalization applied before the teacher.
struct NormStats {
    std::vector<double> mean{0.5, 0.5, 0.5};
    std::vector<double> std{0.25, 0.25, 0.25};
};

/// Stacks images into an (n, c, h, w) tensor with values (v/255 - mean) / std.
template <class T>
Tensor<T> to_tensor(const std::vector<const ImageU8*>& images, const NormStats& norm) {
    if (images.empty()) throw ShapeError("to_tensor: empty batch");
    const ImageU8& first = *images.front();
    if (norm.mean.size() != first.channels || norm.std.size() != first.channels)
        throw ShapeError("to_tensor: normalization stats do not match channel count");
    Tensor<T> out({images.size(), first.channels, first.height, first.width});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const ImageU8& im = *images[n];
        if (im.height != first.height || im.width != first.width || im.channels != first.channels)
            throw ShapeError("to_tensor: images in a batch must share a size");
        for (std::size_t c = 0; c < im.channels; ++c) {
            T* dst = out.plane(n, c);
            const T m = static_cast<T>(norm.mean[c]);
            const T inv = static_cast<T>(1.0 / norm.std[c]);
            for (std::size_t i = 0; i < im.height * im.width; ++i)
                dst[i] = (static_cast<T>(im.pixels[i * im.channels + c]) / T(255) - m) * inv;
        }
    }
    return out;
}

}  // namespace fwrd
