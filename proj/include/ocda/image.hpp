#pragma once

#include <cstdint>
#include <vector>

#include "ocda/errors.hpp"

namespace ocda {

/// Label value excluded from losses and metrics.
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// 8-bit interleaved RGB raster.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // width*height*3, row-major, r g b

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const Image&) const = default;
};

/// Per-pixel class indices in [0, C-1], or kIgnoreLabel.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    LabelMap() = default;
    LabelMap(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelMap&) const = default;
};

/// Per-pixel {0,1} mask.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    std::size_t count_set() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }

    bool operator==(const BinaryMask&) const = default;
};

struct LabeledImage {
    Image image;
    LabelMap label;
};

inline void require_same_dims(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb) {
        throw DimensionMismatchError(std::string(what) + ": dimension mismatch");
    }
}

}  // namespace ocda
