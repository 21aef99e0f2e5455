#pragma once

#include <array>
#include <span>
#include <vector>

#include "ocda/image.hpp"

namespace ocda {

/// CIELAB raster (sRGB companding, D65 white point), interleaved l,a,b doubles.
/// l in [0,100], a and b in [-128,127].
struct LabImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // width*height*3

    LabImage() = default;
    LabImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

enum class LabChannel { L = 0, A = 1, B = 2 };

/// Declared value range of a LAB channel; histograms span it with equal-width bins.
struct ChannelRange {
    double lo;
    double hi;
};

inline constexpr ChannelRange range_of(LabChannel c) {
    switch (c) {
        case LabChannel::L: return {0.0, 100.0};
        default: return {-128.0, 127.0};
    }
}

/// Histogram over one LAB channel: `counts.size()` equal-width bins spanning
/// the channel's declared range. Counts are raw pixel counts unless produced
/// by a normalizing operation.
struct Histogram {
    LabChannel channel = LabChannel::L;
    std::vector<double> counts;

    int bins() const { return static_cast<int>(counts.size()); }
    double total() const;
};

/// One histogram per LAB channel; all three share the bin count.
struct StyleTriple {
    Histogram l, a, b;

    int bins() const { return l.bins(); }
    const Histogram& channel(LabChannel c) const {
        switch (c) {
            case LabChannel::L: return l;
            case LabChannel::A: return a;
            default: return b;
        }
    }
};

/// Concatenated per-channel histograms, each B-block L1-normalized; length 3B.
using StyleDescriptor = std::vector<double>;

/// Number of uniform quantization levels used for CDF matching.
inline constexpr int kMatchLevels = 256;

LabImage rgb_to_lab(const Image& img);
Image lab_to_rgb(const LabImage& img);

/// Bin index of value v in a B-bin histogram over `range`; clamped to [0, B-1].
int bin_of(double v, const ChannelRange& range, int bins);

/// Representative value of level t on an R-level grid over `range` (level center).
double level_center(int t, const ChannelRange& range, int levels);

Histogram channel_histogram(const LabImage& img, LabChannel channel, int bins);

StyleDescriptor style_descriptor(const Image& img, int bins);

/// Arithmetic mean of the members' per-channel histograms (raw counts).
StyleTriple mean_histograms(std::span<const Image> imgs, int bins);

/// Monotone CDF-matching level map: src level -> target level. Both mass
/// vectors must have the same length; ties map to the lowest target level.
std::vector<int> cdf_match_levels(const std::vector<double>& src_mass,
                                  const std::vector<double>& tgt_mass);

/// Resamples a histogram's mass onto `levels` uniform levels over the same range.
std::vector<double> resample_to_levels(const Histogram& h, int levels);

/// Per-channel CDF matching of `img` to `target` on `levels` uniform levels.
LabImage histogram_match(const LabImage& img, const StyleTriple& target,
                         int levels = kMatchLevels);

/// Descriptor form of a style (each channel block L1-normalized).
StyleDescriptor style_to_descriptor(const StyleTriple& style);

double descriptor_distance(const StyleDescriptor& a, const StyleDescriptor& b);

}  // namespace ocda
