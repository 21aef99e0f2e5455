#pragma once

#include <span>
#include <vector>

#include "ocda/color_lab.hpp"

namespace ocda {

/// A subdomain after style purification: every member histogram-matched to the
/// subdomain's standard style (the mean histograms of the original members).
struct PurifiedSubdomain {
    int index = 0;  // 1-based subdomain id
    StyleTriple standard_style;
    std::vector<Image> members;
};

/// Standard style of a subdomain per the mean-histogram rule.
StyleTriple standard_style(std::span<const Image> subdomain_images, int bins);

/// Histogram-matches every member to `style` in LAB space and converts back
/// to RGB. Geometry is unchanged; purely photometric.
std::vector<Image> purify(std::span<const Image> subdomain_images, const StyleTriple& style,
                          int levels = kMatchLevels);

/// Mean squared descriptor distance to the descriptor centroid.
double intra_style_variance(std::span<const Image> images, int bins);

PurifiedSubdomain purify_subdomain(int index, std::span<const Image> members, int style_bins,
                                   int levels = kMatchLevels);

}  // namespace ocda
