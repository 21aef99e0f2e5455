#include "ocda/style_purify.hpp"

#include "ocda/errors.hpp"

namespace ocda {

StyleTriple standard_style(std::span<const Image> subdomain_images, int bins) {
    if (subdomain_images.empty()) {
        throw EmptySubdomainError("standard_style: empty subdomain");
    }
    return mean_histograms(subdomain_images, bins);
}

std::vector<Image> purify(std::span<const Image> subdomain_images, const StyleTriple& style,
                          int levels) {
    std::vector<Image> out;
    out.reserve(subdomain_images.size());
    for (const Image& img : subdomain_images) {
        out.push_back(lab_to_rgb(histogram_match(rgb_to_lab(img), style, levels)));
    }
    return out;
}

double intra_style_variance(std::span<const Image> images, int bins) {
    if (images.size() < 2) {
        throw TooFewImagesError("intra_style_variance: needs at least 2 images");
    }
    std::vector<StyleDescriptor> descs;
    descs.reserve(images.size());
    for (const Image& img : images) descs.push_back(style_descriptor(img, bins));

    // Mean squared distance to the centroid via the pairwise identity
    // (1/n) sum_i ||d_i - c||^2 = (1/(2 n^2)) sum_{i,j} ||d_i - d_j||^2,
    // which is exactly zero for identical inputs.
    const std::size_t n = descs.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = descriptor_distance(descs[i], descs[j]);
            sum += 2.0 * d * d;
        }
    }
    return sum / (2.0 * static_cast<double>(n) * static_cast<double>(n));
}

PurifiedSubdomain purify_subdomain(int index, std::span<const Image> members, int style_bins,
                                   int levels) {
    PurifiedSubdomain out;
    out.index = index;
    out.standard_style = standard_style(members, style_bins);
    out.members = purify(members, out.standard_style, levels);
    return out;
}

}  // namespace ocda
