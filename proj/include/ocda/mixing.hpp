#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocda/color_lab.hpp"
#include "ocda/image.hpp"
#include "ocda/rng.hpp"

namespace ocda {

enum class MixDirection { SourceToTarget, TargetToSource };

/// Mixed image/pseudo-label pair with provenance for audit manifests.
struct MixedSample {
    Image image;
    LabelMap label;
    MixDirection direction = MixDirection::SourceToTarget;
    int source_index = -1;
    int target_index = -1;
    std::uint64_t mask_seed = 0;
};

/// Mask covering the pixels of ceil(P/2) classes picked uniformly from the P
/// classes present in `labels` (ignored pixels never selected).
BinaryMask classmix_mask(const LabelMap& labels, RngEngine& rng);

/// Deterministic variant: mask of exactly the given classes.
BinaryMask classmix_mask_for_classes(const LabelMap& labels, std::span<const int> classes);

/// Classes selected by the seeded ClassMix rule: present classes in ascending
/// order, Fisher-Yates shuffled with `rng`, first ceil(P/2) taken.
std::vector<int> classmix_select_classes(const LabelMap& labels, RngEngine& rng);

/// Rectangular mask with center (d_x, d_y) ~ U(0,W) x U(0,H) and extents
/// (W*sqrt(1-eta), H*sqrt(1-eta)), eta ~ U(0,1), clipped to the image bounds.
BinaryMask cutmix_mask(int height, int width, RngEngine& rng);

/// Deterministic variant with explicit box parameters.
BinaryMask cutmix_mask_from(int height, int width, double eta, double center_x, double center_y);

/// Matches the histograms of only the masked pixels to `target` in LAB space;
/// unmasked pixels are byte-identical to the input.
Image photometric_region_transform(const Image& img, const BinaryMask& mask,
                                   const StyleTriple& target, int levels = kMatchLevels);

/// Source-to-target mixing: masked source pixels are photometrically matched
/// to `target_style` and pasted onto the target image; labels composite the
/// same way. An all-zero mask returns the target pair unchanged.
MixedSample mix_s2t(const Image& source_img, const LabelMap& source_label,
                    const Image& target_img, const LabelMap& target_pseudo_label,
                    const BinaryMask& mask, const StyleTriple& target_style,
                    int levels = kMatchLevels);

/// Target-to-source mixing: masked target pixels are matched to `source_style`
/// and pasted onto the source image. An all-zero mask returns the source pair.
MixedSample mix_t2s(const Image& source_img, const LabelMap& source_label,
                    const Image& target_img, const LabelMap& target_pseudo_label,
                    const BinaryMask& mask, const StyleTriple& source_style,
                    int levels = kMatchLevels);

struct AugmentConfig {
    bool flip = true;                 // horizontal flip with probability 1/2
    double brightness_jitter = 0.10;  // multiplicative, +-10%
    double contrast_jitter = 0.10;    // around mid-gray, +-10%
    double sigma_max = 1.0;           // Gaussian blur sigma ~ U(0, sigma_max)

    static AugmentConfig disabled() { return {false, 0.0, 0.0, 0.0}; }
};

/// Horizontal flip of image and label together.
MixedSample flip_horizontal(const MixedSample& sample);

Image blur_gaussian(const Image& img, double sigma);

/// Flip (joint), brightness/contrast jitter and Gaussian blur (image only).
MixedSample augment(const MixedSample& sample, RngEngine& rng, const AugmentConfig& config);

}  // namespace ocda
