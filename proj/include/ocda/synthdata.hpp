#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ocda/image.hpp"
#include "ocda/rng.hpp"

namespace ocda {

/// Global photometric transform applied to a rendered scene: per-channel LAB
/// affine (gain * value + offset) plus mild per-pixel RGB noise.
struct PhotometricProfile {
    double l_offset = 0.0, a_offset = 0.0, b_offset = 0.0;
    double l_gain = 1.0, a_gain = 1.0, b_gain = 1.0;
    double noise_sigma = 2.0;
};

struct SceneSpec {
    int width = 64;
    int height = 64;
    int num_classes = 5;  // class 0 is background; 2 <= C <= 8

    // Probability that each foreground class appears in a given image; the
    // generated corpus must contain every class in at least 10% of images.
    double class_presence_prob = 0.85;

    // Minimum pairwise descriptor distance between distinct domain profiles.
    double descriptor_margin = 0.25;
    int margin_probe_count = 8;
    int margin_bins = 64;
    bool enforce_margins = true;

    PhotometricProfile source_profile{};                // neutral rendering
    std::vector<PhotometricProfile> compound_profiles;  // up to 6 defaults
    PhotometricProfile open_profile{};

    SceneSpec();
};

struct CompoundTarget {
    std::vector<Image> images;
    std::vector<std::string> names;  // stable per-image identifiers
    // Ground truth below is for evaluation only; training consumes `images`.
    std::vector<int> hidden_subdomain;  // 0-based true profile index
    std::vector<LabelMap> hidden_labels;
};

struct OpenDomain {
    std::vector<Image> images;
    std::vector<std::string> names;
    std::vector<LabelMap> hidden_labels;  // evaluation only
};

/// Base color of each class before photometric transformation.
std::array<std::uint8_t, 3> class_base_color(int cls);

/// Renders one scene (label map + photometrically transformed image).
LabeledImage render_scene(const SceneSpec& spec, const PhotometricProfile& profile,
                          RngEngine& rng);

std::vector<LabeledImage> generate_source(const SceneSpec& spec, int n, std::uint64_t seed);

CompoundTarget generate_compound_target(const SceneSpec& spec, int k_true, int n,
                                        std::uint64_t seed);

OpenDomain generate_open(const SceneSpec& spec, int n, std::uint64_t seed);

/// Descriptor centroid of a profile over `margin_probe_count` probe scenes.
std::vector<double> profile_descriptor_centroid(const SceneSpec& spec,
                                                const PhotometricProfile& profile,
                                                std::uint64_t seed);

/// Throws BadSpec with a diagnostic if two profiles sit closer than the margin.
void check_profile_margins(const SceneSpec& spec, const std::vector<PhotometricProfile>& profiles,
                           const std::vector<std::string>& names, std::uint64_t seed);

}  // namespace ocda
