#include "ocda/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <sstream>

#include "ocda/color_lab.hpp"
#include "ocda/errors.hpp"

namespace ocda {

namespace {

// Global styles for the latent subdomains. Each profile suppresses a
// different color axis (heavy gain compression), the way weather kills
// contrast or chroma: every subdomain stays separable on its surviving axes,
// but a model keyed to another subdomain's dominant cue finds it missing.
const PhotometricProfile kCompoundDefaults[6] = {
    {-10.0, 0.0, 0.0, 0.90, 0.12, 1.00, 2.0},  // red-green axis crushed, dim
    {10.0, 0.0, 0.0, 1.00, 1.00, 0.12, 2.0},   // blue-yellow axis crushed, bright
    {30.0, 0.0, 0.0, 0.45, 0.75, 0.75, 2.0},   // luminance contrast flattened
    {-15.0, 10.0, -10.0, 0.80, 0.50, 0.50, 2.0},  // dark, chroma halved
    {0.0, -20.0, 15.0, 1.10, 1.00, 0.30, 2.0},    // cool, yellow axis damped
    {18.0, 15.0, 15.0, 0.70, 0.30, 1.00, 2.0},    // warm, red axis damped
};

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void fill_rect(LabelMap& label, int x0, int y0, int w, int h, std::uint8_t cls) {
    const int x1 = std::min(x0 + w, label.width);
    const int y1 = std::min(y0 + h, label.height);
    for (int y = std::max(0, y0); y < y1; ++y) {
        for (int x = std::max(0, x0); x < x1; ++x) label.at(x, y) = cls;
    }
}

void fill_disc(LabelMap& label, int cx, int cy, int r, std::uint8_t cls) {
    for (int y = std::max(0, cy - r); y <= std::min(label.height - 1, cy + r); ++y) {
        for (int x = std::max(0, cx - r); x <= std::min(label.width - 1, cx + r); ++x) {
            const int dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) label.at(x, y) = cls;
        }
    }
}

void fill_stripes(LabelMap& label, int y0, int h, int period, int thickness, std::uint8_t cls) {
    const int y1 = std::min(y0 + h, label.height);
    for (int y = std::max(0, y0); y < y1; ++y) {
        if ((y - y0) % period < thickness) {
            for (int x = 0; x < label.width; ++x) label.at(x, y) = cls;
        }
    }
}

}  // namespace

SceneSpec::SceneSpec() {
    compound_profiles.assign(std::begin(kCompoundDefaults), std::end(kCompoundDefaults));
    open_profile = {5.0, -8.0, -5.0, 0.95, 0.45, 0.45, 2.0};
}

std::array<std::uint8_t, 3> class_base_color(int cls) {
    static constexpr std::array<std::uint8_t, 3> kColors[8] = {
        {96, 96, 96},    // 0: background
        {182, 62, 58},   // 1: red
        {58, 152, 64},   // 2: green
        {70, 82, 182},   // 3: blue
        {202, 172, 60},  // 4: yellow
        {152, 62, 162},  // 5: purple
        {58, 162, 172},  // 6: cyan
        {212, 122, 70},  // 7: orange
    };
    return kColors[cls % 8];
}

LabeledImage render_scene(const SceneSpec& spec, const PhotometricProfile& profile,
                          RngEngine& rng) {
    const int W = spec.width, H = spec.height;
    LabelMap label(W, H, 0);

    // Shape kind is drawn independently of the class so that geometry carries
    // no class information; color is the only class cue.
    for (int cls = 1; cls < spec.num_classes; ++cls) {
        if (unit_real(rng) >= spec.class_presence_prob) continue;
        const int shapes = 1 + static_cast<int>(bounded(rng, 2));
        for (int s = 0; s < shapes; ++s) {
            switch (bounded(rng, 3)) {
                case 0: {
                    const int w = 8 + static_cast<int>(bounded(rng, 21));
                    const int h = 8 + static_cast<int>(bounded(rng, 21));
                    const int x0 = static_cast<int>(bounded(rng, std::max(1, W - w)));
                    const int y0 = static_cast<int>(bounded(rng, std::max(1, H - h)));
                    fill_rect(label, x0, y0, w, h, static_cast<std::uint8_t>(cls));
                    break;
                }
                case 1: {
                    const int r = 5 + static_cast<int>(bounded(rng, 10));
                    const int cx = r + static_cast<int>(bounded(rng, std::max(1, W - 2 * r)));
                    const int cy = r + static_cast<int>(bounded(rng, std::max(1, H - 2 * r)));
                    fill_disc(label, cx, cy, r, static_cast<std::uint8_t>(cls));
                    break;
                }
                default: {
                    const int h = 12 + static_cast<int>(bounded(rng, 17));
                    const int y0 = static_cast<int>(bounded(rng, std::max(1, H - h)));
                    const int period = 4 + static_cast<int>(bounded(rng, 4));
                    fill_stripes(label, y0, h, period, period / 2 + 1,
                                 static_cast<std::uint8_t>(cls));
                    break;
                }
            }
        }
    }

    // Base rendering: class colors with small per-pixel texture jitter.
    Image base(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const auto color = class_base_color(label.at(x, y));
            for (int c = 0; c < 3; ++c) {
                const double jitter = uniform_real(rng, -6.0, 6.0);
                base.at(x, y, c) = clamp_u8(color[c] + jitter);
            }
        }
    }

    // Photometric style: per-channel LAB affine, then mild RGB noise.
    LabImage lab = rgb_to_lab(base);
    for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
        lab.data[i * 3 + 0] = std::clamp(profile.l_gain * lab.data[i * 3 + 0] + profile.l_offset,
                                         0.0, 100.0);
        lab.data[i * 3 + 1] = std::clamp(profile.a_gain * lab.data[i * 3 + 1] + profile.a_offset,
                                         -128.0, 127.0);
        lab.data[i * 3 + 2] = std::clamp(profile.b_gain * lab.data[i * 3 + 2] + profile.b_offset,
                                         -128.0, 127.0);
    }
    Image img = lab_to_rgb(lab);
    if (profile.noise_sigma > 0.0) {
        for (auto& v : img.data) v = clamp_u8(v + profile.noise_sigma * gaussian(rng));
    }
    return {std::move(img), std::move(label)};
}

std::vector<LabeledImage> generate_source(const SceneSpec& spec, int n, std::uint64_t seed) {
    if (n < 1) throw BadSpecError("generate_source: n must be >= 1");
    if (spec.num_classes < 2 || spec.num_classes > 8) {
        throw BadSpecError("generate_source: num_classes must lie in [2, 8]");
    }
    std::vector<LabeledImage> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        RngEngine rng = make_stream(seed, 0x736f75726365ULL, static_cast<std::uint64_t>(i));
        out.push_back(render_scene(spec, spec.source_profile, rng));
    }
    return out;
}

std::vector<double> profile_descriptor_centroid(const SceneSpec& spec,
                                                const PhotometricProfile& profile,
                                                std::uint64_t seed) {
    std::vector<double> centroid;
    for (int i = 0; i < spec.margin_probe_count; ++i) {
        RngEngine rng = make_stream(seed, 0x70726f6265ULL, static_cast<std::uint64_t>(i));
        const LabeledImage scene = render_scene(spec, profile, rng);
        const StyleDescriptor d = style_descriptor(scene.image, spec.margin_bins);
        if (centroid.empty()) centroid.assign(d.size(), 0.0);
        for (std::size_t j = 0; j < d.size(); ++j) centroid[j] += d[j];
    }
    for (double& v : centroid) v /= spec.margin_probe_count;
    return centroid;
}

void check_profile_margins(const SceneSpec& spec, const std::vector<PhotometricProfile>& profiles,
                           const std::vector<std::string>& names, std::uint64_t seed) {
    std::vector<std::vector<double>> centroids;
    centroids.reserve(profiles.size());
    for (const auto& p : profiles) {
        centroids.push_back(profile_descriptor_centroid(spec, p, seed));
    }
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        for (std::size_t j = i + 1; j < centroids.size(); ++j) {
            const double d = descriptor_distance(centroids[i], centroids[j]);
            if (d < spec.descriptor_margin) {
                std::ostringstream msg;
                msg << "profile margin violation: " << names[i] << " vs " << names[j]
                    << " descriptor distance " << d << " < margin " << spec.descriptor_margin;
                throw BadSpecError(msg.str());
            }
        }
    }
}

CompoundTarget generate_compound_target(const SceneSpec& spec, int k_true, int n,
                                        std::uint64_t seed) {
    if (k_true < 2 || k_true > 6) {
        throw BadSpecError("generate_compound_target: k_true must lie in [2, 6]");
    }
    if (n < k_true) throw BadSpecError("generate_compound_target: n must be >= k_true");
    if (static_cast<int>(spec.compound_profiles.size()) < k_true) {
        throw BadSpecError("generate_compound_target: not enough compound profiles");
    }
    if (spec.enforce_margins) {
        std::vector<PhotometricProfile> profiles(spec.compound_profiles.begin(),
                                                 spec.compound_profiles.begin() + k_true);
        std::vector<std::string> names;
        for (int m = 0; m < k_true; ++m) names.push_back("compound_" + std::to_string(m + 1));
        check_profile_margins(spec, profiles, names, seed);
    }

    // Balanced assignment, shuffled so subdomain id is independent of position.
    std::vector<int> subdomain(n);
    for (int i = 0; i < n; ++i) subdomain[i] = i % k_true;
    RngEngine assign_rng = make_stream(seed, 0x61737369676eULL);  // "assign"
    shuffle(subdomain, assign_rng);

    CompoundTarget out;
    out.images.reserve(n);
    out.hidden_labels.reserve(n);
    out.hidden_subdomain = subdomain;
    for (int i = 0; i < n; ++i) {
        RngEngine rng = make_stream(seed, 0x746172676574ULL, static_cast<std::uint64_t>(i));
        LabeledImage scene = render_scene(spec, spec.compound_profiles[subdomain[i]], rng);
        out.images.push_back(std::move(scene.image));
        out.hidden_labels.push_back(std::move(scene.label));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "target_%04d", i);
        out.names.emplace_back(buf);
    }
    return out;
}

OpenDomain generate_open(const SceneSpec& spec, int n, std::uint64_t seed) {
    if (n < 1) throw BadSpecError("generate_open: n must be >= 1");
    if (spec.enforce_margins) {
        std::vector<PhotometricProfile> profiles = spec.compound_profiles;
        profiles.push_back(spec.open_profile);
        std::vector<std::string> names;
        for (std::size_t m = 0; m + 1 < profiles.size(); ++m) {
            names.push_back("compound_" + std::to_string(m + 1));
        }
        names.push_back("open");
        // Only the open profile's distances matter here; compound profiles are
        // validated against each other when the compound set is generated.
        const auto open_centroid = profile_descriptor_centroid(spec, spec.open_profile, seed);
        for (std::size_t m = 0; m + 1 < profiles.size(); ++m) {
            const auto c = profile_descriptor_centroid(spec, profiles[m], seed);
            const double d = descriptor_distance(open_centroid, c);
            if (d < spec.descriptor_margin) {
                std::ostringstream msg;
                msg << "profile margin violation: open vs " << names[m]
                    << " descriptor distance " << d << " < margin " << spec.descriptor_margin;
                throw BadSpecError(msg.str());
            }
        }
    }
    OpenDomain out;
    out.images.reserve(n);
    for (int i = 0; i < n; ++i) {
        RngEngine rng = make_stream(seed, 0x6f70656eULL, static_cast<std::uint64_t>(i));
        LabeledImage scene = render_scene(spec, spec.open_profile, rng);
        out.images.push_back(std::move(scene.image));
        out.hidden_labels.push_back(std::move(scene.label));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "open_%04d", i);
        out.names.emplace_back(buf);
    }
    return out;
}

}  // namespace ocda
