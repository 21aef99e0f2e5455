#include "ocda/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ocda/errors.hpp"

namespace ocda {

std::vector<int> classmix_select_classes(const LabelMap& labels, RngEngine& rng) {
    std::set<int> present;
    for (std::uint8_t v : labels.data) {
        if (v != kIgnoreLabel) present.insert(v);
    }
    if (present.empty()) throw EmptyLabelError("classmix: label map has no valid pixels");
    std::vector<int> classes(present.begin(), present.end());
    shuffle(classes, rng);
    const std::size_t take = (classes.size() + 1) / 2;  // ceil(P/2)
    classes.resize(take);
    std::sort(classes.begin(), classes.end());
    return classes;
}

BinaryMask classmix_mask_for_classes(const LabelMap& labels, std::span<const int> classes) {
    BinaryMask mask(labels.width, labels.height);
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        const std::uint8_t v = labels.data[i];
        if (v == kIgnoreLabel) continue;
        for (int c : classes) {
            if (v == c) {
                mask.data[i] = 1;
                break;
            }
        }
    }
    return mask;
}

BinaryMask classmix_mask(const LabelMap& labels, RngEngine& rng) {
    const std::vector<int> classes = classmix_select_classes(labels, rng);
    return classmix_mask_for_classes(labels, classes);
}

BinaryMask cutmix_mask_from(int height, int width, double eta, double center_x, double center_y) {
    BinaryMask mask(width, height);
    const double root = std::sqrt(std::max(0.0, 1.0 - eta));
    // Integer extents are floored so the box area never exceeds (1-eta)*H*W;
    // clipping to the raster only shrinks it further.
    const int dw = static_cast<int>(std::floor(width * root));
    const int dh = static_cast<int>(std::floor(height * root));
    if (dw <= 0 || dh <= 0) return mask;
    int x0 = static_cast<int>(std::lround(center_x - dw / 2.0));
    int y0 = static_cast<int>(std::lround(center_y - dh / 2.0));
    int x1 = std::min(x0 + dw, width);
    int y1 = std::min(y0 + dh, height);
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) mask.at(x, y) = 1;
    }
    return mask;
}

BinaryMask cutmix_mask(int height, int width, RngEngine& rng) {
    if (height < 1 || width < 1) throw DimensionMismatchError("cutmix: empty raster");
    const double cx = unit_real(rng) * width;
    const double cy = unit_real(rng) * height;
    const double eta = unit_real(rng);
    return cutmix_mask_from(height, width, eta, cx, cy);
}

Image photometric_region_transform(const Image& img, const BinaryMask& mask,
                                   const StyleTriple& target, int levels) {
    require_same_dims(img.width, img.height, mask.width, mask.height,
                      "photometric_region_transform");
    const std::size_t set = mask.count_set();
    if (set == 0) throw EmptyMaskError("photometric_region_transform: mask has no set pixels");
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        if (target.channel(ch).total() <= 0.0) {
            throw DegenerateTargetError("photometric_region_transform: zero-mass target channel");
        }
    }

    const LabImage lab = rgb_to_lab(img);
    LabImage region_lab = lab;  // only masked entries are rewritten below
    const std::size_t n = img.pixel_count();
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        const int c = static_cast<int>(ch);
        const ChannelRange range = range_of(ch);
        std::vector<double> src_mass(levels, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (mask.data[i]) src_mass[bin_of(lab.data[i * 3 + c], range, levels)] += 1.0;
        }
        const std::vector<double> tgt_mass = resample_to_levels(target.channel(ch), levels);
        const std::vector<int> map = cdf_match_levels(src_mass, tgt_mass);
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask.data[i]) continue;
            const int s = bin_of(lab.data[i * 3 + c], range, levels);
            region_lab.data[i * 3 + c] = level_center(map[s], range, levels);
        }
    }

    const Image converted = lab_to_rgb(region_lab);
    Image out = img;  // unmasked pixels stay byte-identical
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i]) continue;
        for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = converted.data[i * 3 + c];
    }
    return out;
}

namespace {

void check_mix_dims(const Image& xs, const LabelMap& ys, const Image& xt, const LabelMap& yt,
                    const BinaryMask& mask) {
    require_same_dims(xs.width, xs.height, ys.width, ys.height, "mix: source pair");
    require_same_dims(xt.width, xt.height, yt.width, yt.height, "mix: target pair");
    require_same_dims(xs.width, xs.height, xt.width, xt.height, "mix: source vs target");
    require_same_dims(xs.width, xs.height, mask.width, mask.height, "mix: mask");
}

}  // namespace

MixedSample mix_s2t(const Image& source_img, const LabelMap& source_label,
                    const Image& target_img, const LabelMap& target_pseudo_label,
                    const BinaryMask& mask, const StyleTriple& target_style, int levels) {
    check_mix_dims(source_img, source_label, target_img, target_pseudo_label, mask);
    MixedSample out;
    out.direction = MixDirection::SourceToTarget;
    if (mask.count_set() == 0) {
        out.image = target_img;
        out.label = target_pseudo_label;
        return out;
    }
    const Image transformed = photometric_region_transform(source_img, mask, target_style, levels);
    out.image = target_img;
    out.label = target_pseudo_label;
    const std::size_t n = out.image.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i]) continue;
        for (int c = 0; c < 3; ++c) out.image.data[i * 3 + c] = transformed.data[i * 3 + c];
        out.label.data[i] = source_label.data[i];
    }
    return out;
}

MixedSample mix_t2s(const Image& source_img, const LabelMap& source_label,
                    const Image& target_img, const LabelMap& target_pseudo_label,
                    const BinaryMask& mask, const StyleTriple& source_style, int levels) {
    check_mix_dims(source_img, source_label, target_img, target_pseudo_label, mask);
    MixedSample out;
    out.direction = MixDirection::TargetToSource;
    if (mask.count_set() == 0) {
        out.image = source_img;
        out.label = source_label;
        return out;
    }
    const Image transformed = photometric_region_transform(target_img, mask, source_style, levels);
    out.image = source_img;
    out.label = source_label;
    const std::size_t n = out.image.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i]) continue;
        for (int c = 0; c < 3; ++c) out.image.data[i * 3 + c] = transformed.data[i * 3 + c];
        out.label.data[i] = target_pseudo_label.data[i];
    }
    return out;
}

MixedSample flip_horizontal(const MixedSample& sample) {
    MixedSample out = sample;
    const int w = sample.image.width;
    const int h = sample.image.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = sample.image.at(w - 1 - x, y, c);
            out.label.at(x, y) = sample.label.at(w - 1 - x, y);
        }
    }
    return out;
}

Image blur_gaussian(const Image& img, double sigma) {
    const int radius = sigma > 0.0 ? static_cast<int>(std::ceil(3.0 * sigma)) : 0;
    if (radius == 0) return img;
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;

    const int w = img.width, h = img.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
    // horizontal pass, clamp-to-edge
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, w - 1);
                    s += kernel[i + radius] * img.at(xx, y, c);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = s;
            }
        }
    }
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, h - 1);
                    s += kernel[i + radius] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
                }
                out.at(x, y, c) =
                    static_cast<std::uint8_t>(std::clamp(std::lround(s), 0L, 255L));
            }
        }
    }
    return out;
}

MixedSample augment(const MixedSample& sample, RngEngine& rng, const AugmentConfig& config) {
    MixedSample out = sample;
    if (config.flip && bounded(rng, 2) == 1) {
        out = flip_horizontal(out);
    }
    if (config.brightness_jitter > 0.0) {
        const double b = 1.0 + config.brightness_jitter * (2.0 * unit_real(rng) - 1.0);
        for (auto& v : out.image.data) {
            v = static_cast<std::uint8_t>(std::clamp(std::lround(v * b), 0L, 255L));
        }
    }
    if (config.contrast_jitter > 0.0) {
        const double c = 1.0 + config.contrast_jitter * (2.0 * unit_real(rng) - 1.0);
        for (auto& v : out.image.data) {
            v = static_cast<std::uint8_t>(
                std::clamp(std::lround((v - 127.5) * c + 127.5), 0L, 255L));
        }
    }
    if (config.sigma_max > 0.0) {
        const double sigma = unit_real(rng) * config.sigma_max;
        out.image = blur_gaussian(out.image, sigma);
    }
    return out;
}

}  // namespace ocda
