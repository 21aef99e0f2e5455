#include "ocda/color_lab.hpp"

#include <algorithm>
#include <cmath>

#include "ocda/errors.hpp"

namespace ocda {

namespace {

// sRGB <-> XYZ (D65). White point taken as the matrix row sums so that
// (255,255,255) maps to exactly (100, 0, 0).
constexpr double kM[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
constexpr double kMInv[3][3] = {
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252},
};
constexpr double kWhite[3] = {
    kM[0][0] + kM[0][1] + kM[0][2],
    kM[1][0] + kM[1][1] + kM[1][2],
    kM[2][0] + kM[2][1] + kM[2][2],
};

constexpr double kEps = 216.0 / 24389.0;   // (6/29)^3
constexpr double kKappa = 24389.0 / 27.0;  // (29/3)^3

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
    return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
    return t > kEps ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

double lab_f_inv(double f) {
    const double f3 = f * f * f;
    return f3 > kEps ? f3 : (116.0 * f - 16.0) / kKappa;
}

}  // namespace

double Histogram::total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
}

LabImage rgb_to_lab(const Image& img) {
    LabImage out(img.width, img.height);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = srgb_to_linear(img.data[i * 3 + 0] / 255.0);
        const double g = srgb_to_linear(img.data[i * 3 + 1] / 255.0);
        const double b = srgb_to_linear(img.data[i * 3 + 2] / 255.0);
        const double x = kM[0][0] * r + kM[0][1] * g + kM[0][2] * b;
        const double y = kM[1][0] * r + kM[1][1] * g + kM[1][2] * b;
        const double z = kM[2][0] * r + kM[2][1] * g + kM[2][2] * b;
        const double fx = lab_f(x / kWhite[0]);
        const double fy = lab_f(y / kWhite[1]);
        const double fz = lab_f(z / kWhite[2]);
        out.data[i * 3 + 0] = std::clamp(116.0 * fy - 16.0, 0.0, 100.0);
        out.data[i * 3 + 1] = std::clamp(500.0 * (fx - fy), -128.0, 127.0);
        out.data[i * 3 + 2] = std::clamp(200.0 * (fy - fz), -128.0, 127.0);
    }
    return out;
}

Image lab_to_rgb(const LabImage& img) {
    Image out(img.width, img.height);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double l = img.data[i * 3 + 0];
        const double a = img.data[i * 3 + 1];
        const double b = img.data[i * 3 + 2];
        const double fy = (l + 16.0) / 116.0;
        const double fx = fy + a / 500.0;
        const double fz = fy - b / 200.0;
        const double x = lab_f_inv(fx) * kWhite[0];
        const double y = lab_f_inv(fy) * kWhite[1];
        const double z = lab_f_inv(fz) * kWhite[2];
        for (int c = 0; c < 3; ++c) {
            const double lin = kMInv[c][0] * x + kMInv[c][1] * y + kMInv[c][2] * z;
            const double srgb = linear_to_srgb(std::clamp(lin, 0.0, 1.0));
            out.data[i * 3 + c] =
                static_cast<std::uint8_t>(std::clamp(std::lround(srgb * 255.0), 0L, 255L));
        }
    }
    return out;
}

int bin_of(double v, const ChannelRange& range, int bins) {
    const double t = (v - range.lo) / (range.hi - range.lo);
    const int idx = static_cast<int>(std::floor(t * bins));
    return std::clamp(idx, 0, bins - 1);
}

double level_center(int t, const ChannelRange& range, int levels) {
    return range.lo + (t + 0.5) * (range.hi - range.lo) / levels;
}

Histogram channel_histogram(const LabImage& img, LabChannel channel, int bins) {
    if (bins < 2) throw BadSpecError("channel_histogram: bins must be >= 2");
    Histogram h;
    h.channel = channel;
    h.counts.assign(bins, 0.0);
    const ChannelRange range = range_of(channel);
    const int c = static_cast<int>(channel);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        h.counts[bin_of(img.data[i * 3 + c], range, bins)] += 1.0;
    }
    return h;
}

StyleDescriptor style_descriptor(const Image& img, int bins) {
    const LabImage lab = rgb_to_lab(img);
    StyleDescriptor d;
    d.reserve(3 * static_cast<std::size_t>(bins));
    const double n = static_cast<double>(img.pixel_count());
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        Histogram h = channel_histogram(lab, ch, bins);
        for (double c : h.counts) d.push_back(c / n);
    }
    return d;
}

StyleTriple mean_histograms(std::span<const Image> imgs, int bins) {
    if (imgs.empty()) throw EmptySubdomainError("mean_histograms: empty image set");
    StyleTriple mean;
    mean.l = {LabChannel::L, std::vector<double>(bins, 0.0)};
    mean.a = {LabChannel::A, std::vector<double>(bins, 0.0)};
    mean.b = {LabChannel::B, std::vector<double>(bins, 0.0)};
    for (const Image& img : imgs) {
        const LabImage lab = rgb_to_lab(img);
        for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
            const Histogram h = channel_histogram(lab, ch, bins);
            Histogram& acc = ch == LabChannel::L ? mean.l : ch == LabChannel::A ? mean.a : mean.b;
            for (int i = 0; i < bins; ++i) acc.counts[i] += h.counts[i];
        }
    }
    const double count = static_cast<double>(imgs.size());
    for (Histogram* h : {&mean.l, &mean.a, &mean.b}) {
        for (double& c : h->counts) c /= count;
    }
    return mean;
}

std::vector<int> cdf_match_levels(const std::vector<double>& src_mass,
                                  const std::vector<double>& tgt_mass) {
    const int levels = static_cast<int>(src_mass.size());
    if (static_cast<int>(tgt_mass.size()) != levels) {
        throw DimensionMismatchError("cdf_match_levels: level count mismatch");
    }
    double src_total = 0.0, tgt_total = 0.0;
    for (double v : src_mass) src_total += v;
    for (double v : tgt_mass) tgt_total += v;
    if (tgt_total <= 0.0) throw DegenerateTargetError("cdf_match_levels: target has zero mass");
    if (src_total <= 0.0) throw DegenerateTargetError("cdf_match_levels: source has zero mass");

    std::vector<int> map(levels, 0);
    double src_cdf = 0.0;
    double tgt_cdf = tgt_mass[0] / tgt_total;
    int t = 0;
    for (int s = 0; s < levels; ++s) {
        src_cdf += src_mass[s] / src_total;
        while (t < levels - 1 && tgt_cdf < src_cdf - 1e-12) {
            ++t;
            tgt_cdf += tgt_mass[t] / tgt_total;
        }
        map[s] = t;
    }
    return map;
}

std::vector<double> resample_to_levels(const Histogram& h, int levels) {
    const int bins = h.bins();
    std::vector<double> mass(levels, 0.0);
    if (bins == levels) {
        mass = h.counts;
        return mass;
    }
    // Distribute each bin's mass over the levels it overlaps, proportionally.
    for (int j = 0; j < bins; ++j) {
        const double bin_lo = static_cast<double>(j) / bins;
        const double bin_hi = static_cast<double>(j + 1) / bins;
        const int t_lo = std::clamp(static_cast<int>(std::floor(bin_lo * levels)), 0, levels - 1);
        const int t_hi = std::clamp(static_cast<int>(std::ceil(bin_hi * levels)) - 1, 0, levels - 1);
        for (int t = t_lo; t <= t_hi; ++t) {
            const double lv_lo = static_cast<double>(t) / levels;
            const double lv_hi = static_cast<double>(t + 1) / levels;
            const double overlap = std::min(bin_hi, lv_hi) - std::max(bin_lo, lv_lo);
            if (overlap > 0.0) mass[t] += h.counts[j] * overlap / (bin_hi - bin_lo);
        }
    }
    return mass;
}

LabImage histogram_match(const LabImage& img, const StyleTriple& target, int levels) {
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        if (target.channel(ch).total() <= 0.0) {
            throw DegenerateTargetError("histogram_match: target channel has zero mass");
        }
    }
    LabImage out(img.width, img.height);
    const std::size_t n = img.pixel_count();
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        const int c = static_cast<int>(ch);
        const ChannelRange range = range_of(ch);
        std::vector<double> src_mass(levels, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            src_mass[bin_of(img.data[i * 3 + c], range, levels)] += 1.0;
        }
        const std::vector<double> tgt_mass = resample_to_levels(target.channel(ch), levels);
        const std::vector<int> map = cdf_match_levels(src_mass, tgt_mass);
        for (std::size_t i = 0; i < n; ++i) {
            const int s = bin_of(img.data[i * 3 + c], range, levels);
            out.data[i * 3 + c] = level_center(map[s], range, levels);
        }
    }
    return out;
}

StyleDescriptor style_to_descriptor(const StyleTriple& style) {
    StyleDescriptor d;
    d.reserve(3 * static_cast<std::size_t>(style.bins()));
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        const Histogram& h = style.channel(ch);
        const double total = h.total();
        if (total <= 0.0) throw DegenerateTargetError("style_to_descriptor: zero-mass channel");
        for (double c : h.counts) d.push_back(c / total);
    }
    return d;
}

double descriptor_distance(const StyleDescriptor& a, const StyleDescriptor& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("descriptor_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace ocda
