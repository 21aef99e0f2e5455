#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ocda/errors.hpp"
#include "ocda/rng.hpp"
#include "ocda/style_purify.hpp"

using namespace ocda;

namespace {

Image textured_image(int w, int h, int base_r, int base_g, int base_b, RngEngine& rng) {
    Image img(w, h);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const int bases[3] = {base_r, base_g, base_b};
        for (int c = 0; c < 3; ++c) {
            const int v = bases[c] + static_cast<int>(bounded(rng, 41)) - 20;
            img.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    }
    return img;
}

}  // namespace

TEST_CASE("standard_style of a singleton subdomain is that image's histograms") {
    RngEngine rng = make_stream(50, 1);
    const Image img = textured_image(12, 12, 120, 80, 60, rng);
    const StyleTriple style = standard_style(std::span<const Image>(&img, 1), 64);
    const StyleTriple direct = mean_histograms(std::span<const Image>(&img, 1), 64);
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        CHECK(style.channel(ch).counts == direct.channel(ch).counts);
    }
}

TEST_CASE("standard_style of duplicated images equals the single-image style") {
    RngEngine rng = make_stream(50, 2);
    const Image img = textured_image(10, 10, 90, 140, 70, rng);
    const std::vector<Image> dup = {img, img, img};
    const StyleTriple one = standard_style(std::span<const Image>(&img, 1), 48);
    const StyleTriple many = standard_style(dup, 48);
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        for (int i = 0; i < 48; ++i) {
            CHECK(many.channel(ch).counts[i] == doctest::Approx(one.channel(ch).counts[i]));
        }
    }
}

TEST_CASE("standard_style matches the summation oracle on a mixed set") {
    RngEngine rng = make_stream(50, 3);
    std::vector<Image> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(textured_image(8, 9, 60 + 40 * i, 100, 90, rng));
    const StyleTriple style = standard_style(imgs, 32);
    for (LabChannel ch : {LabChannel::L, LabChannel::A, LabChannel::B}) {
        std::vector<double> oracle(32, 0.0);
        for (const Image& img : imgs) {
            const Histogram h = channel_histogram(rgb_to_lab(img), ch, 32);
            for (int i = 0; i < 32; ++i) oracle[i] += h.counts[i];
        }
        for (int i = 0; i < 32; ++i) {
            CHECK(style.channel(ch).counts[i] == oracle[i] / imgs.size());
        }
    }
}

TEST_CASE("standard_style rejects an empty subdomain") {
    CHECK_THROWS_AS(standard_style(std::span<const Image>(), 64), EmptySubdomainError);
}

TEST_CASE("purify leaves a member already at the style nearly unchanged") {
    RngEngine rng = make_stream(51, 1);
    const Image img = textured_image(16, 16, 110, 100, 95, rng);
    const StyleTriple own = standard_style(std::span<const Image>(&img, 1), kMatchLevels);
    const std::vector<Image> out = purify(std::span<const Image>(&img, 1), own);
    REQUIRE(out.size() == 1);
    int max_err = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        max_err = std::max(max_err, std::abs(int(img.data[i]) - int(out[0].data[i])));
    }
    // fixed point of the matching plus one RGB round trip
    CHECK(max_err <= 2);
}

TEST_CASE("purify pulls a constant outlier onto the subdomain color") {
    Image member(8, 8);
    for (std::size_t i = 0; i < member.pixel_count(); ++i) {
        member.data[i * 3 + 0] = 200;
        member.data[i * 3 + 1] = 40;
        member.data[i * 3 + 2] = 40;
    }
    Image outlier(8, 8);
    for (std::size_t i = 0; i < outlier.pixel_count(); ++i) {
        outlier.data[i * 3 + 0] = 20;
        outlier.data[i * 3 + 1] = 20;
        outlier.data[i * 3 + 2] = 220;
    }
    // Style of the red constant image alone; the blue outlier must land there.
    const StyleTriple style = standard_style(std::span<const Image>(&member, 1), kMatchLevels);
    const std::vector<Image> out = purify(std::span<const Image>(&outlier, 1), style);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(int(out[0].at(3, 3, c)) - int(member.at(3, 3, c))) <= 2);
    }
}

TEST_CASE("purify reduces the descriptor distance of an injected off-style image") {
    RngEngine rng = make_stream(51, 3);
    std::vector<Image> imgs;
    for (int i = 0; i < 5; ++i) imgs.push_back(textured_image(16, 16, 100, 90, 80, rng));
    imgs.push_back(textured_image(16, 16, 210, 190, 40, rng));  // off-style

    const StyleTriple style = standard_style(imgs, kMatchLevels);
    const std::vector<Image> out = purify(imgs, style);

    const StyleDescriptor style_desc = style_to_descriptor(standard_style(imgs, 64));
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        before = std::max(before,
                          descriptor_distance(style_descriptor(imgs[i], 64), style_desc));
        after = std::max(after, descriptor_distance(style_descriptor(out[i], 64), style_desc));
    }
    CHECK(after < before);
}

TEST_CASE("purify propagates degenerate targets") {
    StyleTriple style;
    style.l = {LabChannel::L, std::vector<double>(kMatchLevels, 0.0)};
    style.a = {LabChannel::A, std::vector<double>(kMatchLevels, 1.0)};
    style.b = {LabChannel::B, std::vector<double>(kMatchLevels, 1.0)};
    RngEngine rng = make_stream(51, 4);
    const Image img = textured_image(8, 8, 100, 100, 100, rng);
    CHECK_THROWS_AS(purify(std::span<const Image>(&img, 1), style), DegenerateTargetError);
}

TEST_CASE("purify keeps image geometry and is bit-reproducible") {
    RngEngine rng = make_stream(51, 5);
    std::vector<Image> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(textured_image(14, 10, 70 + 30 * i, 90, 110, rng));
    const StyleTriple style = standard_style(imgs, kMatchLevels);
    const std::vector<Image> a = purify(imgs, style);
    const std::vector<Image> b = purify(imgs, style);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].width == imgs[i].width);
        CHECK(a[i].height == imgs[i].height);
        CHECK(a[i] == b[i]);
    }
}

TEST_CASE("intra_style_variance of identical images is zero") {
    RngEngine rng = make_stream(52, 1);
    const Image img = textured_image(12, 12, 130, 110, 90, rng);
    const std::vector<Image> imgs = {img, img, img};
    CHECK(intra_style_variance(imgs, 64) == 0.0);
}

TEST_CASE("intra_style_variance of two images follows two-point centroid geometry") {
    RngEngine rng = make_stream(52, 2);
    const std::vector<Image> imgs = {textured_image(12, 12, 80, 90, 100, rng),
                                     textured_image(12, 12, 170, 120, 60, rng)};
    const double d = descriptor_distance(style_descriptor(imgs[0], 64),
                                         style_descriptor(imgs[1], 64));
    // Each point sits d/2 from the centroid: mean of (d/2)^2 over two points.
    CHECK(intra_style_variance(imgs, 64) ==
          doctest::Approx((d / 2) * (d / 2) * 2 / 2).epsilon(1e-12));
}

TEST_CASE("intra_style_variance matches a brute-force centroid oracle") {
    RngEngine rng = make_stream(52, 3);
    std::vector<Image> imgs;
    for (int i = 0; i < 6; ++i) {
        imgs.push_back(textured_image(10, 10, 60 + 25 * i, 150 - 15 * i, 100, rng));
    }
    const int bins = 64;
    std::vector<StyleDescriptor> descs;
    for (const Image& img : imgs) descs.push_back(style_descriptor(img, bins));
    StyleDescriptor centroid(descs[0].size(), 0.0);
    for (const auto& d : descs) {
        for (std::size_t j = 0; j < d.size(); ++j) centroid[j] += d[j] / descs.size();
    }
    double oracle = 0.0;
    for (const auto& d : descs) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d.size(); ++j) {
            sq += (d[j] - centroid[j]) * (d[j] - centroid[j]);
        }
        oracle += sq / descs.size();
    }
    CHECK(std::abs(intra_style_variance(imgs, bins) - oracle) <= 1e-12);
}

TEST_CASE("intra_style_variance needs two images") {
    RngEngine rng = make_stream(52, 4);
    const Image img = textured_image(8, 8, 100, 100, 100, rng);
    CHECK_THROWS_AS(intra_style_variance(std::span<const Image>(&img, 1), 64),
                    TooFewImagesError);
}

TEST_CASE("purification never increases intra-style variance") {
    RngEngine rng = make_stream(53, 1);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<Image> imgs;
        const int n = 3 + static_cast<int>(bounded(rng, 4));
        for (int i = 0; i < n; ++i) {
            imgs.push_back(textured_image(16, 16, 50 + static_cast<int>(bounded(rng, 150)),
                                          50 + static_cast<int>(bounded(rng, 150)),
                                          50 + static_cast<int>(bounded(rng, 150)), rng));
        }
        const PurifiedSubdomain purified = purify_subdomain(1, imgs, kMatchLevels);
        CHECK(intra_style_variance(purified.members, 64) <=
              intra_style_variance(imgs, 64) + 1e-12);
    }
}
