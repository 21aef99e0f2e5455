#include "ocda/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "ocda/errors.hpp"

namespace ocda {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Reads any PNG as 8-bit data with the requested channel count (1 or 3).
std::vector<std::uint8_t> read_png(const std::string& path, int want_channels, int& width,
                                   int& height) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("png: cannot open " + path);

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("png: read struct allocation failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("png: info struct allocation failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png: failed to decode " + path);

    png_init_io(r.png, fp.get());
    png_read_info(r.png, r.info);

    width = static_cast<int>(png_get_image_width(r.png, r.info));
    height = static_cast<int>(png_get_image_height(r.png, r.info));
    const png_byte color = png_get_color_type(r.png, r.info);
    const png_byte depth = png_get_bit_depth(r.png, r.info);

    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_set_strip_alpha(r.png);
    if (want_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(r.png);
        }
    } else {
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
            color == PNG_COLOR_TYPE_PALETTE) {
            png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
        }
    }
    png_read_update_info(r.png, r.info);

    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    if (rowbytes != static_cast<std::size_t>(width) * want_channels) {
        throw IoError("png: unexpected row size in " + path);
    }
    std::vector<std::uint8_t> data(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + rowbytes * y;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return data;
}

void write_png(const std::string& path, const std::uint8_t* data, int width, int height,
               int channels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("png: cannot open for write " + path);

    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png: write struct allocation failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png: info struct allocation failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("png: failed to encode " + path);

    png_init_io(w.png, fp.get());
    png_set_IHDR(w.png, w.info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);

    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(data + rowbytes * y);
    }
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
}

}  // namespace

Image read_image_png(const std::string& path) {
    Image img;
    img.data = read_png(path, 3, img.width, img.height);
    return img;
}

void write_image_png(const std::string& path, const Image& img) {
    write_png(path, img.data.data(), img.width, img.height, 3);
}

LabelMap read_label_png(const std::string& path) {
    LabelMap label;
    label.data = read_png(path, 1, label.width, label.height);
    return label;
}

void write_label_png(const std::string& path, const LabelMap& label) {
    write_png(path, label.data.data(), label.width, label.height, 1);
}

}  // namespace ocda
