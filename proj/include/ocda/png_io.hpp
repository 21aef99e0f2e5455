#pragma once

#include <string>

#include "ocda/image.hpp"

namespace ocda {

Image read_image_png(const std::string& path);
void write_image_png(const std::string& path, const Image& img);

/// Labels are stored as single-channel 8-bit PNGs of class indices.
LabelMap read_label_png(const std::string& path);
void write_label_png(const std::string& path, const LabelMap& label);

}  // namespace ocda
