#pragma once

#include <span>
#include <string>

#include "wdis/datasets.hpp"

namespace wdis {

// Portable any-map output: PGM for one channel, PPM for three.
void write_pnm(const std::string& path, const ImageSample& image);

// Decodes PNG, JPEG or PGM/PPM into an ImageSample with values in [0, 1].
ImageSample read_image(const std::string& path);

// Places images side by side; all inputs must share height and channels.
ImageSample hstack(std::span<const ImageSample> images);

ImageSample to_grayscale(const ImageSample& image);
ImageSample resize_bilinear(const ImageSample& image, std::size_t height, std::size_t width);

}  // namespace wdis
