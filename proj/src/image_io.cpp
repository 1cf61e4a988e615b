#include "wdis/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "wdis/error.hpp"

namespace wdis {

namespace {

std::string lower_extension(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

ImageSample from_bytes(const unsigned char* data, std::size_t h, std::size_t w, std::size_t c, double max_value) {
  ImageSample img;
  img.height = h, img.width = w, img.channels = c;
  img.pixels.resize(h * w * c);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(data[i] / max_value);
  return img;
}

ImageSample read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw DataError("cannot decode PNG '" + path + "'");
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path + "': " + image.message);
  }
  return from_bytes(buffer.data(), image.height, image.width, 1, 255.0);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

ImageSample read_jpeg(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw DataError("cannot open JPEG '" + path + "'");
  jpeg_decompress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegErrorManager*>(cinfo->err)->jump, 1);
  };
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw DataError("cannot decode JPEG '" + path + "'");
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_GRAYSCALE;
  jpeg_start_decompress(&info);
  const std::size_t w = info.output_width, h = info.output_height;
  std::vector<unsigned char> buffer(w * h);
  while (info.output_scanline < info.output_height) {
    unsigned char* row = &buffer[info.output_scanline * w];
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return from_bytes(buffer.data(), h, w, 1, 255.0);
}

ImageSample read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  auto token = [&]() {
    std::string t;
    while (in && t.empty()) {
      in >> t;
      if (!t.empty() && t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        t.clear();
      }
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6" && magic != "P2" && magic != "P3") throw DataError("malformed header in '" + path + "'");
  const std::size_t w = std::stoul(token()), h = std::stoul(token());
  const double max_value = std::stod(token());
  const std::size_t c = (magic == "P6" || magic == "P3") ? 3 : 1;
  std::vector<unsigned char> data(w * h * c);
  if (magic == "P5" || magic == "P6") {
    if (max_value > 255) throw DataError("16-bit PNM images are not supported");
    in.get();
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(in.gcount()) != data.size()) throw DataError("truncated image '" + path + "'");
  } else {
    for (auto& v : data) v = static_cast<unsigned char>(std::stoul(token()));
  }
  return from_bytes(data.data(), h, w, c, max_value);
}

}  // namespace

void write_pnm(const std::string& path, const ImageSample& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("PNM output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ImageSample read_image(const std::string& path) {
  const auto ext = lower_extension(path);
  if (ext == "png") return read_png(path);
  if (ext == "jpg" || ext == "jpeg") return read_jpeg(path);
  if (ext == "pgm" || ext == "ppm" || ext == "pnm") return read_pnm(path);
  throw DataError("unsupported image format '" + path + "'");
}

ImageSample hstack(std::span<const ImageSample> images) {
  if (images.empty()) throw DataError("nothing to stack");
  const auto& first = images.front();
  ImageSample out;
  out.height = first.height;
  out.channels = first.channels;
  for (const auto& img : images) {
    if (img.height != first.height || img.channels != first.channels) throw DataError("stacked images differ in shape");
    out.width += img.width;
  }
  out.pixels.resize(out.height * out.width * out.channels);
  std::size_t x0 = 0;
  for (const auto& img : images) {
    for (std::size_t y = 0; y < img.height; ++y)
      std::copy_n(img.pixels.begin() + static_cast<long>(y * img.width * img.channels), img.width * img.channels,
                  out.pixels.begin() + static_cast<long>((y * out.width + x0) * out.channels));
    x0 += img.width;
  }
  return out;
}

ImageSample to_grayscale(const ImageSample& image) {
  if (image.channels == 1) return image;
  ImageSample out = image;
  out.channels = 1;
  out.pixels.resize(image.height * image.width);
  for (std::size_t p = 0; p < out.pixels.size(); ++p) {
    double acc = 0;
    for (std::size_t c = 0; c < image.channels; ++c) acc += image.pixels[p * image.channels + c];
    out.pixels[p] = static_cast<float>(acc / static_cast<double>(image.channels));
  }
  return out;
}

ImageSample resize_bilinear(const ImageSample& image, std::size_t height, std::size_t width) {
  ImageSample out = image;
  out.height = height, out.width = width;
  out.pixels.assign(height * width * image.channels, 0.0f);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c)) +
                         wy * ((1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c));
        out.pixels[(y * width + x) * image.channels + c] = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace wdis
