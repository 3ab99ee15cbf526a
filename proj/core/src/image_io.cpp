#include "facecap/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace facecap {

Image read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw InputError("cannot read PNG " + path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("cannot decode PNG " + path + ": " + png.message);
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (size_t i = 0; i < buffer.size(); ++i) image.data()[i] = buffer[i] / 255.0;
  return image;
}

void write_png(const Image& image, const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(image.data().size());
  for (size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<unsigned char>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw InputError("cannot write PNG " + path + ": " + png.message);
}

}  // namespace facecap
