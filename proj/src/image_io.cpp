#include "fer4d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "fer4d/error.hpp"
#include "fer4d/mesh.hpp"

namespace fer4d {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

}  // namespace

std::vector<unsigned char> encode_png(const DomainImage& img) {
  if (img.size < 1) fail(ErrorCode::Domain, "cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::Io, "png_create_info_struct failed");
  }

  std::vector<unsigned char> bytes;
  std::vector<png_byte> row(static_cast<std::size_t>(img.size));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "libpng failed while encoding");
  }
  png_set_write_fn(png, &bytes, append_bytes, flush_noop);
  png_set_IHDR(png, info, img.size, img.size, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.size; ++r) {
    for (int c = 0; c < img.size; ++c) {
      row[c] = static_cast<png_byte>(std::lround(std::clamp(img.at(r, c), 0.0, 1.0) * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

void write_png(const DomainImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
}

DomainImage read_png(const std::filesystem::path& path, Domain domain) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  if (image.width != image.height) {
    png_image_free(&image);
    fail(ErrorCode::Shape, "PNG " + path.string() + " is not square");
  }
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  DomainImage img(domain, static_cast<int>(image.width));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buffer[i] / 255.0;
  return img;
}

std::string image_filename(const std::string& subject, int expression_label, double theta, int frame,
                           const std::string& suffix) {
  char view[32];
  std::snprintf(view, sizeof(view), "v%+04d", static_cast<int>(std::lround(theta)));
  std::string name = subject + "_" + std::string(kExpressionNames.at(expression_label - 1)) + "_" + view;
  if (frame >= 0) {
    char t[16];
    std::snprintf(t, sizeof(t), "_t%04d", frame);
    name += t;
  }
  return name + "_" + suffix + ".png";
}

}  // namespace fer4d
