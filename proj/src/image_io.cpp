#include "ggt/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace ggt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<float> read_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error(path + ": cannot open");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error(path + ": png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error(path + ": png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": png decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": expected grayscale PNG, color type " + std::to_string(color));
  }
  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> row(rowbytes);

  Tensor<float> img({1, 1, h, w});
  const float scale = depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    float* dst = img.data.data() + static_cast<std::size_t>(y) * w;
    if (depth == 16) {
      for (int x = 0; x < w; ++x) {
        const unsigned v = (static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1];  // network order
        dst[x] = static_cast<float>(v) * scale;
      }
    } else {
      for (int x = 0; x < w; ++x) dst[x] = static_cast<float>(row[x]) * scale;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_gray16(const std::string& path, const Tensor<float>& img) {
  int h = 0, w = 0;
  if (img.rank() == 2) {
    h = img.dim(0);
    w = img.dim(1);
  } else if (img.rank() == 4 && img.dim(0) == 1 && img.dim(1) == 1) {
    h = img.dim(2);
    w = img.dim(3);
  } else {
    throw std::invalid_argument(path + ": image must be (H,W) or (1,1,H,W), got " + shape_str(img.shape));
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error(path + ": cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error(path + ": png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error(path + ": png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(path + ": png encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    const float* src = img.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float v = src[x];
      if (!(v >= 0.0f)) v = 0.0f;
      if (v > 1.0f) v = 1.0f;
      const unsigned q = static_cast<unsigned>(std::lround(v * 65535.0f));
      row[2 * x] = static_cast<unsigned char>(q >> 8);
      row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png_rgb8(const std::string& path, const RgbImage& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error(path + ": cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error(path + ": png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error(path + ": png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(path + ": png encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.w * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w) {
  if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 1) {
    throw std::invalid_argument("resize: image must be (1,1,H,W), got " + shape_str(img.shape));
  }
  const int h = img.dim(2), w = img.dim(3);
  if (h == out_h && w == out_w) return img;
  Tensor<float> out({1, 1, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    int y0 = static_cast<int>(fy);
    if (y0 > h - 1) y0 = h - 1;
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      int x0 = static_cast<int>(fx);
      if (x0 > w - 1) x0 = w - 1;
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = img.at4(0, 0, y0, x0) * (1 - wx) + img.at4(0, 0, y0, x1) * wx;
      const double bot = img.at4(0, 0, y1, x0) * (1 - wx) + img.at4(0, 0, y1, x1) * wx;
      out.at4(0, 0, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

}  // namespace ggt
