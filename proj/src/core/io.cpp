#include "dr2s/core/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>
#include <vector>

#include "dr2s/core/error.hpp"

namespace dr2s {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

std::uint8_t quantize(double v) {
  const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(q);
}

static_assert(std::endian::native == std::endian::little,
              "npy and checkpoint writers assume a little-endian host");

}  // namespace

void write_png(const std::filesystem::path& path, const ImageF& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw SizeError("PNG output supports 1 or 3 channels");
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int ch = img.channels();
  std::vector<png_byte> row(static_cast<std::size_t>(img.width() * ch));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) row[static_cast<std::size_t>(x * ch + c)] = quantize(img.at(c, y, x));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  std::vector<png_byte> buf(png_get_rowbytes(png, info) * static_cast<std::size_t>(h));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + png_get_rowbytes(png, info) * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ImageF img(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) img.at(c, y, x) = rows[y][x * ch + c] / 255.0;
    }
  }
  return img;
}

void write_npy(const std::filesystem::path& path, const ImageF& img) {
  std::ostringstream shape;
  if (img.channels() == 1) {
    shape << "(" << img.height() << ", " << img.width() << ")";
  } else {
    shape << "(" << img.channels() << ", " << img.height() << ", " << img.width() << ")";
  }
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape.str() + ", }";
  // magic(6) + version(2) + header length(2) + header, padded to 64 bytes with '\n' last.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out.write("\x93NUMPY", 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(img.data().data()),
            static_cast<std::streamsize>(img.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

ImageF read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw IoError(path.string() + " is not an npy file");
  }
  char version[2];
  in.read(version, 2);
  std::uint32_t hlen = 0;
  if (version[0] == 1) {
    std::uint16_t l16 = 0;
    in.read(reinterpret_cast<char*>(&l16), 2);
    hlen = l16;
  } else {
    in.read(reinterpret_cast<char*>(&hlen), 4);
  }
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw IoError("truncated npy header in " + path.string());
  if (header.find("'<f8'") == std::string::npos || header.find("True") != std::string::npos) {
    throw IoError(path.string() + ": only little-endian float64 C-order arrays are supported");
  }
  std::smatch m;
  const std::regex shape_re(R"('shape':\s*\(([^)]*)\))");
  if (!std::regex_search(header, m, shape_re)) throw IoError("npy header lacks shape");
  std::vector<int> dims;
  std::stringstream ss(m[1].str());
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" ") != std::string::npos) dims.push_back(std::stoi(tok));
  }
  int c = 1, h = 0, w = 0;
  if (dims.size() == 2) {
    h = dims[0];
    w = dims[1];
  } else if (dims.size() == 3) {
    c = dims[0];
    h = dims[1];
    w = dims[2];
  } else {
    throw IoError("npy array must be 2-D or 3-D");
  }
  std::vector<double> data(static_cast<std::size_t>(c) * h * w);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw IoError("truncated npy payload in " + path.string());
  return ImageF(w, h, c, std::move(data));
}

ImageF read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".npy") return read_npy(path);
  if (ext == ".png") return read_png(path);
  throw IoError("unsupported image extension: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dr2s
