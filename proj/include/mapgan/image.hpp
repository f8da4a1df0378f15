#ifndef MAPGAN_IMAGE_HPP_
#define MAPGAN_IMAGE_HPP_

#include <csetjmp>
#include <cstdio>

#include <png.h>
// jpeglib.h needs FILE and size_t declared before it
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapgan {

// 8-bit RGB, interleaved, row-major
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;

  unsigned char at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

namespace detail {

struct JpegError {
  jpeg_error_mgr pub;
  std::jmp_buf env;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  std::longjmp(reinterpret_cast<JpegError*>(cinfo->err)->env, 1);
}

inline ImageU8 load_png_file(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error("failed to decode image '" + path +
                             "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  ImageU8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("failed to decode image '" + path + "': " + msg);
  }
  return out;
}

inline ImageU8 load_jpeg_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open image '" + path + "'");
  ImageU8 out;
  jpeg_decompress_struct cinfo;
  JpegError jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  // no C++ objects are constructed past this point inside the guarded region
  if (setjmp(jerr.env)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw std::runtime_error("failed to decode image '" + path + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row =
        out.pixels.data() +
        static_cast<size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return out;
}

}  // namespace detail

// Decodes a PNG or JPEG file (sniffed by magic bytes, not extension) to
// 8-bit RGB.
inline ImageU8 load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image '" + path + "'");
  unsigned char magic[2] = {0, 0};
  in.read(reinterpret_cast<char*>(magic), 2);
  in.close();
  if (magic[0] == 0x89 && magic[1] == 'P') return detail::load_png_file(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return detail::load_jpeg_file(path);
  throw std::runtime_error("unsupported image format in '" + path +
                           "' (expected PNG or JPEG)");
}

inline void save_png(const std::string& path, const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw std::invalid_argument("save_png: malformed image buffer");
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, img.pixels.data(), 0,
                               nullptr))
    throw std::runtime_error("failed to write PNG '" + path +
                             "': " + out.message);
}

inline void save_jpeg(const std::string& path, const ImageU8& img,
                      int quality = 95) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw std::invalid_argument("save_jpeg: malformed image buffer");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  jpeg_compress_struct cinfo;
  detail::JpegError jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(jerr.env)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
    throw std::runtime_error("failed to write JPEG '" + path + "'");
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    const unsigned char* row =
        img.pixels.data() + static_cast<size_t>(cinfo.next_scanline) * img.width * 3;
    JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

// Bilinear resampling with half-pixel centers. Interpolation runs in float
// and is a convex combination of the four neighbors, so values never leave
// [0,255]; a source the same size as the destination comes back byte-exact.
inline ImageU8 resize_bilinear(const ImageU8& src, int dst_w, int dst_h) {
  if (src.width <= 0 || src.height <= 0)
    throw std::invalid_argument("resize_bilinear: empty source image");
  if (dst_w <= 0 || dst_h <= 0)
    throw std::invalid_argument("resize_bilinear: target dims must be positive");
  ImageU8 dst;
  dst.width = dst_w;
  dst.height = dst_h;
  dst.pixels.resize(static_cast<size_t>(dst_w) * dst_h * 3);
  const float sx_scale = static_cast<float>(src.width) / dst_w;
  const float sy_scale = static_cast<float>(src.height) / dst_h;
  for (int oy = 0; oy < dst_h; ++oy) {
    float sy = (oy + 0.5f) * sy_scale - 0.5f;
    sy = std::clamp(sy, 0.0f, static_cast<float>(src.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float ty = sy - y0;
    for (int ox = 0; ox < dst_w; ++ox) {
      float sx = (ox + 0.5f) * sx_scale - 0.5f;
      sx = std::clamp(sx, 0.0f, static_cast<float>(src.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float tx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const float v00 = src.at(x0, y0, c), v01 = src.at(x1, y0, c);
        const float v10 = src.at(x0, y1, c), v11 = src.at(x1, y1, c);
        const float top = v00 + tx * (v01 - v00);
        const float bot = v10 + tx * (v11 - v10);
        const float v = top + ty * (bot - top);
        const long rounded = std::lround(v);
        dst.pixels[(static_cast<size_t>(oy) * dst_w + ox) * 3 + c] =
            static_cast<unsigned char>(std::clamp(rounded, 0L, 255L));
      }
    }
  }
  return dst;
}

}  // namespace mapgan

#endif  // MAPGAN_IMAGE_HPP_
