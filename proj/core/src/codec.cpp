#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "gridseek/binary_io.hpp"
#include "gridseek/imops.hpp"

namespace gridseek::imops {

namespace {

std::vector<unsigned char> to_rgb8(const Image& img) {
  std::vector<unsigned char> out(img.pixels().size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    out[i] = static_cast<unsigned char>(std::lround(std::clamp(px[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

Image from_rgb8(int w, int h, const unsigned char* data) {
  Image img(w, h);
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(data[i]) / 255.0f;
  return img;
}

Image decode_png(std::span<const unsigned char> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::kCodec, std::string("PNG header: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::kCodec, "PNG decode: " + msg);
  }
  return from_rgb8(static_cast<int>(image.width), static_cast<int>(image.height), buf.data());
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const unsigned char> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> buf;
  int w = 0, h = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorKind::kCodec, std::string("JPEG decode: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  buf.resize(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_rgb8(w, h, buf.data());
}

}  // namespace

std::vector<unsigned char> encode_jpeg(const Image& img, int quality) {
  const auto rgb = to_rgb8(img);
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw Error(ErrorKind::kCodec, std::string("JPEG encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<unsigned char*>(rgb.data()) + static_cast<std::size_t>(cinfo.next_scanline) * img.width() * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<unsigned char> out(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return out;
}

std::vector<unsigned char> encode_png(const Image& img) {
  const auto rgb = to_rgb8(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(ErrorKind::kCodec, std::string("PNG size query: ") + image.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(ErrorKind::kCodec, std::string("PNG encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

Image decode_image(std::span<const unsigned char> bytes) {
  static constexpr unsigned char kPng[4] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPng, 4) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return decode_jpeg(bytes);
  throw Error(ErrorKind::kCodec, "unrecognized image format (expected PNG or JPEG)");
}

Image read_image(const std::string& path) {
  const auto raw = read_file(path);
  try {
    return decode_image(std::span(reinterpret_cast<const unsigned char*>(raw.data()), raw.size()));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void write_png(const Image& img, const std::string& path) {
  const auto bytes = encode_png(img);
  write_file(path, std::span(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_ppm(const Image& img, const std::string& path) {
  const auto rgb = to_rgb8(img);
  std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), rgb.begin(), rgb.end());
  write_file(path, bytes);
}

std::string base64_encode(std::span<const unsigned char> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

}  // namespace gridseek::imops
