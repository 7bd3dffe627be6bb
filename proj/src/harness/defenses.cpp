#include "latadv/harness/defenses.hpp"

#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <vector>

#include "latadv/error.hpp"
#include "latadv/harness/image_io.hpp"

namespace latadv {

namespace {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

std::vector<unsigned char> jpeg_encode(const std::vector<unsigned char>& pixels, int width,
                                       int height, int channels, int quality) {
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_jpeg_error;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(std::string("jpeg encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = channels;
  cinfo.in_color_space = channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  // No chroma subsampling: at 16 px it swamps the quantisation error and
  // would keep quality 100 far from lossless.
  for (int c = 0; c < cinfo.num_components; ++c) {
    cinfo.comp_info[c].h_samp_factor = 1;
    cinfo.comp_info[c].v_samp_factor = 1;
  }
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<unsigned char*>(pixels.data()) +
                   static_cast<std::size_t>(cinfo.next_scanline) * width * channels;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<unsigned char> out(buffer, buffer + size);
  std::free(buffer);
  return out;
}

std::vector<unsigned char> jpeg_decode(const std::vector<unsigned char>& bytes, int width,
                                       int height, int channels) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(std::string("jpeg decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);
  if (static_cast<int>(cinfo.output_width) != width ||
      static_cast<int>(cinfo.output_height) != height ||
      cinfo.output_components != channels) {
    jpeg_destroy_decompress(&cinfo);
    throw Error("jpeg decode produced unexpected dimensions");
  }
  std::vector<unsigned char> out(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Tensor jpeg_defense(const Tensor& image, int quality) {
  if (quality < 1 || quality > 100) throw ParameterError("JPEG quality must lie in [1, 100]");
  const auto& s = image.shape();
  if (s.rank() != 3 || (s[2] != 1 && s[2] != 3)) {
    throw InterfaceError("JPEG defense expects an HWC image with 1 or 3 channels");
  }
  const int h = static_cast<int>(s[0]), w = static_cast<int>(s[1]), c = static_cast<int>(s[2]);
  const auto decoded = jpeg_decode(jpeg_encode(to_bytes(image), w, h, c, quality), w, h, c);
  return from_bytes(decoded, s);
}

double bit_depth_reduce(double x, int bits) {
  if (bits < 1 || bits > 8) throw ParameterError("bit depth must lie in [1, 8]");
  const double levels = std::ldexp(1.0, bits);
  const double q = std::min(std::floor(std::clamp(x, 0.0, 1.0) * levels), levels - 1.0);
  return (q + 0.5) / levels;
}

Tensor bit_depth_reduce(const Tensor& image, int bits) {
  if (bits < 1 || bits > 8) throw ParameterError("bit depth must lie in [1, 8]");
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.numel(); ++i) out[i] = bit_depth_reduce(image[i], bits);
  return out;
}

Tensor DefenseSpec::apply(const Tensor& image) const {
  if (name == "jpeg") return jpeg_defense(image, param);
  if (name == "bitred") return bit_depth_reduce(image, param);
  throw ParameterError("unknown defense '" + name + "'");
}

DefenseSpec parse_defense(const std::string& text) {
  const auto colon = text.find(':');
  DefenseSpec d{text.substr(0, colon), 0};
  if (d.name == "jpeg") {
    d.param = 75;
  } else if (d.name == "bitred") {
    d.param = 3;
  } else {
    throw ParameterError("unknown defense '" + d.name + "' (expected jpeg or bitred)");
  }
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      d.param = std::stoi(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw std::invalid_argument(text);
    } catch (const std::logic_error&) {
      throw ParameterError("bad defense parameter in '" + text + "'");
    }
  }
  // Validate the parameter range eagerly.
  (void)d.apply(Tensor(Shape{1, 1, 3}, 0.5));
  return d;
}

}  // namespace latadv
