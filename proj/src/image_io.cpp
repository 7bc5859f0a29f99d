#include "cscale/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "cscale/error.hpp"

namespace cscale {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_pnm_int(std::istream& is, const std::string& path) {
  while (true) {
    int ch = is.peek();
    if (ch == EOF) throw FormatError("truncated PNM header in '" + path + "'");
    if (std::isspace(ch)) {
      is.get();
      continue;
    }
    if (ch == '#') {
      std::string comment;
      std::getline(is, comment);
      continue;
    }
    break;
  }
  int value = 0;
  if (!(is >> value)) throw FormatError("malformed PNM header in '" + path + "'");
  return value;
}

uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Tensor<float> read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image '" + path + "'");

  char p = 0, kind = 0;
  is.get(p);
  is.get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6')) {
    throw FormatError("'" + path + "' is not a supported PGM/PPM file");
  }
  const bool color = (kind == '3' || kind == '6');
  const bool ascii = (kind == '2' || kind == '3');
  const int channels = color ? 3 : 1;

  const int width = next_pnm_int(is, path);
  const int height = next_pnm_int(is, path);
  const int maxval = next_pnm_int(is, path);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw FormatError("invalid PNM dimensions in '" + path + "'");
  }

  Tensor<float> out(Shape{height, width, channels});
  const int64_t count = static_cast<int64_t>(height) * width * channels;
  const float scale = 1.0f / static_cast<float>(maxval);

  if (ascii) {
    for (int64_t i = 0; i < count; ++i) {
      int v = 0;
      if (!(is >> v)) throw FormatError("truncated ASCII PNM data in '" + path + "'");
      out[i] = static_cast<float>(v) * scale;
    }
  } else {
    is.get();  // single whitespace after maxval
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<size_t>(count) * static_cast<size_t>(bytes_per));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(is.gcount()) != buf.size()) {
      throw FormatError("truncated PNM pixel data in '" + path + "'");
    }
    for (int64_t i = 0; i < count; ++i) {
      int v = bytes_per == 1 ? buf[static_cast<size_t>(i)]
                             : (buf[static_cast<size_t>(i) * 2] << 8) | buf[static_cast<size_t>(i) * 2 + 1];
      out[i] = static_cast<float>(v) * scale;
    }
  }
  return out;
}

void write_pgm(const std::string& path, const Tensor<float>& gray) {
  require_shape(gray.rank() == 2 || (gray.rank() == 3 && gray.extent(2) == 1),
                "PGM output needs (h,w) or (h,w,1), got " + gray.shape().str());
  const int h = gray.extent(0), w = gray.extent(1);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) row[static_cast<size_t>(j)] = quantize(gray.data()[static_cast<int64_t>(i) * w + j]);
    os.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

void write_ppm(const std::string& path, const Tensor<float>& rgb) {
  require_shape(rgb.rank() == 3 && rgb.extent(2) == 3, "PPM output needs (h,w,3), got " + rgb.shape().str());
  const int h = rgb.extent(0), w = rgb.extent(1);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w * 3; ++j) {
      row[static_cast<size_t>(j)] = quantize(rgb.data()[static_cast<int64_t>(i) * w * 3 + j]);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

Tensor<float> resize_bilinear(const Tensor<float>& image, int out_height, int out_width) {
  require_shape(image.rank() == 3, "resize needs (h,w,c), got " + image.shape().str());
  if (out_height < 1 || out_width < 1) throw ContractError("resize target must be at least 1x1");
  const int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  if (h == out_height && w == out_width) return image;

  Tensor<float> out(Shape{out_height, out_width, c});
  const float sy = static_cast<float>(h) / static_cast<float>(out_height);
  const float sx = static_cast<float>(w) / static_cast<float>(out_width);
  const float* src = image.data();
  float* dst = out.data();

  for (int i = 0; i < out_height; ++i) {
    const float fy = (static_cast<float>(i) + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
    for (int j = 0; j < out_width; ++j) {
      const float fx = (static_cast<float>(j) + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
      for (int ch = 0; ch < c; ++ch) {
        const float v00 = src[(static_cast<int64_t>(y0) * w + x0) * c + ch];
        const float v01 = src[(static_cast<int64_t>(y0) * w + x1) * c + ch];
        const float v10 = src[(static_cast<int64_t>(y1) * w + x0) * c + ch];
        const float v11 = src[(static_cast<int64_t>(y1) * w + x1) * c + ch];
        const float top = v00 + (v01 - v00) * wx;
        const float bot = v10 + (v11 - v10) * wx;
        dst[(static_cast<int64_t>(i) * out_width + j) * c + ch] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

const std::array<std::array<uint8_t, 3>, 256>& jet_palette() {
  static const std::array<std::array<uint8_t, 3>, 256> palette = [] {
    std::array<std::array<uint8_t, 3>, 256> p{};
    for (int i = 0; i < 256; ++i) {
      const float t = static_cast<float>(i) / 255.0f;
      const float r = std::min(4.0f * t - 1.5f, -4.0f * t + 4.5f);
      const float g = std::min(4.0f * t - 0.5f, -4.0f * t + 3.5f);
      const float b = std::min(4.0f * t + 0.5f, -4.0f * t + 2.5f);
      p[static_cast<size_t>(i)] = {quantize(r), quantize(g), quantize(b)};
    }
    return p;
  }();
  return palette;
}

}  // namespace cscale
