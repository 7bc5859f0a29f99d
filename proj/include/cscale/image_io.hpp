#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cscale/tensor.hpp"

namespace cscale {

// Reads a binary or ASCII PGM/PPM (P2/P3/P5/P6) into an (h, w, c) tensor
// with intensities scaled to [0,1]; c is 1 or 3.
Tensor<float> read_pnm(const std::string& path);

// 8-bit binary PGM from an (h, w) or (h, w, 1) tensor; values are clamped
// to [0,1] and quantized to 0..255.
void write_pgm(const std::string& path, const Tensor<float>& gray);

// 8-bit binary PPM from an (h, w, 3) tensor, same quantization.
void write_ppm(const std::string& path, const Tensor<float>& rgb);

// Bilinear resize with edge clamping; identity when sizes already match.
// Source coordinates use pixel-center alignment:
//   src = (dst + 0.5) * (src_extent / dst_extent) - 0.5.
Tensor<float> resize_bilinear(const Tensor<float>& image, int out_height, int out_width);

// 256-entry jet-style palette used for heatmap overlays. Entry i maps
// t = i/255 through r = min(4t-1.5, -4t+4.5), g = min(4t-0.5, -4t+3.5),
// b = min(4t+0.5, -4t+2.5), each clamped to [0,1] and quantized.
const std::array<std::array<uint8_t, 3>, 256>& jet_palette();

}  // namespace cscale
