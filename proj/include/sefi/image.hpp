#ifndef SEFI_IMAGE_HPP
#define SEFI_IMAGE_HPP

#include <string>

#include "sefi/tensor.hpp"

namespace sefi {

// Images are [h, w, 3] tensors with values in [0, 1].

Tensor load_image(const std::string& path);  // PNG or JPEG, by magic bytes
void write_png_rgb(const std::string& path, const Tensor& image);
// single-channel map scaled by 1/max_value, clamped to [0,1]
void write_png_gray(const std::string& path, const Tensor& map, double max_value);

Tensor resize_bilinear_image(const Tensor& image, int out_h, int out_w);

}  // namespace sefi

#endif
