#include "sefi/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "sefi/errors.hpp"
#include "sefi/kernels.hpp"

namespace sefi {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Tensor rgb8_to_tensor(const std::vector<unsigned char>& rgb, int h, int w) {
    Tensor img({h, w, 3});
    for (size_t i = 0; i < rgb.size(); ++i) img.data[i] = rgb[i] / 255.0;
    return img;
}

Tensor load_png(FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("failed to decode PNG: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<unsigned char> rgb(static_cast<size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return rgb8_to_tensor(rgb, static_cast<int>(h), static_cast<int>(w));
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(mgr->jump, 1);
}

Tensor load_jpeg(FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw io_error("failed to decode JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    int w = static_cast<int>(cinfo.output_width);
    int h = static_cast<int>(cinfo.output_height);
    std::vector<unsigned char> rgb(static_cast<size_t>(w) * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = rgb.data() + static_cast<size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return rgb8_to_tensor(rgb, h, w);
}

unsigned char quantize(double v) {
    double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

void write_png(const std::string& path, const std::vector<unsigned char>& bytes, int h, int w, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw io_error("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("failed to write PNG: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor load_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw io_error("cannot open image: " + path);
    unsigned char magic[4] = {0, 0, 0, 0};
    size_t got = std::fread(magic, 1, 4, f.get());
    std::rewind(f.get());
    if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
        return load_png(f.get(), path);
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(f.get(), path);
    throw io_error("unsupported image format (need PNG or JPEG): " + path);
}

void write_png_rgb(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw input_error("write_png_rgb expects [h,w,3], got " + shape_str(image.shape));
    int h = image.dim(0), w = image.dim(1);
    std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.data[i]);
    write_png(path, bytes, h, w, 3);
}

void write_png_gray(const std::string& path, const Tensor& map, double max_value) {
    if (map.rank() != 2) throw input_error("write_png_gray expects [h,w], got " + shape_str(map.shape));
    int h = map.dim(0), w = map.dim(1);
    double inv = max_value > 0.0 ? 1.0 / max_value : 1.0;
    std::vector<unsigned char> bytes(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(map.data[i] * inv);
    write_png(path, bytes, h, w, 1);
}

Tensor resize_bilinear_image(const Tensor& image, int out_h, int out_w) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw input_error("resize expects [h,w,3], got " + shape_str(image.shape));
    int h = image.dim(0), w = image.dim(1);
    if (h == out_h && w == out_w) return image;
    // kernels work on channel-major planes
    Tensor planes({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                planes.data[static_cast<size_t>(c) * h * w + static_cast<size_t>(y) * w + x] =
                    image.data[(static_cast<size_t>(y) * w + x) * 3 + c];
    Tensor out_planes({3, out_h, out_w});
    kernels::bilinear_resize(planes.ptr(), out_planes.ptr(), 3, h, w, out_h, out_w);
    Tensor out({out_h, out_w, 3});
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < 3; ++c)
                out.data[(static_cast<size_t>(y) * out_w + x) * 3 + c] =
                    out_planes.data[static_cast<size_t>(c) * out_h * out_w + static_cast<size_t>(y) * out_w + x];
    return out;
}

}  // namespace sefi
