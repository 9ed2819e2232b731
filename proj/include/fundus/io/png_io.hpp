#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/core/image.hpp"

namespace fundus {

namespace detail {

struct FileCloser {
    std::FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

}  // namespace detail

/// Writes an image as 8-bit RGB PNG; values scaled by 255, round half up.
inline void write_png_rgb8(const std::string& path, const Image& img) {
    std::vector<unsigned char> buf(img.pixels() * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0);
                buf[(static_cast<size_t>(y) * img.width + x) * 3 + c] =
                    static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
            }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * img.width * 3;

    detail::FileCloser f{std::fopen(path.c_str(), "wb")};
    if (!f.fp) throw std::runtime_error("png: cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: write failed: " + path);
    }
    png_init_io(png, f.fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Writes a binary mask as 1-bit grayscale PNG (set pixels white).
inline void write_png_mask1(const std::string& path, const BinaryMask& m) {
    std::vector<unsigned char> buf(m.mask.size());
    for (size_t i = 0; i < m.mask.size(); ++i) buf[i] = m.mask[i] ? 1 : 0;
    std::vector<png_bytep> rows(m.height);
    for (int y = 0; y < m.height; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * m.width;

    detail::FileCloser f{std::fopen(path.c_str(), "wb")};
    if (!f.fp) throw std::runtime_error("png: cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: write failed: " + path);
    }
    png_init_io(png, f.fp);
    png_set_IHDR(png, info, m.width, m.height, 1, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_packing(png);  // one pixel per byte in, packed bits out
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads a PNG as a 3-channel image in [0,1]. Gray/palette/alpha inputs are
/// expanded to 8-bit RGB.
inline Image read_png_image(const std::string& path) {
    detail::FileCloser f{std::fopen(path.c_str(), "rb")};
    if (!f.fp) throw std::runtime_error("png: cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<unsigned char> buf;
    std::vector<png_bytep> rows;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: read failed: " + path);
    }
    png_init_io(png, f.fp);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    buf.resize(static_cast<size_t>(h) * w * 3);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0f;
    return img;
}

}  // namespace fundus
