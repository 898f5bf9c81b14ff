// Interleaved double-precision image container plus PNG I/O.
// Color/label/mask channels are written as 8-bit RGB or gray; depth is
// written as 16-bit gray in millimeters (value 0 = invalid pixel).
#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dama/core.hpp"

namespace dama {

struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;  // row-major, interleaved

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    Vec3 rgb(int x, int y) const { return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2)); }
    void set_rgb(int x, int y, const Vec3& v) {
        at(x, y, 0) = v[0];
        at(x, y, 1) = v[1];
        at(x, y, 2) = v[2];
    }
};

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// 8-bit PNG. channels must be 1 (gray) or 3 (RGB); values clamped to [0,1].
inline void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw Error("write_png: need 1 or 3 channels");
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// 16-bit gray PNG storing depth in millimeters; 0 marks invalid pixels.
inline void write_depth_png(const std::string& path, const Image& depth, const Image* valid = nullptr) {
    if (depth.channels != 1) throw Error("write_depth_png: depth must be single channel");
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("write_depth_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("write_depth_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(depth.width) * 2);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            bool ok = !valid || valid->at(x, y) > 0.5;
            double mm = ok ? depth.at(x, y) * 1000.0 : 0.0;
            auto v = static_cast<unsigned>(std::clamp(std::lround(mm), 0l, 65535l));
            row[2 * x] = static_cast<png_byte>(v >> 8);
            row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("read_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    int ch = png_get_channels(png, info);
    Image img(static_cast<int>(w), static_cast<int>(h), ch);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    double scale = depth == 16 ? 65535.0 : 255.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double v;
                if (depth == 16)
                    v = (row[(x * ch + c) * 2] * 256.0 + row[(x * ch + c) * 2 + 1]) / scale;
                else
                    v = row[x * ch + c] / scale;
                img.at(static_cast<int>(x), static_cast<int>(y), c) = v;
            }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// Inverse of write_depth_png: meters, with a validity channel.
inline void read_depth_png(const std::string& path, Image& depth, Image& valid) {
    Image raw = read_png(path);
    if (raw.channels != 1) throw Error("read_depth_png: expected single-channel PNG");
    depth = Image(raw.width, raw.height, 1);
    valid = Image(raw.width, raw.height, 1);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x) {
            double mm = raw.at(x, y) * 65535.0;
            depth.at(x, y) = mm / 1000.0;
            valid.at(x, y) = mm > 0 ? 1.0 : 0.0;
        }
}

}  // namespace dama
