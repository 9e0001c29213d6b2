#include "docrecon/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "docrecon/error.hpp"

namespace docrecon {

Image::Image(int h, int w, float fill)
    : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {
    if (h < 0 || w < 0) throw Error(ErrorKind::invalid_argument, "negative image dimensions");
}

Image Image::crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > height || x0 + w > width) {
        throw Error(ErrorKind::invalid_argument, "crop rectangle outside image");
    }
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        const float* src = &data[(static_cast<size_t>(y0 + y) * width + x0) * 3];
        std::copy(src, src + static_cast<size_t>(w) * 3, &out.data[static_cast<size_t>(y) * w * 3]);
    }
    return out;
}

void Image::paste(const Image& src, int y0, int x0) {
    if (y0 < 0 || x0 < 0 || y0 + src.height > height || x0 + src.width > width) {
        throw Error(ErrorKind::invalid_argument, "paste rectangle outside image");
    }
    for (int y = 0; y < src.height; ++y) {
        const float* row = &src.data[static_cast<size_t>(y) * src.width * 3];
        std::copy(row, row + static_cast<size_t>(src.width) * 3, &data[(static_cast<size_t>(y0 + y) * width + x0) * 3]);
    }
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    if (src.empty()) throw Error(ErrorKind::invalid_argument, "cannot resize an empty image");
    if (out_h <= 0 || out_w <= 0) throw Error(ErrorKind::invalid_argument, "target size must be positive");
    if (out_h == src.height && out_w == src.width) return src;

    const double sy = static_cast<double>(src.height) / out_h;
    const double sx = static_cast<double>(src.width) / out_w;

    // Precompute horizontal taps once per column.
    std::vector<int> x0s(out_w), x1s(out_w);
    std::vector<float> wxs(out_w);
    for (int x = 0; x < out_w; ++x) {
        double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
        int ix = static_cast<int>(std::floor(fx));
        x0s[x] = ix;
        x1s[x] = std::min(ix + 1, src.width - 1);
        wxs[x] = static_cast<float>(fx - ix);
    }

    Image out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        int y0 = static_cast<int>(std::floor(fy));
        int y1 = std::min(y0 + 1, src.height - 1);
        float wy = static_cast<float>(fy - y0);
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float top = src.at(y0, x0s[x], c) * (1.0f - wxs[x]) + src.at(y0, x1s[x], c) * wxs[x];
                float bot = src.at(y1, x0s[x], c) * (1.0f - wxs[x]) + src.at(y1, x1s[x], c) * wxs[x];
                out.at(y, x, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image quantize8(const Image& img) {
    Image out = img;
    for (float& v : out.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
    return out;
}

namespace {

struct ReadState {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t count) {
    auto* state = static_cast<ReadState*>(png_get_io_ptr(png));
    if (state->offset + count > state->bytes.size()) png_error(png, "truncated PNG data");
    std::memcpy(out, state->bytes.data() + state->offset, count);
    state->offset += count;
}

void write_callback(png_structp png, png_bytep in, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), in, in + count);
}

void flush_callback(png_structp) {}

void error_callback(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.empty()) throw Error(ErrorKind::invalid_argument, "cannot encode an empty image");
    std::vector<std::uint8_t> rgb(img.data.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    }

    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, error_callback, warning_callback);
    if (!png) throw Error(ErrorKind::io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::io, "PNG encode failed: " + message);
    }
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    for (int y = 0; y < img.height; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * img.width * 3;
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(ErrorKind::malformed, "not a PNG stream");
    }
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, error_callback, warning_callback);
    if (!png) throw Error(ErrorKind::io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadState state{bytes, 0};
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::malformed, "PNG decode failed: " + message);
    }
    png_set_read_fn(png, &state, read_callback);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width * 3; ++x) {
            img.data[static_cast<size_t>(y) * width * 3 + x] = pixels[stride * y + x] / 255.0f;
        }
    }
    return img;
}

Image read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_png(const Image& img, const std::filesystem::path& path) {
    auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

}  // namespace docrecon
