#include "svae/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "svae/errors.hpp"

namespace svae {

namespace {

std::uint8_t to_byte(double v) {
    if (!std::isfinite(v)) v = 0.0;
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void check_size(std::span<const double> values, std::size_t height, std::size_t width) {
    if (values.size() != height * width) {
        throw DimensionError("image has " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    if (height == 0 || width == 0) throw DimensionError("image must not be empty");
}

Raster blank(std::size_t h, std::size_t w, std::size_t channels, std::uint8_t fill) {
    return {h, w, channels, std::vector<std::uint8_t>(h * w * channels, fill)};
}

void upscale_into(Raster& out, const std::vector<std::uint8_t>& px, std::size_t h, std::size_t w, std::size_t zoom) {
    const std::size_t ch = out.channels;
    for (std::size_t r = 0; r < h * zoom; ++r)
        for (std::size_t c = 0; c < w * zoom; ++c)
            std::memcpy(&out.pixels[(r * out.width + c) * ch], &px[((r / zoom) * w + c / zoom) * ch], ch);
}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(out, cur->bytes.data() + cur->pos, n);
    cur->pos += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp, png_const_charp msg) { throw FormatError(std::string("PNG: ") + msg); }

void warning_callback(png_structp, png_const_charp) {}

}  // namespace

Raster gray_raster(std::span<const double> values, std::size_t height, std::size_t width, std::size_t zoom) {
    check_size(values, height, width);
    if (zoom == 0) throw ConfigError("zoom must be positive");
    std::vector<std::uint8_t> px(values.size());
    std::transform(values.begin(), values.end(), px.begin(), to_byte);
    Raster out = blank(height * zoom, width * zoom, 1, 0);
    upscale_into(out, px, height, width, zoom);
    return out;
}

Raster tile_rasters(const std::vector<Raster>& tiles, std::size_t rows, std::size_t cols, std::size_t gap) {
    if (tiles.empty() || rows * cols < tiles.size()) throw DimensionError("tiles do not fit the requested grid");
    const Raster& first = tiles.front();
    for (const Raster& t : tiles) {
        if (t.height != first.height || t.width != first.width || t.channels != first.channels)
            throw DimensionError("tiles must share one size");
    }
    const std::size_t ch = first.channels;
    Raster out = blank(rows * first.height + (rows + 1) * gap, cols * first.width + (cols + 1) * gap, ch, 255);
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const std::size_t top = gap + (k / cols) * (first.height + gap), left = gap + (k % cols) * (first.width + gap);
        for (std::size_t r = 0; r < first.height; ++r)
            std::memcpy(&out.pixels[((top + r) * out.width + left) * ch], &tiles[k].pixels[r * first.width * ch],
                        first.width * ch);
    }
    return out;
}

Raster diverging_heatmap(std::span<const double> values, std::size_t height, std::size_t width, std::size_t zoom) {
    check_size(values, height, width);
    if (zoom == 0) throw ConfigError("zoom must be positive");
    double scale = 0.0;
    for (double v : values)
        if (std::isfinite(v)) scale = std::max(scale, std::abs(v));
    std::vector<std::uint8_t> px(values.size() * 3);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double t = scale > 0.0 && std::isfinite(values[i]) ? values[i] / scale : 0.0;
        const std::uint8_t fade = to_byte(1.0 - std::abs(t));
        std::uint8_t* p = &px[i * 3];
        if (t >= 0.0) {
            p[0] = 255, p[1] = fade, p[2] = fade;
        } else {
            p[0] = fade, p[1] = fade, p[2] = 255;
        }
    }
    Raster out = blank(height * zoom, width * zoom, 3, 0);
    upscale_into(out, px, height, width, zoom);
    return out;
}

Raster to_rgb(const Raster& r) {
    if (r.channels == 3) return r;
    if (r.channels != 1) throw ConfigError("expected a gray or RGB raster");
    Raster out = blank(r.height, r.width, 3, 0);
    for (std::size_t i = 0; i < r.pixels.size(); ++i) std::fill_n(&out.pixels[i * 3], 3, r.pixels[i]);
    return out;
}

std::vector<std::uint8_t> encode_png(const Raster& r) {
    if (r.channels != 1 && r.channels != 3) throw ConfigError("PNG export supports 1 or 3 channels");
    if (r.pixels.size() != r.height * r.width * r.channels || r.height == 0 || r.width == 0)
        throw DimensionError("raster size does not match its pixel buffer");
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    png_infop info = png_create_info_struct(png);
    try {
        png_set_write_fn(png, &out, write_callback, flush_callback);
        png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
                     r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::size_t row = 0; row < r.height; ++row)
            png_write_row(png, const_cast<png_bytep>(&r.pixels[row * r.width * r.channels]));
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const Raster& r, const std::filesystem::path& path) {
    const auto bytes = encode_png(r);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing " + path.string());
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw MagicError("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    png_infop info = png_create_info_struct(png);
    ReadCursor cur{bytes};
    Raster out;
    try {
        png_set_read_fn(png, &cur, read_callback);
        png_read_info(png, info);
        const int color = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB))
            throw FormatError("only 8-bit gray or RGB PNGs are supported");
        out.width = png_get_image_width(png, info);
        out.height = png_get_image_height(png, info);
        out.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
        out.pixels.resize(out.width * out.height * out.channels);
        for (std::size_t row = 0; row < out.height; ++row)
            png_read_row(png, &out.pixels[row * out.width * out.channels], nullptr);
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace svae
