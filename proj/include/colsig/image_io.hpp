#pragma once

// Raster file I/O: PNG through libpng, TIFF through libtiff. Everything is
// reduced to a single luminance channel in [0,1].

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "colsig/error.hpp"
#include "colsig/grid.hpp"

namespace colsig {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& p, const char* mode) {
    FilePtr f(std::fopen(p.string().c_str(), mode));
    if (!f) throw Error(ErrorKind::Io, "cannot open '" + p.string() + "'");
    return f;
}

inline float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

inline std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

} // namespace detail

inline RasterImage read_png(const std::filesystem::path& path) {
    auto f = detail::open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error(ErrorKind::Format, "'" + path.string() + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::Io, "libpng initialization failed");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::Format, "corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RasterImage img(w, h);
    const int bps = depth == 16 ? 2 : 1;
    const float scale = depth == 16 ? 65535.0f : 255.0f;
    auto sample = [&](const png_byte* row, int x, int c) -> float {
        const png_byte* p = row + (static_cast<std::size_t>(x) * channels + c) * bps;
        const unsigned v = bps == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
        return static_cast<float>(v) / scale;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Alpha channels are ignored: scans are opaque.
            img(x, y) = channels >= 3 ? detail::luminance(sample(rows[y], x, 0), sample(rows[y], x, 1), sample(rows[y], x, 2))
                                      : sample(rows[y], x, 0);
        }
    }
    return img;
}

namespace detail {

inline void write_png_rows(const std::filesystem::path& path, int w, int h, int depth,
                           const std::vector<std::vector<png_byte>>& rows) {
    auto f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Io, "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Io, "failed writing PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto& r : rows) png_write_row(png, r.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace detail

/// 8-bit grayscale; intensities are clamped to [0,1].
inline void write_png(const std::filesystem::path& path, const RasterImage& img) {
    std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(img.height),
                                            std::vector<png_byte>(static_cast<std::size_t>(img.width)));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float v = std::clamp(img(x, y), 0.0f, 1.0f);
            rows[y][x] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
    detail::write_png_rows(path, img.width, img.height, 8, rows);
}

/// 1-bit PNG where white (1) is foreground.
inline void write_mask_png(const std::filesystem::path& path, const BinaryMask& m) {
    std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(m.height),
                                            std::vector<png_byte>((static_cast<std::size_t>(m.width) + 7) / 8, 0));
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m(x, y)) rows[y][x / 8] |= static_cast<png_byte>(0x80u >> (x % 8));
    detail::write_png_rows(path, m.width, m.height, 1, rows);
}

inline RasterImage read_tiff(const std::filesystem::path& path) {
    TIFFSetWarningHandler(nullptr);
    std::unique_ptr<TIFF, void (*)(TIFF*)> tif(TIFFOpen(path.string().c_str(), "r"), TIFFClose);
    if (!tif) throw Error(ErrorKind::Format, "cannot open TIFF '" + path.string() + "'");
    uint32_t w = 0, h = 0;
    TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
    if (w == 0 || h == 0) throw Error(ErrorKind::Format, "empty TIFF '" + path.string() + "'");
    std::vector<uint32_t> rgba(static_cast<std::size_t>(w) * h);
    if (!TIFFReadRGBAImageOriented(tif.get(), w, h, rgba.data(), ORIENTATION_TOPLEFT, 0))
        throw Error(ErrorKind::Format, "cannot decode TIFF '" + path.string() + "'");
    RasterImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < rgba.size(); ++i) {
        const uint32_t p = rgba[i];
        img.data[i] = detail::luminance(TIFFGetR(p) / 255.0f, TIFFGetG(p) / 255.0f, TIFFGetB(p) / 255.0f);
    }
    return img;
}

/// Dispatches on extension (.png, .tif, .tiff).
inline RasterImage read_raster(const std::filesystem::path& path) {
    const auto ext = detail::lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".tif" || ext == ".tiff") return read_tiff(path);
    throw Error(ErrorKind::Format, "unsupported raster format '" + ext + "'");
}

inline bool is_raster_file(const std::filesystem::path& path) {
    const auto ext = detail::lower_ext(path);
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

/// Loads a scan and flips it so ink is 1: light-background scans
/// (mean intensity above 0.5) are inverted.
inline RasterImage load_scan(const std::filesystem::path& path) {
    RasterImage img = read_raster(path);
    double sum = 0.0;
    for (float v : img.data) sum += v;
    if (sum / static_cast<double>(img.size()) > 0.5)
        for (float& v : img.data) v = 1.0f - v;
    return img;
}

} // namespace colsig
