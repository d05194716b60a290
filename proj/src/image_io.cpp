#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "pcseg/image.hpp"

namespace pcseg {

float Image::sample(double x, double y, int c, bool clamp_border, float fill) const {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    auto fetch = [&](int yy, int xx) -> float {
        if (xx < 0 || yy < 0 || xx >= width || yy >= height) {
            if (!clamp_border) return fill;
            xx = std::clamp(xx, 0, width - 1);
            yy = std::clamp(yy, 0, height - 1);
        }
        return at(yy, xx, c);
    };
    const double top = (1.0 - fx) * fetch(y0, x0) + fx * fetch(y0, x0 + 1);
    const double bot = (1.0 - fx) * fetch(y0 + 1, x0) + fx * fetch(y0 + 1, x0 + 1);
    return static_cast<float>((1.0 - fy) * top + fy * bot);
}

Image Image::resized(int target) const {
    if (target == width && target == height) return *this;
    Image out(target, target, channels);
    const double sx = static_cast<double>(width) / target;
    const double sy = static_cast<double>(height) / target;
    for (int y = 0; y < target; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < target; ++x) {
            const double src_x = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < channels; ++c) {
                out.at(y, x, c) = sample(src_x, src_y, c);
            }
        }
    }
    return out;
}

Image Image::replicated(int target_channels) const {
    if (channels == target_channels) return *this;
    Image out(height, width, target_channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < target_channels; ++c) {
                out.at(y, x, c) = at(y, x, std::min(c, channels - 1));
            }
        }
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png_file(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error("IoError", "cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("IoError", "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("ParseError", "corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_expand(png);          // palette/low-bit to 8-bit
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * c);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(h, w, c);
    for (std::size_t i = 0; i < raw.size(); ++i) image.data[i] = raw[i] / 255.0f;
    return image;
}

Image load_pgm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw Error("ParseError", "unsupported PGM header in " + path);
    }
    in.get();  // single whitespace after header
    std::vector<char> raw(static_cast<std::size_t>(w) * h);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw Error("TruncatedFile", "PGM pixel data short in " + path);
    }
    Image image(h, w, 1);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        image.data[i] = static_cast<std::uint8_t>(raw[i]) / static_cast<float>(maxval);
    }
    return image;
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error("IoError", "cannot open " + path);
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm_file(path);
    return load_png_file(path);
}

void save_png(const Image& image, const std::string& path) {
    const int c = image.channels >= 3 ? 3 : 1;
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("IoError", "cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("IoError", "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("IoError", "PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, image.width, image.height, 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * c);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int k = 0; k < c; ++k) {
                row[static_cast<std::size_t>(x) * c + k] =
                    to_byte(image.at(y, x, std::min(k, image.channels - 1)));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_pgm(const Image& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            out.put(static_cast<char>(to_byte(image.at(y, x, 0))));
        }
    }
}

}  // namespace pcseg
