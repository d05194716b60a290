#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pcseg/error.hpp"

namespace pcseg {

/// H x W x C float image, row-major HWC, values in [0, 1] at rest.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    /// Bilinear sample at pixel-center coordinates; out-of-frame reads clamp
    /// to the border when `clamp_border`, otherwise return `fill`.
    float sample(double x, double y, int c, bool clamp_border = true, float fill = 0.0f) const;

    /// Bilinear resize to S x S. The identity at the target size.
    Image resized(int target) const;

    /// Channel replication (e.g. grayscale to 3-channel).
    Image replicated(int target_channels) const;
};

Image load_image(const std::string& path);               // PNG or PGM by magic bytes
void save_png(const Image& image, const std::string& path);
void save_pgm(const Image& image, const std::string& path);

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace pcseg
