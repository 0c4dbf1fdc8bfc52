#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace textcot {

struct ImageDims {
    int width = 0;
    int height = 0;

    bool valid() const { return width >= 1 && height >= 1; }
    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interleaved 8-bit RGB raster, row-major, origin top-left.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = {})
        : dims_{width, height} {
        if (!dims_.valid()) throw std::invalid_argument("RasterImage: non-positive dimensions");
        pixels_.resize(static_cast<std::size_t>(width) * height * 3);
        for (std::size_t i = 0; i < pixels_.size(); i += 3) {
            pixels_[i] = fill.r;
            pixels_[i + 1] = fill.g;
            pixels_[i + 2] = fill.b;
        }
    }
    RasterImage(int width, int height, std::vector<std::uint8_t> rgb)
        : dims_{width, height}, pixels_(std::move(rgb)) {
        if (!dims_.valid() || pixels_.size() != static_cast<std::size_t>(width) * height * 3)
            throw std::invalid_argument("RasterImage: buffer does not match dimensions");
    }

    ImageDims dims() const { return dims_; }
    int width() const { return dims_.width; }
    int height() const { return dims_.height; }
    bool empty() const { return pixels_.empty(); }

    Rgb at(int x, int y) const {
        const std::size_t i = offset(x, y);
        return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t i = offset(x, y);
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
    }

    /// Fills [x1, x2) x [y1, y2), clipped to the raster.
    void fill_rect(int x1, int y1, int x2, int y2, Rgb c) {
        x1 = std::max(x1, 0);
        y1 = std::max(y1, 0);
        x2 = std::min(x2, dims_.width);
        y2 = std::min(y2, dims_.height);
        for (int y = y1; y < y2; ++y)
            for (int x = x1; x < x2; ++x) set(x, y, c);
    }

    const std::vector<std::uint8_t>& data() const { return pixels_; }
    std::vector<std::uint8_t>& data() { return pixels_; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * dims_.width + x) * 3;
    }

    ImageDims dims_{};
    std::vector<std::uint8_t> pixels_;
};

}  // namespace textcot
