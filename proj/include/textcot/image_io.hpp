#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "textcot/error.hpp"
#include "textcot/raster.hpp"

namespace textcot {

namespace detail {

inline RasterImage from_bgr(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
    for (int y = 0; y < rgb.rows; ++y)
        std::memcpy(buf.data() + static_cast<std::size_t>(y) * rgb.cols * 3, rgb.ptr(y),
                    static_cast<std::size_t>(rgb.cols) * 3);
    return RasterImage(rgb.cols, rgb.rows, std::move(buf));
}

inline cv::Mat to_bgr(const RasterImage& image) {
    cv::Mat rgb(image.height(), image.width(), CV_8UC3,
                const_cast<std::uint8_t*>(image.data().data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

}  // namespace detail

/// Decodes PNG or JPEG bytes into 8-bit RGB.
inline RasterImage decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error(ErrorKind::ImageDecodeError, "empty image buffer");
    const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                      const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(ErrorKind::ImageDecodeError, "buffer is not a decodable PNG/JPEG");
    return detail::from_bgr(bgr);
}

inline RasterImage load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(ErrorKind::ImageLoadError, "cannot read image '" + path.string() + "'");
    return detail::from_bgr(bgr);
}

/// PNG at a fixed compression level so identical rasters give identical bytes.
inline std::vector<std::uint8_t> encode_png(const RasterImage& image) {
    std::vector<std::uint8_t> out;
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    if (!cv::imencode(".png", detail::to_bgr(image), out, params))
        throw Error(ErrorKind::ImageDecodeError, "PNG encoding failed");
    return out;
}

inline void save_png(const RasterImage& image, const std::filesystem::path& path) {
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    if (!cv::imwrite(path.string(), detail::to_bgr(image), params))
        throw Error(ErrorKind::ImageLoadError, "cannot write image '" + path.string() + "'");
}

}  // namespace textcot
