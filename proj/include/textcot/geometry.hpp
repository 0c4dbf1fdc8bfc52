#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "textcot/error.hpp"
#include "textcot/raster.hpp"

namespace textcot {

/// Half-open pixel rectangle: covers [x1, x2) x [y1, y2).
struct PixelBox {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    int width() const { return x2 - x1; }
    int height() const { return y2 - y1; }
    bool valid() const { return x1 >= 0 && y1 >= 0 && x2 > x1 && y2 > y1; }
    bool within(ImageDims dims) const { return valid() && x2 <= dims.width && y2 <= dims.height; }
    bool contains(const PixelBox& o) const {
        return x1 <= o.x1 && y1 <= o.y1 && o.x2 <= x2 && o.y2 <= y2;
    }
    // Twice the center, to stay in integers.
    int center2_x() const { return x1 + x2; }
    int center2_y() const { return y1 + y2; }

    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct NormalizedBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const {
        return 0.0 <= x1 && x1 < x2 && x2 <= 1.0 && 0.0 <= y1 && y1 < y2 && y2 <= 1.0;
    }
    friend bool operator==(const NormalizedBox&, const NormalizedBox&) = default;
};

enum class BoxConvention { fraction_0_1, per_mille_0_999, absolute_pixels };

enum class CropMode { strict_rect, square, square_scaled, full_image };

struct CropConfig {
    double expand_ratio = 1.5;
    int min_side = 448;
    CropMode mode = CropMode::square_scaled;

    void validate() const {
        if (!(expand_ratio > 0.0) || !std::isfinite(expand_ratio))
            throw Error(ErrorKind::ConfigError, "expand_ratio must be > 0");
        if (min_side < 0) throw Error(ErrorKind::ConfigError, "min_side must be >= 0");
    }
};

struct CropFlags {
    bool side_limited_by_image = false;
    bool shifted_x = false;
    bool shifted_y = false;

    friend bool operator==(const CropFlags&, const CropFlags&) = default;
};

struct CropRegion {
    PixelBox box;
    CropFlags flags;

    friend bool operator==(const CropRegion&, const CropRegion&) = default;
};

using ParsedBox = std::variant<NormalizedBox, PixelBox>;

// ---------------------------------------------------------------------------
// enum <-> text

inline std::string_view to_string(BoxConvention c) {
    switch (c) {
        case BoxConvention::fraction_0_1: return "fraction_0_1";
        case BoxConvention::per_mille_0_999: return "per_mille_0_999";
        case BoxConvention::absolute_pixels: return "absolute_pixels";
    }
    return "fraction_0_1";
}

inline BoxConvention box_convention_from_string(std::string_view s) {
    if (s == "fraction_0_1") return BoxConvention::fraction_0_1;
    if (s == "per_mille_0_999") return BoxConvention::per_mille_0_999;
    if (s == "absolute_pixels") return BoxConvention::absolute_pixels;
    throw Error(ErrorKind::ConfigError, "unknown bbox convention '" + std::string(s) + "'");
}

inline std::string_view to_string(CropMode m) {
    switch (m) {
        case CropMode::strict_rect: return "strict_rect";
        case CropMode::square: return "square";
        case CropMode::square_scaled: return "square_scaled";
        case CropMode::full_image: return "full_image";
    }
    return "square_scaled";
}

inline CropMode crop_mode_from_string(std::string_view s) {
    if (s == "strict_rect") return CropMode::strict_rect;
    if (s == "square") return CropMode::square;
    if (s == "square_scaled") return CropMode::square_scaled;
    if (s == "full_image") return CropMode::full_image;
    throw Error(ErrorKind::ConfigError, "unknown crop mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// bbox text parsing

namespace detail {

inline const std::regex& bracket_tuple_re() {
    static const std::regex re(
        R"(\[\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*\])");
    return re;
}

inline const std::regex& paired_tuple_re() {
    static const std::regex re(
        R"(\(\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*\)\s*,?\s*\(\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*\))");
    return re;
}

// (x1 + x2 - side) / 2 rounded half away from zero, exact in integers.
inline int half_round_away(int twice) {
    if (twice % 2 == 0) return twice / 2;
    return twice > 0 ? (twice + 1) / 2 : (twice - 1) / 2;
}

inline int ceil_scaled(double ratio, int length) {
    // Guard against products like 1.1 * 10 = 11.000000000000002.
    return static_cast<int>(std::ceil(ratio * length - 1e-9));
}

inline void repair_axis(int& lo, int& hi, int extent) {
    lo = std::clamp(lo, 0, extent);
    hi = std::clamp(hi, 0, extent);
    if (hi <= lo) {
        if (lo < extent) {
            hi = lo + 1;
        } else {
            lo = extent - 1;
            hi = extent;
        }
    }
}

}  // namespace detail

/// Grammar-only scan: the first "[a, b, c, d]" or "(a,b),(c,d)" tuple in the text.
inline std::optional<std::array<double, 4>> scan_bbox_values(std::string_view raw) {
    const std::string text(raw);
    std::smatch bracket, paired;
    const bool has_bracket = std::regex_search(text, bracket, detail::bracket_tuple_re());
    const bool has_paired = std::regex_search(text, paired, detail::paired_tuple_re());
    const std::smatch* m = nullptr;
    if (has_bracket && has_paired)
        m = bracket.position(0) <= paired.position(0) ? &bracket : &paired;
    else if (has_bracket)
        m = &bracket;
    else if (has_paired)
        m = &paired;
    if (m == nullptr) return std::nullopt;
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) v[i] = std::stod((*m)[i + 1].str());
    return v;
}

/// Parses a grounding answer under the declared coordinate convention.
inline ParsedBox parse_bbox_text(std::string_view raw, BoxConvention convention) {
    const auto values = scan_bbox_values(raw);
    if (!values) throw Error(ErrorKind::NoBoxFound, "no bounding box in grounding output");
    const auto [a, b, c, d] = *values;

    const double hi = convention == BoxConvention::fraction_0_1      ? 1.0
                      : convention == BoxConvention::per_mille_0_999 ? 999.0
                                                                     : INFINITY;
    for (double v : *values)
        if (v < 0.0 || v > hi)
            throw Error(ErrorKind::OutOfRange, "coordinate outside " + std::string(to_string(convention)));
    if (c <= a || d <= b) throw Error(ErrorKind::DegenerateBox, "x2 <= x1 or y2 <= y1");

    switch (convention) {
        case BoxConvention::fraction_0_1: return NormalizedBox{a, b, c, d};
        case BoxConvention::per_mille_0_999: return NormalizedBox{a / 999.0, b / 999.0, c / 999.0, d / 999.0};
        case BoxConvention::absolute_pixels: {
            PixelBox box{static_cast<int>(std::lround(a)), static_cast<int>(std::lround(b)),
                         static_cast<int>(std::lround(c)), static_cast<int>(std::lround(d))};
            if (box.x2 <= box.x1 || box.y2 <= box.y1)
                throw Error(ErrorKind::DegenerateBox, "box collapses after rounding to pixels");
            return box;
        }
    }
    throw Error(ErrorKind::NoBoxFound, "unreachable");
}

/// Scales to pixels, rounds to nearest, clamps into the image and repairs to a 1-px minimum extent.
inline PixelBox to_pixel(const NormalizedBox& box, ImageDims dims) {
    PixelBox out{static_cast<int>(std::lround(box.x1 * dims.width)),
                 static_cast<int>(std::lround(box.y1 * dims.height)),
                 static_cast<int>(std::lround(box.x2 * dims.width)),
                 static_cast<int>(std::lround(box.y2 * dims.height))};
    detail::repair_axis(out.x1, out.x2, dims.width);
    detail::repair_axis(out.y1, out.y2, dims.height);
    return out;
}

/// Intersects with the image; throws BoxOutsideImage when nothing is left.
inline PixelBox clamp_to(const PixelBox& box, ImageDims dims) {
    PixelBox out{std::max(box.x1, 0), std::max(box.y1, 0), std::min(box.x2, dims.width),
                 std::min(box.y2, dims.height)};
    if (!out.valid()) throw Error(ErrorKind::BoxOutsideImage, "box does not intersect the image");
    return out;
}

/// Grounding text to an in-bounds pixel box. Zero-extent boxes are widened to one pixel;
/// inverted or out-of-range boxes still throw.
inline PixelBox locate_box(std::string_view raw, BoxConvention convention, ImageDims dims) {
    try {
        const ParsedBox parsed = parse_bbox_text(raw, convention);
        if (const auto* n = std::get_if<NormalizedBox>(&parsed)) return to_pixel(*n, dims);
        return clamp_to(std::get<PixelBox>(parsed), dims);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateBox) throw;
        auto v = *scan_bbox_values(raw);
        if (v[2] < v[0] || v[3] < v[1]) throw;
        const double scale = convention == BoxConvention::per_mille_0_999 ? 999.0 : 1.0;
        if (convention == BoxConvention::absolute_pixels) {
            PixelBox box{static_cast<int>(std::lround(v[0])), static_cast<int>(std::lround(v[1])),
                         static_cast<int>(std::lround(v[2])), static_cast<int>(std::lround(v[3]))};
            detail::repair_axis(box.x1, box.x2, dims.width);
            detail::repair_axis(box.y1, box.y2, dims.height);
            return box;
        }
        PixelBox box{static_cast<int>(std::lround(v[0] / scale * dims.width)),
                     static_cast<int>(std::lround(v[1] / scale * dims.height)),
                     static_cast<int>(std::lround(v[2] / scale * dims.width)),
                     static_cast<int>(std::lround(v[3] / scale * dims.height))};
        detail::repair_axis(box.x1, box.x2, dims.width);
        detail::repair_axis(box.y1, box.y2, dims.height);
        return box;
    }
}

/// Formats a pixel box back into a backend's own coordinate convention.
inline std::string format_box(const PixelBox& box, ImageDims dims, BoxConvention convention) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    switch (convention) {
        case BoxConvention::absolute_pixels:
            os << '[' << box.x1 << ", " << box.y1 << ", " << box.x2 << ", " << box.y2 << ']';
            break;
        case BoxConvention::per_mille_0_999:
            os.precision(0);
            os << '[' << box.x1 * 999.0 / dims.width << ", " << box.y1 * 999.0 / dims.height << ", "
               << box.x2 * 999.0 / dims.width << ", " << box.y2 * 999.0 / dims.height << ']';
            break;
        case BoxConvention::fraction_0_1:
            os.precision(6);
            os << '[' << static_cast<double>(box.x1) / dims.width << ", "
               << static_cast<double>(box.y1) / dims.height << ", "
               << static_cast<double>(box.x2) / dims.width << ", "
               << static_cast<double>(box.y2) / dims.height << ']';
            break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// cropping

/// Side length of the square crop before the image limit is applied.
inline int raw_square_side(const PixelBox& bbox, const CropConfig& cfg) {
    const int longer = std::max(bbox.width(), bbox.height());
    if (cfg.mode == CropMode::square) return longer;
    return std::max(cfg.min_side, detail::ceil_scaled(cfg.expand_ratio, longer));
}

/// Squares the grounding box around its center, scales it, enforces the minimum side and
/// shifts it back inside the image.
inline CropRegion compute_crop(const PixelBox& bbox, ImageDims dims, const CropConfig& cfg) {
    if (!dims.valid() || !bbox.within(dims))
        throw Error(ErrorKind::BoxOutsideImage, "bbox is not inside the image");

    switch (cfg.mode) {
        case CropMode::strict_rect: return CropRegion{bbox, {}};
        case CropMode::full_image: return CropRegion{PixelBox{0, 0, dims.width, dims.height}, {}};
        case CropMode::square:
        case CropMode::square_scaled: break;
    }

    const int side_raw = raw_square_side(bbox, cfg);
    const int side = std::min({side_raw, dims.width, dims.height});

    CropRegion out;
    out.flags.side_limited_by_image = side < side_raw;

    const int want_x = detail::half_round_away(bbox.center2_x() - side);
    const int want_y = detail::half_round_away(bbox.center2_y() - side);
    const int sx = std::clamp(want_x, 0, dims.width - side);
    const int sy = std::clamp(want_y, 0, dims.height - side);
    // An axis pinned to the full image extent has no placement freedom, so it is not a shift.
    out.flags.shifted_x = side < dims.width && sx != want_x;
    out.flags.shifted_y = side < dims.height && sy != want_y;
    out.box = PixelBox{sx, sy, sx + side, sy + side};
    return out;
}

/// Copies the region out of the image without resampling.
inline RasterImage extract_crop(const RasterImage& image, const PixelBox& region) {
    if (!region.within(image.dims()))
        throw Error(ErrorKind::RegionOutsideImage, "crop region exceeds image bounds");
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(region.width()) * region.height() * 3);
    const auto& src = image.data();
    const std::size_t row_bytes = static_cast<std::size_t>(region.width()) * 3;
    for (int y = 0; y < region.height(); ++y) {
        const std::size_t from =
            (static_cast<std::size_t>(region.y1 + y) * image.width() + region.x1) * 3;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                    buf.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
    }
    return RasterImage(region.width(), region.height(), std::move(buf));
}

inline RasterImage extract_crop(const RasterImage& image, const CropRegion& region) {
    return extract_crop(image, region.box);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const PixelBox& b) {
    j = nlohmann::json{{"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}};
}
inline void from_json(const nlohmann::json& j, PixelBox& b) {
    b = PixelBox{j.at("x1").get<int>(), j.at("y1").get<int>(), j.at("x2").get<int>(), j.at("y2").get<int>()};
}

inline void to_json(nlohmann::json& j, const CropRegion& r) {
    to_json(j, r.box);
    auto flags = nlohmann::json::array();
    if (r.flags.side_limited_by_image) flags.push_back("side_limited_by_image");
    if (r.flags.shifted_x) flags.push_back("shifted_x");
    if (r.flags.shifted_y) flags.push_back("shifted_y");
    j["flags"] = std::move(flags);
}
inline void from_json(const nlohmann::json& j, CropRegion& r) {
    from_json(j, r.box);
    r.flags = {};
    for (const auto& f : j.at("flags")) {
        const auto s = f.get<std::string>();
        if (s == "side_limited_by_image") r.flags.side_limited_by_image = true;
        else if (s == "shifted_x") r.flags.shifted_x = true;
        else if (s == "shifted_y") r.flags.shifted_y = true;
    }
}

inline void to_json(nlohmann::json& j, const CropConfig& c) {
    j = nlohmann::json{{"expand_ratio", c.expand_ratio}, {"min_side", c.min_side},
                       {"mode", std::string(to_string(c.mode))}};
}
inline void from_json(const nlohmann::json& j, CropConfig& c) {
    c = CropConfig{};
    if (j.contains("expand_ratio")) c.expand_ratio = j.at("expand_ratio").get<double>();
    if (j.contains("min_side")) c.min_side = j.at("min_side").get<int>();
    if (j.contains("mode")) c.mode = crop_mode_from_string(j.at("mode").get<std::string>());
    c.validate();
}

}  // namespace textcot
