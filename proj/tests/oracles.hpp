#pragma once

// Reference implementations used only by tests. They are written from the contracts, not from
// the library code, and are deliberately naive.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <limits>
#include <regex>
#include <string>
#include <vector>

namespace oracle {

/// ceil(num/den * L) for the scale factors the tests use, in exact integer arithmetic.
inline int scaled_ceil(int num, int den, int length) { return (num * length + den - 1) / den; }

/// Expected crop side: min(max(min_side, ceil(alpha * L)), W, H).
inline int expected_side(int num, int den, int min_side, int bw, int bh, int width, int height) {
    const int longer = std::max(bw, bh);
    return std::min({std::max(min_side, scaled_ceil(num, den, longer)), width, height});
}

struct Placement {
    int sx = 0, sy = 0;
};

/// Every in-bounds origin of a side x side square whose center is closest to the box center.
/// Distances use doubled coordinates so half-pixel centers stay exact.
inline std::vector<Placement> best_placements(int x1, int y1, int x2, int y2, int width, int height, int side) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::vector<Placement> out;
    for (int sy = 0; sy + side <= height; ++sy)
        for (int sx = 0; sx + side <= width; ++sx) {
            const std::int64_t dx = 2 * sx + side - (x1 + x2);
            const std::int64_t dy = 2 * sy + side - (y1 + y2);
            const std::int64_t d = dx * dx + dy * dy;
            if (d < best) {
                best = d;
                out.clear();
            }
            if (d == best) out.push_back({sx, sy});
        }
    return out;
}

/// Regex-based answer normalizer: lower-case ASCII, collapse and trim whitespace, then remove
/// spaces next to ASCII punctuation or symbols.
inline std::string normalize(const std::string& s) {
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
        return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
    });
    static const std::regex ws("[ \\t\\n\\r\\f\\v]+");
    static const std::regex edges("^ | $");
    static const std::regex before_punct(" ([!-/:-@\\[-`{-~])");
    static const std::regex after_punct("([!-/:-@\\[-`{-~]) ");
    std::string t = std::regex_replace(lower, ws, " ");
    t = std::regex_replace(t, edges, "");
    t = std::regex_replace(t, before_punct, "$1");
    t = std::regex_replace(t, after_punct, "$1");
    return t;
}

inline bool contains_match(const std::string& response, const std::vector<std::string>& answers) {
    const auto hay = normalize(response);
    for (const auto& a : answers) {
        const auto needle = normalize(a);
        if (!needle.empty() && hay.find(needle) != std::string::npos) return true;
    }
    return false;
}

/// Effective glyph height after fitting the longer view side to the model input side.
inline double effective_height(int glyph, int vw, int vh, int input_side) {
    return static_cast<double>(glyph) * input_side / std::max(vw, vh);
}

}  // namespace oracle
