#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <openssl/evp.h>

namespace textcot {

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256 init failed");
    }

    Sha256& update(std::span<const std::uint8_t> bytes) {
        EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size());
        return *this;
    }
    Sha256& update(std::string_view s) {
        EVP_DigestUpdate(ctx_.get(), s.data(), s.size());
        return *this;
    }
    // Length-prefixed field, so ("ab","c") and ("a","bc") hash differently.
    Sha256& field(std::string_view s) {
        const std::uint64_t n = s.size();
        std::array<std::uint8_t, 8> len{};
        for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(n >> (8 * i));
        update(std::span<const std::uint8_t>(len));
        return update(s);
    }

    std::array<std::uint8_t, 32> digest() {
        std::array<std::uint8_t, 32> out{};
        unsigned int n = 0;
        EVP_DigestFinal_ex(ctx_.get(), out.data(), &n);
        return out;
    }
    std::string hex_digest() { return to_hex(digest()); }

    static std::string to_hex(std::span<const std::uint8_t> bytes) {
        static constexpr char kDigits[] = "0123456789abcdef";
        std::string s;
        s.reserve(bytes.size() * 2);
        for (auto b : bytes) {
            s.push_back(kDigits[b >> 4]);
            s.push_back(kDigits[b & 0xF]);
        }
        return s;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view s) { return Sha256().update(s).hex_digest(); }

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace textcot
