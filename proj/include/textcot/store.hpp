#pragma once

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"

#include "textcot/backend.hpp"
#include "textcot/error.hpp"
#include "textcot/hashing.hpp"

namespace textcot {

struct CacheKey {
    std::string digest;  // 64 hex chars

    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

inline CacheKey make_cache_key(const VisionRequest& request) {
    Sha256 h;
    h.field("textcot-cache-key/1");
    h.field(request.backend_id);
    h.field(request.model_id);
    h.field(request.params.canonical());
    h.field(request.prompt.text);
    h.field(request.image ? request.image->content_digest() : std::string{});
    return {h.hex_digest()};
}

struct CacheStats {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
    std::size_t corrupt = 0;
    std::size_t temp_files = 0;
};

/// Content-addressed response cache: one file per entry under root/ab/cd/<digest>.entry.
/// An entry is a JSON header line, the response body and a trailing SHA-256 checksum line.
class ResponseCache {
public:
    static constexpr std::string_view kFormat = "textcot-cache/1";

    explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path entry_path(const CacheKey& key) const {
        return root_ / key.digest.substr(0, 2) / key.digest.substr(2, 2) / (key.digest + ".entry");
    }

    std::optional<VisionResponse> get(const CacheKey& key) const {
        const auto path = entry_path(key);
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto decoded = decode_entry(bytes, key);
        if (!decoded) {
            corrupt_reads_.fetch_add(1);
            std::cerr << "warning: " << to_string(ErrorKind::CorruptEntry) << " in cache entry " << path.string()
                      << "; treating as absent\n";
        }
        return decoded;
    }

    void put(const CacheKey& key, const VisionResponse& value) {
        const auto path = entry_path(key);
        std::filesystem::create_directories(path.parent_path());
        const std::string bytes = encode_entry(key, value);

        std::ostringstream tmp_name;
        tmp_name << key.digest << ".tmp." << ::getpid() << '.'
                 << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << tmp_counter().fetch_add(1);
        const auto tmp = path.parent_path() / tmp_name.str();

        const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd < 0) throw_io("open", tmp);
        std::size_t written = 0;
        while (written < bytes.size()) {
            const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                const int err = errno;
                ::close(fd);
                std::filesystem::remove(tmp);
                errno = err;
                throw_io("write", tmp);
            }
            written += static_cast<std::size_t>(n);
        }
        if (::fsync(fd) != 0) {
            const int err = errno;
            ::close(fd);
            std::filesystem::remove(tmp);
            errno = err;
            throw_io("fsync", tmp);
        }
        ::close(fd);
        if (::rename(tmp.c_str(), path.c_str()) != 0) {
            const int err = errno;
            std::filesystem::remove(tmp);
            errno = err;
            throw_io("rename", path);
        }
    }

    CacheStats stats() const {
        CacheStats s;
        for_each_file([&](const std::filesystem::path& p) {
            if (is_temp(p)) {
                ++s.temp_files;
                return;
            }
            if (p.extension() != ".entry") return;
            ++s.entries;
            s.bytes += std::filesystem::file_size(p);
            if (!check_file(p)) ++s.corrupt;
        });
        return s;
    }

    /// Removes corrupt entries, stale temp files and, when given, entries older than max_age.
    std::size_t gc(std::optional<std::chrono::seconds> max_age = std::nullopt,
                   std::chrono::seconds temp_grace = std::chrono::hours(1)) {
        const auto now = std::filesystem::file_time_type::clock::now();
        std::vector<std::filesystem::path> doomed;
        for_each_file([&](const std::filesystem::path& p) {
            const auto age = now - std::filesystem::last_write_time(p);
            if (is_temp(p)) {
                if (age >= temp_grace) doomed.push_back(p);
                return;
            }
            if (p.extension() != ".entry") return;
            if (!check_file(p) || (max_age && age >= *max_age)) doomed.push_back(p);
        });
        for (const auto& p : doomed) std::filesystem::remove(p);
        return doomed.size();
    }

    std::size_t corrupt_reads() const { return corrupt_reads_.load(); }

    static std::string encode_entry(const CacheKey& key, const VisionResponse& value) {
        const nlohmann::json header{{"format", kFormat},
                                    {"key", key.digest},
                                    {"latency_ms", value.latency_ms},
                                    {"body_bytes", value.text.size()}};
        std::string payload = header.dump() + "\n" + value.text;
        const std::string checksum = sha256_hex(payload);
        return payload + "\nsha256:" + checksum + "\n";
    }

    static std::optional<VisionResponse> decode_entry(std::string_view bytes, const CacheKey& key) {
        const auto nl = bytes.find('\n');
        if (nl == std::string_view::npos) return std::nullopt;
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(bytes.substr(0, nl));
            if (header.at("format").get<std::string>() != kFormat) return std::nullopt;
            if (header.at("key").get<std::string>() != key.digest) return std::nullopt;
            const auto body_bytes = header.at("body_bytes").get<std::size_t>();
            const std::size_t body_end = nl + 1 + body_bytes;
            constexpr std::string_view kTag = "\nsha256:";
            if (bytes.size() != body_end + kTag.size() + 64 + 1) return std::nullopt;
            if (bytes.substr(body_end, kTag.size()) != kTag || bytes.back() != '\n') return std::nullopt;
            const auto payload = bytes.substr(0, body_end);
            if (sha256_hex(payload) != bytes.substr(body_end + kTag.size(), 64)) return std::nullopt;
            VisionResponse r;
            r.text = std::string(bytes.substr(nl + 1, body_bytes));
            r.latency_ms = header.at("latency_ms").get<std::int64_t>();
            r.cached = true;
            return r;
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

private:
    static std::atomic<std::uint64_t>& tmp_counter() {
        static std::atomic<std::uint64_t> counter{0};
        return counter;
    }

    static bool is_temp(const std::filesystem::path& p) {
        return p.filename().string().find(".tmp.") != std::string::npos;
    }

    static bool check_file(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return decode_entry(bytes, CacheKey{p.stem().string()}).has_value();
    }

    template <class F>
    void for_each_file(F&& f) const {
        if (!std::filesystem::exists(root_)) return;
        for (const auto& e : std::filesystem::recursive_directory_iterator(root_))
            if (e.is_regular_file()) f(e.path());
    }

    [[noreturn]] static void throw_io(const char* op, const std::filesystem::path& p) {
        const int err = errno;
        const std::string msg = std::string(op) + " '" + p.string() + "': " + std::strerror(err);
        if (err == ENOSPC || err == EDQUOT) throw Error(ErrorKind::StorageFull, msg);
        throw std::runtime_error("cache " + msg);
    }

    std::filesystem::path root_;
    mutable std::atomic<std::size_t> corrupt_reads_{0};
};

}  // namespace textcot
