#pragma once

#include <chrono>
#include <cstdlib>
#include <regex>
#include <string>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include "textcot/backend.hpp"
#include "textcot/image_io.hpp"

namespace textcot {

struct HttpBackendConfig {
    std::string id = "http";
    std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
    std::string api_key_env;
    std::string model;
    BoxConvention bbox_convention = BoxConvention::fraction_0_1;
    int timeout_ms = 60000;
};

/// Builds the chat-completions body: one user turn with a text part and a base64 PNG part.
inline nlohmann::json build_chat_body(const VisionRequest& request, const std::string& model) {
    const auto png = encode_png(request.image->pixels());
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt.text}});
    content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    nlohmann::json body{{"model", model},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
                        {"temperature", request.params.temperature},
                        {"max_tokens", request.params.max_output_tokens}};
    if (request.params.seed) body["seed"] = *request.params.seed;
    return body;
}

/// Pulls the assistant text out of a chat-completions response; content may be a string
/// or a list of typed parts.
inline std::string extract_chat_text(const nlohmann::json& response) {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content)
        if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
    return text;
}

class HttpChatBackend : public VisionBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
        static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(cfg_.endpoint, m, url_re))
            throw Error(ErrorKind::ConfigError, "endpoint must be an http(s) URL: '" + cfg_.endpoint + "'");
        origin_ = m[1].str();
        path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
    }

    VisionResponse complete(const VisionRequest& request) override {
        const auto started = std::chrono::steady_clock::now();
        httplib::Client cli(origin_);
        const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        cli.set_write_timeout(timeout);

        httplib::Headers headers;
        if (!cfg_.api_key_env.empty()) {
            if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        const auto body = build_chat_body(request, cfg_.model).dump();
        auto res = cli.Post(path_, headers, body, "application/json");
        if (!res)
            throw Error(ErrorKind::TransportError,
                        "request to " + origin_ + path_ + " failed: " + httplib::to_string(res.error()));
        if (res->status == 408 || res->status == 429 || res->status >= 500)
            throw Error(ErrorKind::TransportError, "HTTP " + std::to_string(res->status));
        if (res->status >= 400)
            throw Error(ErrorKind::BackendRefusal, "HTTP " + std::to_string(res->status) + ": " + res->body);

        std::string text;
        try {
            text = extract_chat_text(nlohmann::json::parse(res->body));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::TransportError, std::string("malformed response body: ") + e.what());
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return {std::move(text), elapsed.count(), false};
    }

    std::string backend_id() const override { return cfg_.id; }
    std::string model_id() const override { return cfg_.model; }
    BoxConvention bbox_convention() const override { return cfg_.bbox_convention; }

private:
    HttpBackendConfig cfg_;
    std::string origin_;
    std::string path_;
};

}  // namespace textcot
