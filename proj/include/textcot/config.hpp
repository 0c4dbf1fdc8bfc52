#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "textcot/backend.hpp"
#include "textcot/error.hpp"
#include "textcot/geometry.hpp"
#include "textcot/hashing.hpp"
#include "textcot/http_backend.hpp"
#include "textcot/pipeline.hpp"
#include "textcot/prompting.hpp"
#include "textcot/synthetic.hpp"

namespace textcot {

inline constexpr const char* kCacheDirEnv = "TEXTCOT_CACHE_DIR";

struct BackendConfig {
    std::string kind = "mock";  // mock | oracle | http
    HttpBackendConfig http;
    std::filesystem::path oracle_scenes;  // scenes.json sidecar for kind = oracle
    RetryPolicy retry;
    int max_in_flight = 4;
};

struct RunConfig {
    BackendConfig backend;
    std::vector<std::string> strategies{"textcot"};
    std::vector<std::filesystem::path> datasets;
    CropConfig crop;
    PromptSet prompts;
    GenParams params;
    std::filesystem::path output_dir = "textcot-out";
    std::optional<std::filesystem::path> cache_dir;
    bool use_cache = true;
    int concurrency = 4;
    bool resume = false;

    std::vector<Strategy> parsed_strategies() const {
        std::vector<Strategy> out;
        for (const auto& s : strategies) out.push_back(Strategy::parse(s));
        return out;
    }

    std::filesystem::path resolved_cache_dir() const {
        if (cache_dir) return *cache_dir;
        if (const char* env = std::getenv(kCacheDirEnv); env && *env) return env;
        return output_dir / "cache";
    }

    void validate() const {
        if (strategies.empty()) throw Error(ErrorKind::UsageError, "no strategies selected");
        parsed_strategies();
        if (datasets.empty()) throw Error(ErrorKind::UsageError, "no dataset manifests given");
        if (concurrency < 1) throw Error(ErrorKind::ConfigError, "concurrency must be >= 1");
        crop.validate();
        params.validate();
        if (backend.kind == "oracle" && backend.oracle_scenes.empty())
            throw Error(ErrorKind::ConfigError, "oracle backend needs backend.scenes (scenes.json)");
        if (backend.kind == "http" && backend.http.endpoint.empty())
            throw Error(ErrorKind::ConfigError, "http backend needs backend.endpoint");
        if (backend.kind != "mock" && backend.kind != "oracle" && backend.kind != "http")
            throw Error(ErrorKind::ConfigError, "unknown backend kind '" + backend.kind + "'");
    }
};

inline nlohmann::json backend_to_json(const BackendConfig& b) {
    nlohmann::json j{{"kind", b.kind},
                     {"max_in_flight", b.max_in_flight},
                     {"max_retries", b.retry.max_retries},
                     {"retry_base_delay_ms", b.retry.base_delay_ms}};
    if (b.kind == "http") {
        j["id"] = b.http.id;
        j["endpoint"] = b.http.endpoint;
        j["api_key_env"] = b.http.api_key_env;
        j["model"] = b.http.model;
        j["bbox_convention"] = std::string(to_string(b.http.bbox_convention));
        j["timeout_ms"] = b.http.timeout_ms;
    }
    if (b.kind == "oracle") j["scenes"] = b.oracle_scenes.generic_string();
    return j;
}

inline BackendConfig backend_from_json(const nlohmann::json& j) {
    BackendConfig b;
    b.kind = j.value("kind", b.kind);
    b.max_in_flight = j.value("max_in_flight", b.max_in_flight);
    b.retry.max_retries = j.value("max_retries", b.retry.max_retries);
    b.retry.base_delay_ms = j.value("retry_base_delay_ms", b.retry.base_delay_ms);
    b.http.id = j.value("id", b.http.id);
    b.http.endpoint = j.value("endpoint", std::string{});
    b.http.api_key_env = j.value("api_key_env", std::string{});
    b.http.model = j.value("model", std::string{});
    b.http.bbox_convention = box_convention_from_string(j.value("bbox_convention", std::string("fraction_0_1")));
    b.http.timeout_ms = j.value("timeout_ms", b.http.timeout_ms);
    b.oracle_scenes = j.value("scenes", std::string{});
    return b;
}

/// Everything that influences answers; the resume check hashes this.
inline nlohmann::json semantic_json(const RunConfig& c) {
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& d : c.datasets) datasets.push_back(d.generic_string());
    return nlohmann::json{{"backend", backend_to_json(c.backend)},
                          {"strategies", c.strategies},
                          {"datasets", datasets},
                          {"crop", c.crop},
                          {"prompts", c.prompts},
                          {"params", c.params}};
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(semantic_json(c).dump()); }

inline nlohmann::json to_snapshot(const RunConfig& c) {
    nlohmann::json j = semantic_json(c);
    j["output_dir"] = c.output_dir.generic_string();
    j["cache_dir"] = c.use_cache ? nlohmann::json(c.resolved_cache_dir().generic_string()) : nlohmann::json(nullptr);
    j["concurrency"] = c.concurrency;
    j["config_hash"] = config_hash(c);
    return j;
}

/// Reads a JSON config file. Relative dataset/scene paths resolve against the file's directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : (base / fp).lexically_normal();
    };
    RunConfig c;
    try {
        if (j.contains("backend")) {
            c.backend = backend_from_json(j.at("backend"));
            if (!c.backend.oracle_scenes.empty()) c.backend.oracle_scenes = resolve(c.backend.oracle_scenes.string());
        }
        if (j.contains("strategies")) c.strategies = j.at("strategies").get<std::vector<std::string>>();
        if (j.contains("datasets"))
            for (const auto& d : j.at("datasets")) c.datasets.push_back(resolve(d.get<std::string>()));
        if (j.contains("crop")) c.crop = j.at("crop").get<CropConfig>();
        if (j.contains("prompts")) c.prompts = prompt_set_from_json(j.at("prompts"));
        if (j.contains("params")) c.params = j.at("params").get<GenParams>();
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("cache_dir") && !j.at("cache_dir").is_null())
            c.cache_dir = resolve(j.at("cache_dir").get<std::string>());
        c.use_cache = j.value("use_cache", c.use_cache);
        c.concurrency = j.value("concurrency", c.concurrency);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    return c;
}

inline std::shared_ptr<VisionBackend> make_backend(const BackendConfig& b) {
    if (b.kind == "mock") return std::make_shared<MockBackend>();
    if (b.kind == "http") return std::make_shared<HttpChatBackend>(b.http);
    if (b.kind == "oracle") {
        auto sidecar = synthetic::load_sidecar(b.oracle_scenes);
        return std::make_shared<synthetic::OracleBackend>(std::move(sidecar.scenes), sidecar.params);
    }
    throw Error(ErrorKind::ConfigError, "unknown backend kind '" + b.kind + "'");
}

}  // namespace textcot
