#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <thread>
#include <vector>

#include "textcot/backend.hpp"
#include "textcot/store.hpp"

namespace textcot {

/// Front door to a backend: cache lookup, bounded in-flight requests and transport retries.
class Client {
public:
    explicit Client(std::shared_ptr<VisionBackend> backend, std::shared_ptr<ResponseCache> cache = nullptr,
                    RetryPolicy retry = {}, int max_in_flight = 4)
        : backend_(std::move(backend)), cache_(std::move(cache)), retry_(retry), limiter_(max_in_flight) {}

    VisionBackend& backend() const { return *backend_; }
    BoxConvention bbox_convention() const { return backend_->bbox_convention(); }

    /// Fills in backend/model ids so callers only provide image, prompt and params.
    VisionRequest make_request(ImageRef image, ImageProvenance view, AssembledPrompt prompt,
                               GenParams params) const {
        return VisionRequest{std::move(image), std::move(view), std::move(prompt), params,
                             backend_->backend_id(), backend_->model_id()};
    }

    VisionResponse generate(const VisionRequest& request) {
        if (!request.image) throw Error(ErrorKind::ImageDecodeError, "request carries no image");
        if (request.prompt.text.empty()) throw Error(ErrorKind::InvalidParams, "prompt is empty");
        request.params.validate();

        std::optional<CacheKey> key;
        if (cache_) {
            key = make_cache_key(request);
            if (auto hit = cache_->get(*key)) {
                cache_hits_.fetch_add(1);
                return *hit;
            }
        }

        VisionResponse response;
        for (int attempt = 0;; ++attempt) {
            try {
                auto permit = limiter_.acquire();
                backend_calls_.fetch_add(1);
                response = backend_->complete(request);
                break;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::TransportError || attempt >= retry_.max_retries) throw;
            }
            const double delay = retry_.base_delay_ms * std::pow(retry_.backoff, attempt);
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(delay)));
        }
        response.cached = false;
        if (cache_) cache_->put(*key, response);
        return response;
    }

    /// n completions; for n > 1 each path gets its own derived seed so paths stay distinct
    /// under caching and reproducible under a fixed base seed.
    std::vector<VisionResponse> sample_n(const VisionRequest& request, int n) {
        if (n < 1) throw Error(ErrorKind::InvalidParams, "n must be >= 1");
        if (n == 1) return {generate(request)};
        if (!(request.params.temperature > 0.0))
            throw Error(ErrorKind::InvalidParams, "sampling several paths requires temperature > 0");
        std::vector<VisionResponse> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            VisionRequest path = request;
            path.params = path_params(request.params, i);
            out.push_back(generate(path));
        }
        return out;
    }

    std::size_t backend_calls() const { return backend_calls_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }

private:
    std::shared_ptr<VisionBackend> backend_;
    std::shared_ptr<ResponseCache> cache_;
    RetryPolicy retry_;
    Limiter limiter_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace textcot
