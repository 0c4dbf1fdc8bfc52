#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>

#include "json.hpp"

#include "textcot/error.hpp"
#include "textcot/geometry.hpp"
#include "textcot/hashing.hpp"
#include "textcot/prompting.hpp"
#include "textcot/raster.hpp"

namespace textcot {

struct GenParams {
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::optional<std::uint64_t> seed;

    static constexpr double kSelfConsistencyTemperature = 0.7;

    void validate() const {
        if (!(temperature >= 0.0)) throw Error(ErrorKind::InvalidParams, "temperature must be >= 0");
        if (max_output_tokens < 1) throw Error(ErrorKind::InvalidParams, "max_output_tokens must be >= 1");
    }

    /// Stable textual form used in cache keys.
    std::string canonical() const {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(4);
        os << "temperature=" << temperature << ";max_output_tokens=" << max_output_tokens << ";seed=";
        if (seed) os << *seed;
        else os << "none";
        return os.str();
    }

    friend bool operator==(const GenParams&, const GenParams&) = default;
};

enum class ImageFormat { raw_rgb, png, jpeg };

/// A decoded image shared between requests; the content digest is computed once, on demand.
class ImageHandle {
public:
    explicit ImageHandle(RasterImage pixels, ImageFormat source_format = ImageFormat::raw_rgb)
        : pixels_(std::move(pixels)), format_(source_format) {}

    const RasterImage& pixels() const { return pixels_; }
    ImageDims dims() const { return pixels_.dims(); }
    ImageFormat source_format() const { return format_; }

    /// SHA-256 over dimensions + decoded RGB; independent of the file encoding it came from.
    const std::string& content_digest() const {
        std::call_once(digest_once_, [this] {
            Sha256 h;
            h.field("rgb8");
            h.field(std::to_string(pixels_.width()) + "x" + std::to_string(pixels_.height()));
            h.update(std::span<const std::uint8_t>(pixels_.data()));
            digest_ = h.hex_digest();
        });
        return digest_;
    }

private:
    RasterImage pixels_;
    ImageFormat format_;
    mutable std::once_flag digest_once_;
    mutable std::string digest_;
};

using ImageRef = std::shared_ptr<const ImageHandle>;

inline ImageRef make_image_ref(RasterImage pixels, ImageFormat format = ImageFormat::raw_rgb) {
    return std::make_shared<const ImageHandle>(std::move(pixels), format);
}

/// Where the pixels of a request came from: a source image and the region cut out of it.
struct ImageProvenance {
    std::string source_id;
    ImageDims source_dims;
    PixelBox region;

    friend bool operator==(const ImageProvenance&, const ImageProvenance&) = default;
};

struct VisionRequest {
    ImageRef image;
    ImageProvenance view;
    AssembledPrompt prompt;
    GenParams params;
    std::string backend_id;
    std::string model_id;
};

struct VisionResponse {
    std::string text;
    std::int64_t latency_ms = 0;
    bool cached = false;

    friend bool operator==(const VisionResponse&, const VisionResponse&) = default;
};

inline void to_json(nlohmann::json& j, const VisionResponse& r) {
    j = nlohmann::json{{"text", r.text}, {"latency_ms", r.latency_ms}, {"cached", r.cached}};
}
inline void from_json(const nlohmann::json& j, VisionResponse& r) {
    r.text = j.at("text").get<std::string>();
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    r.cached = j.value("cached", false);
}

/// A vision-language model endpoint. Implementations throw Error(TransportError) for
/// retryable transport failures and Error(BackendRefusal) for semantic rejections.
class VisionBackend {
public:
    virtual ~VisionBackend() = default;

    virtual VisionResponse complete(const VisionRequest& request) = 0;
    virtual std::string backend_id() const = 0;
    virtual std::string model_id() const = 0;
    virtual BoxConvention bbox_convention() const { return BoxConvention::fraction_0_1; }
};

/// Deterministic in-process backend. Without a responder it answers with a digest of
/// (image content, prompt text), so it is a pure function of those two inputs.
class MockBackend : public VisionBackend {
public:
    using Responder = std::function<std::string(const VisionRequest&)>;

    MockBackend() = default;
    explicit MockBackend(Responder responder, BoxConvention convention = BoxConvention::fraction_0_1)
        : responder_(std::move(responder)), convention_(convention) {}

    VisionResponse complete(const VisionRequest& request) override {
        if (!request.image) throw Error(ErrorKind::ImageDecodeError, "request carries no image");
        if (responder_) return {responder_(request), 0, false};
        Sha256 h;
        h.field(request.image->content_digest());
        h.field(request.prompt.text);
        return {"mock-" + h.hex_digest().substr(0, 16), 0, false};
    }

    std::string backend_id() const override { return "mock"; }
    std::string model_id() const override { return "mock-1"; }
    BoxConvention bbox_convention() const override { return convention_; }

private:
    Responder responder_;
    BoxConvention convention_ = BoxConvention::fraction_0_1;
};

struct RetryPolicy {
    int max_retries = 3;
    int base_delay_ms = 200;
    double backoff = 2.0;
};

/// Upper bound on requests in flight.
class Limiter {
public:
    explicit Limiter(int slots = 4) : sem_(std::max(slots, 1)) {}

    class Permit {
    public:
        explicit Permit(Limiter& l) : l_(&l) { l_->sem_.acquire(); }
        ~Permit() { if (l_) l_->sem_.release(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        Limiter* l_;
    };

    Permit acquire() { return Permit(*this); }

private:
    std::counting_semaphore<1024> sem_;
};

/// splitmix64 finalizer; used to derive per-path seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Parameters for the i-th sampled path: the base seed mixed with the path index.
inline GenParams path_params(GenParams params, int path) {
    params.seed = mix_seed(params.seed.value_or(0) + static_cast<std::uint64_t>(path));
    return params;
}

}  // namespace textcot
