#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "test_util.hpp"
#include "textcot/client.hpp"
#include "textcot/http_backend.hpp"
#include "textcot/pipeline.hpp"

using namespace textcot;
using testutil::kind_of;
using testutil::TempDir;

namespace {

ImageRef checker(int w = 16, int h = 12) {
    RasterImage img(w, h, Rgb{10, 20, 30});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x + y) % 3 == 0) img.set(x, y, Rgb{200, static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y)});
    return make_image_ref(std::move(img));
}

VisionRequest request(const Client& c, ImageRef img, std::string prompt, GenParams p = {}) {
    const auto dims = img->dims();
    return c.make_request(std::move(img), ImageProvenance{"img", dims, {0, 0, dims.width, dims.height}},
                          AssembledPrompt{std::move(prompt), Stage::baseline_direct}, p);
}

// Fails with TransportError for the first `failures` calls.
class FlakyBackend : public VisionBackend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    VisionResponse complete(const VisionRequest&) override {
        if (calls++ < failures_) throw Error(ErrorKind::TransportError, "flaky");
        return {"ok", 0, false};
    }
    std::string backend_id() const override { return "flaky"; }
    std::string model_id() const override { return "f"; }
    std::atomic<int> calls{0};

private:
    int failures_;
};

RetryPolicy fast_retry(int n) { return RetryPolicy{n, 1, 2.0}; }

}  // namespace

TEST(Mock, PureFunctionOfImageAndPrompt) {
    auto backend = std::make_shared<MockBackend>();
    Client c(backend);
    const auto a = c.generate(request(c, checker(), "Q?"));
    const auto b = c.generate(request(c, checker(), "Q?"));  // same pixels, new handle
    const auto other_prompt = c.generate(request(c, checker(), "Q2?"));
    const auto other_image = c.generate(request(c, checker(17, 12), "Q?"));
    EXPECT_EQ(a.text, b.text);
    EXPECT_NE(a.text, other_prompt.text);
    EXPECT_NE(a.text, other_image.text);
}

TEST(Client, RepeatedRequestHitsCache) {
    TempDir dir;
    auto backend = std::make_shared<MockBackend>();
    Client c(backend, std::make_shared<ResponseCache>(dir.path()));
    const auto first = c.generate(request(c, checker(), "Q?"));
    const auto second = c.generate(request(c, checker(), "Q?"));
    EXPECT_FALSE(first.cached);
    EXPECT_TRUE(second.cached);
    EXPECT_EQ(first.text, second.text);
    EXPECT_EQ(c.backend_calls(), 1u);
    EXPECT_EQ(c.cache_hits(), 1u);
}

TEST(Client, RetriesTransportErrors) {
    auto flaky = std::make_shared<FlakyBackend>(2);
    Client c(flaky, nullptr, fast_retry(3));
    EXPECT_EQ(c.generate(request(c, checker(), "Q?")).text, "ok");
    EXPECT_EQ(flaky->calls.load(), 3);

    auto dead = std::make_shared<FlakyBackend>(1000);
    Client d(dead, nullptr, fast_retry(2));
    EXPECT_EQ(kind_of([&] { d.generate(request(d, checker(), "Q?")); }), ErrorKind::TransportError);
    EXPECT_EQ(dead->calls.load(), 3);
}

TEST(Client, RefusalIsNotRetried) {
    int calls = 0;
    auto backend = std::make_shared<MockBackend>([&](const VisionRequest&) -> std::string {
        ++calls;
        throw Error(ErrorKind::BackendRefusal, "no");
    });
    Client c(backend, nullptr, fast_retry(3));
    EXPECT_EQ(kind_of([&] { c.generate(request(c, checker(), "Q?")); }), ErrorKind::BackendRefusal);
    EXPECT_EQ(calls, 1);
}

TEST(Client, RejectsBadParams) {
    Client c(std::make_shared<MockBackend>());
    GenParams p;
    p.max_output_tokens = 0;
    EXPECT_EQ(kind_of([&] { c.generate(request(c, checker(), "Q?", p)); }), ErrorKind::InvalidParams);
    p = {};
    p.temperature = -1;
    EXPECT_EQ(kind_of([&] { c.generate(request(c, checker(), "Q?", p)); }), ErrorKind::InvalidParams);
}

TEST(SampleN, SeededAndReproducible) {
    const auto seeded = [](const VisionRequest& r) { return "seed=" + std::to_string(r.params.seed.value_or(0)); };
    GenParams p;
    p.temperature = 0.7;
    p.seed = 7;
    std::vector<std::string> runs[2];
    for (auto& run : runs) {
        Client c(std::make_shared<MockBackend>(seeded));
        for (const auto& r : c.sample_n(request(c, checker(), "Q?", p), 5)) run.push_back(r.text);
    }
    EXPECT_EQ(runs[0], runs[1]);
    ASSERT_EQ(runs[0].size(), 5u);
    EXPECT_EQ(std::set<std::string>(runs[0].begin(), runs[0].end()).size(), 5u);
}

TEST(SampleN, SingleAndGreedy) {
    Client c(std::make_shared<MockBackend>());
    const auto req = request(c, checker(), "Q?");
    const auto one = c.sample_n(req, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], c.generate(req));
    EXPECT_EQ(kind_of([&] { c.sample_n(req, 5); }), ErrorKind::InvalidParams);
    EXPECT_EQ(kind_of([&] { c.sample_n(req, 0); }), ErrorKind::InvalidParams);
}

TEST(Limiter, BoundsInFlightRequests) {
    std::atomic<int> now{0}, peak{0};
    auto backend = std::make_shared<MockBackend>([&](const VisionRequest&) {
        const int v = ++now;
        int p = peak.load();
        while (v > p && !peak.compare_exchange_weak(p, v)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --now;
        return std::string("x");
    });
    Client c(backend, nullptr, {}, 2);
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) ts.emplace_back([&] { c.generate(request(c, checker(), "Q?")); });
    for (auto& t : ts) t.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_EQ(c.backend_calls(), 8u);
}

TEST(CallRecordJson, RoundTrip) {
    CallRecord rec{Stage::localization, "Where?\nline two", ImageProvenance{"s", {640, 480}, {1, 2, 30, 40}},
                   GenParams{0.7, 64, 99}, VisionResponse{"[0.1, 0.2, 0.3, 0.4]", 12, true}};
    const nlohmann::json j = rec;
    EXPECT_EQ(j.get<CallRecord>(), rec);
}

// ---------------------------------------------------------------------------
// HTTP backend against a local server

class LocalServer {
public:
    explicit LocalServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

TEST(HttpBackend, SendsChatRequestWithImage) {
    nlohmann::json seen;
    std::string auth;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"The sign says OPEN."}}]})",
                        "application/json");
    });
    ::setenv("TEXTCOT_TEST_KEY", "sekrit", 1);
    HttpBackendConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.model = "vlm-test";
    cfg.api_key_env = "TEXTCOT_TEST_KEY";
    Client c(std::make_shared<HttpChatBackend>(cfg), nullptr, fast_retry(0));
    GenParams p;
    p.seed = 5;
    const auto r = c.generate(request(c, checker(), "What does the sign say?", p));
    EXPECT_EQ(r.text, "The sign says OPEN.");
    EXPECT_EQ(auth, "Bearer sekrit");
    EXPECT_EQ(seen.at("model"), "vlm-test");
    EXPECT_EQ(seen.at("temperature"), 0.0);
    EXPECT_EQ(seen.at("max_tokens"), 512);
    EXPECT_EQ(seen.at("seed"), 5);
    const auto& content = seen.at("messages").at(0).at("content");
    EXPECT_EQ(content.at(0).at("text"), "What does the sign say?");
    const std::string url = content.at(1).at("image_url").at("url");
    EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
}

TEST(HttpBackend, StatusMapping) {
    int status = 500;
    std::string body = "oops";
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content(body, "application/json");
    });
    HttpBackendConfig cfg;
    cfg.endpoint = server.endpoint();
    Client c(std::make_shared<HttpChatBackend>(cfg), nullptr, fast_retry(1));
    const auto req = request(c, checker(), "Q?");
    EXPECT_EQ(kind_of([&] { c.generate(req); }), ErrorKind::TransportError);
    status = 429;
    EXPECT_EQ(kind_of([&] { c.generate(req); }), ErrorKind::TransportError);
    status = 400;
    EXPECT_EQ(kind_of([&] { c.generate(req); }), ErrorKind::BackendRefusal);
    status = 200;
    EXPECT_EQ(kind_of([&] { c.generate(req); }), ErrorKind::TransportError);  // malformed body
    body = R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})";
    EXPECT_EQ(c.generate(req).text, "ab");
}

TEST(HttpBackend, UnreachableEndpoint) {
    HttpBackendConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    cfg.timeout_ms = 500;
    Client c(std::make_shared<HttpChatBackend>(cfg), nullptr, fast_retry(2));
    EXPECT_EQ(kind_of([&] { c.generate(request(c, checker(), "Q?")); }), ErrorKind::TransportError);
    EXPECT_EQ(c.backend_calls(), 3u);
}

TEST(HttpBackend, RejectsNonHttpEndpoint) {
    HttpBackendConfig cfg;
    cfg.endpoint = "ftp://example/x";
    EXPECT_EQ(kind_of([&] { HttpChatBackend b(cfg); }), ErrorKind::ConfigError);
}
