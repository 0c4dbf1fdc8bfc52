#include <gtest/gtest.h>

#include "test_util.hpp"
#include "textcot/dataset.hpp"

using namespace textcot;
using testutil::kind_of;
using testutil::spit;
using testutil::TempDir;

namespace {

void touch_images(const TempDir& dir, std::initializer_list<const char*> names) {
    for (const char* n : names) spit(dir / n, "img");
}

}  // namespace

TEST(LoadManifest, ThreeValidLines) {
    TempDir dir;
    touch_images(dir, {"a.png", "b.png", "img/c.jpg"});
    spit(dir / "m.jsonl", R"({"id":"1","image":"a.png","question":"Q1?","answers":["x"]}
{"id":"2","image":"b.png","question":"Q2?","answers":["y","z"]}
{"id":"3","image":"img/c.jpg","question":"Q3?","answers":["w"]}
)");
    const auto m = load_manifest(dir / "m.jsonl");
    ASSERT_EQ(m.samples.size(), 3u);
    EXPECT_EQ(m.name, "m");
    EXPECT_EQ(m.samples[1].answers, (std::vector<std::string>{"y", "z"}));
    EXPECT_TRUE(m.samples[2].image_path.is_absolute());
    EXPECT_EQ(m.samples[2].image_path.filename(), "c.jpg");
}

TEST(LoadManifest, MissingAnswersNamesTheLine) {
    TempDir dir;
    touch_images(dir, {"a.png"});
    spit(dir / "m.jsonl", R"({"id":"1","image":"a.png","question":"Q1?","answers":["x"]}
{"id":"2","image":"a.png","question":"Q2?"}
)");
    try {
        load_manifest(dir / "m.jsonl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(LoadManifest, OtherSchemaErrors) {
    TempDir dir;
    touch_images(dir, {"a.png"});
    const auto check = [&](const std::string& body) {
        spit(dir / "m.jsonl", body);
        return kind_of([&] { load_manifest(dir / "m.jsonl"); });
    };
    EXPECT_EQ(check(R"({"id":"1","image":"a.png","question":"Q","answers":["x"]}
{"id":"1","image":"a.png","question":"Q","answers":["y"]}
)"),
              ErrorKind::SchemaError);
    EXPECT_EQ(check(R"({"id":"1","image":"a.png","question":"Q","answers":[]})"), ErrorKind::SchemaError);
    EXPECT_EQ(check(R"({"id":"1","image":"a.png","question":"Q","answers":[3]})"), ErrorKind::SchemaError);
    EXPECT_EQ(check("not json\n"), ErrorKind::SchemaError);
    EXPECT_EQ(check(R"({"id":"1","image":"gone.png","question":"Q","answers":["x"]})"), ErrorKind::MissingImage);
}

TEST(LoadManifest, MissingImagesAreListedTogether) {
    TempDir dir;
    spit(dir / "m.jsonl", R"({"id":"1","image":"p.png","question":"Q","answers":["x"]}
{"id":"2","image":"q.png","question":"Q","answers":["x"]}
)");
    try {
        load_manifest(dir / "m.jsonl");
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("p.png"), std::string::npos);
        EXPECT_NE(msg.find("q.png"), std::string::npos);
    }
    EXPECT_EQ(load_manifest(dir / "m.jsonl", LoadOptions{false}).samples.size(), 2u);
}

TEST(Manifest, RoundTrip) {
    TempDir dir;
    touch_images(dir, {"imgs/a.png", "imgs/b.png"});
    DatasetManifest m{"docs", "val",
                      {Sample{"a", (dir / "imgs/a.png").lexically_normal(), "What is it?", {"x", "X"}},
                       Sample{"b", (dir / "imgs/b.png").lexically_normal(), "Quoted \"q\"\nline", {"\xc3\xa9t\xc3\xa9"}}},
                      "hand made"};
    save_manifest(m, dir / "out/m.jsonl");
    EXPECT_EQ(load_manifest(dir / "out/m.jsonl"), m);
    EXPECT_NE(testutil::slurp(dir / "out/m.jsonl").find("\"../imgs/a.png\""), std::string::npos);
}

TEST(Convert, TextVqa) {
    TempDir dir;
    nlohmann::json doc{{"dataset_name", "textvqa"}, {"dataset_type", "val"}, {"data", nlohmann::json::array()}};
    doc["data"].push_back({{"question_id", 34602},
                           {"image_id", "003a8ae2ef43b901"},
                           {"question", "what is the brand of this camera?"},
                           {"answers", {"nous les gosses", "dakota", "clos culombu", "dakota digital", "dakota",
                                        "dakota", "dakota digital", "dakota digital", "dakota", "dakota"}}});
    spit(dir / "raw.json", doc.dump());
    touch_images(dir, {"images/003a8ae2ef43b901.jpg"});
    const auto m = convert(dir / "raw.json", RawFormat::textvqa_json, dir / "images");
    ASSERT_EQ(m.samples.size(), 1u);
    EXPECT_EQ(m.samples[0].id, "34602");
    EXPECT_EQ(m.samples[0].answers.size(), 10u);
    save_manifest(m, dir / "tv.jsonl");
    EXPECT_EQ(load_manifest(dir / "tv.jsonl").samples, m.samples);
}

TEST(Convert, FunsdLinkedPair) {
    TempDir dir;
    const nlohmann::json doc{
        {"form",
         {{{"id", 0}, {"label", "question"}, {"text", "DATE:"}, {"linking", {{0, 1}}}},
          {{"id", 1}, {"label", "answer"}, {"text", "2019-03-01"}, {"linking", {{0, 1}}}},
          {{"id", 2}, {"label", "header"}, {"text", "MEMO"}, {"linking", nlohmann::json::array()}},
          {{"id", 3}, {"label", "question"}, {"text", "TO:"}, {"linking", nlohmann::json::array()}}}}};
    spit(dir / "ann/form1.json", doc.dump());
    const auto m = convert(dir / "ann", RawFormat::funsd_kie, dir / "images");
    ASSERT_EQ(m.samples.size(), 1u);
    EXPECT_EQ(m.samples[0].question, "What is the value for key 'DATE'?");
    EXPECT_EQ(m.samples[0].answers, std::vector<std::string>{"2019-03-01"});
    EXPECT_EQ(m.samples[0].image_path.filename(), "form1.png");
}

TEST(Convert, Malformed) {
    TempDir dir;
    spit(dir / "bad.json", "{ not json");
    EXPECT_EQ(kind_of([&] { convert(dir / "bad.json", RawFormat::textvqa_json, dir.path()); }),
              ErrorKind::FormatMismatch);
    EXPECT_EQ(kind_of([&] { convert(dir / "bad.json", RawFormat::funsd_kie, dir.path()); }),
              ErrorKind::FormatMismatch);
    spit(dir / "wrong.json", R"({"form":[{"id":"x","label":"question","text":"A"}]})");
    EXPECT_EQ(kind_of([&] { convert(dir / "wrong.json", RawFormat::funsd_kie, dir.path()); }),
              ErrorKind::FormatMismatch);
    spit(dir / "tv.json", R"({"data":[{"question_id":1}]})");
    EXPECT_EQ(kind_of([&] { convert(dir / "tv.json", RawFormat::textvqa_json, dir.path()); }),
              ErrorKind::FormatMismatch);
}
