#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "textcot/error.hpp"
#include "textcot/prompting.hpp"

namespace textcot {

struct Sample {
    std::string id;
    std::filesystem::path image_path;  // absolute and normalized once loaded
    std::string question;
    std::vector<std::string> answers;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetManifest {
    std::string name;
    std::string split;
    std::vector<Sample> samples;
    std::string source_notes;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

enum class RawFormat { textvqa_json, funsd_kie };

inline RawFormat raw_format_from_string(std::string_view s) {
    if (s == "textvqa_json") return RawFormat::textvqa_json;
    if (s == "funsd_kie") return RawFormat::funsd_kie;
    throw Error(ErrorKind::UsageError, "unknown raw format '" + std::string(s) + "'");
}

namespace detail {

inline std::string line_error(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

inline std::string required_string(const nlohmann::json& row, const char* key, std::size_t line) {
    if (!row.contains(key) || !row.at(key).is_string())
        throw Error(ErrorKind::SchemaError, line_error(line, std::string("missing string field \"") + key + "\""));
    return row.at(key).get<std::string>();
}

}  // namespace detail

struct LoadOptions {
    bool check_images = true;
};

/// Reads canonical JSONL. An optional first line {"manifest": {...}} carries name, split and
/// source notes; every other line is {"id","image","question","answers":[...]} with the image
/// path relative to the manifest file.
inline DatasetManifest load_manifest(const std::filesystem::path& path, LoadOptions opts = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::SchemaError, "cannot open manifest '" + path.string() + "'");
    const auto base = path.parent_path();

    DatasetManifest m;
    m.name = path.stem().string();
    std::set<std::string> ids;
    std::vector<std::string> missing;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::SchemaError, detail::line_error(line_no, e.what()));
        }
        if (!row.is_object()) throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "not a JSON object"));
        if (row.contains("manifest")) {
            if (line_no != 1 || !m.samples.empty())
                throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "manifest header must be first"));
            const auto& h = row.at("manifest");
            m.name = h.value("name", m.name);
            m.split = h.value("split", std::string{});
            m.source_notes = h.value("source_notes", std::string{});
            continue;
        }
        Sample s;
        s.id = detail::required_string(row, "id", line_no);
        const auto image = detail::required_string(row, "image", line_no);
        s.question = detail::required_string(row, "question", line_no);
        if (!row.contains("answers") || !row.at("answers").is_array())
            throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "missing array field \"answers\""));
        for (const auto& a : row.at("answers")) {
            if (!a.is_string())
                throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "answers must be strings"));
            s.answers.push_back(a.get<std::string>());
        }
        if (s.answers.empty()) throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "answers is empty"));
        if (s.id.empty()) throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "id is empty"));
        if (!ids.insert(s.id).second)
            throw Error(ErrorKind::SchemaError, detail::line_error(line_no, "duplicate id '" + s.id + "'"));
        const std::filesystem::path image_path(image);
        s.image_path = std::filesystem::absolute(image_path.is_absolute() ? image_path : base / image_path)
                           .lexically_normal();
        if (opts.check_images && !std::filesystem::exists(s.image_path)) missing.push_back(s.image_path.string());
        m.samples.push_back(std::move(s));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& p : missing) list += "\n  " + p;
        throw Error(ErrorKind::MissingImage, std::to_string(missing.size()) + " image(s) not found:" + list);
    }
    return m;
}

/// Writes canonical JSONL; image paths are stored relative to the output file's directory.
inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto base = std::filesystem::absolute(path).parent_path();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::SchemaError, "cannot write manifest '" + path.string() + "'");
    out << nlohmann::json{{"manifest", {{"name", m.name}, {"split", m.split}, {"source_notes", m.source_notes}}}}.dump()
        << '\n';
    for (const auto& s : m.samples) {
        const auto abs = std::filesystem::absolute(s.image_path);
        out << nlohmann::json{{"id", s.id},
                              {"image", abs.lexically_relative(base).generic_string()},
                              {"question", s.question},
                              {"answers", s.answers}}
                   .dump()
            << '\n';
    }
}

// ---------------------------------------------------------------------------
// converters

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorKind::FormatMismatch, "cannot open '" + p.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatMismatch, p.string() + ": " + e.what());
    }
}

inline std::string json_scalar_string(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

// "DATE:" -> "DATE"
inline std::string kie_key_text(std::string_view s) {
    std::string k = trim(s);
    while (!k.empty() && (k.back() == ':' || k.back() == ' ')) k.pop_back();
    return k;
}

inline DatasetManifest convert_textvqa(const std::filesystem::path& raw, const std::filesystem::path& image_root) {
    const auto doc = read_json_file(raw);
    if (!doc.is_object() || !doc.contains("data") || !doc.at("data").is_array())
        throw Error(ErrorKind::FormatMismatch, "TextVQA file needs a top-level \"data\" array");
    DatasetManifest m;
    m.name = doc.value("dataset_name", std::string("textvqa"));
    m.split = doc.value("dataset_type", std::string{});
    m.source_notes = "converted from " + raw.filename().string();
    for (const auto& e : doc.at("data")) {
        if (!e.contains("question_id") || !e.contains("image_id") || !e.contains("question") ||
            !e.contains("answers") || !e.at("answers").is_array())
            throw Error(ErrorKind::FormatMismatch, "TextVQA entry lacks question_id/image_id/question/answers");
        Sample s;
        s.id = json_scalar_string(e.at("question_id"));
        s.image_path = image_root / (json_scalar_string(e.at("image_id")) + ".jpg");
        s.question = e.at("question").get<std::string>();
        for (const auto& a : e.at("answers")) s.answers.push_back(json_scalar_string(a));
        if (s.answers.empty()) throw Error(ErrorKind::FormatMismatch, "TextVQA entry " + s.id + " has no answers");
        m.samples.push_back(std::move(s));
    }
    return m;
}

inline void convert_funsd_file(const std::filesystem::path& file, const std::filesystem::path& image_root,
                               DatasetManifest& m) {
    const auto doc = read_json_file(file);
    if (!doc.is_object() || !doc.contains("form") || !doc.at("form").is_array())
        throw Error(ErrorKind::FormatMismatch, file.string() + ": FUNSD annotation needs a \"form\" array");
    std::map<int, const nlohmann::json*> by_id;
    for (const auto& ent : doc.at("form")) {
        if (!ent.contains("id") || !ent.contains("label") || !ent.contains("text"))
            throw Error(ErrorKind::FormatMismatch, file.string() + ": entity lacks id/label/text");
        by_id[ent.at("id").get<int>()] = &ent;
    }
    const auto stem = file.stem().string();
    std::set<std::pair<int, int>> seen;
    for (const auto& ent : doc.at("form")) {
        if (ent.at("label").get<std::string>() != "question") continue;
        const int qid = ent.at("id").get<int>();
        for (const auto& link : ent.value("linking", nlohmann::json::array())) {
            if (!link.is_array() || link.size() != 2) continue;
            const int a = link.at(0).get<int>(), b = link.at(1).get<int>();
            const int other = a == qid ? b : a;
            const auto it = by_id.find(other);
            if (it == by_id.end() || it->second->at("label").get<std::string>() != "answer") continue;
            if (!seen.emplace(qid, other).second) continue;
            const std::string key = kie_key_text(ent.at("text").get<std::string>());
            const std::string value = trim(it->second->at("text").get<std::string>());
            if (key.empty() || value.empty()) continue;
            m.samples.push_back(Sample{stem + "-" + std::to_string(qid) + "-" + std::to_string(other),
                                       image_root / (stem + ".png"),
                                       "What is the value for key '" + key + "'?",
                                       {value}});
        }
    }
}

inline DatasetManifest convert_funsd(const std::filesystem::path& raw, const std::filesystem::path& image_root) {
    DatasetManifest m;
    m.name = "funsd";
    m.source_notes = "converted from " + raw.filename().string();
    if (std::filesystem::is_directory(raw)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(raw))
            if (e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) convert_funsd_file(f, image_root, m);
    } else {
        convert_funsd_file(raw, image_root, m);
    }
    return m;
}

}  // namespace detail

/// Maps a raw benchmark file into the canonical manifest. image_root is where the raw
/// dataset keeps its images.
inline DatasetManifest convert(const std::filesystem::path& raw_path, RawFormat format,
                               const std::filesystem::path& image_root) {
    try {
        switch (format) {
            case RawFormat::textvqa_json: return detail::convert_textvqa(raw_path, image_root);
            case RawFormat::funsd_kie: return detail::convert_funsd(raw_path, image_root);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatMismatch, raw_path.string() + ": " + e.what());
    }
    throw Error(ErrorKind::UsageError, "unreachable");
}

}  // namespace textcot
