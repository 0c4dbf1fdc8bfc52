#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "textcot/client.hpp"
#include "textcot/config.hpp"
#include "textcot/dataset.hpp"
#include "textcot/image_io.hpp"
#include "textcot/metrics.hpp"
#include "textcot/pipeline.hpp"
#include "textcot/store.hpp"
#include "textcot/synthetic.hpp"

namespace textcot {

using ImageProvider = std::function<ImageRef(const Sample&)>;

inline ImageFormat image_format_of(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg") return ImageFormat::jpeg;
    if (ext == ".png") return ImageFormat::png;
    return ImageFormat::raw_rgb;
}

/// Decodes each sample's image file.
inline ImageProvider file_images() {
    return [](const Sample& s) { return make_image_ref(load_image(s.image_path), image_format_of(s.image_path)); };
}

struct DatasetInput {
    std::string name;
    std::vector<Sample> samples;
};

inline std::string trace_key(std::string_view dataset, std::string_view strategy, std::string_view sample_id) {
    std::string k(dataset);
    k += '\x1f';
    k += strategy;
    k += '\x1f';
    k += sample_id;
    return k;
}

struct HarnessOptions {
    int concurrency = 4;
    /// Traces from an earlier run, keyed by trace_key; these samples are not rerun.
    std::map<std::string, PipelineTrace> existing;
    /// Called once per freshly produced trace, serialized.
    std::function<void(const PipelineTrace&)> on_trace;
};

struct HarnessOutput {
    std::vector<PipelineTrace> traces;  // dataset, then sample, then strategy order
    std::size_t fresh = 0;
    std::size_t reused = 0;
    std::size_t errors = 0;
};

/// Runs every strategy on every sample. Samples are processed concurrently; a failure
/// becomes an error trace for that sample and never stops the run.
inline HarnessOutput run_harness(Client& client, const PromptSet& prompts, const CropConfig& crop,
                                 const GenParams& params, const std::vector<Strategy>& strategies,
                                 const std::vector<DatasetInput>& datasets, const ImageProvider& images,
                                 const HarnessOptions& opts = {}) {
    struct Item {
        const DatasetInput* dataset;
        const Sample* sample;
    };
    std::vector<Item> items;
    for (const auto& d : datasets)
        for (const auto& s : d.samples) items.push_back({&d, &s});

    std::vector<std::string> labels;
    for (const auto& s : strategies) labels.push_back(s.label());

    const std::size_t width = strategies.size();
    std::vector<std::optional<PipelineTrace>> slots(items.size() * width);
    std::atomic<std::size_t> next{0};
    std::mutex emit_mutex;

    const auto work = [&] {
        PipelineContext ctx{client, prompts, crop, params};
        for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
            const auto& item = items[i];
            ImageRef image;
            std::optional<std::string> load_error;
            for (std::size_t k = 0; k < width; ++k) {
                auto& slot = slots[i * width + k];
                const auto key = trace_key(item.dataset->name, labels[k], item.sample->id);
                if (auto it = opts.existing.find(key); it != opts.existing.end() && !it->second.error) {
                    slot = it->second;
                    continue;
                }
                PipelineTrace trace;
                try {
                    if (!image && !load_error) image = images(*item.sample);
                    if (load_error) throw Error(ErrorKind::ImageLoadError, *load_error);
                    trace = run_strategy(ctx, strategies[k], *item.sample, image);
                } catch (const std::exception& e) {
                    if (!image && !load_error) load_error = e.what();
                    trace = PipelineTrace{};
                    trace.sample_id = item.sample->id;
                    trace.strategy = labels[k];
                    trace.question = trim(item.sample->question);
                    trace.error = e.what();
                }
                trace.dataset = item.dataset->name;
                if (opts.on_trace) {
                    std::lock_guard lock(emit_mutex);
                    opts.on_trace(trace);
                }
                slot = std::move(trace);
            }
        }
    };

    const int threads = std::max(1, std::min<int>(opts.concurrency, static_cast<int>(items.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    HarnessOutput out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t k = 0; k < width; ++k) {
            const auto key = trace_key(items[i].dataset->name, labels[k], items[i].sample->id);
            const bool reused = opts.existing.count(key) && !opts.existing.at(key).error;
            auto& t = *slots[i * width + k];
            (reused ? out.reused : out.fresh) += 1;
            if (t.error) ++out.errors;
            out.traces.push_back(std::move(t));
        }
    }
    return out;
}

/// Scores a trace against its sample. An errored trace counts as incorrect.
inline EvalResult score_trace(const PipelineTrace& trace, const Sample& sample) {
    EvalResult r;
    if (!trace.error) r = contains_correct(trace.final_answer, sample.answers);
    r.sample_id = trace.sample_id;
    r.final_answer = trace.final_answer;
    r.dataset = trace.dataset;
    r.strategy = trace.strategy;
    return r;
}

// ---------------------------------------------------------------------------
// file helpers

/// Writes to a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::UsageError, "cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush()) throw Error(ErrorKind::StorageFull, "write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

template <class T>
std::string to_jsonl(const std::vector<T>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += nlohmann::json(r).dump();
        out += '\n';
    }
    return out;
}

/// Reads a JSONL file written line by line; a torn last line from a killed run is ignored.
template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::SchemaError, "cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!trim(line).empty()) lines.push_back(line);
    std::vector<T> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(nlohmann::json::parse(lines[i]).get<T>());
        } catch (const nlohmann::json::exception& e) {
            if (i + 1 == lines.size()) break;
            throw Error(ErrorKind::SchemaError, path.string() + ": line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// run / ablate

struct RunSummary {
    HarnessOutput harness;
    Report report;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::filesystem::path output_dir;

    int exit_code() const { return harness.errors == 0 ? 0 : 1; }
};

struct RunFiles {
    std::filesystem::path traces, results, report_md, report_csv, config;

    explicit RunFiles(const std::filesystem::path& dir)
        : traces(dir / "traces.jsonl"),
          results(dir / "results.jsonl"),
          report_md(dir / "report.md"),
          report_csv(dir / "report.csv"),
          config(dir / "resolved_config.json") {}
};

inline std::vector<DatasetInput> load_datasets(const std::vector<std::filesystem::path>& manifests) {
    std::vector<DatasetInput> out;
    for (const auto& path : manifests) {
        auto m = load_manifest(path);
        for (const auto& d : out)
            if (d.name == m.name)
                throw Error(ErrorKind::UsageError, "two manifests share the dataset name '" + m.name + "'");
        out.push_back({m.name, std::move(m.samples)});
    }
    return out;
}

/// Evaluates every configured strategy on every dataset and writes traces, results,
/// report and the resolved config under cfg.output_dir.
inline RunSummary cmd_run(const RunConfig& cfg, std::ostream& log = std::cerr,
                          const ImageProvider& images = file_images()) {
    cfg.validate();
    const auto strategies = cfg.parsed_strategies();
    std::filesystem::create_directories(cfg.output_dir);
    const RunFiles files(cfg.output_dir);
    const auto hash = config_hash(cfg);

    HarnessOptions opts;
    opts.concurrency = cfg.concurrency;
    if (cfg.resume) {
        std::ifstream in(files.config);
        if (!in) throw Error(ErrorKind::ConfigError, "nothing to resume in '" + cfg.output_dir.string() + "'");
        const auto previous = nlohmann::json::parse(in).value("config_hash", std::string{});
        if (previous != hash)
            throw Error(ErrorKind::ConfigError, "config differs from the run being resumed (" + previous.substr(0, 12) +
                                                    " vs " + hash.substr(0, 12) + "); refusing to mix results");
        if (std::filesystem::exists(files.traces))
            for (auto& t : read_jsonl<PipelineTrace>(files.traces)) {
                auto key = trace_key(t.dataset, t.strategy, t.sample_id);
                opts.existing[key] = std::move(t);
            }
    } else {
        std::filesystem::remove(files.traces);
    }
    write_file_atomic(files.config, to_snapshot(cfg).dump(2) + "\n");

    const auto datasets = load_datasets(cfg.datasets);
    auto backend = make_backend(cfg.backend);
    std::shared_ptr<ResponseCache> cache;
    if (cfg.use_cache) cache = std::make_shared<ResponseCache>(cfg.resolved_cache_dir());
    Client client(backend, cache, cfg.backend.retry, cfg.backend.max_in_flight);

    std::ofstream progress(files.traces, std::ios::app);
    opts.on_trace = [&](const PipelineTrace& t) {
        progress << nlohmann::json(t).dump() << '\n';
        progress.flush();
    };

    RunSummary summary;
    summary.output_dir = cfg.output_dir;
    summary.harness = run_harness(client, cfg.prompts, cfg.crop, cfg.params, strategies, datasets, images, opts);
    progress.close();
    summary.backend_calls = client.backend_calls();
    summary.cache_hits = client.cache_hits();

    std::map<std::string, const Sample*> by_key;
    Grouping grouping;
    for (const auto& s : strategies) grouping.strategies.push_back(s.label());
    for (const auto& d : datasets) {
        grouping.datasets.push_back(d.name);
        for (const auto& s : d.samples) by_key[d.name + '\x1f' + s.id] = &s;
    }
    std::vector<EvalResult> results;
    for (const auto& t : summary.harness.traces)
        results.push_back(score_trace(t, *by_key.at(t.dataset + '\x1f' + t.sample_id)));
    summary.report = aggregate(results, grouping);

    write_file_atomic(files.traces, to_jsonl(summary.harness.traces));
    write_file_atomic(files.results, to_jsonl(results));
    write_file_atomic(files.report_md, to_markdown(summary.report));
    write_file_atomic(files.report_csv, to_csv(summary.report));

    for (const auto& w : summary.report.warnings) log << "warning: " << w << '\n';
    log << summary.harness.fresh << " new trace(s), " << summary.harness.reused << " resumed, "
        << summary.harness.errors << " error(s); " << summary.backend_calls << " backend call(s), "
        << summary.cache_hits << " cache hit(s)\n";
    return summary;
}

/// Named strategy matrices for ablations.
inline std::vector<std::string> ablation_matrix(std::string_view name) {
    if (name == "components")
        return {"direct", "textcot:ground", "textcot:ground+crop", "textcot"};
    if (name == "crop-modes")
        return {"direct", "textcot@strict_rect", "textcot@square", "textcot@square_scaled", "textcot@full_image"};
    if (name == "all")
        return {"direct",
                "textcot:ground",
                "textcot:ground+crop",
                "textcot",
                "textcot@strict_rect",
                "textcot@square",
                "textcot@square_scaled",
                "textcot@full_image"};
    throw Error(ErrorKind::UsageError,
                "unknown ablation matrix '" + std::string(name) + "' (components, crop-modes, all)");
}

/// A run over an ablation matrix. An explicit strategy list replaces the named matrix.
inline RunSummary cmd_ablate(RunConfig cfg, std::string_view matrix, const std::vector<std::string>& custom,
                             std::ostream& log = std::cerr) {
    cfg.strategies = custom.empty() ? ablation_matrix(matrix) : custom;
    if (cfg.strategies.empty()) throw Error(ErrorKind::UsageError, "ablation matrix is empty");
    return cmd_run(cfg, log);
}

// ---------------------------------------------------------------------------
// ask

struct AskOptions {
    std::filesystem::path image;
    std::string question;
    std::string strategy = "textcot";
    BackendConfig backend;
    PromptSet prompts;
    CropConfig crop;
    GenParams params;
    std::optional<std::filesystem::path> cache_dir;
};

/// One question about one image. The sample id is the image file stem.
inline PipelineTrace cmd_ask(const AskOptions& o) {
    if (trim(o.question).empty()) throw Error(ErrorKind::EmptyQuestion, "question is empty");
    const auto strategy = Strategy::parse(o.strategy);
    auto backend = make_backend(o.backend);
    std::shared_ptr<ResponseCache> cache;
    if (o.cache_dir) cache = std::make_shared<ResponseCache>(*o.cache_dir);
    Client client(backend, cache, o.backend.retry, o.backend.max_in_flight);
    PipelineContext ctx{client, o.prompts, o.crop, o.params};
    const Sample sample{o.image.stem().string(), o.image, o.question, {}};
    auto trace = run_strategy(ctx, strategy, sample, file_images()(sample));
    trace.dataset = "ask";
    return trace;
}

// ---------------------------------------------------------------------------
// report / convert / synth

/// Re-aggregates one or more results.jsonl files. Rows and columns follow first appearance.
inline Report cmd_report(const std::vector<std::filesystem::path>& result_files) {
    if (result_files.empty()) throw Error(ErrorKind::UsageError, "no results files given");
    std::vector<EvalResult> all;
    Grouping grouping;
    const auto remember = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& f : result_files)
        for (auto& r : read_jsonl<EvalResult>(f)) {
            remember(grouping.strategies, r.strategy);
            remember(grouping.datasets, r.dataset);
            all.push_back(std::move(r));
        }
    return aggregate(std::move(all), grouping);
}

inline DatasetManifest cmd_convert(const std::filesystem::path& raw, RawFormat format,
                                   const std::filesystem::path& image_root, const std::filesystem::path& out) {
    auto manifest = convert(raw, format, image_root);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    save_manifest(manifest, out);
    return manifest;
}

inline synthetic::SuiteFiles cmd_synth(int n, std::uint64_t seed, const std::filesystem::path& dir,
                                       const synthetic::OracleParams& params = {}, const CropConfig& crop = {}) {
    if (n < 1) throw Error(ErrorKind::UsageError, "scene count must be >= 1");
    const auto scenes = synthetic::generate_suite(n, params, seed, crop);
    return synthetic::write_suite(dir, scenes, params, seed,
                                  [](const RasterImage& img, const std::filesystem::path& p) { save_png(img, p); });
}

}  // namespace textcot
