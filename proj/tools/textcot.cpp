// textcot command-line front end.

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "textcot/textcot.hpp"

namespace {

using namespace textcot;

struct RunArgs {
    std::string config;
    std::vector<std::string> datasets;
    std::vector<std::string> strategies;
    std::string output;
    std::string backend;
    std::string scenes;
    std::string cache_dir;
    bool no_cache = false;
    int concurrency = 0;
    bool resume = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("-c,--config", a.config, "JSON run config");
    cmd->add_option("-d,--dataset", a.datasets, "dataset manifest (repeatable)");
    cmd->add_option("-o,--output", a.output, "output directory");
    cmd->add_option("--backend", a.backend, "mock | oracle | http");
    cmd->add_option("--scenes", a.scenes, "scenes.json for the oracle backend");
    cmd->add_option("--cache-dir", a.cache_dir, "response cache directory");
    cmd->add_flag("--no-cache", a.no_cache, "disable the response cache");
    cmd->add_option("-j,--concurrency", a.concurrency, "samples processed in parallel");
    cmd->add_flag("--resume", a.resume, "continue an interrupted run in the output directory");
}

RunConfig resolve(const RunArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (!a.datasets.empty()) {
        cfg.datasets.clear();
        for (const auto& d : a.datasets) cfg.datasets.push_back(std::filesystem::absolute(d).lexically_normal());
    }
    if (!a.strategies.empty()) cfg.strategies = a.strategies;
    if (!a.output.empty()) cfg.output_dir = a.output;
    if (!a.backend.empty()) cfg.backend.kind = a.backend;
    if (!a.scenes.empty()) cfg.backend.oracle_scenes = std::filesystem::absolute(a.scenes).lexically_normal();
    if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
    if (a.no_cache) cfg.use_cache = false;
    if (a.concurrency > 0) cfg.concurrency = a.concurrency;
    cfg.resume = a.resume;
    return cfg;
}

std::filesystem::path default_cache_dir() {
    if (const char* env = std::getenv(kCacheDirEnv); env && *env) return env;
    return ".textcot-cache";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-guided chain-of-thought evaluation for vision-language models"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "evaluate strategies on dataset manifests");
    add_run_options(run, run_args);
    run->add_option("-s,--strategy", run_args.strategies, "strategy (repeatable), e.g. direct, cot_sc:5, textcot@square");

    RunArgs ablate_args;
    std::string matrix = "components";
    auto* ablate = app.add_subcommand("ablate", "run a named strategy matrix");
    add_run_options(ablate, ablate_args);
    ablate->add_option("-m,--matrix", matrix, "components | crop-modes | all");
    ablate->add_option("-s,--strategy", ablate_args.strategies, "explicit strategy list instead of a matrix");

    AskOptions ask_opts;
    std::string ask_config, ask_backend, ask_scenes, ask_cache;
    bool ask_no_cache = false, ask_trace = false;
    auto* ask = app.add_subcommand("ask", "answer one question about one image");
    ask->add_option("image", ask_opts.image, "image file")->required();
    ask->add_option("question", ask_opts.question, "question")->required();
    ask->add_option("-s,--strategy", ask_opts.strategy, "strategy");
    ask->add_option("-c,--config", ask_config, "JSON run config for backend, prompts and crop");
    ask->add_option("--backend", ask_backend, "mock | oracle | http");
    ask->add_option("--scenes", ask_scenes, "scenes.json for the oracle backend");
    ask->add_option("--cache-dir", ask_cache, "response cache directory");
    ask->add_flag("--no-cache", ask_no_cache, "disable the response cache");
    ask->add_flag("--trace", ask_trace, "print the full trace as JSON");

    std::string raw, format, image_root, out;
    auto* conv = app.add_subcommand("convert", "convert a raw dataset export into a manifest");
    conv->add_option("raw", raw, "raw export file or directory")->required();
    conv->add_option("-f,--format", format, "textvqa_json | funsd_kie")->required();
    conv->add_option("--image-root", image_root, "directory holding the images")->required();
    conv->add_option("-o,--output", out, "manifest to write")->required();

    int synth_n = 200;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    synthetic::OracleParams oracle;
    auto* synth = app.add_subcommand("synth", "generate a synthetic text-rich suite");
    synth->add_option("-n,--count", synth_n, "number of scenes");
    synth->add_option("--seed", synth_seed, "suite seed");
    synth->add_option("-o,--output", synth_out, "output directory")->required();
    synth->add_option("--tau", oracle.legibility_threshold, "legibility threshold in model pixels");
    synth->add_option("--jitter", oracle.grounding_jitter, "grounding jitter as a fraction of box extent");

    std::string cache_root;
    std::optional<double> max_age_days;
    auto* cache = app.add_subcommand("cache", "inspect or prune the response cache");
    cache->require_subcommand(1);
    cache->add_option("--cache-dir", cache_root, "cache directory");
    auto* stats = cache->add_subcommand("stats", "entry count and size");
    auto* gc = cache->add_subcommand("gc", "remove stale temp files, corrupt and old entries");
    gc->add_option("--max-age-days", max_age_days, "also remove entries older than this");

    std::vector<std::string> report_inputs;
    std::string report_csv_path;
    auto* report = app.add_subcommand("report", "aggregate results.jsonl files into a table");
    report->add_option("results", report_inputs, "results.jsonl files")->required();
    report->add_option("--csv", report_csv_path, "also write CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(resolve(run_args)).exit_code();
        if (ablate->parsed()) {
            RunConfig cfg = resolve(ablate_args);
            return cmd_ablate(cfg, matrix, ablate_args.strategies).exit_code();
        }
        if (ask->parsed()) {
            if (!ask_config.empty()) {
                const auto cfg = load_run_config(ask_config);
                ask_opts.backend = cfg.backend;
                ask_opts.prompts = cfg.prompts;
                ask_opts.crop = cfg.crop;
                ask_opts.params = cfg.params;
                if (cfg.use_cache) ask_opts.cache_dir = cfg.cache_dir.value_or(default_cache_dir());
            } else {
                ask_opts.cache_dir = default_cache_dir();
            }
            if (!ask_backend.empty()) ask_opts.backend.kind = ask_backend;
            if (!ask_scenes.empty()) ask_opts.backend.oracle_scenes = ask_scenes;
            if (!ask_cache.empty()) ask_opts.cache_dir = ask_cache;
            if (ask_no_cache) ask_opts.cache_dir.reset();
            const auto trace = cmd_ask(ask_opts);
            if (ask_trace) std::cout << nlohmann::json(trace).dump(2) << '\n';
            else std::cout << trace.final_answer << '\n';
            return 0;
        }
        if (conv->parsed()) {
            const auto m = cmd_convert(raw, raw_format_from_string(format), image_root, out);
            std::cerr << m.samples.size() << " sample(s) written to " << out << '\n';
            return 0;
        }
        if (synth->parsed()) {
            const auto files = cmd_synth(synth_n, synth_seed, synth_out, oracle);
            std::cerr << synth_n << " scene(s): " << files.manifest.string() << ", " << files.sidecar.string() << '\n';
            return 0;
        }
        if (cache->parsed()) {
            ResponseCache rc(cache_root.empty() ? default_cache_dir() : std::filesystem::path(cache_root));
            if (stats->parsed()) {
                const auto s = rc.stats();
                std::cout << "entries: " << s.entries << "\nbytes: " << s.bytes << "\ntemp files: " << s.temp_files
                          << "\ncorrupt: " << s.corrupt << '\n';
            } else if (gc->parsed()) {
                std::optional<std::chrono::seconds> age;
                if (max_age_days)
                    age = std::chrono::seconds(static_cast<long long>(*max_age_days * 86400.0));
                std::cout << "removed: " << rc.gc(age) << '\n';
            }
            return 0;
        }
        if (report->parsed()) {
            std::vector<std::filesystem::path> files(report_inputs.begin(), report_inputs.end());
            const auto r = cmd_report(files);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << to_markdown(r);
            if (!report_csv_path.empty()) write_file_atomic(report_csv_path, to_csv(r));
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::UsageError || e.kind() == ErrorKind::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
