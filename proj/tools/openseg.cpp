// Batch runner: manifest in, label maps, traces, overlays and a metrics report out.
//
// Exit status: 0 success, 1 fatal error, 2 usage error, 3 some images failed.

#include "openseg/pipeline/run.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

struct Flags {
    std::optional<std::string> manifest;
    std::optional<std::string> out_dir;
    std::optional<std::string> config;
    std::optional<std::string> prompt_style;
    std::optional<double> sigma_align;
    std::optional<double> tau;
    std::optional<double> temperature;
    std::optional<int> retries;
    std::optional<std::string> chat_url;
    std::optional<std::string> segment_url;
    std::optional<std::string> embed_url;
    std::optional<std::string> chat_model;
    std::optional<std::string> embed_model;
    std::vector<std::string> headers;
    std::optional<long> timeout_ms;
    std::optional<std::string> mock;
    std::optional<std::string> cache_dir;
    std::optional<int> jobs;
    bool skip_generic = false;
    bool strict_eq10 = false;
    bool per_class_reasons = false;
    bool overlay = false;
    bool csv = false;
    bool dump_scores = false;
    bool fail_fast = false;
};

void add_flags(CLI::App& app, Flags& f) {
    app.add_option("--manifest", f.manifest, "Dataset manifest (JSON); required here or in --config");
    app.add_option("--out-dir", f.out_dir, "Output directory (default: out)");
    app.add_option("--config", f.config, "JSON config file; flags override its values");
    app.add_option("--prompt-style", f.prompt_style, "class-name | coarse | coarse-att | att (default: att)");
    app.add_option("--sigma-align", f.sigma_align, "Alignment similarity threshold in [-1, 1] (default: 0.5)");
    app.add_option("--tau", f.tau, "Mask threshold in (0, 1) (default: 0.5)");
    app.add_option("--temperature", f.temperature, "Chat decoding temperature in [0, 2] (default: 0.7)");
    app.add_option("--retries", f.retries, "Attempts per reasoning step (default: 3)");
    app.add_flag("--skip-generic", f.skip_generic, "Use bare class prompts instead of generic reasoning");
    app.add_flag("--strict-eq10", f.strict_eq10, "Label pixels only from classes whose mask bit is set");
    app.add_flag("--per-class-reasons", f.per_class_reasons, "Ask for Step-3 reasons one class per request");
    app.add_option("--chat-url", f.chat_url, "Chat endpoint (env CHAT_URL)");
    app.add_option("--segment-url", f.segment_url, "Segment endpoint (env SEGMENT_URL)");
    app.add_option("--embed-url", f.embed_url, "Embed endpoint (env EMBED_URL)");
    app.add_option("--chat-model", f.chat_model, "Chat model id sent with each request");
    app.add_option("--embed-model", f.embed_model, "Embedding model id sent with each request");
    app.add_option("--header", f.headers, "Extra HTTP header 'Name: value' (repeatable)");
    app.add_option("--timeout-ms", f.timeout_ms, "HTTP timeout per request");
    app.add_option("--mock", f.mock, "Mock fixture directory with chat.json, segment.json, embed.json");
    app.add_option("--cache-dir", f.cache_dir, "Persist backend responses here and replay them on later runs");
    app.add_flag("--overlay", f.overlay, "Write color overlays");
    app.add_flag("--csv", f.csv, "Also write report.csv");
    app.add_flag("--dump-scores", f.dump_scores, "Write per-class score rasters");
    app.add_flag("--fail-fast", f.fail_fast, "Abort on the first failing image");
    app.add_option("--jobs", f.jobs, "Images processed in parallel (default: 1)");
}

std::optional<std::string> env(const char* name) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') {
        return std::string(v);
    }
    return std::nullopt;
}

/// Defaults, then environment, then config file, then flags.
openseg::pipeline::Config resolve(const Flags& f) {
    using openseg::pipeline::Config;
    Config c;
    if (auto v = env("CHAT_URL")) c.chat_url = *v;
    if (auto v = env("SEGMENT_URL")) c.segment_url = *v;
    if (auto v = env("EMBED_URL")) c.embed_url = *v;
    if (auto v = env("OPENSEG_API_KEY")) c.headers.push_back("Authorization: Bearer " + *v);
    if (f.config) c = openseg::pipeline::load_config(*f.config, c);

    if (f.manifest) c.manifest = *f.manifest;
    if (f.out_dir) c.out_dir = *f.out_dir;
    if (f.prompt_style) c.prompt_style = openseg::composer::parse_prompt_style(*f.prompt_style);
    if (f.sigma_align) c.sigma_align = *f.sigma_align;
    if (f.tau) c.tau = *f.tau;
    if (f.temperature) c.temperature = *f.temperature;
    if (f.retries) c.retries = *f.retries;
    if (f.chat_url) c.chat_url = *f.chat_url;
    if (f.segment_url) c.segment_url = *f.segment_url;
    if (f.embed_url) c.embed_url = *f.embed_url;
    if (f.chat_model) c.chat_model = *f.chat_model;
    if (f.embed_model) c.embed_model = *f.embed_model;
    c.headers.insert(c.headers.end(), f.headers.begin(), f.headers.end());
    if (f.timeout_ms) c.timeout_ms = *f.timeout_ms;
    if (f.mock) c.mock_dir = *f.mock;
    if (f.cache_dir) c.cache_dir = *f.cache_dir;
    if (f.jobs) c.jobs = *f.jobs;
    c.skip_generic = c.skip_generic || f.skip_generic;
    c.strict_eq10 = c.strict_eq10 || f.strict_eq10;
    c.per_class_reasons = c.per_class_reasons || f.per_class_reasons;
    c.overlay = c.overlay || f.overlay;
    c.csv = c.csv || f.csv;
    c.dump_scores = c.dump_scores || f.dump_scores;
    c.fail_fast = c.fail_fast || f.fail_fast;
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reasoning-guided open-vocabulary segmentation pipeline"};
    app.name("openseg");
    Flags flags;
    add_flags(app, flags);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    openseg::pipeline::Config config;
    try {
        config = resolve(flags);
        if (config.manifest.empty()) {
            std::cerr << "usage error: --manifest is required\n\n" << app.help();
            return 2;
        }
        config.validate();
    } catch (const openseg::Error& e) {
        const bool usage = e.kind() == openseg::ErrorKind::UsageError || e.kind() == openseg::ErrorKind::RangeError;
        std::cerr << (usage ? "usage error: " : "error: ") << e.what() << "\n";
        return usage ? 2 : 1;
    }

    try {
        const auto report = openseg::pipeline::run(config);
        std::cout << "images: " << report.images << ", failed: " << report.errors.size() << "\n";
        if (report.semantic) {
            std::cout << "mIoU: " << report.semantic->mean << "\n";
        }
        if (report.panoptic) {
            std::cout << "PQ: " << report.panoptic->overall.pq << "  SQ: " << report.panoptic->overall.sq
                      << "  RQ: " << report.panoptic->overall.rq << "\n";
        }
        std::cout << "backend cache: " << report.cache.hits << " hits, " << report.cache.misses << " misses, "
                  << report.cache.disk_hits << " from disk\n";
        for (const auto& e : report.errors) {
            std::cerr << "image " << e.image << ": " << e.message << "\n";
        }
        std::cout << "outputs in " << config.out_dir.string() << "\n";
        return report.errors.empty() ? 0 : 3;
    } catch (const openseg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
