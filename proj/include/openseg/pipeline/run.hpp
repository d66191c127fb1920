#pragma once

#include "openseg/backends/http.hpp"
#include "openseg/backends/mock.hpp"
#include "openseg/core/manifest.hpp"
#include "openseg/metrics.hpp"
#include "openseg/pipeline/config.hpp"

#include <chrono>
#include <iostream>
#include <thread>

namespace openseg::pipeline {

/// Raw backends plus the run-wide response cache wrapped around them.
class Backends {
public:
    Backends(std::unique_ptr<backends::ChatBackend> chat, std::unique_ptr<backends::SegmentBackend> segment,
             std::unique_ptr<backends::EmbedBackend> embed, std::optional<std::filesystem::path> cache_dir = {})
        : chat_(std::move(chat)),
          segment_(std::move(segment)),
          embed_(std::move(embed)),
          cache_(cache_dir ? backends::ResponseCache(*cache_dir) : backends::ResponseCache()),
          cached_chat_(*chat_, cache_),
          cached_segment_(*segment_, cache_),
          cached_embed_(*embed_, cache_) {}

    Backends(const Backends&) = delete;
    Backends& operator=(const Backends&) = delete;

    backends::ChatBackend& chat() { return cached_chat_; }
    backends::SegmentBackend& segment() { return cached_segment_; }
    backends::EmbedBackend& embed() { return cached_embed_; }

    backends::ChatBackend& raw_chat() { return *chat_; }
    backends::SegmentBackend& raw_segment() { return *segment_; }
    backends::EmbedBackend& raw_embed() { return *embed_; }

    [[nodiscard]] backends::CacheStats cache_stats() const { return cache_.stats(); }

private:
    std::unique_ptr<backends::ChatBackend> chat_;
    std::unique_ptr<backends::SegmentBackend> segment_;
    std::unique_ptr<backends::EmbedBackend> embed_;
    backends::ResponseCache cache_;
    backends::CachedChat cached_chat_;
    backends::CachedSegment cached_segment_;
    backends::CachedEmbed cached_embed_;
};

/// Mock fixtures (`chat.json`, `segment.json`, `embed.json` in the mock
/// directory) or HTTP endpoints, per the config.
inline std::unique_ptr<Backends> make_backends(const Config& config) {
    if (config.mock_dir) {
        const auto& dir = *config.mock_dir;
        return std::make_unique<Backends>(std::make_unique<backends::FixtureChat>(dir / "chat.json"),
                                          std::make_unique<backends::MockSegment>(dir / "segment.json"),
                                          std::make_unique<backends::MockEmbed>(dir / "embed.json"), config.cache_dir);
    }
    backends::HttpOptions http;
    http.timeout = std::chrono::milliseconds(config.timeout_ms);
    http.retries = config.retries;
    http.max_in_flight = config.max_in_flight;
    for (const auto& h : config.headers) {
        const auto colon = h.find(':');
        http.headers.emplace(reasoner::detail::trim(h.substr(0, colon)), reasoner::detail::trim(h.substr(colon + 1)));
    }
    return std::make_unique<Backends>(std::make_unique<backends::HttpChat>(config.chat_url, http),
                                      std::make_unique<backends::HttpSegment>(config.segment_url, http),
                                      std::make_unique<backends::HttpEmbed>(config.embed_url, http), config.cache_dir);
}

struct ImageError {
    std::string image;
    ErrorKind kind = ErrorKind::InvariantError;
    std::string message;
};

struct ImageSummary {
    std::string image;
    bool ok = false;
    /// Set when the chat model could not complete the reasoning protocol.
    std::optional<std::string> fallback;
    std::map<ClassId, reasoner::Provenance> provenance;
    /// Number of logit maps ensembled per class.
    std::map<ClassId, std::size_t> stack_depth;
    std::vector<std::string> discarded_names;
};

struct RunReport {
    std::size_t images = 0;
    std::vector<ImageSummary> per_image;
    std::vector<ImageError> errors;
    std::optional<metrics::MiouResult> semantic;
    std::optional<metrics::PqResult> panoptic;
    backends::CacheStats cache;
    std::uint64_t generic_produced = 0;
    std::string config_hash;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// stops further scheduling and is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first;
    std::mutex first_mutex;
    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(first_mutex);
                if (!first) {
                    first = std::current_exception();
                }
                stop.store(true);
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (first) {
        std::rethrow_exception(first);
    }
}

struct ImageOutcome {
    ImageSummary summary;
    std::optional<ImageError> error;
    std::optional<metrics::ConfusionMatrix> confusion;
    std::optional<metrics::PanopticAccumulator> panoptic;
};

struct Shared {
    const Config& config;
    const DatasetManifest& manifest;
    Backends& backends;
    aligner::EmbeddingCache& embeddings;
    reasoner::GenericReasoner& generic;
};

inline std::string jsonl(const std::vector<nlohmann::json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

inline void process_image(const Shared& s, const ManifestRecord& record, ImageOutcome& out) {
    const auto& config = s.config;
    const auto& vocab = s.manifest.vocabulary;
    const auto& out_dir = config.out_dir;
    const std::string& id = record.image.id;

    reasoner::ReasonerOptions ropts;
    ropts.chat = {config.chat_model, config.temperature};
    ropts.retries = config.retries;
    ropts.per_class_reasons = config.per_class_reasons;

    const auto image = reasoner::load_image(record.image);

    // Image-specific reasoning and alignment.
    reasoner::ReasoningBundle aligned;
    aligned.image = record.image;
    auto outcome = reasoner::run_image_specific_reasoning(s.backends.chat(), image, vocab, ropts);
    if (auto* result = std::get_if<reasoner::ImageSpecificResult>(&outcome)) {
        reasoner::RawObservedClasses explained;
        for (const auto& name : result->observed.names) {
            if (result->chains.contains(name)) {
                explained.names.push_back(name);
            }
        }
        auto bundle = aligner::align_bundle(record.image, explained, result->chains, vocab, s.embeddings,
                                            config.sigma_align);
        for (const auto& o : bundle.outcomes) {
            if (std::holds_alternative<aligner::Discarded>(o.decision)) {
                out.summary.discarded_names.push_back(o.raw_name);
            }
        }
        aligned = std::move(bundle.bundle);
        aligned.description = result->description;
    } else {
        out.summary.fallback = std::get<reasoner::Fallback>(outcome).reason;
    }

    // Generic reasoning for every class the image-specific pass did not cover.
    reasoner::ReasoningBundle generic;
    generic.image = record.image;
    std::vector<ClassId> remaining;
    for (const auto& e : vocab) {
        if (!aligned.entries.contains(e.id)) {
            remaining.push_back(e.id);
        }
    }
    if (!remaining.empty()) {
        if (config.skip_generic) {
            for (ClassId c : remaining) {
                generic.entries[c] = reasoner::BundleEntry{std::nullopt, reasoner::Provenance::NameOnly, {}, {}};
            }
        } else {
            for (auto& [c, chain] : s.generic.run(s.backends.chat(), vocab, remaining)) {
                generic.entries[c] = reasoner::BundleEntry{std::move(chain), reasoner::Provenance::Generic, {}, {}};
            }
        }
    }
    const auto merged = reasoner::merge_reasoning(aligned, generic, vocab);
    const auto prompts = composer::compose_bundle(merged, vocab, config.prompt_style, config.templates);

    // Segmentation and ensembling, one request per class.
    const Geometry geometry{record.image.width, record.image.height};
    std::vector<ensemble::ClassScoreMap> scores;
    std::map<ClassId, BinaryMask> masks;
    for (const auto& [c, set] : prompts) {
        backends::SegmentRequest req{image.bytes, set.prompts};
        auto resp = s.backends.segment().segment(req);
        resp.validate(req);
        MaskStack stack{c, std::move(resp.maps)};
        if (stack.maps.front().geometry != geometry) {
            fail(ErrorKind::GeomError, "segmentor returned " + to_string(stack.maps.front().geometry) +
                                           " for an image annotated as " + to_string(geometry));
        }
        auto r = ensemble::ensemble(stack, config.tau);
        out.summary.stack_depth[c] = stack.maps.size();
        if (config.dump_scores) {
            const auto base = out_dir / "scores" / id / std::to_string(c);
            openseg::detail::write_file(base.string() + ".f32", encode_float_raster(geometry, r.scores.scores));
            const nlohmann::json side{{"class_id", c},      {"class", vocab.name(c)}, {"width", geometry.width},
                                      {"height", geometry.height}, {"format", "OSF1 big-endian f32"}};
            openseg::detail::write_file(base.string() + ".json", side.dump(2) + "\n");
        }
        masks.emplace(c, std::move(r.mask));
        scores.push_back(std::move(r.scores));
    }
    for (const auto& [c, entry] : merged.entries) {
        out.summary.provenance[c] = entry.provenance;
    }

    LabelMap labels = config.strict_eq10 ? ensemble::resolve_label_map_strict(scores, masks, vocab)
                                         : ensemble::resolve_label_map(scores, vocab);

    // Outputs.
    auto traces = reasoner::trace_records(merged, vocab);
    for (auto& t : traces) {
        t["prompts"] = prompts.at(t.at("class_id").get<ClassId>()).prompts;
    }
    openseg::detail::write_file(out_dir / "traces" / (id + ".jsonl"), jsonl(traces));
    save_label_map(labels, out_dir / "labels" / (id + ".pgm"));
    if (config.overlay) {
        std::optional<RgbImage> base = decode_ppm(image.bytes);
        openseg::detail::write_file(out_dir / "overlays" / (id + ".ppm"), encode_ppm(render_overlay(labels, base)));
    }

    // Scoring.
    const LabelMap gt = load_label_map(record.gt_semantic);
    out.confusion.emplace(vocab.size());
    out.confusion->add(labels, gt);
    if (record.gt_panoptic) {
        const auto pan = ensemble::resolve_panoptic(labels, masks, s.manifest.thing_ids);
        save_panoptic(pan, out_dir / "panoptic" / (id + ".json"));
        out.panoptic.emplace();
        out.panoptic->add(pan, load_panoptic(*record.gt_panoptic));
    }
    out.summary.ok = true;
}

inline nlohmann::json report_json(const RunReport& r, const ClassVocabulary& vocab) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& s : r.per_image) {
        nlohmann::json prov = nlohmann::json::object();
        for (const auto& [c, p] : s.provenance) {
            prov[vocab.name(c)] = reasoner::to_string(p);
        }
        nlohmann::json depth = nlohmann::json::object();
        for (const auto& [c, d] : s.stack_depth) {
            depth[vocab.name(c)] = d;
        }
        nlohmann::json j{{"id", s.image}, {"status", s.ok ? "ok" : "error"}, {"provenance", prov}, {"stack_depth", depth},
                         {"discarded_names", s.discarded_names}};
        j["fallback"] = s.fallback ? nlohmann::json(*s.fallback) : nlohmann::json(nullptr);
        images.push_back(std::move(j));
    }
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : r.errors) {
        errors.push_back({{"image", e.image}, {"kind", to_string(e.kind)}, {"message", e.message}});
    }
    return {{"images", r.images},
            {"evaluated", r.per_image.size() - r.errors.size()},
            {"semantic", r.semantic ? metrics::to_json(*r.semantic, vocab) : nlohmann::json(nullptr)},
            {"panoptic", r.panoptic ? metrics::to_json(*r.panoptic, vocab) : nlohmann::json(nullptr)},
            {"per_image", images},
            {"errors", errors}};
}

} // namespace detail

/// Runs the pipeline over every manifest record with the given backends and
/// writes the output tree:
///   labels/<id>.pgm (+ .labels.json), traces/<id>.jsonl,
///   panoptic/<id>.json (+ .pgm) when panoptic ground truth exists,
///   overlays/<id>.ppm with `overlay`, scores/<id>/ with `dump_scores`,
///   report.json (+ report.csv with `csv`), run.json.
/// The tree depends only on the inputs and settings, not on `jobs` or the
/// time of the run; cache statistics are returned in the report.
/// A failing image is recorded in the report and skipped unless `fail_fast`.
inline RunReport run(const Config& config, Backends& backends) {
    config.validate();
    const auto manifest = load_manifest(config.manifest);
    const auto& vocab = manifest.vocabulary;
    std::filesystem::create_directories(config.out_dir);

    reasoner::ReasonerOptions ropts;
    ropts.chat = {config.chat_model, config.temperature};
    ropts.retries = config.retries;
    aligner::EmbeddingCache embeddings(backends.embed(), config.embed_model);
    reasoner::GenericReasoner generic(ropts);
    const detail::Shared shared{config, manifest, backends, embeddings, generic};

    std::vector<detail::ImageOutcome> outcomes(manifest.records.size());
    detail::parallel_for(manifest.records.size(), config.jobs, [&](std::size_t i) {
        auto& out = outcomes[i];
        out.summary.image = manifest.records[i].image.id;
        try {
            detail::process_image(shared, manifest.records[i], out);
        } catch (const Error& e) {
            if (config.fail_fast) throw;
            out = detail::ImageOutcome{};
            out.summary.image = manifest.records[i].image.id;
            out.error = ImageError{out.summary.image, e.kind(), e.what()};
        } catch (const std::exception& e) {
            if (config.fail_fast) throw;
            out = detail::ImageOutcome{};
            out.summary.image = manifest.records[i].image.id;
            out.error = ImageError{out.summary.image, ErrorKind::InvariantError, e.what()};
        }
    });

    // Reduce in manifest order so results do not depend on scheduling.
    RunReport report;
    report.images = manifest.records.size();
    report.config_hash = config_hash(config);
    metrics::ConfusionMatrix confusion(vocab.size());
    metrics::PanopticAccumulator panoptic;
    bool any_semantic = false;
    bool any_panoptic = false;
    for (auto& o : outcomes) {
        report.per_image.push_back(o.summary);
        if (o.error) {
            report.errors.push_back(*o.error);
            continue;
        }
        confusion.merge(*o.confusion);
        any_semantic = true;
        if (o.panoptic) {
            panoptic.merge(*o.panoptic);
            any_panoptic = true;
        }
    }
    if (manifest.records.empty()) {
        std::cerr << "warning: manifest has no records; writing an empty report\n";
    }
    if (any_semantic && confusion.total() > 0) {
        report.semantic = metrics::miou_from_confusion(confusion);
    }
    if (any_panoptic) {
        try {
            report.panoptic = panoptic.result();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyEval) throw;
        }
    }
    report.cache = backends.cache_stats();
    report.generic_produced = generic.produced();

    openseg::detail::write_file(config.out_dir / "report.json", detail::report_json(report, vocab).dump(2) + "\n");
    if (config.csv && report.semantic) {
        openseg::detail::write_file(config.out_dir / "report.csv", metrics::to_csv(*report.semantic, report.panoptic, vocab));
    }

    const nlohmann::json run_meta{
        {"config_hash", report.config_hash},
        {"constants",
         {{"sigma_align", config.sigma_align},
          {"tau", config.tau},
          {"temperature", config.temperature},
          {"retries", config.retries},
          {"ignore_id", kIgnoreId},
          {"prompt_style", composer::to_string(config.prompt_style)},
          {"skip_generic", config.skip_generic},
          {"strict_eq10", config.strict_eq10},
          {"per_class_reasons", config.per_class_reasons},
          {"templates",
           {{"class", config.templates.class_name},
            {"coarse", config.templates.coarse},
            {"coarse_att", config.templates.coarse_att},
            {"att", config.templates.att}}}}},
        {"models", {{"chat", config.chat_model}, {"embed", config.embed_model}}},
        {"backends",
         {{"chat", backends.raw_chat().identity()},
          {"segment", backends.raw_segment().identity()},
          {"embed", backends.raw_embed().identity()}}},
        {"vocabulary", {{"name", vocab.source_name()}, {"size", vocab.size()}, {"hash", vocab.hash()}}},
        {"generic_reasoning_calls", report.generic_produced},
    };
    openseg::detail::write_file(config.out_dir / "run.json", run_meta.dump(2) + "\n");
    return report;
}

inline RunReport run(const Config& config) {
    config.validate();
    auto backends = make_backends(config);
    return run(config, *backends);
}

} // namespace openseg::pipeline
