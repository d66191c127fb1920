#pragma once

#include "openseg/aligner.hpp"
#include "openseg/composer.hpp"
#include "openseg/ensemble.hpp"
#include "openseg/reasoner/reasoner.hpp"

namespace openseg::pipeline {

/// Every run setting. A JSON config file uses the same keys; command-line
/// flags override the file, and the file overrides these defaults.
struct Config {
    std::filesystem::path manifest;
    std::filesystem::path out_dir = "out";

    composer::PromptStyle prompt_style = composer::PromptStyle::Att;
    composer::Templates templates;
    double sigma_align = aligner::kDefaultSigmaAlign;
    double tau = ensemble::kDefaultTau;
    double temperature = backends::kDefaultTemperature;
    int retries = reasoner::kDefaultRetries;
    bool skip_generic = false;
    bool strict_eq10 = false;
    bool per_class_reasons = false;

    std::string chat_model{backends::kDefaultChatModel};
    std::string embed_model{backends::kDefaultEmbedModel};
    std::string chat_url;
    std::string segment_url;
    std::string embed_url;
    /// Extra HTTP headers, "Name: value".
    std::vector<std::string> headers;
    long timeout_ms = 120000;
    int max_in_flight = 4;

    std::optional<std::filesystem::path> mock_dir;
    std::optional<std::filesystem::path> cache_dir;

    bool overlay = false;
    bool csv = false;
    bool dump_scores = false;
    bool fail_fast = false;
    int jobs = 1;

    /// Range checks shared by the CLI and library callers.
    void validate() const {
        if (!(tau > 0.0 && tau < 1.0)) {
            fail(ErrorKind::RangeError, "tau must lie in (0, 1), got " + std::to_string(tau));
        }
        if (!(sigma_align >= -1.0 && sigma_align <= 1.0)) {
            fail(ErrorKind::RangeError, "sigma_align must lie in [-1, 1], got " + std::to_string(sigma_align));
        }
        if (!(temperature >= 0.0 && temperature <= 2.0)) {
            fail(ErrorKind::RangeError, "temperature must lie in [0, 2], got " + std::to_string(temperature));
        }
        if (retries < 1) {
            fail(ErrorKind::RangeError, "retries must be at least 1");
        }
        if (jobs < 1) {
            fail(ErrorKind::RangeError, "jobs must be at least 1");
        }
        if (max_in_flight < 1 || timeout_ms < 1) {
            fail(ErrorKind::RangeError, "max_in_flight and timeout_ms must be positive");
        }
        if (manifest.empty()) {
            fail(ErrorKind::UsageError, "a manifest is required");
        }
        if (!mock_dir && (chat_url.empty() || segment_url.empty() || embed_url.empty())) {
            fail(ErrorKind::UsageError, "either a mock fixture directory or all of chat, segment and embed URLs is required");
        }
        for (const auto& h : headers) {
            if (h.find(':') == std::string::npos) {
                fail(ErrorKind::UsageError, "header '" + h + "' is not of the form 'Name: value'");
            }
        }
    }
};

inline nlohmann::json to_json(const Config& c) {
    nlohmann::json j{
        {"manifest", c.manifest.string()},
        {"out_dir", c.out_dir.string()},
        {"prompt_style", composer::to_string(c.prompt_style)},
        {"template_class", c.templates.class_name},
        {"template_coarse", c.templates.coarse},
        {"template_coarse_att", c.templates.coarse_att},
        {"template_att", c.templates.att},
        {"sigma_align", c.sigma_align},
        {"tau", c.tau},
        {"temperature", c.temperature},
        {"retries", c.retries},
        {"skip_generic", c.skip_generic},
        {"strict_eq10", c.strict_eq10},
        {"per_class_reasons", c.per_class_reasons},
        {"chat_model", c.chat_model},
        {"embed_model", c.embed_model},
        {"chat_url", c.chat_url},
        {"segment_url", c.segment_url},
        {"embed_url", c.embed_url},
        {"headers", c.headers},
        {"timeout_ms", c.timeout_ms},
        {"max_in_flight", c.max_in_flight},
        {"mock", c.mock_dir ? nlohmann::json(c.mock_dir->string()) : nlohmann::json(nullptr)},
        {"cache_dir", c.cache_dir ? nlohmann::json(c.cache_dir->string()) : nlohmann::json(nullptr)},
        {"overlay", c.overlay},
        {"csv", c.csv},
        {"dump_scores", c.dump_scores},
        {"fail_fast", c.fail_fast},
        {"jobs", c.jobs},
    };
    return j;
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected so
/// typos do not silently fall back to defaults.
inline void apply_json(Config& c, const nlohmann::json& j) {
    if (!j.is_object()) {
        fail(ErrorKind::FormatError, "config must be a JSON object");
    }
    const nlohmann::json known = to_json(Config{});
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            fail(ErrorKind::FormatError, "unknown config key '" + key + "'");
        }
    }
    auto opt_path = [&](const char* key, std::optional<std::filesystem::path>& out) {
        if (j.contains(key)) {
            out = j.at(key).is_null() ? std::nullopt : std::optional<std::filesystem::path>(j.at(key).get<std::string>());
        }
    };
    try {
        if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("prompt_style")) c.prompt_style = composer::parse_prompt_style(j.at("prompt_style").get<std::string>());
        if (j.contains("template_class")) c.templates.class_name = j.at("template_class").get<std::string>();
        if (j.contains("template_coarse")) c.templates.coarse = j.at("template_coarse").get<std::string>();
        if (j.contains("template_coarse_att")) c.templates.coarse_att = j.at("template_coarse_att").get<std::string>();
        if (j.contains("template_att")) c.templates.att = j.at("template_att").get<std::string>();
        if (j.contains("sigma_align")) c.sigma_align = j.at("sigma_align").get<double>();
        if (j.contains("tau")) c.tau = j.at("tau").get<double>();
        if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
        if (j.contains("retries")) c.retries = j.at("retries").get<int>();
        if (j.contains("skip_generic")) c.skip_generic = j.at("skip_generic").get<bool>();
        if (j.contains("strict_eq10")) c.strict_eq10 = j.at("strict_eq10").get<bool>();
        if (j.contains("per_class_reasons")) c.per_class_reasons = j.at("per_class_reasons").get<bool>();
        if (j.contains("chat_model")) c.chat_model = j.at("chat_model").get<std::string>();
        if (j.contains("embed_model")) c.embed_model = j.at("embed_model").get<std::string>();
        if (j.contains("chat_url")) c.chat_url = j.at("chat_url").get<std::string>();
        if (j.contains("segment_url")) c.segment_url = j.at("segment_url").get<std::string>();
        if (j.contains("embed_url")) c.embed_url = j.at("embed_url").get<std::string>();
        if (j.contains("headers")) c.headers = j.at("headers").get<std::vector<std::string>>();
        if (j.contains("timeout_ms")) c.timeout_ms = j.at("timeout_ms").get<long>();
        if (j.contains("max_in_flight")) c.max_in_flight = j.at("max_in_flight").get<int>();
        opt_path("mock", c.mock_dir);
        opt_path("cache_dir", c.cache_dir);
        if (j.contains("overlay")) c.overlay = j.at("overlay").get<bool>();
        if (j.contains("csv")) c.csv = j.at("csv").get<bool>();
        if (j.contains("dump_scores")) c.dump_scores = j.at("dump_scores").get<bool>();
        if (j.contains("fail_fast")) c.fail_fast = j.at("fail_fast").get<bool>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, std::string("config: ") + e.what());
    }
}

/// Loads a config file; relative paths inside it resolve against its directory.
inline Config load_config(const std::filesystem::path& path, Config base = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, "config '" + path.string() + "': " + e.what());
    }
    apply_json(base, j);
    const auto dir = path.parent_path();
    auto rebase = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = dir / p;
    };
    if (j.contains("manifest")) rebase(base.manifest);
    if (j.contains("out_dir")) rebase(base.out_dir);
    if (j.contains("mock") && base.mock_dir) rebase(*base.mock_dir);
    if (j.contains("cache_dir") && base.cache_dir) rebase(*base.cache_dir);
    return base;
}

/// Hash of the settings that affect outputs. Paths, parallelism and
/// transport tuning are left out so equivalent runs compare equal.
inline std::string config_hash(const Config& c) {
    auto j = to_json(c);
    for (const char* key : {"manifest", "out_dir", "jobs", "cache_dir", "mock", "headers", "timeout_ms",
                            "max_in_flight", "fail_fast", "overlay", "csv", "dump_scores"}) {
        j.erase(key);
    }
    return util::sha256_hex(backends::canonical(j));
}

} // namespace openseg::pipeline
