#include "openseg/pipeline/run.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

using namespace openseg;
using namespace openseg::pipeline;

namespace {

const std::filesystem::path kToy = OPENSEG_TOY_DIR;

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("openseg_pipeline_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Config toy_config(const std::filesystem::path& out, const std::string& manifest = "manifest.json",
                  const std::string& mock = "mock") {
    Config c;
    c.manifest = kToy / manifest;
    c.out_dir = out;
    c.mock_dir = kToy / mock;
    return c;
}

/// Every output file by relative path.
std::map<std::string, std::string> output_tree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out.emplace(std::filesystem::relative(e.path(), dir).string(), openseg::detail::read_file(e.path()));
        }
    }
    return out;
}

nlohmann::json read_json(const std::filesystem::path& p) {
    return nlohmann::json::parse(openseg::detail::read_file(p));
}

struct Cli {
    int status;
    std::string output;
};

Cli run_cli(const std::string& args, const std::string& env = "") {
    const auto log = std::filesystem::temp_directory_path() / "openseg_pipeline_cli.log";
    const std::string cmd = env + " " + std::string(OPENSEG_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, openseg::detail::read_file(log)};
}

} // namespace

TEST(Pipeline, ToyRunWritesEveryOutput) {
    const auto out = temp_dir("toy");
    auto config = toy_config(out);
    config.overlay = true;
    config.csv = true;
    config.dump_scores = true;
    const auto report = run(config);
    EXPECT_EQ(report.images, 3u);
    EXPECT_TRUE(report.errors.empty());
    ASSERT_TRUE(report.semantic);
    ASSERT_TRUE(report.panoptic);
    for (const std::string id : {"a", "b", "c"}) {
        EXPECT_TRUE(std::filesystem::exists(out / "labels" / (id + ".pgm")));
        EXPECT_TRUE(std::filesystem::exists(out / "labels" / (id + ".labels.json")));
        EXPECT_TRUE(std::filesystem::exists(out / "traces" / (id + ".jsonl")));
        EXPECT_TRUE(std::filesystem::exists(out / "panoptic" / (id + ".json")));
        EXPECT_TRUE(std::filesystem::exists(out / "overlays" / (id + ".ppm")));
        EXPECT_TRUE(std::filesystem::exists(out / "scores" / id / "0.f32"));
    }
    EXPECT_TRUE(std::filesystem::exists(out / "report.csv"));
    const auto run_meta = read_json(out / "run.json");
    EXPECT_EQ(run_meta.at("constants").at("tau"), 0.5);
    EXPECT_EQ(run_meta.at("config_hash"), report.config_hash);
}

TEST(Pipeline, LabelsMatchGroundTruthOnToyData) {
    const auto out = temp_dir("labels");
    const auto report = run(toy_config(out));
    for (const std::string id : {"a", "b", "c"}) {
        const auto pred = load_label_map(out / "labels" / (id + ".pgm"));
        const auto gt = load_label_map(kToy / "gt" / (id + ".pgm"));
        for (std::size_t p = 0; p < gt.ids.size(); ++p) {
            if (gt.ids[p] != kIgnoreId) {
                ASSERT_EQ(pred.ids[p], gt.ids[p]) << id << " pixel " << p;
            }
        }
    }
    EXPECT_DOUBLE_EQ(report.semantic->mean, 1.0);
    EXPECT_DOUBLE_EQ(report.panoptic->overall.pq, 1.0);
}

TEST(Pipeline, TraceProvenanceFollowsReasoningSource) {
    const auto out = temp_dir("trace");
    run(toy_config(out));
    std::map<std::string, nlohmann::json> records;
    std::istringstream lines(openseg::detail::read_file(out / "traces" / "a.jsonl"));
    for (std::string line; std::getline(lines, line);) {
        auto j = nlohmann::json::parse(line);
        records[j.at("class").get<std::string>()] = j;
    }
    ASSERT_EQ(records.size(), 6u);
    EXPECT_EQ(records.at("sofa").at("provenance"), "image-specific");
    EXPECT_EQ(records.at("sofa").at("emitted_name"), "couch");
    EXPECT_EQ(records.at("window").at("provenance"), "generic");
    EXPECT_EQ(records.at("potted plant").at("provenance"), "generic");
    EXPECT_EQ(records.at("dog").at("prompts").size(), 3u);

    const auto report = read_json(out / "report.json");
    EXPECT_EQ(report.at("per_image").at(0).at("discarded_names"), nlohmann::json::array({"blorb"}));
}

TEST(Pipeline, RepeatedRunsAreIdentical) {
    const auto a = temp_dir("det_a");
    const auto b = temp_dir("det_b");
    run(toy_config(a));
    run(toy_config(b));
    EXPECT_EQ(output_tree(a), output_tree(b));
}

TEST(Pipeline, ParallelJobsMatchSerial) {
    const auto serial = temp_dir("jobs1");
    const auto parallel = temp_dir("jobs4");
    run(toy_config(serial));
    auto config = toy_config(parallel);
    config.jobs = 4;
    run(config);
    EXPECT_EQ(output_tree(serial), output_tree(parallel));
}

TEST(Pipeline, SkipGenericIsInertWhenEveryClassIsObserved) {
    const auto base = temp_dir("full");
    const auto skip = temp_dir("full_skip");
    const auto r1 = run(toy_config(base, "manifest_full.json"));
    auto config = toy_config(skip, "manifest_full.json");
    config.skip_generic = true;
    const auto r2 = run(config);
    EXPECT_EQ(r1.generic_produced, 0u);
    for (const std::string rel : {"labels/c.pgm", "traces/c.jsonl", "panoptic/c.json", "report.json"}) {
        EXPECT_EQ(openseg::detail::read_file(base / rel), openseg::detail::read_file(skip / rel)) << rel;
    }
}

TEST(Pipeline, SkipGenericUsesBareNamesForUnobservedClasses) {
    const auto out = temp_dir("skip");
    auto config = toy_config(out);
    config.skip_generic = true;
    const auto report = run(config);
    EXPECT_EQ(report.generic_produced, 0u);
    const auto& a = report.per_image.at(0);
    EXPECT_EQ(a.provenance.at(5), reasoner::Provenance::NameOnly);
    EXPECT_EQ(a.stack_depth.at(5), 1u);
}

TEST(Pipeline, FailingImageIsIsolated) {
    const auto dir = temp_dir("isolate");
    std::string noise = "P6\n8 8\n255\n" + std::string(192, '\x42');
    openseg::detail::write_file(dir / "unknown.ppm", noise);
    auto manifest = read_json(kToy / "manifest.json");
    for (auto& rec : manifest.at("images")) {
        for (const char* key : {"image", "gt_semantic", "gt_panoptic"}) {
            rec[key] = (kToy / rec.at(key).get<std::string>()).string();
        }
    }
    manifest["images"].push_back({{"id", "zz"},
                                  {"image", (dir / "unknown.ppm").string()},
                                  {"gt_semantic", (kToy / "gt" / "a.pgm").string()}});
    openseg::detail::write_file(dir / "manifest.json", manifest.dump());

    Config config = toy_config(dir / "out");
    config.manifest = dir / "manifest.json";
    const auto report = run(config);
    ASSERT_EQ(report.errors.size(), 1u);
    EXPECT_EQ(report.errors[0].image, "zz");
    EXPECT_EQ(report.errors[0].kind, ErrorKind::BackendError);
    EXPECT_DOUBLE_EQ(report.semantic->mean, 1.0);
    EXPECT_EQ(read_json(dir / "out" / "report.json").at("evaluated"), 3);

    config.fail_fast = true;
    EXPECT_THROW(run(config), Error);

    const auto cli = run_cli("--manifest " + (dir / "manifest.json").string() + " --mock " + (kToy / "mock").string() +
                             " --out-dir " + (dir / "cli").string());
    EXPECT_EQ(cli.status, 3) << cli.output;
}

TEST(Pipeline, EmptyManifestWritesEmptyReport) {
    const auto dir = temp_dir("empty");
    openseg::detail::write_file(dir / "m.json", R"({"vocabulary": ["a", "b"], "images": []})");
    Config config = toy_config(dir / "out");
    config.manifest = dir / "m.json";
    const auto report = run(config);
    EXPECT_EQ(report.images, 0u);
    EXPECT_FALSE(report.semantic);
    const auto j = read_json(dir / "out" / "report.json");
    EXPECT_TRUE(j.at("semantic").is_null());
    EXPECT_TRUE(j.at("per_image").empty());
}

TEST(Config, FileValuesAndRebasing) {
    const auto dir = temp_dir("config");
    openseg::detail::write_file(dir / "c.json", R"({"tau": 0.3, "manifest": "m.json", "mock": "fixtures"})");
    const auto c = load_config(dir / "c.json");
    EXPECT_DOUBLE_EQ(c.tau, 0.3);
    EXPECT_EQ(c.manifest, dir / "m.json");
    EXPECT_EQ(*c.mock_dir, dir / "fixtures");
    openseg::detail::write_file(dir / "bad.json", R"({"tua": 0.3})");
    try {
        load_config(dir / "bad.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::FormatError);
    }
}

TEST(Config, HashIgnoresPathsAndParallelism) {
    Config a = toy_config("x");
    Config b = toy_config("y");
    b.jobs = 8;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.tau = 0.6;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Cli, MissingManifestIsUsageError) {
    const auto r = run_cli("");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.output.find("--manifest"), std::string::npos);
}

TEST(Cli, OutOfRangeAndUnknownValuesAreUsageErrors) {
    const std::string base = "--manifest " + (kToy / "manifest.json").string() + " --mock " + (kToy / "mock").string();
    const auto out = temp_dir("cli_range");
    EXPECT_EQ(run_cli(base + " --tau 1.5").status, 2);
    EXPECT_EQ(run_cli(base + " --sigma-align 2").status, 2);
    EXPECT_EQ(run_cli(base + " --prompt-style fancy").status, 2);
    EXPECT_EQ(run_cli(base + " --no-such-flag").status, 2);
    const auto ok = run_cli(base + " --prompt-style att --out-dir " + out.string());
    EXPECT_EQ(ok.status, 0) << ok.output;
    EXPECT_NE(ok.output.find("mIoU"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFileOverrideEnvironment) {
    const auto dir = temp_dir("cli_prec");
    const nlohmann::json file{{"manifest", (kToy / "manifest_full.json").string()},
                              {"mock", (kToy / "mock").string()},
                              {"tau", 0.3},
                              {"chat_model", "from-file"}};
    openseg::detail::write_file(dir / "c.json", file.dump());

    auto r = run_cli("--config " + (dir / "c.json").string() + " --out-dir " + (dir / "a").string());
    ASSERT_EQ(r.status, 0) << r.output;
    auto meta = read_json(dir / "a" / "run.json");
    EXPECT_EQ(meta.at("constants").at("tau"), 0.3);
    EXPECT_EQ(meta.at("models").at("chat"), "from-file");

    r = run_cli("--config " + (dir / "c.json").string() + " --tau 0.6 --chat-model from-flag --out-dir " +
                (dir / "b").string());
    ASSERT_EQ(r.status, 0) << r.output;
    meta = read_json(dir / "b" / "run.json");
    EXPECT_EQ(meta.at("constants").at("tau"), 0.6);
    EXPECT_EQ(meta.at("models").at("chat"), "from-flag");

    // Environment supplies endpoints; without a mock they are all required.
    r = run_cli("--manifest " + (kToy / "manifest.json").string(), "CHAT_URL=http://127.0.0.1:1");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.output.find("URL"), std::string::npos);
}
