// Acceptance suite: one PASS/FAIL line per criterion, with its runtime
// against the budget. Exits non-zero when any criterion fails.

#include "openseg/pipeline/run.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace openseg;

namespace {

const std::filesystem::path kToy = OPENSEG_TOY_DIR;

struct Verdict {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("openseg_acceptance_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

pipeline::Config toy_config(const std::filesystem::path& out, const std::string& mock = "mock") {
    pipeline::Config c;
    c.manifest = kToy / "manifest.json";
    c.out_dir = out;
    c.mock_dir = kToy / mock;
    return c;
}

std::map<std::string, std::string> output_tree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out.emplace(std::filesystem::relative(e.path(), dir).string(), openseg::detail::read_file(e.path()));
        }
    }
    return out;
}

/// Trace records of one image keyed by class name.
std::map<std::string, nlohmann::json> traces(const std::filesystem::path& out, const std::string& id) {
    std::map<std::string, nlohmann::json> records;
    std::istringstream lines(openseg::detail::read_file(out / "traces" / (id + ".jsonl")));
    for (std::string line; std::getline(lines, line);) {
        auto j = nlohmann::json::parse(line);
        auto name = j.at("class").get<std::string>();
        records.emplace(std::move(name), std::move(j));
    }
    return records;
}

// ---------------------------------------------------------------------------

Verdict aligner_oracle() {
    Verdict v;
    std::mt19937 rng(1001);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int cases = 0;
    while (cases < 1000) {
        const std::size_t dim = 2 + rng() % 15;
        const std::size_t k = 1 + rng() % 20;
        const double sigma = u(rng);
        std::map<std::string, std::vector<double>> table;
        std::vector<std::string> names;
        std::vector<std::vector<double>> vecs;
        for (std::size_t c = 0; c <= k; ++c) {
            std::vector<double> x(dim);
            for (auto& e : x) e = u(rng);
            if (c < k) {
                names.push_back("entry" + std::to_string(c));
                vecs.push_back(x);
                table[names.back()] = x;
            } else {
                table["probe"] = x;
            }
        }
        // Linear scan in plain doubles.
        const auto& q = table.at("probe");
        auto norm = [](const std::vector<double>& x) {
            double s = 0;
            for (double e : x) s += e * e;
            return std::sqrt(s);
        };
        double best = -2, second = -2;
        std::optional<ClassId> arg;
        for (std::size_t c = 0; c < k; ++c) {
            double dot = 0;
            for (std::size_t i = 0; i < dim; ++i) dot += q[i] * vecs[c][i];
            const double s = dot / (norm(q) * norm(vecs[c]));
            if (s > best) {
                second = best;
                best = s;
                arg = static_cast<ClassId>(c);
            } else if (s > second) {
                second = s;
            }
        }
        if (std::abs(best - second) < 1e-9 || std::abs(best - sigma) < 1e-9) {
            continue;  // numerically ambiguous for any implementation
        }
        const std::optional<ClassId> expect = best > sigma ? arg : std::nullopt;
        backends::MockEmbed embed(dim, table);
        aligner::EmbeddingCache cache(embed);
        const auto got = aligner::align_class("probe", ClassVocabulary(names), cache, sigma);
        v.check(got.class_id() == expect, "case " + std::to_string(cases) + " disagrees with the linear scan");
        ++cases;
    }
    // cosine exactly equal to sigma: power-of-two norms make it exact.
    backends::MockEmbed embed(4, {{"target", {1, 0, 0, 0}}, {"probe", {1, 1, 1, 1}}});
    aligner::EmbeddingCache cache(embed);
    const auto boundary = aligner::align_class("probe", ClassVocabulary({"target"}), cache, 0.5);
    const auto* d = std::get_if<aligner::Discarded>(&boundary.decision);
    v.check(d != nullptr && d->best_similarity == 0.5, "cosine == sigma was not discarded");
    if (v.pass) v.detail = "1000 oracle cases, cosine == sigma discarded";
    return v;
}

Verdict ensemble_oracle() {
    using Big = boost::multiprecision::cpp_bin_float_50;
    Verdict v;
    std::mt19937 rng(2002);
    double worst = 0;
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 1 + rng() % 16;
        const Geometry g{32, 32};
        std::normal_distribution<double> d(0.0, t % 2 ? 4.0 : 30.0);
        MaskStack stack{0, {}};
        for (std::size_t i = 0; i < n; ++i) {
            LogitMap m{g, std::vector<double>(g.pixels())};
            for (auto& x : m.values) x = d(rng);
            stack.maps.push_back(std::move(m));
        }
        const auto r = ensemble::ensemble(stack);
        for (std::size_t p = 0; p < g.pixels(); ++p) {
            Big sum = 0;
            for (const auto& m : stack.maps) sum += Big(m.values[p]);
            const Big s = Big(1) / (Big(1) + boost::multiprecision::exp(-(sum / Big(n))));
            worst = std::max(worst, std::abs(r.scores.scores[p] - s.convert_to<double>()));
        }
    }
    v.check(worst <= 1e-6, "score deviates from the 50-digit oracle by " + std::to_string(worst));

    for (int t = 0; t < 200; ++t) {
        const Geometry g{8, 8};
        std::normal_distribution<double> d(0.0, 5.0);
        MaskStack stack{0, {}};
        const std::size_t n = 1 + rng() % 16;
        for (std::size_t i = 0; i < n; ++i) {
            LogitMap m{g, std::vector<double>(g.pixels())};
            for (auto& x : m.values) x = d(rng);
            stack.maps.push_back(std::move(m));
        }
        const auto base = ensemble::ensemble(stack);
        auto shuffled = stack;
        std::shuffle(shuffled.maps.begin(), shuffled.maps.end(), rng);
        const auto perm = ensemble::ensemble(shuffled);
        v.check(perm.scores.scores == base.scores.scores && perm.mask.bits == base.mask.bits,
                "stack order changed the result in case " + std::to_string(t));
        auto raised = stack;
        raised.maps[rng() % n].values[rng() % g.pixels()] += 0.75;
        const auto up = ensemble::ensemble(raised);
        for (std::size_t p = 0; p < g.pixels(); ++p) {
            v.check(up.scores.scores[p] >= base.scores.scores[p] && up.mask.bits[p] >= base.mask.bits[p],
                    "raising a logit lowered a score in case " + std::to_string(t));
        }
    }
    if (v.pass) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "max deviation %.3g; 200 permutation/monotonicity cases", worst);
        v.detail = buf;
    }
    return v;
}

Verdict metrics_suite() {
    Verdict v;
    const ClassVocabulary two({"c0", "c1"});
    const Geometry g22{2, 2};
    const LabelMap gt{g22, {0, 0, 1, 1}, kIgnoreId, {}};
    const LabelMap pred{g22, {0, 1, 1, 1}, kIgnoreId, {}};
    const auto m = metrics::miou(pred, gt, two);
    v.check(std::abs(m.per_class.at(0) - 0.5) <= 1e-9 && std::abs(m.per_class.at(1) - 2.0 / 3.0) <= 1e-9 &&
                std::abs(m.mean - 7.0 / 12.0) <= 1e-9,
            "2x2 mIoU fixture");

    // IoU 0.8 pair and IoU == 0.5 boundary.
    const PanopticMap g5{{5, 1}, {1, 1, 1, 1, 1}, {{1, 0}}};
    const PanopticMap p5{{5, 1}, {1, 1, 1, 1, 0}, {{1, 0}}};
    const auto pq8 = metrics::panoptic_quality(p5, g5);
    v.check(std::abs(pq8.per_class.at(0).sq - 0.8) <= 1e-12 && pq8.per_class.at(0).rq == 1.0,
            "IoU 0.8 fixture");
    const PanopticMap g4{{4, 1}, {1, 1, 2, 2}, {{1, 0}, {2, 1}}};
    const PanopticMap p4{{4, 1}, {1, 0, 0, 0}, {{1, 0}}};
    const auto half = metrics::panoptic_quality(p4, g4);
    v.check(half.stats.at(0).tp == 0 && half.per_class.at(0).pq == 0.0, "IoU == 0.5 was matched");

    std::mt19937 rng(3003);
    const Geometry g{8, 8};
    std::size_t overall_identity_misses = 0;
    for (int t = 0; t < 500 && v.pass; ++t) {
        const ClassId k = 1 + rng() % 5;
        std::vector<std::string> names;
        for (ClassId c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
        const ClassVocabulary vocab(names);
        auto random_map = [&](double ignore) {
            LabelMap lm{g, std::vector<ClassId>(g.pixels()), kIgnoreId, {}};
            const std::uint32_t block = 1 + rng() % 4;
            std::vector<ClassId> blocks(64);
            for (auto& b : blocks) b = rng() % k;
            for (std::uint32_t y = 0; y < 8; ++y) {
                for (std::uint32_t x = 0; x < 8; ++x) {
                    ClassId c = blocks[(y / block) * 8 + x / block];
                    if (rng() % 10 == 0) c = rng() % k;
                    if (std::uniform_real_distribution<double>(0, 1)(rng) < ignore) c = kIgnoreId;
                    lm.ids[y * 8 + x] = c;
                }
            }
            return lm;
        };
        const auto gl = random_map(0.1);
        const auto pl = random_map(0.0);

        // Semantic: per-pixel counting.
        bool any = false;
        double sum = 0;
        std::size_t present = 0;
        std::map<ClassId, double> expect_iou;
        for (ClassId c = 0; c < k; ++c) {
            std::uint64_t inter = 0, uni = 0;
            for (std::size_t p = 0; p < g.pixels(); ++p) {
                if (gl.ids[p] == kIgnoreId) continue;
                any = true;
                inter += gl.ids[p] == c && pl.ids[p] == c;
                uni += gl.ids[p] == c || pl.ids[p] == c;
            }
            if (uni) {
                expect_iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
                sum += expect_iou[c];
                ++present;
            }
        }
        if (any) {
            const auto got = metrics::miou(pl, gl, vocab);
            v.check(got.per_class.size() == expect_iou.size(), "mIoU class set differs in case " + std::to_string(t));
            for (const auto& [c, iou] : expect_iou) {
                v.check(std::abs(got.per_class.at(c) - iou) <= 1e-12, "IoU differs in case " + std::to_string(t));
            }
            v.check(std::abs(got.mean - sum / static_cast<double>(present)) <= 1e-12,
                    "mIoU differs in case " + std::to_string(t));
        }

        // Panoptic: all-pairs scan.
        const auto gp = ensemble::resolve_panoptic(gl, {}, {});
        const auto pp = ensemble::resolve_panoptic(pl, {}, {});
        std::map<ClassId, metrics::PqClassStats> expect;
        std::set<std::uint32_t> matched;
        for (const auto& gs : gp.segments) {
            bool hit = false;
            for (const auto& ps : pp.segments) {
                if (ps.class_id != gs.class_id) continue;
                std::uint64_t inter = 0, uni = 0;
                for (std::size_t p = 0; p < g.pixels(); ++p) {
                    const bool in_g = gp.segment_ids[p] == gs.segment_id;
                    const bool in_p = pp.segment_ids[p] == ps.segment_id && gp.segment_ids[p] != 0;
                    inter += in_g && in_p;
                    uni += in_g || in_p;
                }
                if (2 * inter > uni) {
                    ++expect[gs.class_id].tp;
                    expect[gs.class_id].iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
                    matched.insert(ps.segment_id);
                    hit = true;
                }
            }
            if (!hit) ++expect[gs.class_id].fn;
        }
        for (const auto& ps : pp.segments) {
            if (matched.contains(ps.segment_id)) continue;
            std::uint64_t area = 0, on_void = 0;
            for (std::size_t p = 0; p < g.pixels(); ++p) {
                if (pp.segment_ids[p] != ps.segment_id) continue;
                ++area;
                on_void += gp.segment_ids[p] == 0;
            }
            if (2 * on_void <= area) ++expect[ps.class_id].fp;
        }
        if (expect.empty()) continue;
        const auto got = metrics::panoptic_quality(pp, gp);
        for (const auto& [c, st] : expect) {
            const auto& s = got.stats.at(c);
            v.check(s.tp == st.tp && s.fp == st.fp && s.fn == st.fn && std::abs(s.iou_sum - st.iou_sum) <= 1e-12,
                    "PQ match counts differ in case " + std::to_string(t));
            const auto& val = got.per_class.at(c);
            v.check(std::abs(val.pq - val.sq * val.rq) <= 1e-12, "per-class PQ != SQ x RQ in case " + std::to_string(t));
        }
        if (std::abs(got.overall.pq - got.overall.sq * got.overall.rq) > 1e-12) ++overall_identity_misses;
    }
    if (v.pass) {
        v.detail = "500 cases; PQ = SQ x RQ holds per class (class-averaged overall values differ from the product in " +
                   std::to_string(overall_identity_misses) + " cases, as averaging implies)";
    }
    return v;
}

Verdict determinism() {
    Verdict v;
    const auto a = temp_dir("det_a");
    const auto b = temp_dir("det_b");
    const auto c = temp_dir("det_c");
    pipeline::run(toy_config(a));
    pipeline::run(toy_config(b));
    auto parallel = toy_config(c);
    parallel.jobs = 4;
    pipeline::run(parallel);
    const auto ta = output_tree(a);
    v.check(ta.size() > 10, "output tree unexpectedly small");
    v.check(ta == output_tree(b), "two serial runs differ");
    v.check(ta == output_tree(c), "--jobs 1 and --jobs 4 differ");
    if (v.pass) v.detail = std::to_string(ta.size()) + " files byte-identical across 3 runs";
    return v;
}

Verdict alignment_recovery() {
    Verdict v;
    const auto on = temp_dir("align_on");
    const auto off = temp_dir("align_off");
    pipeline::run(toy_config(on));
    auto disabled = toy_config(off);
    disabled.sigma_align = 0.9;  // above the couch/sofa similarity of 0.83
    pipeline::run(disabled);

    const ClassId sofa = 2;
    const auto gt = load_label_map(kToy / "gt" / "a.pgm");
    const auto labels = load_label_map(on / "labels" / "a.pgm");
    std::size_t sofa_pixels = 0;
    for (std::size_t p = 0; p < gt.ids.size(); ++p) {
        if (gt.ids[p] == sofa) {
            ++sofa_pixels;
            v.check(labels.ids[p] == sofa, "sofa pixel " + std::to_string(p) + " mislabeled with alignment on");
        }
    }
    v.check(sofa_pixels > 0, "fixture has no sofa region");

    for (const std::string id : {"a", "b", "c"}) {
        const auto t_on = traces(on, id);
        const auto t_off = traces(off, id);
        for (const auto& [cls, rec] : t_on) {
            const bool differs = rec != t_off.at(cls);
            if (id == "a" && cls == "sofa") {
                v.check(rec.at("provenance") == "image-specific" && rec.value("emitted_name", "") == "couch",
                        "sofa not reasoned from 'couch' with alignment on");
                v.check(t_off.at(cls).at("provenance") == "generic", "sofa not generic with alignment off");
            } else {
                v.check(!differs, "trace for " + id + "/" + cls + " changed");
            }
        }
    }
    if (v.pass) v.detail = "sofa region labeled; only a/sofa trace changes (image-specific -> generic)";
    return v;
}

Verdict fallback() {
    Verdict v;
    const auto out = temp_dir("fallback");
    const auto report = pipeline::run(toy_config(out, "mock_fallback"));
    const auto manifest = load_manifest(kToy / "manifest.json");
    v.check(report.errors.empty(), "images failed under the fallback fixture");
    for (const auto& s : report.per_image) {
        v.check(s.fallback.has_value(), "image " + s.image + " did not fall back");
        v.check(s.provenance.size() == manifest.vocabulary.size(), "image " + s.image + " does not cover the vocabulary");
        for (const auto& [c, p] : s.provenance) {
            v.check(p == reasoner::Provenance::Generic, "image " + s.image + " has non-generic reasoning");
        }
        const auto labels = load_label_map(out / "labels" / (s.image + ".pgm"));
        v.check(labels.geometry == Geometry{8, 8}, "label map geometry");
        for (auto id : labels.ids) {
            v.check(manifest.vocabulary.contains(id), "label map of " + s.image + " has unlabeled pixels");
        }
    }
    if (v.pass) v.detail = "3 images generic-only, full coverage, full label maps";
    return v;
}

Verdict ablation() {
    Verdict v;
    const auto with_reasons = temp_dir("abl_reasons");
    const auto without = temp_dir("abl_fallback");
    auto a = toy_config(with_reasons);
    a.prompt_style = composer::PromptStyle::ClassName;
    auto b = toy_config(without, "mock_fallback");
    b.prompt_style = composer::PromptStyle::ClassName;
    pipeline::run(a);
    pipeline::run(b);
    for (const std::string id : {"a", "b", "c"}) {
        v.check(openseg::detail::read_file(with_reasons / "labels" / (id + ".pgm")) ==
                    openseg::detail::read_file(without / "labels" / (id + ".pgm")),
                "class-name labels of " + id + " depend on reasoning");
        const auto ta = traces(with_reasons, id);
        const auto tb = traces(without, id);
        for (const auto& [cls, rec] : ta) {
            v.check(rec.at("prompts") == tb.at(cls).at("prompts"), "class-name prompts of " + cls + " differ");
        }
    }

    const auto att = temp_dir("abl_att");
    const auto report = pipeline::run(toy_config(att));
    std::size_t compared = 0;
    const auto& vocab = load_manifest(kToy / "manifest.json").vocabulary;
    for (const auto& s : report.per_image) {
        const auto t = traces(att, s.image);
        for (const auto& [c, depth] : s.stack_depth) {
            const auto& rec = t.at(vocab.name(c));
            const auto attrs = rec.at("attributes").get<std::vector<std::string>>();
            const std::set<std::string> distinct(attrs.begin(), attrs.end());
            v.check(depth == distinct.size(), "stack depth of " + s.image + "/" + vocab.name(c) + " is " +
                                                  std::to_string(depth) + ", attributes " +
                                                  std::to_string(distinct.size()));
            ++compared;
        }
    }
    // Image c observes every class; its attribute counts are fixed by the fixture.
    const std::map<std::string, std::size_t> expect_c{{"wall", 3}, {"floor", 2}, {"sofa", 4},
                                                      {"dog", 3},  {"potted plant", 5}, {"window", 1}};
    for (const auto& [name, n] : expect_c) {
        v.check(report.per_image.at(2).stack_depth.at(*vocab.find(name)) == n, "image c depth for " + name);
    }
    if (v.pass) v.detail = "class-name labels identical with and without reasoning; " + std::to_string(compared) +
                           " att stack depths equal attribute counts";
    return v;
}

struct Criterion {
    std::string name;
    double budget_s;
    std::function<Verdict()> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"oracle equivalence: aligner", 5, aligner_oracle},
        {"oracle equivalence: ensemble", 10, ensemble_oracle},
        {"metrics: mIoU and PQ", 30, metrics_suite},
        {"end-to-end determinism", 5, determinism},
        {"alignment recovery", 0, alignment_recovery},
        {"fallback behavior", 0, fallback},
        {"ablation plumbing", 0, ablation},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            v.pass = false;
            v.detail = "took " + std::to_string(secs) + " s, budget " + std::to_string(c.budget_s) + " s";
        }
        char timing[64];
        if (c.budget_s > 0) {
            std::snprintf(timing, sizeof timing, "%.2f s / %.0f s", secs, c.budget_s);
        } else {
            std::snprintf(timing, sizeof timing, "%.2f s", secs);
        }
        std::printf("%s  %s  [%s]  %s\n", v.pass ? "PASS" : "FAIL", c.name.c_str(), timing, v.detail.c_str());
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
