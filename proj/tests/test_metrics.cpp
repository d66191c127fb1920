#include "openseg/ensemble.hpp"
#include "openseg/metrics.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace openseg;
using namespace openseg::metrics;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an openseg::Error";
    return ErrorKind::InvariantError;
}

LabelMap label_map(Geometry g, std::vector<ClassId> ids) {
    return {g, std::move(ids), kIgnoreId, {}};
}

ClassVocabulary vocab_of(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("class" + std::to_string(c));
    return ClassVocabulary(names);
}

/// Blocky random labels so segments are large enough to match.
std::vector<ClassId> random_labels(std::mt19937& rng, Geometry g, ClassId k, double ignore_rate) {
    std::vector<ClassId> ids(g.pixels());
    const std::uint32_t block = 1 + rng() % 4;
    std::vector<ClassId> blocks(((g.width + block - 1) / block) * ((g.height + block - 1) / block));
    for (auto& b : blocks) b = rng() % k;
    const std::uint32_t bw = (g.width + block - 1) / block;
    std::uniform_real_distribution<double> u(0, 1);
    for (std::uint32_t y = 0; y < g.height; ++y) {
        for (std::uint32_t x = 0; x < g.width; ++x) {
            ClassId c = blocks[(y / block) * bw + x / block];
            if (u(rng) < 0.1) c = rng() % k;
            if (u(rng) < ignore_rate) c = kIgnoreId;
            ids[y * g.width + x] = c;
        }
    }
    return ids;
}

PanopticMap segments_of(const LabelMap& lm) {
    return ensemble::resolve_panoptic(lm, {}, {});
}

/// Independent per-class IoU by direct pixel counting.
std::map<ClassId, double> oracle_iou(const LabelMap& pred, const LabelMap& gt, ClassId k) {
    std::map<ClassId, double> out;
    for (ClassId c = 0; c < k; ++c) {
        std::uint64_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < gt.ids.size(); ++i) {
            if (gt.ids[i] == kIgnoreId) continue;
            const bool in_p = pred.ids[i] == c;
            const bool in_g = gt.ids[i] == c;
            inter += in_p && in_g;
            uni += in_p || in_g;
        }
        if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
    }
    return out;
}

/// Independent PQ: all-pairs pixel scans with the void rules stated on PanopticAccumulator.
std::map<ClassId, PqClassStats> oracle_pq(const PanopticMap& pred, const PanopticMap& gt) {
    std::map<ClassId, PqClassStats> out;
    std::set<std::uint32_t> matched_pred;
    for (const auto& gs : gt.segments) {
        bool matched = false;
        std::uint64_t g_area = 0;
        for (auto id : gt.segment_ids) g_area += id == gs.segment_id;
        if (g_area == 0) continue;
        for (const auto& ps : pred.segments) {
            if (ps.class_id != gs.class_id) continue;
            std::uint64_t inter = 0, uni = 0;
            for (std::size_t i = 0; i < gt.segment_ids.size(); ++i) {
                const bool in_g = gt.segment_ids[i] == gs.segment_id;
                const bool in_p = pred.segment_ids[i] == ps.segment_id && gt.segment_ids[i] != 0;
                inter += in_g && in_p;
                uni += in_g || in_p;
            }
            if (2 * inter > uni) {
                ++out[gs.class_id].tp;
                out[gs.class_id].iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
                matched_pred.insert(ps.segment_id);
                matched = true;
            }
        }
        if (!matched) ++out[gs.class_id].fn;
    }
    for (const auto& ps : pred.segments) {
        if (matched_pred.contains(ps.segment_id)) continue;
        std::uint64_t area = 0, on_void = 0;
        for (std::size_t i = 0; i < pred.segment_ids.size(); ++i) {
            if (pred.segment_ids[i] != ps.segment_id) continue;
            ++area;
            on_void += gt.segment_ids[i] == 0;
        }
        if (area == 0 || 2 * on_void > area) continue;
        ++out[ps.class_id].fp;
    }
    return out;
}

} // namespace

TEST(Miou, TwoByTwoByHand) {
    // gt   0 0 / 1 1     pred 0 1 / 1 1
    const Geometry g{2, 2};
    const auto r = miou(label_map(g, {0, 1, 1, 1}), label_map(g, {0, 0, 1, 1}), vocab_of(2));
    EXPECT_DOUBLE_EQ(r.per_class.at(0), 0.5);
    EXPECT_DOUBLE_EQ(r.per_class.at(1), 2.0 / 3.0);
    EXPECT_NEAR(r.mean, 0.5833333333, 1e-9);
}

TEST(Miou, IgnoreAndAbsentClasses) {
    const Geometry g{4, 1};
    const auto r =
        miou(label_map(g, {0, kIgnoreId, 2, 0}), label_map(g, {0, 0, kIgnoreId, 0}), vocab_of(3));
    EXPECT_EQ(r.per_class.size(), 1u);  // class 2 predicted only on ignore, class 1 absent
    EXPECT_DOUBLE_EQ(r.per_class.at(0), 2.0 / 3.0);  // the unpredicted pixel is a miss
}

TEST(Miou, Errors) {
    const Geometry g{2, 1};
    EXPECT_EQ(kind_of([&] { miou(label_map(g, {0, 0}), label_map(g, {kIgnoreId, kIgnoreId}), vocab_of(1)); }),
              ErrorKind::EmptyEval);
    EXPECT_EQ(kind_of([&] { miou(label_map(g, {0, 0}), label_map({1, 2}, {0, 0}), vocab_of(1)); }),
              ErrorKind::GeomError);
    EXPECT_EQ(kind_of([&] { miou(label_map(g, {0, 4}), label_map(g, {0, 0}), vocab_of(2)); }),
              ErrorKind::RangeError);
}

TEST(Confusion, RowSumsCountGroundTruthPixels) {
    std::mt19937 rng(41);
    const Geometry g{8, 8};
    for (int t = 0; t < 100; ++t) {
        const ClassId k = 1 + rng() % 5;
        const auto gt = label_map(g, random_labels(rng, g, k, 0.1));
        const auto pred = label_map(g, random_labels(rng, g, k, 0.05));
        ConfusionMatrix cm(k);
        cm.add(pred, gt);
        std::uint64_t total = 0;
        for (ClassId c = 0; c < k; ++c) {
            const auto n = static_cast<std::uint64_t>(std::count(gt.ids.begin(), gt.ids.end(), c));
            ASSERT_EQ(cm.row_sum(c), n);
            total += n;
        }
        ASSERT_EQ(cm.total(), total);
    }
}

TEST(Miou, AgreesWithPixelCountingOracle) {
    std::mt19937 rng(43);
    const Geometry g{8, 8};
    for (int t = 0; t < 500; ++t) {
        const ClassId k = 1 + rng() % 5;
        const auto gt = label_map(g, random_labels(rng, g, k, 0.1));
        const auto pred = label_map(g, random_labels(rng, g, k, 0.05));
        const auto expect = oracle_iou(pred, gt, k);
        if (expect.empty()) continue;
        const auto got = miou(pred, gt, vocab_of(k));
        ASSERT_EQ(got.per_class.size(), expect.size());
        double sum = 0;
        for (const auto& [c, v] : expect) {
            ASSERT_DOUBLE_EQ(got.per_class.at(c), v);
            sum += v;
        }
        ASSERT_NEAR(got.mean, sum / static_cast<double>(expect.size()), 1e-12);
    }
}

TEST(Miou, SymmetricUnderClassRelabeling) {
    std::mt19937 rng(47);
    const Geometry g{8, 8};
    for (int t = 0; t < 100; ++t) {
        const ClassId k = 2 + rng() % 4;
        auto gt = label_map(g, random_labels(rng, g, k, 0.1));
        auto pred = label_map(g, random_labels(rng, g, k, 0.0));
        std::vector<ClassId> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto relabel = [&](LabelMap m) {
            for (auto& id : m.ids) {
                if (id != kIgnoreId) id = perm[id];
            }
            return m;
        };
        const auto a = miou(pred, gt, vocab_of(k));
        const auto b = miou(relabel(pred), relabel(gt), vocab_of(k));
        ASSERT_DOUBLE_EQ(a.mean, b.mean);
        for (const auto& [c, v] : a.per_class) ASSERT_DOUBLE_EQ(b.per_class.at(perm[c]), v);
    }
}

TEST(Pq, SingleMatchedPair) {
    // gt segment: 5 pixels, pred segment: 4 of them. IoU = 4 / 5.
    const Geometry g{5, 1};
    PanopticMap gt{g, {1, 1, 1, 1, 1}, {{1, 0}}};
    PanopticMap pred{g, {1, 1, 1, 1, 0}, {{1, 0}}};
    const auto r = panoptic_quality(pred, gt);
    EXPECT_DOUBLE_EQ(r.per_class.at(0).sq, 0.8);
    EXPECT_DOUBLE_EQ(r.per_class.at(0).rq, 1.0);
    EXPECT_DOUBLE_EQ(r.overall.pq, 0.8);
}

TEST(Pq, IouExactlyHalfDoesNotMatch) {
    const Geometry g{4, 1};
    PanopticMap gt{g, {1, 1, 0, 0}, {{1, 0}}};
    PanopticMap pred{g, {2, 0, 0, 0}, {{2, 0}}};
    gt.segment_ids = {1, 1, 2, 2};
    gt.segments.push_back({2, 1});
    const auto r = panoptic_quality(pred, gt);
    EXPECT_EQ(r.stats.at(0).tp, 0u);
    EXPECT_EQ(r.stats.at(0).fp, 1u);
    EXPECT_EQ(r.stats.at(0).fn, 1u);
    EXPECT_EQ(r.per_class.at(0).pq, 0.0);
}

TEST(Pq, PredictionsMostlyOnVoidAreNotFalsePositives) {
    const Geometry g{4, 1};
    PanopticMap gt{g, {1, 0, 0, 0}, {{1, 0}}};
    PanopticMap pred{g, {1, 2, 2, 2}, {{1, 0}, {2, 1}}};
    const auto r = panoptic_quality(pred, gt);
    EXPECT_EQ(r.stats.at(0).tp, 1u);
    EXPECT_FALSE(r.stats.contains(1));
    EXPECT_DOUBLE_EQ(r.overall.pq, 1.0);
}

TEST(Pq, EmptyAndGeometryErrors) {
    const Geometry g{2, 1};
    PanopticMap empty{g, {0, 0}, {}};
    EXPECT_EQ(kind_of([&] { panoptic_quality(empty, empty); }), ErrorKind::EmptyEval);
    PanopticMap other{{1, 2}, {0, 0}, {}};
    EXPECT_EQ(kind_of([&] { panoptic_quality(empty, other); }), ErrorKind::GeomError);
}

TEST(Pq, AgreesWithAllPairsOracle) {
    std::mt19937 rng(53);
    const Geometry g{8, 8};
    int compared = 0;
    for (int t = 0; t < 500; ++t) {
        const ClassId k = 1 + rng() % 5;
        const auto gt = segments_of(label_map(g, random_labels(rng, g, k, 0.1)));
        const auto pred = segments_of(label_map(g, random_labels(rng, g, k, 0.0)));
        const auto expect = oracle_pq(pred, gt);
        PanopticAccumulator acc;
        acc.add(pred, gt);
        PqResult got;
        try {
            got = acc.result();
        } catch (const Error& e) {
            ASSERT_EQ(e.kind(), ErrorKind::EmptyEval);
            ASSERT_TRUE(expect.empty());
            continue;
        }
        ASSERT_EQ(got.stats.size(), expect.size());
        double pq_sum = 0;
        for (const auto& [c, st] : expect) {
            const auto& s = got.stats.at(c);
            ASSERT_EQ(s.tp, st.tp);
            ASSERT_EQ(s.fp, st.fp);
            ASSERT_EQ(s.fn, st.fn);
            ASSERT_NEAR(s.iou_sum, st.iou_sum, 1e-12);
            const double rq = st.tp / (st.tp + 0.5 * st.fp + 0.5 * st.fn);
            const double sq = st.tp ? st.iou_sum / st.tp : 0.0;
            ASSERT_NEAR(got.per_class.at(c).pq, sq * rq, 1e-12);
            pq_sum += sq * rq;
        }
        ASSERT_NEAR(got.overall.pq, pq_sum / static_cast<double>(expect.size()), 1e-12);
        ++compared;
    }
    EXPECT_GE(compared, 450);
}

TEST(Pq, MergeEqualsSingleAccumulation) {
    std::mt19937 rng(59);
    const Geometry g{8, 8};
    PanopticAccumulator all, left, right;
    for (int t = 0; t < 20; ++t) {
        const auto gt = segments_of(label_map(g, random_labels(rng, g, 4, 0.05)));
        const auto pred = segments_of(label_map(g, random_labels(rng, g, 4, 0.0)));
        all.add(pred, gt);
        (t % 2 ? left : right).add(pred, gt);
    }
    left.merge(right);
    const auto a = all.result();
    const auto b = left.result();
    EXPECT_NEAR(a.overall.pq, b.overall.pq, 1e-12);
    EXPECT_NEAR(a.overall.sq, b.overall.sq, 1e-12);
    EXPECT_NEAR(a.overall.rq, b.overall.rq, 1e-12);
}

TEST(Report, JsonAndCsv) {
    const ClassVocabulary vocab({"wall", "dog"});
    const Geometry g{2, 1};
    const auto r = miou(label_map(g, {0, 1}), label_map(g, {0, 0}), vocab);
    const auto j = to_json(r, vocab);
    EXPECT_NEAR(j.at("miou").get<double>(), 0.25, 1e-12);
    const auto csv = to_csv(r, std::nullopt, vocab);
    EXPECT_NE(csv.find("wall"), std::string::npos);
    EXPECT_NE(csv.find("dog"), std::string::npos);
}
