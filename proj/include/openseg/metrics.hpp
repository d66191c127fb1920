#pragma once

#include "openseg/core/raster.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <set>
#include <unordered_map>

namespace openseg::metrics {

/// K x K pixel counts, entry (gt, pred). Ground-truth ignore pixels are not
/// counted; evaluated pixels whose prediction is the ignore id are kept in a
/// separate per-class `unpredicted` tally.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0), unpredicted_(classes, 0) {}

    void add(const LabelMap& pred, const LabelMap& gt) {
        if (pred.geometry != gt.geometry || pred.ids.size() != gt.ids.size()) {
            fail(ErrorKind::GeomError, "prediction " + to_string(pred.geometry) + " vs ground truth " +
                                           to_string(gt.geometry));
        }
        for (std::size_t i = 0; i < gt.ids.size(); ++i) {
            const ClassId g = gt.ids[i];
            if (g == gt.ignore_id) {
                continue;
            }
            if (g >= k_) {
                fail(ErrorKind::RangeError, "ground-truth id " + std::to_string(g) + " outside the vocabulary");
            }
            const ClassId p = pred.ids[i];
            if (p == pred.ignore_id) {
                ++unpredicted_[g];
                continue;
            }
            if (p >= k_) {
                fail(ErrorKind::RangeError, "predicted id " + std::to_string(p) + " outside the vocabulary");
            }
            ++counts_[g * k_ + p];
        }
    }

    void merge(const ConfusionMatrix& other) {
        if (other.k_ != k_) {
            fail(ErrorKind::DimError, "confusion matrices of different size");
        }
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            counts_[i] += other.counts_[i];
        }
        for (std::size_t i = 0; i < k_; ++i) {
            unpredicted_[i] += other.unpredicted_[i];
        }
    }

    [[nodiscard]] std::size_t classes() const noexcept { return k_; }
    [[nodiscard]] std::uint64_t at(ClassId gt, ClassId pred) const { return counts_.at(gt * k_ + pred); }
    [[nodiscard]] std::uint64_t unpredicted(ClassId gt) const { return unpredicted_.at(gt); }

    [[nodiscard]] std::uint64_t row_sum(ClassId gt) const {
        std::uint64_t s = unpredicted_[gt];
        for (std::size_t p = 0; p < k_; ++p) {
            s += counts_[gt * k_ + p];
        }
        return s;
    }

    [[nodiscard]] std::uint64_t col_sum(ClassId pred) const {
        std::uint64_t s = 0;
        for (std::size_t g = 0; g < k_; ++g) {
            s += counts_[g * k_ + pred];
        }
        return s;
    }

    [[nodiscard]] std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts_) s += c;
        for (auto c : unpredicted_) s += c;
        return s;
    }

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::uint64_t> unpredicted_;
};

struct MiouResult {
    /// IoU for every class present in ground truth or prediction.
    std::map<ClassId, double> per_class;
    double mean = 0.0;
};

/// IoU = TP / (TP + FP + FN) per class; classes with an empty union are
/// left out of the mean.
inline MiouResult miou_from_confusion(const ConfusionMatrix& cm) {
    if (cm.total() == 0) {
        fail(ErrorKind::EmptyEval, "no evaluated pixels (ground truth is entirely ignore)");
    }
    MiouResult out;
    double sum = 0;
    for (ClassId c = 0; c < cm.classes(); ++c) {
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t fn = cm.row_sum(c) - tp;
        const std::uint64_t fp = cm.col_sum(c) - tp;
        const std::uint64_t uni = tp + fp + fn;
        if (uni == 0) {
            continue;
        }
        const double iou = static_cast<double>(tp) / static_cast<double>(uni);
        out.per_class.emplace(c, iou);
        sum += iou;
    }
    out.mean = sum / static_cast<double>(out.per_class.size());
    return out;
}

inline MiouResult miou(const LabelMap& pred, const LabelMap& gt, const ClassVocabulary& vocab) {
    ConfusionMatrix cm(vocab.size());
    cm.add(pred, gt);
    return miou_from_confusion(cm);
}

// ---------------------------------------------------------------------------
// Panoptic quality

struct PqClassStats {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    double iou_sum = 0.0;

    PqClassStats& operator+=(const PqClassStats& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        iou_sum += o.iou_sum;
        return *this;
    }
};

struct PqValues {
    double pq = 0.0;
    double sq = 0.0;
    double rq = 0.0;
};

struct PqResult {
    PqValues overall;
    std::map<ClassId, PqValues> per_class;
    std::map<ClassId, PqClassStats> stats;
};

/// Accumulates matches over images; classes are keyed by vocabulary id.
class PanopticAccumulator {
public:
    /// Matches segments of one image. A pair of the same class matches when
    /// IoU > 0.5, where the union excludes predicted pixels on ground-truth
    /// void. Unmatched predictions lying mostly (> 50%) on void are not
    /// counted as false positives. Zero-area segments are skipped.
    void add(const PanopticMap& pred, const PanopticMap& gt) {
        pred.validate();
        gt.validate();
        if (pred.geometry != gt.geometry) {
            fail(ErrorKind::GeomError, "panoptic prediction and ground truth differ in geometry");
        }
        std::unordered_map<std::uint32_t, ClassId> pred_class;
        std::unordered_map<std::uint32_t, ClassId> gt_class;
        for (const auto& s : pred.segments) pred_class.emplace(s.segment_id, s.class_id);
        for (const auto& s : gt.segments) gt_class.emplace(s.segment_id, s.class_id);

        std::unordered_map<std::uint32_t, std::uint64_t> pred_area;
        std::unordered_map<std::uint32_t, std::uint64_t> gt_area;
        std::unordered_map<std::uint32_t, std::uint64_t> pred_on_void;
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> overlap;
        for (std::size_t i = 0; i < gt.segment_ids.size(); ++i) {
            const auto g = gt.segment_ids[i];
            const auto p = pred.segment_ids[i];
            if (g != 0) ++gt_area[g];
            if (p != 0) ++pred_area[p];
            if (p != 0 && g == 0) ++pred_on_void[p];
            if (p != 0 && g != 0) ++overlap[{g, p}];
        }

        std::set<std::uint32_t> matched_gt;
        std::set<std::uint32_t> matched_pred;
        for (const auto& [key, inter] : overlap) {
            const auto [g, p] = key;
            if (gt_class.at(g) != pred_class.at(p)) {
                continue;
            }
            const auto uni = pred_area[p] + gt_area[g] - inter - pred_on_void[p];
            const double iou = static_cast<double>(inter) / static_cast<double>(uni);
            if (iou > 0.5) {
                auto& st = stats_[gt_class.at(g)];
                ++st.tp;
                st.iou_sum += iou;
                matched_gt.insert(g);
                matched_pred.insert(p);
            }
        }
        for (const auto& [g, area] : gt_area) {
            if (!matched_gt.contains(g)) {
                ++stats_[gt_class.at(g)].fn;
            }
        }
        for (const auto& [p, area] : pred_area) {
            if (matched_pred.contains(p)) {
                continue;
            }
            if (2 * pred_on_void[p] > area) {
                continue;
            }
            ++stats_[pred_class.at(p)].fp;
        }
    }

    void merge(const PanopticAccumulator& other) {
        for (const auto& [c, st] : other.stats_) {
            stats_[c] += st;
        }
    }

    /// PQ = SQ * RQ per class; dataset values average the classes that have
    /// at least one TP, FP or FN.
    [[nodiscard]] PqResult result() const {
        PqResult out;
        double pq = 0, sq = 0, rq = 0;
        for (const auto& [c, st] : stats_) {
            const double denom = static_cast<double>(st.tp) + 0.5 * static_cast<double>(st.fp) +
                                 0.5 * static_cast<double>(st.fn);
            if (denom == 0) {
                continue;
            }
            PqValues v;
            v.sq = st.tp == 0 ? 0.0 : st.iou_sum / static_cast<double>(st.tp);
            v.rq = static_cast<double>(st.tp) / denom;
            v.pq = v.sq * v.rq;
            out.per_class.emplace(c, v);
            out.stats.emplace(c, st);
            pq += v.pq;
            sq += v.sq;
            rq += v.rq;
        }
        if (out.per_class.empty()) {
            fail(ErrorKind::EmptyEval, "no segments in prediction or ground truth");
        }
        const auto n = static_cast<double>(out.per_class.size());
        out.overall = {pq / n, sq / n, rq / n};
        return out;
    }

private:
    std::map<ClassId, PqClassStats> stats_;
};

inline PqResult panoptic_quality(const PanopticMap& pred, const PanopticMap& gt) {
    PanopticAccumulator acc;
    acc.add(pred, gt);
    return acc.result();
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const MiouResult& r, const ClassVocabulary& vocab) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [c, iou] : r.per_class) {
        rows.push_back({{"class_id", c}, {"class", vocab.name(c)}, {"iou", iou}});
    }
    return {{"miou", r.mean}, {"per_class", rows}};
}

inline nlohmann::json to_json(const PqResult& r, const ClassVocabulary& vocab) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [c, v] : r.per_class) {
        const auto& st = r.stats.at(c);
        rows.push_back({{"class_id", c},
                        {"class", vocab.name(c)},
                        {"pq", v.pq},
                        {"sq", v.sq},
                        {"rq", v.rq},
                        {"tp", st.tp},
                        {"fp", st.fp},
                        {"fn", st.fn}});
    }
    return {{"pq", r.overall.pq}, {"sq", r.overall.sq}, {"rq", r.overall.rq}, {"per_class", rows}};
}

/// class_id,class,iou[,pq,sq,rq]
inline std::string to_csv(const MiouResult& semantic, const std::optional<PqResult>& panoptic,
                          const ClassVocabulary& vocab) {
    std::string out = panoptic ? "class_id,class,iou,pq,sq,rq\n" : "class_id,class,iou\n";
    auto num = [](std::optional<double> v) {
        if (!v) return std::string{};
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    for (const auto& e : vocab) {
        std::optional<double> iou;
        if (auto it = semantic.per_class.find(e.id); it != semantic.per_class.end()) iou = it->second;
        out += std::to_string(e.id) + ",\"" + e.name + "\"," + num(iou);
        if (panoptic) {
            std::optional<PqValues> v;
            if (auto it = panoptic->per_class.find(e.id); it != panoptic->per_class.end()) v = it->second;
            out += "," + num(v ? std::optional(v->pq) : std::nullopt) + "," +
                   num(v ? std::optional(v->sq) : std::nullopt) + "," + num(v ? std::optional(v->rq) : std::nullopt);
        }
        out += "\n";
    }
    return out;
}

} // namespace openseg::metrics
