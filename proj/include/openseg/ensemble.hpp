#pragma once

#include "openseg/core/raster.hpp"

#include <algorithm>
#include <set>

namespace openseg::ensemble {

inline constexpr double kDefaultTau = 0.5;

/// sigmoid(mean of per-reason logits) for one class, row-major in [0, 1].
struct ClassScoreMap {
    ClassId class_id = 0;
    Geometry geometry;
    std::vector<double> scores;
};

struct EnsembleResult {
    ClassScoreMap scores;
    BinaryMask mask;
};

/// Overflow-free logistic function.
inline long double sigmoid(long double x) {
    if (x >= 0) {
        return 1.0L / (1.0L + std::exp(-x));
    }
    const long double e = std::exp(x);
    return e / (1.0L + e);
}

/// Averages the N logit maps per pixel, applies the sigmoid, and sets the
/// mask bit where the score is strictly above `tau`. Each pixel's logits are
/// summed in ascending order in extended precision, so the result does not
/// depend on the order of maps in the stack.
inline EnsembleResult ensemble(const MaskStack& stack, double tau = kDefaultTau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        fail(ErrorKind::Precondition, "tau must lie in (0, 1)");
    }
    stack.validate();
    const Geometry g = stack.maps.front().geometry;
    const std::size_t n = stack.maps.size();

    EnsembleResult out;
    out.scores.class_id = stack.class_id;
    out.scores.geometry = g;
    out.scores.scores.resize(g.pixels());
    out.mask.geometry = g;
    out.mask.bits.resize(g.pixels());

    std::vector<double> column(n);
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        for (std::size_t i = 0; i < n; ++i) {
            const double v = stack.maps[i].values[p];
            if (std::isnan(v)) {
                fail(ErrorKind::NumericError, "NaN logit in mask stack for class " + std::to_string(stack.class_id));
            }
            column[i] = v;
        }
        std::sort(column.begin(), column.end());
        long double sum = 0;
        for (double v : column) {
            sum += v;
        }
        const double score = static_cast<double>(sigmoid(sum / static_cast<long double>(n)));
        out.scores.scores[p] = score;
        out.mask.bits[p] = score > tau;
    }
    return out;
}

namespace detail {

/// Orders maps by class id and checks one map per vocabulary class with shared geometry.
inline std::vector<const ClassScoreMap*> by_class(const std::vector<ClassScoreMap>& scores,
                                                  const ClassVocabulary& vocab) {
    if (vocab.empty()) {
        fail(ErrorKind::CoverageError, "empty vocabulary");
    }
    std::vector<const ClassScoreMap*> ordered(vocab.size(), nullptr);
    for (const auto& s : scores) {
        if (!vocab.contains(s.class_id)) {
            fail(ErrorKind::CoverageError, "score map for unknown class " + std::to_string(s.class_id));
        }
        if (ordered[s.class_id] != nullptr) {
            fail(ErrorKind::CoverageError, "two score maps for class '" + vocab.name(s.class_id) + "'");
        }
        if (s.geometry != scores.front().geometry || s.scores.size() != s.geometry.pixels()) {
            fail(ErrorKind::GeomError, "score maps do not share geometry");
        }
        ordered[s.class_id] = &s;
    }
    for (const auto& e : vocab) {
        if (ordered[e.id] == nullptr) {
            fail(ErrorKind::CoverageError, "no score map for class '" + e.name + "'");
        }
    }
    return ordered;
}

} // namespace detail

/// Per-pixel argmax over class scores; ties go to the lowest class id.
inline LabelMap resolve_label_map(const std::vector<ClassScoreMap>& scores, const ClassVocabulary& vocab) {
    const auto ordered = detail::by_class(scores, vocab);
    LabelMap out;
    out.geometry = ordered.front()->geometry;
    out.labels = label_table(vocab);
    out.ids.resize(out.geometry.pixels());
    for (std::size_t p = 0; p < out.ids.size(); ++p) {
        ClassId best = 0;
        double best_score = ordered[0]->scores[p];
        for (ClassId c = 1; c < ordered.size(); ++c) {
            if (ordered[c]->scores[p] > best_score) {
                best_score = ordered[c]->scores[p];
                best = c;
            }
        }
        out.ids[p] = best;
    }
    return out;
}

/// Pure per-class binarization: the argmax is taken only over classes whose
/// mask bit is set, and pixels no class claims become the ignore id.
inline LabelMap resolve_label_map_strict(const std::vector<ClassScoreMap>& scores,
                                         const std::map<ClassId, BinaryMask>& masks, const ClassVocabulary& vocab) {
    const auto ordered = detail::by_class(scores, vocab);
    LabelMap out;
    out.geometry = ordered.front()->geometry;
    out.labels = label_table(vocab);
    out.ids.assign(out.geometry.pixels(), kIgnoreId);
    for (std::size_t p = 0; p < out.ids.size(); ++p) {
        double best_score = -1.0;
        for (ClassId c = 0; c < ordered.size(); ++c) {
            const auto& mask = masks.at(c);
            if (mask.bits[p] && ordered[c]->scores[p] > best_score) {
                best_score = ordered[c]->scores[p];
                out.ids[p] = c;
            }
        }
    }
    return out;
}

/// Segments from a resolved label map. Stuff classes give one segment per
/// 4-connected region of their label; thing classes give one segment per
/// 4-connected component of their binary mask restricted to pixels they win.
/// Thing pixels outside the class's mask stay void. Segment ids are dense
/// from 1 in raster order of each component's first pixel.
inline PanopticMap resolve_panoptic(const LabelMap& labels, const std::map<ClassId, BinaryMask>& masks,
                                    const std::set<ClassId>& thing_ids) {
    const Geometry g = labels.geometry;
    PanopticMap pan;
    pan.geometry = g;
    pan.segment_ids.assign(g.pixels(), 0);

    auto member = [&](std::size_t p, ClassId cls) {
        if (labels.ids[p] != cls) {
            return false;
        }
        if (!thing_ids.contains(cls)) {
            return true;
        }
        auto it = masks.find(cls);
        return it != masks.end() && it->second.bits[p];
    };

    std::uint32_t next_id = 1;
    std::vector<std::size_t> frontier;
    for (std::size_t seed = 0; seed < g.pixels(); ++seed) {
        const ClassId cls = labels.ids[seed];
        if (pan.segment_ids[seed] != 0 || cls == labels.ignore_id || !member(seed, cls)) {
            continue;
        }
        const std::uint32_t sid = next_id++;
        pan.segments.push_back({sid, cls});
        pan.segment_ids[seed] = sid;
        frontier.assign(1, seed);
        while (!frontier.empty()) {
            const std::size_t p = frontier.back();
            frontier.pop_back();
            const std::size_t x = p % g.width;
            const std::size_t y = p / g.width;
            auto visit = [&](std::size_t q) {
                if (pan.segment_ids[q] == 0 && member(q, cls)) {
                    pan.segment_ids[q] = sid;
                    frontier.push_back(q);
                }
            };
            if (x > 0) visit(p - 1);
            if (x + 1 < g.width) visit(p + 1);
            if (y > 0) visit(p - g.width);
            if (y + 1 < g.height) visit(p + g.width);
        }
    }
    return pan;
}

/// Convenience form that resolves the label map from the scores first.
inline PanopticMap resolve_panoptic(const std::vector<ClassScoreMap>& scores,
                                    const std::map<ClassId, BinaryMask>& masks, const ClassVocabulary& vocab,
                                    const std::set<ClassId>& thing_ids) {
    for (ClassId t : thing_ids) {
        if (!vocab.contains(t)) {
            fail(ErrorKind::Precondition, "thing class " + std::to_string(t) + " is not in the vocabulary");
        }
    }
    return resolve_panoptic(resolve_label_map(scores, vocab), masks, thing_ids);
}

} // namespace openseg::ensemble
