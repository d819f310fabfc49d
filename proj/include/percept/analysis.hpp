#pragma once

// Post-hoc interpretability: which relational motifs separate low-scoring
// from high-scoring scenes, how graph-diversity statistics correlate with
// scores, and how metrics shift across cities.

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "percept/errors.hpp"
#include "percept/ranker.hpp"
#include "percept/scene_graph.hpp"

namespace percept {

struct MotifKey {
    std::string subject;
    std::string predicate;
    std::string object;

    auto operator<=>(const MotifKey&) const = default;
};

struct MotifReportRow {
    MotifKey motif;
    double low_freq = 0.0;   // share of bottom-quantile scenes containing the motif
    double high_freq = 0.0;  // share of top-quantile scenes containing the motif
    double log_odds = 0.0;   // smoothed; positive = associated with low scores
    std::size_t support = 0;  // containing scenes across both buckets
};

// Binary motif presence per scene (a motif repeated within one scene counts
// once).
inline std::set<MotifKey> scene_motifs(const SceneGraph& g) {
    std::set<MotifKey> out;
    for (const auto& e : g.edges) {
        const std::size_t si = g.node_index(e.src), oi = g.node_index(e.dst);
        out.insert({g.nodes[si].label, e.predicate, g.nodes[oi].label});
    }
    return out;
}

struct ScoredGraph {
    const SceneGraph* graph = nullptr;
    double score = 0.0;
};

// Contrasts motif presence between the bottom-q and top-q score buckets.
// Frequencies get add-one smoothing before the log-odds, so a motif present
// equally often in both buckets lands at exactly 0 and rare motifs stay
// finite. Rows are sorted most-low-score-associated first; ties break on the
// motif key so the output is independent of input order.
inline std::vector<MotifReportRow> motif_lift(std::vector<ScoredGraph> scenes, double q,
                                              std::size_t min_support) {
    if (!(q > 0.0 && q <= 0.5)) throw DataError("motif_lift: quantile must be in (0, 0.5]");
    const std::size_t n = scenes.size();
    const auto bucket = static_cast<std::size_t>(std::floor(q * static_cast<double>(n)));
    if (bucket == 0) throw DataError("motif_lift: empty bucket (need at least 2/q scenes)");
    std::sort(scenes.begin(), scenes.end(), [](const ScoredGraph& a, const ScoredGraph& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.graph->scene_id < b.graph->scene_id;
    });
    std::map<MotifKey, std::pair<std::size_t, std::size_t>> counts;  // low, high
    for (std::size_t i = 0; i < bucket; ++i)
        for (const auto& m : scene_motifs(*scenes[i].graph)) ++counts[m].first;
    for (std::size_t i = n - bucket; i < n; ++i)
        for (const auto& m : scene_motifs(*scenes[i].graph)) ++counts[m].second;

    const double k = static_cast<double>(bucket);
    std::vector<MotifReportRow> rows;
    for (const auto& [motif, c] : counts) {
        MotifReportRow row;
        row.motif = motif;
        row.support = c.first + c.second;
        if (row.support < min_support) continue;
        row.low_freq = static_cast<double>(c.first) / k;
        row.high_freq = static_cast<double>(c.second) / k;
        const double low_sm = (static_cast<double>(c.first) + 1.0) / (k + 2.0);
        const double high_sm = (static_cast<double>(c.second) + 1.0) / (k + 2.0);
        row.log_odds = std::log(low_sm / (1.0 - low_sm)) - std::log(high_sm / (1.0 - high_sm));
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const MotifReportRow& a, const MotifReportRow& b) {
        if (a.log_odds != b.log_odds) return a.log_odds > b.log_odds;
        return a.motif < b.motif;
    });
    return rows;
}

namespace detail {

inline std::vector<double> midranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && x[idx[j]] == x[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = midrank;
        i = j;
    }
    return ranks;
}

}  // namespace detail

// Spearman rank correlation with midrank tie handling. nullopt when either
// side has zero variance (undefined, deliberately not reported as 0).
inline std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DataError("spearman: length mismatch");
    if (x.size() < 2) throw DataError("spearman: need at least 2 observations");
    const std::vector<double> rx = detail::midranks(x), ry = detail::midranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

struct DiversityCorrelation {
    std::optional<double> edge_count;
    std::optional<double> distinct_node_labels;
    std::optional<double> distinct_predicates;
    std::optional<double> label_entropy;
};

// Spearman rho between each graph-diversity statistic and the score.
inline DiversityCorrelation diversity_correlation(
    const std::vector<std::pair<GraphStats, double>>& scored_stats) {
    if (scored_stats.size() < 3)
        throw DataError("diversity_correlation: need at least 3 scenes");
    std::vector<double> scores;
    scores.reserve(scored_stats.size());
    for (const auto& [stats, s] : scored_stats) scores.push_back(s);
    auto column = [&](auto getter) {
        std::vector<double> v;
        v.reserve(scored_stats.size());
        for (const auto& [stats, s] : scored_stats) v.push_back(getter(stats));
        return spearman(v, scores);
    };
    DiversityCorrelation out;
    out.edge_count = column([](const GraphStats& s) { return static_cast<double>(s.edge_count); });
    out.distinct_node_labels =
        column([](const GraphStats& s) { return static_cast<double>(s.distinct_node_labels); });
    out.distinct_predicates =
        column([](const GraphStats& s) { return static_cast<double>(s.distinct_predicates); });
    out.label_entropy = column([](const GraphStats& s) { return s.label_entropy; });
    return out;
}

struct CrossCityRow {
    std::string metric;
    double source = 0.0;
    double target = 0.0;
    std::optional<double> change_pct;  // (target - source)/source * 100; nullopt when source == 0
};

// One row per metric, in the report layout order (accuracy and AUC first).
inline std::vector<CrossCityRow> cross_city_report(const MetricReport& source,
                                                   const MetricReport& target) {
    auto change = [](double s, double t) -> std::optional<double> {
        if (s == 0.0) return std::nullopt;
        return (t - s) / s * 100.0;
    };
    std::vector<CrossCityRow> rows;
    auto push = [&](const std::string& name, double s, double t) {
        rows.push_back({name, s, t, change(s, t)});
    };
    push("Accuracy", source.accuracy, target.accuracy);
    push("AUC", source.auc, target.auc);
    push("recall", source.recall, target.recall);
    push("f1", source.f1, target.f1);
    push("precision", source.precision, target.precision);
    return rows;
}

}  // namespace percept
