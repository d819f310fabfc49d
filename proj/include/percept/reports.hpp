#pragma once

// Tabular report rendering. Every report is emitted twice: TSV (full-precision
// values for machines) and an aligned text table (two-decimal values). Column
// orders are fixed: metrics as AUC/accuracy/recall/f1/precision, dimensions
// alphabetically with the "safety" header token, cross-city as
// Metric/source/target/Change with a signed one-decimal change.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "percept/analysis.hpp"
#include "percept/ranker.hpp"
#include "percept/util.hpp"

namespace percept {

using TableCells = std::vector<std::vector<std::string>>;

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string fmt_change(const std::optional<double>& pct) {
    if (!pct) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f%%", *pct);
    return buf;
}

inline std::string render_tsv(const TableCells& cells) {
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += '\t';
            out += row[i];
        }
        out += '\n';
    }
    return out;
}

inline std::string render_aligned(const TableCells& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += "  ";
            out += row[i];
            if (i + 1 < row.size())
                out.append(widths[i] - row[i].size(), ' ');
        }
        out += '\n';
    }
    return out;
}

// The table-2 header uses "safety" where data files use "safe".
inline std::string dimension_header(Dimension d) {
    return d == Dimension::safe ? "safety" : to_string(d);
}

struct LabeledReport {
    std::string label;
    MetricReport report;
};

inline TableCells table1_cells(const std::vector<LabeledReport>& rows, bool full_precision) {
    TableCells cells;
    cells.push_back({"Model", "AUC", "accuracy", "recall", "f1", "precision"});
    auto fmt = [&](double v) { return full_precision ? format_double(v) : fmt2(v); };
    for (const auto& r : rows)
        cells.push_back({r.label, fmt(r.report.auc), fmt(r.report.accuracy),
                         fmt(r.report.recall), fmt(r.report.f1), fmt(r.report.precision)});
    return cells;
}

inline TableCells table2_cells(const std::string& model_label, const DimensionAccuracies& acc,
                               bool full_precision) {
    TableCells cells;
    std::vector<std::string> header{"Model"};
    for (Dimension d : kAllDimensions) header.push_back(dimension_header(d));
    header.push_back("average");
    cells.push_back(std::move(header));
    auto fmt = [&](double v) { return full_precision ? format_double(v) : fmt2(v); };
    std::vector<std::string> row{model_label};
    for (Dimension d : kAllDimensions) {
        auto it = acc.per_dimension.find(d);
        row.push_back(it == acc.per_dimension.end() ? "n/a" : fmt(it->second));
    }
    row.push_back(fmt(acc.mean));
    cells.push_back(std::move(row));
    return cells;
}

inline TableCells table3_cells(const std::vector<CrossCityRow>& rows,
                               const std::string& source_label, const std::string& target_label,
                               bool full_precision) {
    TableCells cells;
    cells.push_back({"Metric", source_label, target_label, "Change"});
    auto fmt = [&](double v) { return full_precision ? format_double(v) : fmt2(v); };
    for (const auto& r : rows)
        cells.push_back({r.metric, fmt(r.source), fmt(r.target), fmt_change(r.change_pct)});
    return cells;
}

inline TableCells motif_cells(const std::vector<MotifReportRow>& rows) {
    TableCells cells;
    cells.push_back({"subject", "predicate", "object", "low_freq", "high_freq", "log_odds",
                     "support"});
    for (const auto& r : rows)
        cells.push_back({r.motif.subject, r.motif.predicate, r.motif.object,
                         format_double(r.low_freq), format_double(r.high_freq),
                         format_double(r.log_odds), std::to_string(r.support)});
    return cells;
}

}  // namespace percept
