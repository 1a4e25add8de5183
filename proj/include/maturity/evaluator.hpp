#pragma once

#include <array>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maturity/errors.hpp"
#include "maturity/policy.hpp"

namespace maturity {

// counts[actual][predicted], indexed by rating rank.
struct ConfusionMatrix {
    std::array<std::array<size_t, kRatingCount>, kRatingCount> counts{};
    size_t total = 0;

    size_t at(RatingLevel actual, RatingLevel predicted) const {
        return counts[static_cast<size_t>(rating_rank(actual))]
                     [static_cast<size_t>(rating_rank(predicted))];
    }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t support = 0;
    bool no_predictions = false;  // flagged when the zero-division rule fired
};

struct AverageMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    std::string strategy_label;
    std::string modality;
    double accuracy = 0.0;
    std::map<RatingLevel, ClassMetrics> per_class;
    AverageMetrics macro;
    AverageMetrics weighted;  // support-weighted, for comparing conventions
    size_t total = 0;
};

inline ConfusionMatrix confusion_matrix(
    const std::vector<std::pair<RatingLevel, RatingLevel>>& pairs) {
    ConfusionMatrix matrix;
    for (const auto& [actual, predicted] : pairs) {
        ++matrix.counts[static_cast<size_t>(rating_rank(actual))]
                       [static_cast<size_t>(rating_rank(predicted))];
        ++matrix.total;
    }
    return matrix;
}

// Standard multi-class metrics. Empty classes score 0, never NaN.
inline MetricsReport metrics(const ConfusionMatrix& matrix) {
    MetricsReport report;
    report.total = matrix.total;

    size_t diagonal = 0;
    for (int i = 0; i < kRatingCount; ++i)
        diagonal += matrix.counts[static_cast<size_t>(i)][static_cast<size_t>(i)];
    report.accuracy = matrix.total == 0
                          ? 0.0
                          : static_cast<double>(diagonal) / static_cast<double>(matrix.total);

    size_t support_sum = 0;
    for (RatingLevel rating : all_ratings()) {
        const auto r = static_cast<size_t>(rating_rank(rating));
        size_t row_sum = 0;
        size_t col_sum = 0;
        for (size_t j = 0; j < kRatingCount; ++j) {
            row_sum += matrix.counts[r][j];
            col_sum += matrix.counts[j][r];
        }
        const auto true_positive = static_cast<double>(matrix.counts[r][r]);

        ClassMetrics cm;
        cm.support = row_sum;
        cm.no_predictions = col_sum == 0;
        cm.precision = col_sum == 0 ? 0.0 : true_positive / static_cast<double>(col_sum);
        cm.recall = row_sum == 0 ? 0.0 : true_positive / static_cast<double>(row_sum);
        cm.f1 = (cm.precision + cm.recall) == 0.0
                    ? 0.0
                    : 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
        report.per_class[rating] = cm;

        report.macro.precision += cm.precision / kRatingCount;
        report.macro.recall += cm.recall / kRatingCount;
        report.macro.f1 += cm.f1 / kRatingCount;

        report.weighted.precision += cm.precision * static_cast<double>(cm.support);
        report.weighted.recall += cm.recall * static_cast<double>(cm.support);
        report.weighted.f1 += cm.f1 * static_cast<double>(cm.support);
        support_sum += cm.support;
    }
    if (support_sum > 0) {
        report.weighted.precision /= static_cast<double>(support_sum);
        report.weighted.recall /= static_cast<double>(support_sum);
        report.weighted.f1 /= static_cast<double>(support_sum);
    }
    return report;
}

enum class ReportFormat { TableText, Csv, Json };

namespace detail {

inline std::string percent(double fraction) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << fraction * 100.0 << "%";
    return out.str();
}

inline std::string csv_number(double fraction) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << fraction * 100.0;
    return out.str();
}

}  // namespace detail

inline nlohmann::json metrics_report_to_json(const MetricsReport& report) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [rating, cm] : report.per_class) {
        per_class[std::string(rating_label(rating))] = {
            {"precision", cm.precision}, {"recall", cm.recall},     {"f1", cm.f1},
            {"support", cm.support},     {"no_predictions", cm.no_predictions}};
    }
    return nlohmann::json{
        {"strategy", report.strategy_label},
        {"modality", report.modality},
        {"accuracy", report.accuracy},
        {"total", report.total},
        {"per_class", per_class},
        {"macro",
         {{"precision", report.macro.precision},
          {"recall", report.macro.recall},
          {"f1", report.macro.f1}}},
        {"weighted",
         {{"precision", report.weighted.precision},
          {"recall", report.weighted.recall},
          {"f1", report.weighted.f1}}}};
}

// Rows sorted by macro F1 descending, mirroring the comparison-table layout:
// Method | Modality | Accuracy | Precision | Recall | F1-score.
inline std::string render_report(std::vector<MetricsReport> reports, ReportFormat format) {
    if (reports.empty()) throw Error("render_report: no reports");
    std::stable_sort(reports.begin(), reports.end(),
                     [](const MetricsReport& a, const MetricsReport& b) {
                         return a.macro.f1 > b.macro.f1;
                     });

    if (format == ReportFormat::Json) {
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& report : reports) doc.push_back(metrics_report_to_json(report));
        return doc.dump(2) + "\n";
    }

    if (format == ReportFormat::Csv) {
        std::ostringstream out;
        out << "method,modality,accuracy,precision,recall,f1\n";
        for (const auto& report : reports) {
            out << '"' << report.strategy_label << "\"," << report.modality << ","
                << detail::csv_number(report.accuracy) << ","
                << detail::csv_number(report.macro.precision) << ","
                << detail::csv_number(report.macro.recall) << ","
                << detail::csv_number(report.macro.f1) << "\n";
        }
        return out.str();
    }

    // Aligned text table.
    std::vector<std::array<std::string, 6>> rows;
    rows.push_back({"Method", "Modality", "Accuracy", "Precision", "Recall", "F1-score"});
    for (const auto& report : reports) {
        rows.push_back({report.strategy_label, report.modality,
                        detail::percent(report.accuracy),
                        detail::percent(report.macro.precision),
                        detail::percent(report.macro.recall),
                        detail::percent(report.macro.f1)});
    }
    std::array<size_t, 6> widths{};
    for (const auto& row : rows)
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    std::ostringstream out;
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t c = 0; c < rows[r].size(); ++c) {
            out << std::left << std::setw(static_cast<int>(widths[c])) << rows[r][c];
            out << (c + 1 < rows[r].size() ? "  " : "");
        }
        out << "\n";
        if (r == 0) {
            for (size_t c = 0; c < widths.size(); ++c)
                out << std::string(widths[c], '-') << (c + 1 < widths.size() ? "  " : "");
            out << "\n";
        }
    }
    return out.str();
}

// 4x4 CSV with labeled axes; rows are actual, columns predicted.
inline std::string confusion_matrix_csv(const ConfusionMatrix& matrix) {
    std::ostringstream out;
    out << "actual\\predicted";
    for (RatingLevel predicted : all_ratings()) out << "," << rating_label(predicted);
    out << "\n";
    for (RatingLevel actual : all_ratings()) {
        out << rating_label(actual);
        for (RatingLevel predicted : all_ratings()) out << "," << matrix.at(actual, predicted);
        out << "\n";
    }
    return out.str();
}

}  // namespace maturity
