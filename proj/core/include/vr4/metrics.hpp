#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/corpus.hpp"

// Text-QA metrics. Answers are compared after lowercasing, trimming and
// collapsing whitespace; F1 token bags additionally drop punctuation.
namespace vr4::metrics {

inline constexpr double kAnlsThreshold = 0.5;

// max over golds of (1 - NL) when NL < tau, else 0. Throws InputError on empty golds.
double anls_score(std::string_view prediction, std::span<const std::string> golds, double tau = kAnlsThreshold);

// 1 when the normalized prediction equals any normalized gold.
double exact_match(std::string_view prediction, std::span<const std::string> golds);

// Best bag-of-tokens F1 over golds. Two empty bags score 1, one empty bag 0.
double macro_f1(std::string_view prediction, std::span<const std::string> golds);

struct PredictionEntry {
    std::string question_id;
    std::string prediction;
    std::vector<std::string> golds;
};

struct MetricRow {
    std::string question_id;
    double anls = 0.0;
    double em = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double anls = 0.0;
    double em = 0.0;
    double macro_f1 = 0.0;
    std::vector<MetricRow> rows;
};

// Rows are sorted by question id. Throws InputError on an empty set or
// duplicate ids.
MetricReport evaluate(std::span<const PredictionEntry> predictions);

// Joins predictions.jsonl ({"id","prediction"}) with gold answers from the
// instances. Throws InputError for unknown ids.
std::vector<PredictionEntry> load_predictions(const std::filesystem::path& file,
                                              std::span<const QAInstance> instances);

nlohmann::json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);
std::string format_table(const MetricReport& report);

} // namespace vr4::metrics
