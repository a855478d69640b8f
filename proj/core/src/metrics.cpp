#include "vr4/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "vr4/error.hpp"
#include "vr4/text.hpp"

using nlohmann::json;

namespace vr4::metrics {

namespace {

void require_golds(std::span<const std::string> golds, const char* who)
{
    if (golds.empty()) throw InputError(std::string(who) + ": empty gold answers");
}

double bag_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold)
{
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : gold) ++counts[t];
    int common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace

double anls_score(std::string_view prediction, std::span<const std::string> golds, double tau)
{
    require_golds(golds, "anls_score");
    const auto pred = text::normalize_answer(prediction);
    double best = 0.0;
    for (const auto& g : golds) {
        const double nl = text::normalized_levenshtein(text::normalize_answer(g), pred);
        if (nl < tau) best = std::max(best, 1.0 - nl);
    }
    return best;
}

double exact_match(std::string_view prediction, std::span<const std::string> golds)
{
    require_golds(golds, "exact_match");
    const auto pred = text::normalize_answer(prediction);
    for (const auto& g : golds) {
        if (text::normalize_answer(g) == pred) return 1.0;
    }
    return 0.0;
}

double macro_f1(std::string_view prediction, std::span<const std::string> golds)
{
    require_golds(golds, "macro_f1");
    const auto pred = text::tokenize(prediction);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, bag_f1(pred, text::tokenize(g)));
    return best;
}

MetricReport evaluate(std::span<const PredictionEntry> predictions)
{
    if (predictions.empty()) throw InputError("evaluate: empty prediction set");
    std::set<std::string> ids;
    MetricReport report;
    for (const auto& p : predictions) {
        if (!ids.insert(p.question_id).second) throw InputError("evaluate: duplicate question id '" + p.question_id + "'");
        report.rows.push_back(MetricRow{p.question_id, anls_score(p.prediction, p.golds),
                                        exact_match(p.prediction, p.golds), macro_f1(p.prediction, p.golds)});
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const MetricRow& a, const MetricRow& b) { return a.question_id < b.question_id; });
    for (const auto& r : report.rows) {
        report.anls += r.anls;
        report.em += r.em;
        report.macro_f1 += r.f1;
    }
    const double n = static_cast<double>(report.rows.size());
    report.anls /= n;
    report.em /= n;
    report.macro_f1 /= n;
    return report;
}

std::vector<PredictionEntry> load_predictions(const std::filesystem::path& file, std::span<const QAInstance> instances)
{
    std::map<std::string, const QAInstance*> by_id;
    for (const auto& q : instances) by_id.emplace(q.id, &q);
    std::ifstream in(file);
    if (!in) throw InputError("missing file: " + file.string());
    std::vector<PredictionEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw RecordError(file.string(), lineno, "<record>", e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.at("id").is_string()) {
            throw RecordError(file.string(), lineno, "id", "expected string");
        }
        if (!j.contains("prediction") || !j.at("prediction").is_string()) {
            throw RecordError(file.string(), lineno, "prediction", "expected string");
        }
        const auto id = j.at("id").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end()) throw RecordError(file.string(), lineno, "id", "unknown question id '" + id + "'");
        out.push_back(PredictionEntry{id, j.at("prediction").get<std::string>(), it->second->answers});
    }
    return out;
}

json to_json(const MetricReport& report)
{
    json rows = json::array();
    for (const auto& r : report.rows) rows.push_back({{"id", r.question_id}, {"anls", r.anls}, {"em", r.em}, {"f1", r.f1}});
    return json{{"normalization", "lowercase, trim, collapse whitespace; F1 tokens also drop punctuation"},
                {"anls_threshold", kAnlsThreshold},
                {"anls", report.anls},
                {"em", report.em},
                {"macro_f1", report.macro_f1},
                {"rows", std::move(rows)}};
}

MetricReport metric_report_from_json(const json& j)
{
    MetricReport report;
    try {
        report.anls = j.at("anls").get<double>();
        report.em = j.at("em").get<double>();
        report.macro_f1 = j.at("macro_f1").get<double>();
        for (const auto& r : j.at("rows")) {
            report.rows.push_back(MetricRow{r.at("id").get<std::string>(), r.at("anls").get<double>(),
                                            r.at("em").get<double>(), r.at("f1").get<double>()});
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed metric report: ") + e.what());
    }
    return report;
}

std::string format_table(const MetricReport& report)
{
    std::size_t width = 8;
    for (const auto& r : report.rows) width = std::max(width, r.question_id.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s\n", static_cast<int>(width), "question", "ANLS", "EM", "F1");
    out += buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f\n", static_cast<int>(width), r.question_id.c_str(),
                      r.anls, r.em, r.f1);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f\n", static_cast<int>(width), "MEAN", report.anls,
                  report.em, report.macro_f1);
    out += buf;
    return out;
}

} // namespace vr4::metrics
