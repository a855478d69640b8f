#include "vr4/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "vr4/error.hpp"
#include "vr4/evidence.hpp"
#include "vr4/metrics.hpp"
#include "vr4/trajectory.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace vr4::pipeline {

namespace {

void require_dir(const fs::path& p, const char* what)
{
    if (p.empty()) throw InputError(std::string(what) + " is not configured");
    if (!fs::is_directory(p)) throw InputError(std::string(what) + " does not exist: " + p.string());
}

void require_file(const fs::path& p, const char* what)
{
    if (!fs::is_regular_file(p)) throw InputError(std::string(what) + " does not exist: " + p.string());
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw InputError("cannot write " + file.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw InputError("failed writing " + file.string());
}

std::string quarantine_line(const trajectory::Trajectory& t, const std::vector<trajectory::Violation>& violations)
{
    json v = json::array();
    for (const auto& x : violations) v.push_back(trajectory::to_json(x));
    nlohmann::ordered_json line;
    line["trajectory"] = trajectory::to_json(t);
    line["violations"] = json::parse(v.dump());
    return line.dump();
}

std::string fmt(const char* format, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

} // namespace

std::string MatchSummary::line() const
{
    return "matched=" + std::to_string(matched) + " unmatched=" + std::to_string(unmatched) +
           " kept=" + std::to_string(kept);
}

std::string SynthesisSummary::line() const
{
    return "rendered=" + std::to_string(rendered) + " valid=" + std::to_string(valid) +
           " quarantined=" + std::to_string(quarantined);
}

json read_json_file(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw InputError("missing file: " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(file.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& file, const json& j)
{
    write_lines(file, {j.dump(2)});
}

MatchSummary cmd_match(const config::PipelineConfig& cfg)
{
    require_dir(cfg.corpus_root, "corpus root");
    cfg.matcher.validate();
    const auto corpus = load_corpus(cfg.corpus_root);
    if (corpus.instances().empty()) throw InputError("corpus has no QA instances");

    MatchSummary summary;
    std::vector<evidence::EvidenceRecord> records;
    for (const auto& q : corpus.instances()) {
        records.push_back(evidence::match_question(q, corpus, cfg.matcher));
        ++(records.back().matched ? summary.matched : summary.unmatched);
    }
    const auto partition = evidence::partition_rl_candidates(corpus.instances(), corpus, cfg.matcher);
    summary.kept = partition.kept.size();

    fs::create_directories(cfg.out_dir);
    evidence::write_evidence(cfg.out_dir / kEvidenceFile, records);
    std::vector<std::string> lines;
    for (const auto& id : partition.kept) {
        nlohmann::ordered_json j;
        j["id"] = id;
        j["difficulty"] = evidence::estimate_difficulty(corpus.instance(id), corpus);
        lines.push_back(j.dump());
    }
    write_lines(cfg.out_dir / kRlCandidatesFile, lines);
    return summary;
}

SynthesisSummary cmd_synthesize(const config::PipelineConfig& cfg, CaptionerClient* client)
{
    require_dir(cfg.corpus_root, "corpus root");
    const auto evidence_path = cfg.out_dir / kEvidenceFile;
    require_file(evidence_path, "evidence file (run match first)");
    const auto corpus = load_corpus(cfg.corpus_root);
    const auto records = evidence::load_evidence(evidence_path);

    std::unique_ptr<CaptionerClient> owned;
    if (!client) {
        owned = make_captioner(cfg.captioner.kind, cfg.captioner.url, cfg.captioner.timeout_ms);
        client = owned.get();
    }

    SynthesisSummary summary;
    std::vector<std::string> valid;
    std::vector<std::string> quarantined;
    for (const auto& q : corpus.instances()) {
        auto it = records.find(q.id);
        if (it == records.end() || !it->second.matched) continue;
        ++summary.rendered;
        auto t = trajectory::render_trajectory(it->second, q, cfg.template_id);
        try {
            t = trajectory::fill_placeholders(t, corpus.video(q.video_ref), q, *client);
        } catch (const trajectory::FillError& e) {
            quarantined.push_back(quarantine_line(
                t, {trajectory::Violation{trajectory::ViolationKind::format, e.turn(), e.what()}}));
            continue;
        }
        const auto report = trajectory::validate_trajectory(t, corpus, it->second);
        if (report.ok()) {
            valid.push_back(trajectory::to_json(t).dump());
        } else {
            quarantined.push_back(quarantine_line(t, report.violations));
        }
    }
    summary.valid = valid.size();
    summary.quarantined = quarantined.size();
    write_lines(cfg.out_dir / kTrajectoriesFile, valid);
    write_lines(cfg.out_dir / kQuarantineFile, quarantined);
    return summary;
}

SynthesisSummary cmd_validate(const config::PipelineConfig& cfg, const fs::path& trajectories)
{
    require_dir(cfg.corpus_root, "corpus root");
    require_file(trajectories, "trajectories file");
    const auto evidence_path = cfg.out_dir / kEvidenceFile;
    require_file(evidence_path, "evidence file (run match first)");
    const auto corpus = load_corpus(cfg.corpus_root);
    const auto records = evidence::load_evidence(evidence_path);
    const auto items = trajectory::load_trajectories(trajectories);

    SynthesisSummary summary;
    std::vector<std::string> valid;
    std::vector<std::string> quarantined;
    for (const auto& t : items) {
        ++summary.rendered;
        auto it = records.find(t.instance_id);
        evidence::EvidenceRecord missing;
        missing.instance_id = t.instance_id;
        const auto report = trajectory::validate_trajectory(t, corpus, it != records.end() ? it->second : missing);
        if (report.ok()) {
            valid.push_back(trajectory::to_json(t).dump());
        } else {
            quarantined.push_back(quarantine_line(t, report.violations));
        }
    }
    summary.valid = valid.size();
    summary.quarantined = quarantined.size();
    write_lines(cfg.out_dir / kValidatedFile, valid);
    write_lines(cfg.out_dir / kQuarantineFile, quarantined);
    return summary;
}

json cmd_train(const config::PipelineConfig& cfg, std::span<const curriculum::StagePlan> ablation, std::size_t seeds)
{
    if (seeds == 0) throw InputError("at least one seed is required");
    auto setup = cfg.training;
    setup.checkpoint_dir = cfg.out_dir / "checkpoints";
    const auto hash = config::config_hash(cfg);
    if (ablation.empty()) {
        auto report = curriculum::run_schedule(cfg.plan, setup, cfg.seed);
        report.config_hash = hash;
        const auto j = curriculum::to_json(report);
        write_json_file(cfg.out_dir / kScheduleReportFile, j);
        return j;
    }
    setup.checkpoint_dir.clear();
    std::vector<std::uint64_t> seed_list;
    for (std::size_t k = 0; k < seeds; ++k) seed_list.push_back(cfg.seed + k);
    auto report = curriculum::run_ablation(ablation, setup, seed_list);
    for (auto& run : report.runs) run.config_hash = hash;
    auto j = curriculum::to_json(report);
    j["config_hash"] = hash;
    write_json_file(cfg.out_dir / kAblationReportFile, j);
    return j;
}

json cmd_eval(const config::PipelineConfig& cfg, const fs::path& predictions)
{
    require_dir(cfg.corpus_root, "corpus root");
    require_file(predictions, "predictions file");
    const auto instances = load_instances(cfg.corpus_root / "instances.jsonl");
    const auto entries = metrics::load_predictions(predictions, instances);
    auto j = metrics::to_json(metrics::evaluate(entries));
    j["config_hash"] = config::config_hash(cfg);
    write_json_file(cfg.out_dir / kMetricsFile, j);
    return j;
}

std::string format_report(const json& report)
{
    if (!report.is_object()) throw InputError("report must be a JSON object");
    try {
        if (report.contains("anls") && report.contains("rows")) {
            return "normalization: " + report.value("normalization", std::string("?")) + "\n" +
                   metrics::format_table(metrics::metric_report_from_json(report));
        }
        if (report.contains("stages") && report.contains("final_eval")) {
            std::string out = "plan: " + report.at("plan").get<std::string>() + "\n";
            out += "seed: " + std::to_string(report.at("seed").get<std::uint64_t>()) + "\n";
            out += "config hash: " + report.value("config_hash", std::string()) + "\n";
            const auto& g = report.at("grpo");
            out += "clip epsilon " + fmt("%g", g.at("clip_epsilon").get<double>()) + ", KL coefficient " +
                   fmt("%g", g.at("kl_coef").get<double>()) + ", group size " +
                   std::to_string(g.at("group_size").get<int>()) + "\n";
            out += "reference policy: " + report.value("reference_policy", std::string()) + "\n\n";
            char buf[256];
            std::snprintf(buf, sizeof buf, "%-10s %-5s %6s %8s %12s %8s %8s %10s\n", "stage", "kind", "steps", "lr",
                          "final", "clip%", "crop%", "calls/ep");
            out += buf;
            for (const auto& s : report.at("stages")) {
                const auto& u = s.at("tool_usage");
                std::snprintf(buf, sizeof buf, "%-10s %-5s %6d %8g %12.6f %8.3f %8.3f %10.3f\n",
                              s.at("name").get<std::string>().c_str(), s.at("kind").get<std::string>().c_str(),
                              s.at("steps").get<int>(), s.at("learning_rate").get<double>(),
                              s.at("final_value").get<double>(), u.at("clip_fraction").get<double>(),
                              u.at("crop_fraction").get<double>(), u.at("calls_per_episode").get<double>());
                out += buf;
            }
            const auto& e = report.at("final_eval");
            std::snprintf(buf, sizeof buf, "\nfinal evaluation: mean reward %.6f, accuracy %.4f over %zu episodes\n",
                          e.at("mean_reward").get<double>(), e.at("accuracy").get<double>(),
                          e.at("episodes").get<std::size_t>());
            out += buf;
            return out;
        }
        if (report.contains("rows") && report.contains("seeds")) {
            std::string out = "seeds:";
            for (const auto& s : report.at("seeds")) out += " " + std::to_string(s.get<std::uint64_t>());
            out += "\n";
            std::size_t width = 4;
            for (const auto& r : report.at("rows")) width = std::max(width, r.at("plan").get<std::string>().size());
            char buf[512];
            std::snprintf(buf, sizeof buf, "%-*s  %12s\n", static_cast<int>(width), "plan", "mean reward");
            out += buf;
            for (const auto& r : report.at("rows")) {
                std::snprintf(buf, sizeof buf, "%-*s  %12.6f\n", static_cast<int>(width),
                              r.at("plan").get<std::string>().c_str(), r.at("mean_reward").get<double>());
                out += buf;
            }
            return out;
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed report: ") + e.what());
    }
    throw InputError("unrecognized report format");
}

} // namespace vr4::pipeline
