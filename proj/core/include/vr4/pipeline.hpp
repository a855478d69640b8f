#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/captioner.hpp"
#include "vr4/config.hpp"
#include "vr4/curriculum.hpp"

// Library side of the video-r4 subcommands. Each command reads its inputs
// from the config, writes its outputs under cfg.out_dir and returns a summary.
namespace vr4::pipeline {

inline constexpr const char* kEvidenceFile = "evidence.jsonl";
inline constexpr const char* kRlCandidatesFile = "rl_candidates.jsonl";
inline constexpr const char* kTrajectoriesFile = "trajectories.jsonl";
inline constexpr const char* kQuarantineFile = "quarantine.jsonl";
inline constexpr const char* kValidatedFile = "validated.jsonl";
inline constexpr const char* kScheduleReportFile = "schedule_report.json";
inline constexpr const char* kAblationReportFile = "ablation_report.json";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kDecisionLogFile = "qc_decisions.jsonl";

struct MatchSummary {
    std::size_t matched = 0;
    std::size_t unmatched = 0;
    std::size_t kept = 0;

    std::string line() const;
};

// Writes evidence.jsonl (one record per instance, file order) and
// rl_candidates.jsonl (kept unmatched instances with their difficulty).
MatchSummary cmd_match(const config::PipelineConfig& cfg);

struct SynthesisSummary {
    std::size_t rendered = 0;
    std::size_t valid = 0;
    std::size_t quarantined = 0;

    std::string line() const;
};

// Renders, fills and validates one trajectory per matched record. Valid ones
// go to trajectories.jsonl, the rest to quarantine.jsonl with violations.
// `client` overrides the configured captioner.
SynthesisSummary cmd_synthesize(const config::PipelineConfig& cfg, CaptionerClient* client = nullptr);

// Revalidates a trajectories file; valid ones go to validated.jsonl.
SynthesisSummary cmd_validate(const config::PipelineConfig& cfg, const std::filesystem::path& trajectories);

// Runs the configured plan, or every ablation plan when given (seeds are
// cfg.seed, cfg.seed + 1, ...). Returns the written report.
nlohmann::json cmd_train(const config::PipelineConfig& cfg, std::span<const curriculum::StagePlan> ablation = {},
                         std::size_t seeds = 1);

// Scores predictions.jsonl against the corpus gold answers.
nlohmann::json cmd_eval(const config::PipelineConfig& cfg, const std::filesystem::path& predictions);

// Human-readable rendering of any report written by the commands above.
std::string format_report(const nlohmann::json& report);

nlohmann::json read_json_file(const std::filesystem::path& file);
void write_json_file(const std::filesystem::path& file, const nlohmann::json& j);

} // namespace vr4::pipeline
