#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vr4/curriculum.hpp"
#include "vr4/evidence.hpp"

namespace vr4::config {

struct CaptionerSettings {
    std::string kind = "stub";
    std::string url;
    int timeout_ms = 5000;
};

struct QcSettings {
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::string reviewer = "reviewer";
};

// Everything a pipeline run needs. On disk this is one JSON document with
// sections paths, matcher, synthesis, captioner, reward, grpo, training,
// plan, qc and a top-level seed.
struct PipelineConfig {
    std::filesystem::path corpus_root;
    std::filesystem::path out_dir = "out";
    evidence::MatcherConfig matcher;
    std::string template_id = "mixed";
    CaptionerSettings captioner;
    curriculum::TrainingSetup training;
    curriculum::StagePlan plan = curriculum::full_plan();
    QcSettings qc;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const PipelineConfig& cfg);
// Missing sections keep defaults; nested configs are validated.
PipelineConfig config_from_json(const nlohmann::json& doc);

// Reads the config file; an empty path yields an empty document.
nlohmann::json load_config_document(const std::filesystem::path& file);

// VIDEOR4_SECTION__KEY=value sets doc.section.key (lowercased; "__" nests
// further). Values are parsed as JSON when possible, otherwise kept as text.
nlohmann::json apply_env_overrides(nlohmann::json doc, const std::map<std::string, std::string>& env,
                                   std::string_view prefix = "VIDEOR4_");

std::map<std::string, std::string> process_environment();

// File, then environment, then flag overrides (a JSON merge patch).
PipelineConfig resolve_config(const std::filesystem::path& file, const std::map<std::string, std::string>& env,
                              const nlohmann::json& flag_overrides);

std::string config_hash(const PipelineConfig& cfg);

} // namespace vr4::config
