#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/corpus.hpp"
#include "vr4/text.hpp"

// Rule-based evidence matching: fuzzy OCR/answer scoring, box geometry,
// per-question evidence extraction and difficulty filtering of unmatched
// questions.
namespace vr4::evidence {

using text::TokenSet;

struct MatcherConfig {
    double text_match_threshold = 0.8;
    double name_match_threshold = 0.8;
    double extend_pad_fraction = 0.1;
    double difficulty_lo = 0.2;
    double difficulty_hi = 0.8;

    // Throws InputError when a field is out of range.
    void validate() const;
};

nlohmann::json to_json(const MatcherConfig& cfg);
MatcherConfig matcher_config_from_json(const nlohmann::json& j);

struct EvidenceRecord {
    std::string instance_id;
    std::set<int> relevant_frames;
    std::map<int, BoundingBox> text_box_per_frame;
    std::map<int, BoundingBox> evidence_box_per_frame;
    bool matched = false;
    // Set only by human review; never inferred by the matcher.
    std::optional<bool> helpful;

    bool operator==(const EvidenceRecord&) const = default;
};

nlohmann::json to_json(const EvidenceRecord& ev);
EvidenceRecord evidence_from_json(const nlohmann::json& j);

std::map<std::string, EvidenceRecord> load_evidence(const std::filesystem::path& file);
void write_evidence(const std::filesystem::path& file, std::span<const EvidenceRecord> records);

TokenSet normalize_tokens(std::string_view text);
double normalized_levenshtein(std::string_view a, std::string_view b);

// max over answers of 1 - NL(normalize(s), normalize(a)); lowercase + trim.
// Throws InputError when `answers` is empty.
double score_text(std::string_view s, std::span<const std::string> answers);

// max over tokens u of 1 - NL(normalize(n), u); 0 for an empty set.
double score_name(std::string_view name, const TokenSet& tokens);

double iou(const BoundingBox& a, const BoundingBox& b);

// Pads each side by pad_fraction of the box's own extent (rounded to
// nearest), clamped to the frame.
BoundingBox extend_box(const BoundingBox& box, int frame_width, int frame_height, double pad_fraction);

// Smallest box containing every input. Throws InputError on empty input.
BoundingBox merge_boxes(std::span<const BoundingBox> boxes);

// Throws NotFoundError when the instance's video is absent, InputError when
// the config is invalid.
EvidenceRecord match_question(const QAInstance& q, const Corpus& corpus, const MatcherConfig& cfg);

// 1 - best score_text over every OCR detection of every frame.
double estimate_difficulty(const QAInstance& q, const Corpus& corpus);

struct RlPartition {
    std::vector<std::string> kept;
    std::vector<std::string> dropped;
};

// Only unmatched instances are routed here; matched ones go to trajectory
// synthesis and appear in neither list.
RlPartition partition_rl_candidates(std::span<const QAInstance> instances, const Corpus& corpus,
                                    const MatcherConfig& cfg);

} // namespace vr4::evidence
