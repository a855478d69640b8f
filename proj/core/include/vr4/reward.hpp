#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/env.hpp"

// Composite episode reward: base correctness/format reward plus diversity,
// representativeness and curiosity terms, each weighted by its lambda.
namespace vr4::reward {

struct RewardConfig {
    double lambda_div = 1.0;
    double lambda_rep = 1.0;
    double lambda_cur = 1.0;
    // Curiosity bonus scale, excess-call penalty slope and usage threshold.
    double alpha = 0.5;
    double beta = 0.05;
    double usage_threshold = 0.3;
    int max_free_calls = 3;
    double format_bonus = 0.5;
    // Representativeness of an empty last clip is exp(-empty_clip_distance).
    double empty_clip_distance = 10.0;

    void validate() const;
};

nlohmann::json to_json(const RewardConfig& cfg);
// Missing keys keep their defaults.
RewardConfig reward_config_from_json(const nlohmann::json& j, RewardConfig base = {});

struct RewardBreakdown {
    double base = 0.0;
    double diversity = 0.0;
    double representativeness = 0.0;
    double curiosity = 0.0;
    double total = 0.0;

    bool operator==(const RewardBreakdown&) const = default;
};

nlohmann::json to_json(const RewardBreakdown& b);

struct GroupCallStats {
    std::vector<bool> used_tool;
    std::vector<int> call_counts;

    std::size_t size() const { return call_counts.size(); }
};

GroupCallStats group_call_stats(std::span<const env::EpisodeRecord> episodes);

// 1 - cos(u, v). Throws InputError for zero vectors or mismatched sizes.
double cosine_distance(const FeatureVector& u, const FeatureVector& v);

// Mean cosine distance over ordered pairs i != j; 0 for fewer than two regions.
double diversity_reward(std::span<const FeatureVector> regions);

// exp(-mean_i min_j ||v_i - c_j||) over frames v_i and last-clip members c_j.
double representativeness_reward(std::span<const FeatureVector> all_frames, std::span<const FeatureVector> last_clip,
                                 double empty_clip_distance = 10.0);

double curiosity_reward(const GroupCallStats& stats, std::size_t rollout, const RewardConfig& cfg);

// Normalized exact match plus the format bonus when the episode is well formed.
double base_reward(const env::EpisodeRecord& episode, std::span<const std::string> golds, const RewardConfig& cfg);

std::vector<RewardBreakdown> total_reward(std::span<const env::EpisodeRecord> episodes,
                                          std::span<const std::string> golds, const RewardConfig& cfg);

} // namespace vr4::reward
