#include "vr4/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vr4/error.hpp"
#include "vr4/text.hpp"

using nlohmann::json;

namespace vr4::reward {

void RewardConfig::validate() const
{
    if (lambda_div < 0 || lambda_rep < 0 || lambda_cur < 0) throw InputError("reward lambdas must be >= 0");
    if (alpha < 0 || beta < 0) throw InputError("reward alpha and beta must be >= 0");
    if (usage_threshold < 0 || usage_threshold > 1) throw InputError("reward usage threshold H must be in [0,1]");
    if (max_free_calls < 1) throw InputError("reward N must be a positive integer");
    if (format_bonus < 0) throw InputError("reward format_bonus must be >= 0");
    if (empty_clip_distance < 0) throw InputError("reward empty_clip_distance must be >= 0");
}

json to_json(const RewardConfig& cfg)
{
    return json{{"lambda_div", cfg.lambda_div}, {"lambda_rep", cfg.lambda_rep},
                {"lambda_cur", cfg.lambda_cur}, {"alpha", cfg.alpha},
                {"beta", cfg.beta},             {"H", cfg.usage_threshold},
                {"N", cfg.max_free_calls},      {"format_bonus", cfg.format_bonus},
                {"empty_clip_distance", cfg.empty_clip_distance}};
}

RewardConfig reward_config_from_json(const json& j, RewardConfig cfg)
{
    try {
        cfg.lambda_div = j.value("lambda_div", cfg.lambda_div);
        cfg.lambda_rep = j.value("lambda_rep", cfg.lambda_rep);
        cfg.lambda_cur = j.value("lambda_cur", cfg.lambda_cur);
        cfg.alpha = j.value("alpha", cfg.alpha);
        cfg.beta = j.value("beta", cfg.beta);
        cfg.usage_threshold = j.value("H", cfg.usage_threshold);
        cfg.max_free_calls = j.value("N", cfg.max_free_calls);
        cfg.format_bonus = j.value("format_bonus", cfg.format_bonus);
        cfg.empty_clip_distance = j.value("empty_clip_distance", cfg.empty_clip_distance);
    } catch (const json::exception& e) {
        throw InputError(std::string("reward config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json to_json(const RewardBreakdown& b)
{
    return json{{"base", b.base},
                {"diversity", b.diversity},
                {"representativeness", b.representativeness},
                {"curiosity", b.curiosity},
                {"total", b.total}};
}

GroupCallStats group_call_stats(std::span<const env::EpisodeRecord> episodes)
{
    GroupCallStats stats;
    for (const auto& ep : episodes) {
        const int calls = static_cast<int>(ep.state.tool_call_count);
        stats.call_counts.push_back(calls);
        stats.used_tool.push_back(calls > 0);
    }
    return stats;
}

double cosine_distance(const FeatureVector& u, const FeatureVector& v)
{
    if (u.size() != v.size()) throw InputError("cosine_distance: dimension mismatch");
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw InputError("cosine_distance: zero vector");
    return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

double diversity_reward(std::span<const FeatureVector> regions)
{
    const std::size_t n = regions.size();
    if (n < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) sum += cosine_distance(regions[i], regions[j]);
        }
    }
    return sum / static_cast<double>(n * (n - 1));
}

double representativeness_reward(std::span<const FeatureVector> all_frames, std::span<const FeatureVector> last_clip,
                                 double empty_clip_distance)
{
    if (all_frames.empty()) throw InputError("representativeness_reward: no frames");
    if (last_clip.empty()) return std::exp(-empty_clip_distance);
    double total = 0.0;
    for (const auto& v : all_frames) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : last_clip) {
            if (c.size() != v.size()) throw InputError("representativeness_reward: dimension mismatch");
            double sq = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) sq += (v[k] - c[k]) * (v[k] - c[k]);
            best = std::min(best, std::sqrt(sq));
        }
        total += best;
    }
    return std::exp(-total / static_cast<double>(all_frames.size()));
}

double curiosity_reward(const GroupCallStats& stats, std::size_t rollout, const RewardConfig& cfg)
{
    const std::size_t k = stats.size();
    if (stats.used_tool.size() != k) throw InputError("curiosity_reward: inconsistent group stats");
    if (rollout >= k) throw InputError("curiosity_reward: rollout index out of range");
    const auto users = std::count(stats.used_tool.begin(), stats.used_tool.end(), true);
    const double usage = static_cast<double>(users) / static_cast<double>(k);
    const double bonus = stats.used_tool[rollout] ? cfg.alpha * std::max(0.0, cfg.usage_threshold - usage) : 0.0;
    const double excess = std::max(0, stats.call_counts[rollout] - cfg.max_free_calls);
    return bonus - cfg.beta * excess;
}

double base_reward(const env::EpisodeRecord& episode, std::span<const std::string> golds, const RewardConfig& cfg)
{
    if (golds.empty()) throw InputError("base_reward: empty gold answers");
    const auto pred = text::normalize_answer(episode.final_answer);
    const bool correct = std::any_of(golds.begin(), golds.end(),
                                     [&](const std::string& g) { return text::normalize_answer(g) == pred; });
    return (correct ? 1.0 : 0.0) + (episode.format_ok ? cfg.format_bonus : 0.0);
}

std::vector<RewardBreakdown> total_reward(std::span<const env::EpisodeRecord> episodes,
                                          std::span<const std::string> golds, const RewardConfig& cfg)
{
    if (episodes.empty()) throw InputError("total_reward: empty group");
    const auto stats = group_call_stats(episodes);
    std::vector<RewardBreakdown> out;
    out.reserve(episodes.size());
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const auto& ep = episodes[i];
        RewardBreakdown b;
        b.base = base_reward(ep, golds, cfg);
        b.diversity = diversity_reward(ep.state.selected_region_features);
        b.representativeness = representativeness_reward(ep.state.all_frame_features, ep.state.last_clip_features(),
                                                         cfg.empty_clip_distance);
        b.curiosity = curiosity_reward(stats, i, cfg);
        b.total = b.base + cfg.lambda_div * b.diversity + cfg.lambda_rep * b.representativeness +
                  cfg.lambda_cur * b.curiosity;
        out.push_back(b);
    }
    return out;
}

} // namespace vr4::reward
