#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/policy.hpp"

// Group-relative policy optimization: rewards are standardized within the
// group of rollouts that share a prompt, and the policy maximizes the clipped
// importance-weighted advantage minus a KL penalty toward a frozen reference.
namespace vr4::grpo {

struct GrpoConfig {
    int group_size = 8;
    double clip_epsilon = 0.2;
    double kl_coef = 0.04;
    // Groups whose reward spread falls below this get zero advantages.
    double advantage_epsilon = 1e-8;
    double learning_rate = 1e-6;
    int batch_size = 8;
    int updates_per_batch = 2;

    void validate() const;
};

nlohmann::json to_json(const GrpoConfig& cfg);
GrpoConfig grpo_config_from_json(const nlohmann::json& j, GrpoConfig base = {});

// (R_i - mean) / std with the population standard deviation.
std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg = {});

double importance_ratio(const policy::Policy& current, const policy::Policy& old, const policy::EpisodeContext& ctx,
                        const policy::ActionSeq& seq);

// Exact KL(p || q) over the whole action space of the context.
double kl_divergence(const policy::Policy& p, const policy::Policy& q, const policy::EpisodeContext& ctx);
std::vector<double> kl_gradient(const policy::Policy& p, const policy::Policy& q, const policy::EpisodeContext& ctx);

struct RolloutGroup {
    const policy::EpisodeContext* context = nullptr;
    std::vector<policy::ActionSeq> episodes;
    std::vector<double> advantages;
};

struct ObjectiveValue {
    double value = 0.0;
    std::vector<double> gradient;
};

// Mean over groups of
//   (1/G) sum_i min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i) - kl_coef * KL(current || reference)
// with r_i = current(o_i) / old(o_i), and its gradient in the current
// policy's parameters.
ObjectiveValue grpo_objective(std::span<const RolloutGroup> groups, const policy::Policy& current,
                              const policy::Policy& old, const policy::Policy& reference, const GrpoConfig& cfg);

// Mean negative per-decision log-likelihood of a demonstration, and its gradient.
ObjectiveValue sft_loss(const policy::Policy& policy, const policy::EpisodeContext& ctx, const policy::ActionSeq& seq);

} // namespace vr4::grpo
