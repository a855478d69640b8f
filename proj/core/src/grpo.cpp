#include "vr4/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "vr4/error.hpp"

using nlohmann::json;

namespace vr4::grpo {

void GrpoConfig::validate() const
{
    if (group_size < 2) throw InputError("grpo group_size must be >= 2");
    if (clip_epsilon <= 0 || clip_epsilon >= 1) throw InputError("grpo clip_epsilon must be in (0,1)");
    if (kl_coef < 0) throw InputError("grpo kl_coef must be >= 0");
    if (advantage_epsilon <= 0) throw InputError("grpo advantage_epsilon must be > 0");
    if (!(learning_rate > 0)) throw InputError("grpo learning_rate must be > 0");
    if (batch_size < 1) throw InputError("grpo batch_size must be >= 1");
    if (updates_per_batch < 1) throw InputError("grpo updates_per_batch must be >= 1");
}

json to_json(const GrpoConfig& cfg)
{
    return json{{"group_size", cfg.group_size},
                {"clip_epsilon", cfg.clip_epsilon},
                {"kl_coef", cfg.kl_coef},
                {"advantage_epsilon", cfg.advantage_epsilon},
                {"learning_rate", cfg.learning_rate},
                {"batch_size", cfg.batch_size},
                {"updates_per_batch", cfg.updates_per_batch}};
}

GrpoConfig grpo_config_from_json(const json& j, GrpoConfig cfg)
{
    try {
        cfg.group_size = j.value("group_size", cfg.group_size);
        cfg.clip_epsilon = j.value("clip_epsilon", cfg.clip_epsilon);
        cfg.kl_coef = j.value("kl_coef", cfg.kl_coef);
        cfg.advantage_epsilon = j.value("advantage_epsilon", cfg.advantage_epsilon);
        cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.updates_per_batch = j.value("updates_per_batch", cfg.updates_per_batch);
    } catch (const json::exception& e) {
        throw InputError(std::string("grpo config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg)
{
    if (rewards.size() < 2) throw InputError("group_advantages: group needs at least two rewards");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw InputError("group_advantages: non-finite reward");
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd < cfg.advantage_epsilon) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

double importance_ratio(const policy::Policy& current, const policy::Policy& old, const policy::EpisodeContext& ctx,
                        const policy::ActionSeq& seq)
{
    const double a = current.log_prob(ctx, seq);
    const double b = old.log_prob(ctx, seq);
    if (!std::isfinite(a) || !std::isfinite(b)) throw InputError("importance_ratio: non-finite log-probability");
    return std::exp(a - b);
}

double kl_divergence(const policy::Policy& p, const policy::Policy& q, const policy::EpisodeContext& ctx)
{
    double kl = 0.0;
    for (const auto& seq : policy::enumerate_actions(ctx)) {
        const double lp = p.log_prob(ctx, seq);
        kl += std::exp(lp) * (lp - q.log_prob(ctx, seq));
    }
    return std::max(0.0, kl);
}

std::vector<double> kl_gradient(const policy::Policy& p, const policy::Policy& q, const policy::EpisodeContext& ctx)
{
    // grad KL = sum_o p(o) (log p(o) - log q(o)) grad log p(o); the extra
    // sum_o p(o) grad log p(o) term vanishes.
    std::vector<double> grad(p.dimension(), 0.0);
    for (const auto& seq : policy::enumerate_actions(ctx)) {
        const double lp = p.log_prob(ctx, seq);
        const double w = std::exp(lp) * (lp - q.log_prob(ctx, seq));
        if (w == 0.0) continue;
        const auto g = p.grad_log_prob(ctx, seq);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += w * g[k];
    }
    return grad;
}

ObjectiveValue grpo_objective(std::span<const RolloutGroup> groups, const policy::Policy& current,
                              const policy::Policy& old, const policy::Policy& reference, const GrpoConfig& cfg)
{
    if (groups.empty()) throw InputError("grpo_objective: no groups");
    const std::size_t dim = current.dimension();
    ObjectiveValue out{0.0, std::vector<double>(dim, 0.0)};
    for (const auto& group : groups) {
        if (!group.context) throw InputError("grpo_objective: group without context");
        if (group.episodes.empty() || group.episodes.size() != group.advantages.size()) {
            throw InputError("grpo_objective: episodes and advantages differ in size");
        }
        const auto& ctx = *group.context;
        const double inv_g = 1.0 / static_cast<double>(group.episodes.size());
        for (std::size_t i = 0; i < group.episodes.size(); ++i) {
            const auto& seq = group.episodes[i];
            const double a = group.advantages[i];
            const double r = importance_ratio(current, old, ctx, seq);
            const double unclipped = r * a;
            const double clipped = std::clamp(r, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
            if (unclipped <= clipped) {
                out.value += inv_g * unclipped;
                const auto g = current.grad_log_prob(ctx, seq);
                for (std::size_t k = 0; k < dim; ++k) out.gradient[k] += inv_g * unclipped * g[k];
            } else {
                out.value += inv_g * clipped;
            }
        }
        if (cfg.kl_coef > 0) {
            out.value -= cfg.kl_coef * kl_divergence(current, reference, ctx);
            const auto g = kl_gradient(current, reference, ctx);
            for (std::size_t k = 0; k < dim; ++k) out.gradient[k] -= cfg.kl_coef * g[k];
        }
    }
    if (!std::isfinite(out.value)) throw InputError("grpo_objective: non-finite value");
    const double inv_n = 1.0 / static_cast<double>(groups.size());
    out.value *= inv_n;
    for (double& g : out.gradient) g *= inv_n;
    return out;
}

ObjectiveValue sft_loss(const policy::Policy& policy, const policy::EpisodeContext& ctx, const policy::ActionSeq& seq)
{
    ObjectiveValue out;
    out.value = -policy.mean_step_log_prob(ctx, seq, &out.gradient);
    for (double& g : out.gradient) g = -g;
    return out;
}

} // namespace vr4::grpo
