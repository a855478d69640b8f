#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vr4/grpo.hpp"
#include "vr4/policy.hpp"
#include "vr4/reward.hpp"
#include "vr4/toy_task.hpp"
#include "vr4/trajectory.hpp"

// Staged training: supervised practice on single-tool demonstrations (DRP),
// RL on one half of the QA pool, supervised practice on mixed-tool
// demonstrations (CRP), then RL on the other half.
namespace vr4::curriculum {

enum class ObjectiveKind { sft, grpo };
enum class DataFilter { single_tool, mixed, instances };

std::string to_string(ObjectiveKind k);
std::string to_string(DataFilter f);

struct StageSpec {
    std::string name;
    ObjectiveKind kind = ObjectiveKind::sft;
    DataFilter filter = DataFilter::single_tool;
    int steps = 0;
    // Unset means the GRPO config's learning rate.
    std::optional<double> learning_rate;
    // Which half of the RL pool an RL stage draws from.
    int split = 0;
    // Keys overriding the schedule's reward config for this stage.
    nlohmann::json reward_overrides = nlohmann::json::object();
};

struct StagePlan {
    std::vector<StageSpec> stages;

    std::string label() const;
};

// Toy-scale defaults for "DRP-SFT", "RL_d", "CRP-SFT" and "RL_c".
StageSpec default_stage(const std::string& name);
StagePlan full_plan();
// Throws InputError for unknown names or an empty list.
StagePlan plan_from_names(std::span<const std::string> names);

nlohmann::json to_json(const StageSpec& s);
StageSpec stage_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StagePlan& plan);
StagePlan plan_from_json(const nlohmann::json& j);

struct TrainingSetup {
    toy::TaskConfig task;
    std::size_t drp_crop_demos = 50;
    std::size_t drp_clip_demos = 20;
    std::size_t crp_demos = 100;
    // Split into two equal halves for the two RL stages.
    std::size_t rl_instances = 128;
    std::size_t eval_instances = 64;
    grpo::GrpoConfig grpo;
    reward::RewardConfig reward;
    std::filesystem::path checkpoint_dir;
};

nlohmann::json to_json(const TrainingSetup& s);
TrainingSetup training_setup_from_json(const nlohmann::json& j, TrainingSetup base = {});

// Training pool (demonstration instances plus the RL pool) and a disjoint
// evaluation pool, all generated from one seed independently of the plan.
struct TrainingData {
    toy::ToyEnvironment train;
    toy::ToyEnvironment eval;
    std::vector<trajectory::Trajectory> drp_demos;
    std::vector<trajectory::Trajectory> crp_demos;
    std::vector<std::vector<std::size_t>> rl_splits;
};

TrainingData build_training_data(const TrainingSetup& setup, std::uint64_t seed);

struct StageData {
    std::vector<trajectory::Trajectory> demos;
    std::vector<std::size_t> instances;
};

// Data for a stage according to its filter.
StageData stage_data(const StageSpec& stage, const TrainingData& data);

struct ToolUsage {
    std::size_t episodes = 0;
    std::size_t clip_calls = 0;
    std::size_t crop_calls = 0;
    std::size_t tool_episodes = 0;

    double clip_fraction() const;
    double crop_fraction() const;
    double calls_per_episode() const;
    void add(const env::EpisodeRecord& ep);
};

nlohmann::json to_json(const ToolUsage& u);

struct StageReport {
    std::string name;
    ObjectiveKind kind = ObjectiveKind::sft;
    DataFilter filter = DataFilter::single_tool;
    int steps = 0;
    double learning_rate = 0.0;
    nlohmann::json reward = nlohmann::json::object();
    // Loss per step (SFT) or mean batch reward per step (RL).
    std::vector<double> curve;
    double final_value = 0.0;
    ToolUsage usage;
    std::vector<double> parameters;
};

nlohmann::json to_json(const StageReport& r);

// Replaces the reward engine in an RL stage; receives one group.
using RewardFn = std::function<std::vector<double>(std::span<const env::EpisodeRecord>, const toy::ToyInstance&)>;

// Trains `policy` in place. Throws InputError before any step when the data
// does not match the stage's filter or the budget is not positive.
StageReport run_stage(const StageSpec& stage, policy::Policy& policy, const StageData& data,
                      const toy::ToyEnvironment& env, const reward::RewardConfig& reward_cfg,
                      const grpo::GrpoConfig& grpo_cfg, std::uint64_t seed, const RewardFn& reward_fn = {});

struct EvalSummary {
    std::size_t instances = 0;
    std::size_t episodes = 0;
    double mean_reward = 0.0;
    double accuracy = 0.0;
    reward::RewardBreakdown mean_breakdown;
    ToolUsage usage;
};

nlohmann::json to_json(const EvalSummary& e);

// Samples `group` episodes per instance with seeds fixed by `seed`, so two
// policies evaluated with the same seed face the same random draws.
EvalSummary evaluate_policy(const policy::Policy& policy, const toy::ToyEnvironment& env,
                            const reward::RewardConfig& reward_cfg, int group, std::uint64_t seed);

struct ScheduleReport {
    std::string plan;
    std::uint64_t seed = 0;
    nlohmann::json grpo = nlohmann::json::object();
    nlohmann::json reward = nlohmann::json::object();
    std::string reference_policy = "initial policy of each stage";
    std::string config_hash;
    std::vector<StageReport> stages;
    EvalSummary final_eval;
    std::vector<double> final_parameters;
};

nlohmann::json to_json(const ScheduleReport& r);

// Runs the plan from a zero-initialized policy. Writes a checkpoint after each
// stage when setup.checkpoint_dir is set.
ScheduleReport run_schedule(const StagePlan& plan, const TrainingSetup& setup, std::uint64_t seed);

struct AblationRow {
    std::string plan;
    std::vector<double> rewards; // one per seed
    double mean_reward = 0.0;
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;
    std::vector<ScheduleReport> runs;
};

nlohmann::json to_json(const AblationReport& r);

AblationReport run_ablation(std::span<const StagePlan> plans, const TrainingSetup& setup,
                            std::span<const std::uint64_t> seeds);

struct Checkpoint {
    std::string stage;
    int step = 0;
    std::uint64_t seed = 0;
    std::vector<double> parameters;

    bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c);
// Throws InputError on a malformed header or a dimension mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& file);

} // namespace vr4::curriculum
