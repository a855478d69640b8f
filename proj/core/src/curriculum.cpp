#include "vr4/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "vr4/error.hpp"
#include "vr4/seeding.hpp"

using nlohmann::json;

namespace vr4::curriculum {

std::string to_string(ObjectiveKind k)
{
    return k == ObjectiveKind::sft ? "sft" : "grpo";
}

std::string to_string(DataFilter f)
{
    switch (f) {
    case DataFilter::single_tool: return "single_tool";
    case DataFilter::mixed: return "mixed";
    case DataFilter::instances: return "instances";
    }
    return "?";
}

namespace {

ObjectiveKind kind_from_string(const std::string& s)
{
    if (s == "sft") return ObjectiveKind::sft;
    if (s == "grpo") return ObjectiveKind::grpo;
    throw InputError("unknown objective kind '" + s + "'");
}

DataFilter filter_from_string(const std::string& s)
{
    if (s == "single_tool") return DataFilter::single_tool;
    if (s == "mixed") return DataFilter::mixed;
    if (s == "instances") return DataFilter::instances;
    throw InputError("unknown data filter '" + s + "'");
}

void check_stage_shape(const StageSpec& stage)
{
    if (stage.name.empty()) throw InputError("stage without a name");
    for (char c : stage.name) {
        if (std::isspace(static_cast<unsigned char>(c))) throw InputError("stage name may not contain whitespace");
    }
    if (stage.steps <= 0) throw InputError("stage " + stage.name + ": step budget must be positive");
    if (stage.learning_rate && !(*stage.learning_rate > 0)) {
        throw InputError("stage " + stage.name + ": learning rate must be positive");
    }
    const bool rl = stage.kind == ObjectiveKind::grpo;
    if (rl != (stage.filter == DataFilter::instances)) {
        throw InputError("stage " + stage.name + ": sft stages take trajectories, grpo stages take instances");
    }
    if (stage.split < 0 || stage.split > 1) throw InputError("stage " + stage.name + ": split must be 0 or 1");
    if (!stage.reward_overrides.is_object()) throw InputError("stage " + stage.name + ": reward must be an object");
}

} // namespace

std::string StagePlan::label() const
{
    std::string out;
    for (const auto& s : stages) out += (out.empty() ? "" : " -> ") + s.name;
    return out;
}

StageSpec default_stage(const std::string& name)
{
    StageSpec s;
    s.name = name;
    if (name == "DRP-SFT") {
        s.kind = ObjectiveKind::sft;
        s.filter = DataFilter::single_tool;
        s.steps = 40;
        s.learning_rate = 1.0;
    } else if (name == "CRP-SFT") {
        s.kind = ObjectiveKind::sft;
        s.filter = DataFilter::mixed;
        s.steps = 40;
        s.learning_rate = 1.0;
    } else if (name == "RL_d") {
        s.kind = ObjectiveKind::grpo;
        s.filter = DataFilter::instances;
        s.steps = 30;
        s.learning_rate = 0.5;
        s.split = 0;
        // Accuracy and curiosity only in the first RL stage.
        s.reward_overrides = json{{"lambda_div", 0.0}, {"lambda_rep", 0.0}};
    } else if (name == "RL_c") {
        s.kind = ObjectiveKind::grpo;
        s.filter = DataFilter::instances;
        s.steps = 30;
        s.learning_rate = 0.5;
        s.split = 1;
    } else {
        throw InputError("unknown stage '" + name + "'");
    }
    return s;
}

StagePlan full_plan()
{
    const std::vector<std::string> names{"DRP-SFT", "RL_d", "CRP-SFT", "RL_c"};
    return plan_from_names(names);
}

StagePlan plan_from_names(std::span<const std::string> names)
{
    if (names.empty()) throw InputError("empty stage plan");
    StagePlan plan;
    for (const auto& n : names) plan.stages.push_back(default_stage(n));
    return plan;
}

json to_json(const StageSpec& s)
{
    json j{{"name", s.name},
           {"kind", to_string(s.kind)},
           {"filter", to_string(s.filter)},
           {"steps", s.steps},
           {"split", s.split},
           {"reward", s.reward_overrides}};
    j["learning_rate"] = s.learning_rate ? json(*s.learning_rate) : json(nullptr);
    return j;
}

StageSpec stage_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("name") || !j.at("name").is_string()) {
        throw InputError("stage entry needs a string 'name'");
    }
    const auto name = j.at("name").get<std::string>();
    StageSpec s;
    try {
        s = default_stage(name);
    } catch (const InputError&) {
        // Custom stages must spell out kind and filter.
        s.name = name;
        if (!j.contains("kind") || !j.contains("filter") || !j.contains("steps")) {
            throw InputError("custom stage '" + name + "' needs kind, filter and steps");
        }
    }
    try {
        if (j.contains("kind")) s.kind = kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("filter")) s.filter = filter_from_string(j.at("filter").get<std::string>());
        s.steps = j.value("steps", s.steps);
        s.split = j.value("split", s.split);
        if (j.contains("learning_rate")) {
            const auto& lr = j.at("learning_rate");
            s.learning_rate = lr.is_null() ? std::nullopt : std::optional<double>(lr.get<double>());
        }
        if (j.contains("reward")) s.reward_overrides = j.at("reward");
    } catch (const json::exception& e) {
        throw InputError("stage '" + name + "': " + e.what());
    }
    check_stage_shape(s);
    return s;
}

json to_json(const StagePlan& plan)
{
    json stages = json::array();
    for (const auto& s : plan.stages) stages.push_back(to_json(s));
    return json{{"stages", std::move(stages)}};
}

StagePlan plan_from_json(const json& j)
{
    const json* list = &j;
    if (j.is_object()) {
        if (!j.contains("stages")) throw InputError("plan needs a 'stages' array");
        list = &j.at("stages");
    }
    if (!list->is_array()) throw InputError("plan stages must be an array");
    if (list->empty()) throw InputError("empty stage plan");
    StagePlan plan;
    for (const auto& entry : *list) {
        plan.stages.push_back(entry.is_string() ? default_stage(entry.get<std::string>()) : stage_from_json(entry));
    }
    return plan;
}

json to_json(const TrainingSetup& s)
{
    return json{{"task", toy::to_json(s.task)},
                {"drp_crop_demos", s.drp_crop_demos},
                {"drp_clip_demos", s.drp_clip_demos},
                {"crp_demos", s.crp_demos},
                {"rl_instances", s.rl_instances},
                {"eval_instances", s.eval_instances},
                {"grpo", grpo::to_json(s.grpo)},
                {"reward", reward::to_json(s.reward)}};
}

TrainingSetup training_setup_from_json(const json& j, TrainingSetup s)
{
    if (!j.is_object()) throw InputError("training setup must be an object");
    try {
        if (j.contains("task")) s.task = toy::task_config_from_json(j.at("task"), s.task);
        s.drp_crop_demos = j.value("drp_crop_demos", s.drp_crop_demos);
        s.drp_clip_demos = j.value("drp_clip_demos", s.drp_clip_demos);
        s.crp_demos = j.value("crp_demos", s.crp_demos);
        s.rl_instances = j.value("rl_instances", s.rl_instances);
        s.eval_instances = j.value("eval_instances", s.eval_instances);
        if (j.contains("grpo")) s.grpo = grpo::grpo_config_from_json(j.at("grpo"), s.grpo);
        if (j.contains("reward")) s.reward = reward::reward_config_from_json(j.at("reward"), s.reward);
    } catch (const json::exception& e) {
        throw InputError(std::string("training setup: ") + e.what());
    }
    if (s.rl_instances < 2) throw InputError("training setup: rl_instances must be >= 2");
    if (s.eval_instances < 1) throw InputError("training setup: eval_instances must be >= 1");
    return s;
}

namespace {

void append_demos(const std::vector<toy::ToyInstance>& instances, const toy::TaskConfig& cfg, const Encoder& encoder,
                  std::string_view template_id, std::uint64_t seed, std::vector<trajectory::Trajectory>& out)
{
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const auto ctx = toy::build_context(inst, cfg, encoder);
        const auto seq = toy::demonstration(ctx, inst, template_id, derive_seed(seed, {i}));
        out.push_back(toy::to_trajectory(ctx, seq, inst.qa.id + "#demo", trajectory::Provenance::synthesized));
    }
}

} // namespace

TrainingData build_training_data(const TrainingSetup& setup, std::uint64_t seed)
{
    setup.task.validate();
    const auto& cfg = setup.task;
    const PooledEncoder encoder;
    auto drp_crop = toy::make_instances(cfg, "drp-crop-", setup.drp_crop_demos, 1, derive_seed(seed, {1}));
    auto drp_clip = toy::make_instances(cfg, "drp-clip-", setup.drp_clip_demos, cfg.frames, derive_seed(seed, {2}));
    auto crp = toy::make_instances(cfg, "crp-", setup.crp_demos, cfg.frames, derive_seed(seed, {3}));
    auto rl = toy::make_instances(cfg, "rl-", setup.rl_instances, cfg.frames, derive_seed(seed, {4}));
    auto eval = toy::make_instances(cfg, "eval-", setup.eval_instances, cfg.frames, derive_seed(seed, {5}));

    std::vector<trajectory::Trajectory> drp_demos;
    std::vector<trajectory::Trajectory> crp_demos;
    append_demos(drp_crop, cfg, encoder, "crop_only", derive_seed(seed, {6}), drp_demos);
    append_demos(drp_clip, cfg, encoder, "clip_only", derive_seed(seed, {7}), drp_demos);
    append_demos(crp, cfg, encoder, "mixed", derive_seed(seed, {8}), crp_demos);

    std::vector<toy::ToyInstance> pool;
    for (auto* part : {&drp_crop, &drp_clip, &crp}) {
        for (auto& inst : *part) pool.push_back(std::move(inst));
    }
    std::vector<std::vector<std::size_t>> splits(2);
    const std::size_t half = rl.size() / 2;
    for (std::size_t i = 0; i < rl.size(); ++i) {
        splits[i < half ? 0 : 1].push_back(pool.size());
        pool.push_back(std::move(rl[i]));
    }
    return TrainingData{toy::ToyEnvironment(std::move(pool), cfg), toy::ToyEnvironment(std::move(eval), cfg),
                        std::move(drp_demos), std::move(crp_demos), std::move(splits)};
}

StageData stage_data(const StageSpec& stage, const TrainingData& data)
{
    StageData out;
    switch (stage.filter) {
    case DataFilter::single_tool: out.demos = data.drp_demos; break;
    case DataFilter::mixed: out.demos = data.crp_demos; break;
    case DataFilter::instances: out.instances = data.rl_splits.at(static_cast<std::size_t>(stage.split)); break;
    }
    return out;
}

double ToolUsage::clip_fraction() const
{
    const auto calls = clip_calls + crop_calls;
    return calls == 0 ? 0.0 : static_cast<double>(clip_calls) / static_cast<double>(calls);
}

double ToolUsage::crop_fraction() const
{
    const auto calls = clip_calls + crop_calls;
    return calls == 0 ? 0.0 : static_cast<double>(crop_calls) / static_cast<double>(calls);
}

double ToolUsage::calls_per_episode() const
{
    return episodes == 0 ? 0.0 : static_cast<double>(clip_calls + crop_calls) / static_cast<double>(episodes);
}

void ToolUsage::add(const env::EpisodeRecord& ep)
{
    ++episodes;
    for (const auto& call : ep.state.transcript) {
        if (call.name == trajectory::ToolName::clip) {
            ++clip_calls;
        } else {
            ++crop_calls;
        }
    }
    if (!ep.state.transcript.empty()) ++tool_episodes;
}

json to_json(const ToolUsage& u)
{
    return json{{"episodes", u.episodes},
                {"clip_calls", u.clip_calls},
                {"crop_calls", u.crop_calls},
                {"tool_episodes", u.tool_episodes},
                {"clip_fraction", u.clip_fraction()},
                {"crop_fraction", u.crop_fraction()},
                {"calls_per_episode", u.calls_per_episode()}};
}

json to_json(const StageReport& r)
{
    return json{{"name", r.name},
                {"kind", to_string(r.kind)},
                {"filter", to_string(r.filter)},
                {"steps", r.steps},
                {"learning_rate", r.learning_rate},
                {"reward", r.reward},
                {"curve", r.curve},
                {"final_value", r.final_value},
                {"tool_usage", to_json(r.usage)},
                {"parameters", r.parameters}};
}

namespace {

void check_filter(const StageSpec& stage, const StageData& data, const toy::ToyEnvironment& env)
{
    check_stage_shape(stage);
    if (stage.kind == ObjectiveKind::grpo) {
        if (!data.demos.empty()) throw InputError("stage " + stage.name + ": RL stages take instances, not trajectories");
        if (data.instances.empty()) throw InputError("stage " + stage.name + ": no instances");
        for (auto i : data.instances) {
            if (i >= env.size()) throw InputError("stage " + stage.name + ": instance index out of range");
        }
        return;
    }
    if (!data.instances.empty()) throw InputError("stage " + stage.name + ": SFT stages take trajectories");
    if (data.demos.empty()) throw InputError("stage " + stage.name + ": no trajectories");
    for (const auto& t : data.demos) {
        const auto comp = trajectory::tool_composition(t);
        const bool fits = stage.filter == DataFilter::single_tool ? comp == trajectory::ToolComposition::single_tool
                                                                  : comp == trajectory::ToolComposition::mixed;
        if (!fits) {
            throw InputError("stage " + stage.name + ": trajectory " + t.id + " does not match filter " +
                             to_string(stage.filter));
        }
    }
}

void sgd_step(policy::Policy& policy, const std::vector<double>& grad, double step)
{
    auto theta = policy.parameters();
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += step * grad[k];
    policy.set_parameters(std::move(theta));
}

} // namespace

StageReport run_stage(const StageSpec& stage, policy::Policy& policy, const StageData& data,
                      const toy::ToyEnvironment& env, const reward::RewardConfig& reward_cfg,
                      const grpo::GrpoConfig& grpo_cfg, std::uint64_t seed, const RewardFn& reward_fn)
{
    check_filter(stage, data, env);
    grpo_cfg.validate();

    StageReport report;
    report.name = stage.name;
    report.kind = stage.kind;
    report.filter = stage.filter;
    report.steps = stage.steps;
    report.learning_rate = stage.learning_rate.value_or(grpo_cfg.learning_rate);
    const double lr = report.learning_rate;

    if (stage.kind == ObjectiveKind::sft) {
        std::vector<std::pair<std::size_t, policy::ActionSeq>> examples;
        for (const auto& t : data.demos) {
            const auto idx = env.index_of(t.instance_id);
            examples.emplace_back(idx, toy::from_trajectory(env.context(idx), t));
            for (const auto& turn : t.turns) {
                if (!turn.tool_call) continue;
                if (turn.tool_call->name == trajectory::ToolName::clip) {
                    ++report.usage.clip_calls;
                } else {
                    ++report.usage.crop_calls;
                }
            }
            ++report.usage.episodes;
            if (trajectory::tool_composition(t) != trajectory::ToolComposition::none) ++report.usage.tool_episodes;
        }
        const double inv = 1.0 / static_cast<double>(examples.size());
        auto full_loss = [&](std::vector<double>* grad) {
            double loss = 0.0;
            if (grad) grad->assign(policy.dimension(), 0.0);
            for (const auto& [idx, seq] : examples) {
                const auto l = grpo::sft_loss(policy, env.context(idx), seq);
                loss += inv * l.value;
                if (grad) {
                    for (std::size_t k = 0; k < grad->size(); ++k) (*grad)[k] += inv * l.gradient[k];
                }
            }
            return loss;
        };
        std::vector<double> grad;
        for (int step = 0; step < stage.steps; ++step) {
            report.curve.push_back(full_loss(&grad));
            sgd_step(policy, grad, -lr);
        }
        report.final_value = full_loss(nullptr);
    } else {
        const auto cfg = reward::reward_config_from_json(stage.reward_overrides, reward_cfg);
        report.reward = reward::to_json(cfg);
        const auto reference = policy.clone();
        std::vector<std::size_t> order = data.instances;
        std::mt19937_64 shuffle_rng(derive_seed(seed, {0}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const auto batch = static_cast<std::size_t>(grpo_cfg.batch_size);
        const auto group = static_cast<std::size_t>(grpo_cfg.group_size);

        for (int step = 0; step < stage.steps; ++step) {
            const auto old = policy.clone();
            std::vector<grpo::RolloutGroup> groups;
            double reward_sum = 0.0;
            std::size_t reward_count = 0;
            for (std::size_t j = 0; j < batch; ++j) {
                const auto idx = order[(static_cast<std::size_t>(step) * batch + j) % order.size()];
                const auto& ctx = env.context(idx);
                const auto& inst = env.instance(idx);
                grpo::RolloutGroup g;
                g.context = &ctx;
                std::vector<env::EpisodeRecord> episodes;
                for (std::size_t k = 0; k < group; ++k) {
                    const auto seq =
                        old->sample(ctx, derive_seed(seed, {1, static_cast<std::uint64_t>(step), j, k}));
                    g.episodes.push_back(seq);
                    episodes.push_back(env.rollout(idx, seq));
                    report.usage.add(episodes.back());
                }
                std::vector<double> rewards;
                if (reward_fn) {
                    rewards = reward_fn(episodes, inst);
                    if (rewards.size() != episodes.size()) throw InputError("reward function returned wrong size");
                } else {
                    for (const auto& b : reward::total_reward(episodes, inst.qa.answers, cfg)) rewards.push_back(b.total);
                }
                for (double r : rewards) reward_sum += r;
                reward_count += rewards.size();
                g.advantages = grpo::group_advantages(rewards, grpo_cfg);
                groups.push_back(std::move(g));
            }
            for (int u = 0; u < grpo_cfg.updates_per_batch; ++u) {
                const auto obj = grpo::grpo_objective(groups, policy, *old, *reference, grpo_cfg);
                sgd_step(policy, obj.gradient, lr);
            }
            report.curve.push_back(reward_sum / static_cast<double>(reward_count));
        }
        report.final_value = report.curve.back();
    }
    report.parameters = policy.parameters();
    return report;
}

json to_json(const EvalSummary& e)
{
    return json{{"instances", e.instances},
                {"episodes", e.episodes},
                {"mean_reward", e.mean_reward},
                {"accuracy", e.accuracy},
                {"mean_breakdown", reward::to_json(e.mean_breakdown)},
                {"tool_usage", to_json(e.usage)}};
}

EvalSummary evaluate_policy(const policy::Policy& policy, const toy::ToyEnvironment& env,
                            const reward::RewardConfig& reward_cfg, int group, std::uint64_t seed)
{
    if (group < 1) throw InputError("evaluation group must be >= 1");
    if (env.size() == 0) throw InputError("evaluation pool is empty");
    EvalSummary out;
    out.instances = env.size();
    for (std::size_t i = 0; i < env.size(); ++i) {
        const auto& ctx = env.context(i);
        const auto& inst = env.instance(i);
        std::vector<env::EpisodeRecord> episodes;
        for (int g = 0; g < group; ++g) {
            const auto seq = policy.sample(ctx, derive_seed(seed, {i, static_cast<std::uint64_t>(g)}));
            episodes.push_back(env.rollout(i, seq));
            out.usage.add(episodes.back());
        }
        const auto breakdown = reward::total_reward(episodes, inst.qa.answers, reward_cfg);
        for (std::size_t k = 0; k < breakdown.size(); ++k) {
            const auto& b = breakdown[k];
            out.mean_breakdown.base += b.base;
            out.mean_breakdown.diversity += b.diversity;
            out.mean_breakdown.representativeness += b.representativeness;
            out.mean_breakdown.curiosity += b.curiosity;
            out.mean_breakdown.total += b.total;
            out.accuracy += reward::base_reward(episodes[k], inst.qa.answers, reward::RewardConfig{.format_bonus = 0.0});
        }
        out.episodes += episodes.size();
    }
    const double n = static_cast<double>(out.episodes);
    out.mean_breakdown.base /= n;
    out.mean_breakdown.diversity /= n;
    out.mean_breakdown.representativeness /= n;
    out.mean_breakdown.curiosity /= n;
    out.mean_breakdown.total /= n;
    out.mean_reward = out.mean_breakdown.total;
    out.accuracy /= n;
    return out;
}

json to_json(const ScheduleReport& r)
{
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back(to_json(s));
    return json{{"plan", r.plan},
                {"seed", r.seed},
                {"grpo", r.grpo},
                {"reward", r.reward},
                {"reference_policy", r.reference_policy},
                {"config_hash", r.config_hash},
                {"stages", std::move(stages)},
                {"final_eval", to_json(r.final_eval)},
                {"final_parameters", r.final_parameters}};
}

ScheduleReport run_schedule(const StagePlan& plan, const TrainingSetup& setup, std::uint64_t seed)
{
    if (plan.stages.empty()) throw InputError("empty stage plan");
    for (const auto& s : plan.stages) check_stage_shape(s);
    setup.grpo.validate();
    setup.reward.validate();

    const auto data = build_training_data(setup, seed);
    policy::ToySoftmaxPolicy policy;

    ScheduleReport report;
    report.plan = plan.label();
    report.seed = seed;
    report.grpo = grpo::to_json(setup.grpo);
    report.reward = reward::to_json(setup.reward);
    for (std::size_t k = 0; k < plan.stages.size(); ++k) {
        const auto& stage = plan.stages[k];
        report.stages.push_back(run_stage(stage, policy, stage_data(stage, data), data.train, setup.reward, setup.grpo,
                                          derive_seed(seed, {100, k})));
        if (!setup.checkpoint_dir.empty()) {
            std::filesystem::create_directories(setup.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof name, "stage%02zu_%s.ckpt", k, stage.name.c_str());
            write_checkpoint(setup.checkpoint_dir / name, Checkpoint{stage.name, stage.steps, seed, policy.parameters()});
        }
    }
    report.final_eval = evaluate_policy(policy, data.eval, setup.reward, setup.grpo.group_size, derive_seed(seed, {999}));
    report.final_parameters = policy.parameters();
    return report;
}

json to_json(const AblationReport& r)
{
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"plan", row.plan}, {"rewards", row.rewards}, {"mean_reward", row.mean_reward}});
    }
    json runs = json::array();
    for (const auto& run : r.runs) runs.push_back(to_json(run));
    return json{{"seeds", r.seeds}, {"rows", std::move(rows)}, {"runs", std::move(runs)}};
}

AblationReport run_ablation(std::span<const StagePlan> plans, const TrainingSetup& setup,
                            std::span<const std::uint64_t> seeds)
{
    if (plans.empty()) throw InputError("ablation needs at least one plan");
    if (seeds.empty()) throw InputError("ablation needs at least one seed");
    AblationReport report;
    report.seeds.assign(seeds.begin(), seeds.end());
    for (const auto& plan : plans) {
        AblationRow row;
        row.plan = plan.label();
        for (auto seed : seeds) {
            auto run = run_schedule(plan, setup, seed);
            row.rewards.push_back(run.final_eval.mean_reward);
            report.runs.push_back(std::move(run));
        }
        for (double v : row.rewards) row.mean_reward += v;
        row.mean_reward /= static_cast<double>(row.rewards.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c)
{
    std::ofstream out(file);
    if (!out) throw InputError("cannot write checkpoint " + file.string());
    out << "vr4-checkpoint 1\n";
    out << "dimension " << c.parameters.size() << "\n";
    out << "stage " << c.stage << "\n";
    out << "step " << c.step << "\n";
    out << "seed " << c.seed << "\n";
    char buf[64];
    for (double v : c.parameters) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
    if (!out) throw InputError("failed writing checkpoint " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw InputError("missing checkpoint " + file.string());
    auto expect = [&](const char* key) {
        std::string line;
        if (!std::getline(in, line)) throw InputError("checkpoint " + file.string() + ": missing " + key);
        const std::string prefix = std::string(key) + " ";
        if (line.rfind(prefix, 0) != 0) throw InputError("checkpoint " + file.string() + ": expected " + key);
        return line.substr(prefix.size());
    };
    if (expect("vr4-checkpoint") != "1") throw InputError("checkpoint " + file.string() + ": unsupported version");
    Checkpoint c;
    std::size_t dim = 0;
    try {
        dim = std::stoul(expect("dimension"));
        c.stage = expect("stage");
        c.step = std::stoi(expect("step"));
        c.seed = std::stoull(expect("seed"));
    } catch (const std::logic_error&) {
        throw InputError("checkpoint " + file.string() + ": malformed header");
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0') throw InputError("checkpoint " + file.string() + ": bad value");
        c.parameters.push_back(v);
    }
    if (c.parameters.size() != dim) throw InputError("checkpoint " + file.string() + ": dimension mismatch");
    return c;
}

} // namespace vr4::curriculum
